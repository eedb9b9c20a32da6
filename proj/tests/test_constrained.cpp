#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "fairshift/constrained.hpp"
#include "fairshift/metrics.hpp"
#include "oracles.hpp"

using namespace fairshift;

namespace {

Dataset blobs(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Matrix x(n, 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = rng.uniform() < 0.5 ? 1 : 0;
        x(i, 0) = rng.normal(y[i] ? 0.6 : -0.6, 1.0);
        x(i, 1) = rng.normal(0.0, 1.0);
    }
    return oracle::make_dataset(std::move(x), std::move(y));
}

LinearModel bias_only(double bias) {
    LinearModel m;
    m.weights = {0.0};
    m.bias = bias;
    return m;
}

FairnessConstraint floor_on(Mask mask, double alpha = 0.8) {
    FairnessConstraint c;
    c.kind = ConstraintKind::coverage_floor;
    c.group_mask = std::move(mask);
    c.alpha = alpha;
    c.name = "floor";
    return c;
}

}  // namespace

TEST_CASE("coverage floor value at the all-positive and all-negative extremes") {
    Matrix x(5, 1);  // features are irrelevant for a bias-only model
    const std::vector<int> y{1, 0, 1, 0, 0};
    Mask group{1, 1, 0, 0, 0};

    // everyone predicted positive: J = 0.8 * 1 - 1
    CHECK(constraint_value(bias_only(1.0), x, y, floor_on(group),
                           ConstraintMode::indicator) == doctest::Approx(-0.2).epsilon(1e-15));
    // nobody predicted positive: J = 0 exactly
    CHECK(constraint_value(bias_only(-1.0), x, y, floor_on(group),
                           ConstraintMode::indicator) == 0.0);
}

TEST_CASE("coverage match and tpr match values follow the definitions") {
    Matrix x(4, 1);
    x(0, 0) = 2.0;
    x(1, 0) = 1.0;
    x(2, 0) = -1.0;
    x(3, 0) = -2.0;
    const std::vector<int> y{1, 0, 1, 0};
    LinearModel m;
    m.weights = {1.0};  // scores 2, 1, -1, -2: first two predicted positive

    FairnessConstraint match;
    match.kind = ConstraintKind::coverage_match;
    match.group_mask = {1, 1, 1, 1};
    match.slack = 0.1;
    // coverage 0.5 equals the label rate: J = |0| - 0.1
    CHECK(constraint_value(m, x, y, match, ConstraintMode::indicator) ==
          doctest::Approx(-0.1).epsilon(1e-15));

    match.group_mask = {1, 1, 0, 0};  // coverage 1, label rate 0.5
    CHECK(constraint_value(m, x, y, match, ConstraintMode::indicator) ==
          doctest::Approx(0.4).epsilon(1e-15));

    FairnessConstraint tpr;
    tpr.kind = ConstraintKind::tpr_match;
    tpr.group_mask = {1, 1, 0, 0};  // group TPR 1, overall TPR 1/2
    CHECK(constraint_value(m, x, y, tpr, ConstraintMode::indicator) ==
          doctest::Approx(0.5).epsilon(1e-15));

    // no positive labels in the group: the rate is undefined
    tpr.group_mask = {0, 1, 0, 1};
    CHECK_THROWS_AS(constraint_value(m, x, y, tpr, ConstraintMode::indicator), ContractError);
}

TEST_CASE("constraint validation rejects degenerate setups") {
    FairnessConstraint c = floor_on(Mask{1, 0, 0});
    CHECK_NOTHROW(c.validate(3));
    CHECK_THROWS_AS(c.validate(4), ArgumentError);

    c.group_mask = {0, 0, 0};
    CHECK_THROWS_AS(c.validate(3), ContractError);

    c.group_mask = {1, 0, 0};
    c.alpha = 2.0;
    CHECK_THROWS_AS(c.validate(3), ArgumentError);
    c.alpha = 0.8;
    c.slack = -0.1;
    CHECK_THROWS_AS(c.validate(3), ArgumentError);
}

TEST_CASE("surrogate values approach the indicator as the temperature drops") {
    // All margins positive, so every sigmoid error has the same sign and the
    // soft value approaches the indicator strictly monotonically. (A score
    // set symmetric around the threshold converges trivially: sigmoid errors
    // cancel pairwise at any temperature.)
    Matrix x(4, 1);
    const double vals[] = {0.3, 0.9, 1.4, 2.0};
    for (std::size_t i = 0; i < 4; ++i) x(i, 0) = vals[i];
    const std::vector<int> y{1, 0, 1, 0};
    LinearModel m;
    m.weights = {1.0};
    const auto c = floor_on(Mask{1, 1, 1, 1});

    const double hard = constraint_value(m, x, y, c, ConstraintMode::indicator);
    CHECK(hard == 0.8 - 1.0);  // everyone is covered
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {1.0, 0.1, 0.01}) {
        const double soft = constraint_value(m, x, y, c, ConstraintMode::surrogate, tau);
        CHECK(std::abs(soft - hard) < prev);
        prev = std::abs(soft - hard);
    }
    CHECK(prev <= 1e-10);
}

TEST_CASE("surrogate gradients match finite differences") {
    const Dataset data = blobs(71, 50);
    Rng rng(72);

    std::vector<FairnessConstraint> kinds;
    Mask group(50, 0);
    for (std::size_t i = 0; i < 50; ++i) group[i] = rng.uniform() < 0.4;
    group[0] = 1;
    kinds.push_back(floor_on(group));
    FairnessConstraint match;
    match.kind = ConstraintKind::coverage_match;
    match.group_mask = group;
    kinds.push_back(match);
    FairnessConstraint tpr;
    tpr.kind = ConstraintKind::tpr_match;
    tpr.group_mask = group;
    kinds.push_back(tpr);
    // make sure the group holds a positive label for the tpr constraint
    bool has_pos = false;
    for (std::size_t i = 0; i < 50; ++i) has_pos |= group[i] && data.labels[i] == 1;
    REQUIRE(has_pos);

    const double tau = 0.2;
    for (int trial = 0; trial < 10; ++trial) {
        LinearModel m;
        m.weights = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        m.bias = rng.uniform(-0.5, 0.5);
        std::vector<double> params = m.weights;
        params.push_back(m.bias);

        for (const auto& c : kinds) {
            // keep clear of the |.| kink: the absolute deviation is J + slack
            const double j = constraint_value(m, data.features, data.labels, c,
                                              ConstraintMode::surrogate, tau);
            if (c.kind != ConstraintKind::coverage_floor && std::abs(j + c.slack) < 1e-3)
                continue;
            const auto grad = constraint_gradient(m, data.features, data.labels, c, tau);
            const auto fd = oracle::finite_differences(
                [&](const std::vector<double>& p) {
                    LinearModel t = m;
                    t.weights.assign(p.begin(), p.end() - 1);
                    t.bias = p.back();
                    return constraint_value(t, data.features, data.labels, c,
                                            ConstraintMode::surrogate, tau);
                },
                params);
            REQUIRE(grad.size() == fd.size());
            for (std::size_t k = 0; k < grad.size(); ++k)
                CHECK(std::abs(grad[k] - fd[k]) <= 1e-5 * std::max(1.0, std::abs(fd[k])));
        }
    }
}

TEST_CASE("no constraints means exactly the base trainer") {
    const Dataset data = blobs(5, 90);
    ConstrainedTrainConfig cfg;
    cfg.inner.seed = 17;
    cfg.inner.epochs = 15;
    const auto res = train_constrained(data, {}, cfg);
    const auto base = train_base(data, cfg.inner);
    CHECK(res.model.bias == base.bias);
    REQUIRE(res.model.weights.size() == base.weights.size());
    for (std::size_t j = 0; j < base.weights.size(); ++j)
        CHECK(res.model.weights[j] == base.weights[j]);
    CHECK(res.trace.empty());
    CHECK(!res.infeasible);
}

TEST_CASE("an inactive constraint leaves the optimum untouched") {
    const Dataset data = blobs(19, 100);
    ConstrainedTrainConfig cfg;
    cfg.inner.learning_rate = 0.5;
    cfg.inner.epochs = 600;
    cfg.inner.batch_size = 100;  // full batch: deterministic descent
    cfg.inner.l2 = 0.05;
    cfg.outer_iterations = 3;

    // the floor on the whole population holds for any predictor (alpha < 1)
    const auto res = train_constrained(data, {floor_on(Mask(100, 1))}, cfg);
    const auto base = train_base(data, cfg.inner);
    CHECK(std::abs(res.model.bias - base.bias) <= 1e-3);
    for (std::size_t j = 0; j < base.weights.size(); ++j)
        CHECK(std::abs(res.model.weights[j] - base.weights[j]) <= 1e-3);
    for (const auto& row : res.trace) CHECK(row.multipliers[0] == 0.0);
    CHECK(!res.infeasible);
}

TEST_CASE("the coverage floor is enforced on an undercovered group") {
    const auto inst = oracle::make_coverage_floor_instance(29);
    const Dataset data = oracle::make_dataset(inst.features, inst.labels);

    ConstrainedTrainConfig cfg;
    cfg.inner.learning_rate = 0.5;
    cfg.inner.epochs = 60;
    cfg.inner.batch_size = data.size();
    cfg.inner.l2 = 1e-3;
    cfg.outer_iterations = 40;
    cfg.multiplier_step = 5.0;

    const auto unconstrained = train_base(data, cfg.inner);
    const auto base_j = constraint_value(unconstrained, data.features, data.labels,
                                         floor_on(inst.group_a), ConstraintMode::indicator);
    CHECK(base_j > 0.02);  // the unconstrained model genuinely violates the floor

    const auto res = train_constrained(data, {floor_on(inst.group_a)}, cfg);
    CHECK(!res.infeasible);
    CHECK(res.final_indicator[0] <= 0.01);

    const double acc_unc =
        accuracy(predict(unconstrained, data.features), data.labels);
    const double acc_con = accuracy(predict(res.model, data.features), data.labels);
    CHECK(acc_con >= acc_unc - 0.02);

    bool multiplier_engaged = false;
    for (const auto& row : res.trace) {
        for (double l : row.multipliers) {
            CHECK(l >= 0.0);
            multiplier_engaged |= l > 0.0;
        }
    }
    CHECK(multiplier_engaged);
    CHECK(res.trace.size() == cfg.outer_iterations);
}

TEST_CASE("an unsatisfiable constraint is reported, not silently dropped") {
    // featureless data: every model scores all examples identically, so
    // coverage is 0 or 1 while the match target is 0.5 with slack 0.1
    Matrix x(40, 1);  // all zeros
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = i % 2;
    const Dataset data = oracle::make_dataset(std::move(x), std::move(y));

    FairnessConstraint c;
    c.kind = ConstraintKind::coverage_match;
    c.group_mask = Mask(40, 1);
    c.slack = 0.1;
    c.name = "impossible";

    ConstrainedTrainConfig cfg;
    cfg.inner.epochs = 10;
    cfg.inner.batch_size = 40;
    cfg.outer_iterations = 8;

    const auto res = train_constrained(data, {c}, cfg);
    CHECK(res.infeasible);
    CHECK(res.final_indicator[0] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("trace rows carry the indicator values the metrics module reports") {
    const Dataset data = blobs(37, 70);
    Rng rng(38);
    Mask group(70, 0);
    for (std::size_t i = 0; i < 70; ++i) group[i] = rng.uniform() < 0.5;
    group[0] = group[1] = 1;

    ConstrainedTrainConfig cfg;
    cfg.inner.epochs = 5;
    cfg.outer_iterations = 4;
    const auto res = train_constrained(data, {floor_on(group)}, cfg);

    Mask rest(70, 0);
    for (std::size_t i = 0; i < 70; ++i) rest[i] = !group[i];
    const auto gs = GroupSet::create("g", {group, rest}, {"a", "b"}, true);
    const auto rep = evaluate(predict(res.model, data.features), data.labels, gs);
    const double from_metrics = 0.8 * rep.aggregate.coverage - rep.per_group[0].coverage;
    CHECK(res.final_indicator[0] == from_metrics);
    CHECK(res.trace.back().indicator[0] == from_metrics);

    const auto csv = res.trace_csv({floor_on(group)});
    CHECK(csv.rfind("outer_iter,objective,floor_J,floor_lambda\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
}

TEST_CASE("constrained training validates its inputs") {
    const Dataset data = blobs(3, 20);
    ConstrainedTrainConfig cfg;
    cfg.surrogate_temperature = 0.0;
    CHECK_THROWS_AS(train_constrained(data, {floor_on(Mask(20, 1))}, cfg), ArgumentError);

    cfg.surrogate_temperature = 0.05;
    Dataset single = data;
    std::fill(single.labels.begin(), single.labels.end(), 1);
    CHECK_THROWS_AS(train_constrained(single, {floor_on(Mask(20, 1))}, cfg), ArgumentError);

    CHECK_THROWS_AS(train_constrained(data, {floor_on(Mask(20, 0))}, cfg), ContractError);
}

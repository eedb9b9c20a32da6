#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "fairshift/metrics.hpp"
#include "oracles.hpp"

using namespace fairshift;

namespace {

GroupSet two_halves(std::size_t n) {
    Mask a(n, 0), b(n, 0);
    for (std::size_t i = 0; i < n; ++i) (i < n / 2 ? a : b)[i] = 1;
    return GroupSet::create("halves", {a, b}, {"A", "B"}, true);
}

GroupSet everyone(std::size_t n) {
    return GroupSet::create("all", {Mask(n, 1)}, {"g"}, true);
}

std::vector<int> random_binary(Rng& rng, std::size_t n, double rate) {
    std::vector<int> v(n);
    for (auto& b : v) b = rng.uniform() < rate ? 1 : 0;
    return v;
}

}  // namespace

TEST_CASE("perfect predictions have zero mean errors") {
    const std::vector<int> labels{1, 0, 1, 0, 1, 1};
    const auto rep = evaluate(labels, labels, two_halves(6));
    CHECK(rep.mean_coverage_error == 0.0);
    CHECK(rep.mean_equal_opp_error == 0.0);
    CHECK(rep.warnings.empty());
    CHECK(rep.aggregate.name == "all");
    CHECK(rep.aggregate.accuracy == 1.0);
}

TEST_CASE("a single all-covering group has zero equal-opportunity error") {
    const std::vector<int> labels{1, 1, 0, 0};
    const std::vector<int> preds{1, 0, 1, 0};
    const auto rep = evaluate(preds, labels, everyone(4));
    CHECK(rep.mean_equal_opp_error == 0.0);
    CHECK(rep.mean_coverage_error == 0.0);  // coverage 0.5 equals label rate 0.5
}

TEST_CASE("coverage error counts missed positives") {
    const std::vector<int> labels{1, 1, 0, 0};
    const std::vector<int> preds{1, 0, 0, 0};
    const auto rep = evaluate(preds, labels, everyone(4));
    CHECK(rep.mean_coverage_error == doctest::Approx(0.25).epsilon(1e-15));
    // TPR of the only group equals the overall TPR by construction
    CHECK(rep.mean_equal_opp_error == 0.0);
}

TEST_CASE("two-group example averages per-group deviations") {
    // A = {0,1}, B = {2,3}; every A example predicted positive, every B negative
    const std::vector<int> labels{1, 0, 1, 0};
    const std::vector<int> preds{1, 1, 0, 0};
    const auto rep = evaluate(preds, labels, two_halves(4));
    CHECK(rep.mean_coverage_error == doctest::Approx(0.5).epsilon(1e-15));
    // overall TPR 1/2; group TPRs 1 and 0
    CHECK(rep.mean_equal_opp_error == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rep.per_group.size() == 2);
    CHECK(rep.per_group[0].name == "A");
    CHECK(rep.per_group[0].coverage == 1.0);
    CHECK(rep.per_group[1].coverage == 0.0);
}

TEST_CASE("zero-positive groups are excluded from the equal-opportunity mean") {
    // B has no positive labels
    const std::vector<int> labels{1, 0, 0, 0};
    const std::vector<int> preds{0, 0, 1, 0};
    const auto rep = evaluate(preds, labels, two_halves(4));
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0].find("'B'") != std::string::npos);
    // only A contributes: |tpr_A - tpr_all| = |0 - 0| = 0
    CHECK(rep.mean_equal_opp_error == 0.0);
    CHECK(!rep.per_group[1].tpr.has_value());
    CHECK(rep.per_group[1].fpr.has_value());
}

TEST_CASE("no positive labels at all leaves the equal-opportunity mean at zero") {
    const std::vector<int> labels{0, 0, 0, 0};
    const std::vector<int> preds{1, 0, 1, 0};
    const auto rep = evaluate(preds, labels, two_halves(4));
    CHECK(rep.mean_equal_opp_error == 0.0);
    CHECK(rep.warnings.size() == 3);  // both groups plus the aggregate note
}

TEST_CASE("evaluate rejects misaligned inputs") {
    CHECK_THROWS_AS(evaluate({1, 0}, {1, 0, 1}, two_halves(2)), ArgumentError);
    CHECK_THROWS_AS(evaluate({1, 0}, {1, 0}, two_halves(4)), ArgumentError);
}

TEST_CASE("statistical parity gaps are signed deviations from overall coverage") {
    Mask a{1, 0}, b{0, 1};
    const auto gs = GroupSet::create("pair", {a, b}, {"A", "B"}, true);
    const auto gaps = statistical_parity_gaps({1, 0}, gs);
    CHECK(gaps.at("A") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gaps.at("B") == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("count-weighted parity gaps sum to zero over a partition") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng.index(60);
        const std::size_t k = 2 + rng.index(4);
        const auto gs = oracle::random_groupset(rng, n, k);
        const auto preds = random_binary(rng, n, 0.4);
        const auto gaps = statistical_parity_gaps(preds, gs);
        double weighted = 0.0;
        for (std::size_t g = 0; g < k; ++g)
            weighted += static_cast<double>(gs.member_count(g)) * gaps.at(gs.group_names[g]);
        CHECK(std::abs(weighted) <= 1e-12 * static_cast<double>(n));
    }
}

TEST_CASE("equal odds gaps match manual counting and flag missing classes") {
    // A = {0,1,2}: labels 1,1,0; B = {3,4}: labels 0,0 (no positives)
    Mask a{1, 1, 1, 0, 0}, b{0, 0, 0, 1, 1};
    const auto gs = GroupSet::create("ab", {a, b}, {"A", "B"}, true);
    const std::vector<int> labels{1, 1, 0, 0, 0};
    const std::vector<int> preds{1, 0, 1, 1, 0};

    const auto odds = equal_odds_gaps(preds, labels, gs);
    // overall: tpr 1/2, fpr 2/3; A: tpr 1/2, fpr 1; B: fpr 1/2
    CHECK(odds.tpr_gap.at("A").value() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(odds.fpr_gap.at("A").value() == doctest::Approx(1.0 - 2.0 / 3.0).epsilon(1e-12));
    CHECK(!odds.tpr_gap.at("B").has_value());
    CHECK(odds.fpr_gap.at("B").value() == doctest::Approx(0.5 - 2.0 / 3.0).epsilon(1e-12));
    REQUIRE(odds.warnings.size() == 1);
    CHECK(odds.warnings[0].find("'B'") != std::string::npos);
}

TEST_CASE("equal accuracy gaps are deviations from overall accuracy") {
    const std::vector<int> labels{1, 0, 1, 0};
    const std::vector<int> preds{1, 0, 0, 0};  // A perfect, B half right
    const auto gaps = equal_accuracy_gaps(preds, labels, two_halves(4));
    CHECK(gaps.at("A") == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(gaps.at("B") == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("accurate coverage gaps are signed and zero for perfect predictions") {
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(accurate_coverage_gaps(labels, labels, two_halves(4)).at("A") == 0.0);

    const std::vector<int> all_pos{1, 1, 1, 1};
    const auto gaps = accurate_coverage_gaps(all_pos, labels, two_halves(4));
    CHECK(gaps.at("A") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gaps.at("B") == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("not_worse_off and no_lost_benefits compare per-group tallies") {
    const std::vector<int> labels{1, 0, 1, 0};
    const std::vector<int> current{1, 0, 1, 0};

    auto nwo = not_worse_off(current, current, labels, two_halves(4));
    CHECK(nwo.at("A"));
    CHECK(nwo.at("B"));

    std::vector<int> worse = current;
    worse[0] = 0;  // break a correct positive in A
    nwo = not_worse_off(worse, current, labels, two_halves(4));
    CHECK(!nwo.at("A"));
    CHECK(nwo.at("B"));

    auto nlb = no_lost_benefits(worse, current, two_halves(4));
    CHECK(!nlb.at("A"));
    CHECK(nlb.at("B"));

    std::vector<int> more = current;
    more[1] = 1;  // extra positive in A, even though it is wrong
    CHECK(no_lost_benefits(more, current, two_halves(4)).at("A"));
    CHECK(!not_worse_off(more, current, labels, two_halves(4)).at("A"));
}

TEST_CASE("mean errors are invariant under example permutation") {
    Rng rng(33);
    const std::size_t n = 40;
    const auto gs = oracle::random_groupset(rng, n, 3);
    const auto labels = random_binary(rng, n, 0.5);
    const auto preds = random_binary(rng, n, 0.5);
    const auto base = evaluate(preds, labels, gs);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<int> pl(n), pp(n);
    std::vector<Mask> pm(gs.masks.size(), Mask(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        pl[i] = labels[perm[i]];
        pp[i] = preds[perm[i]];
        for (std::size_t k = 0; k < gs.masks.size(); ++k) pm[k][i] = gs.masks[k][perm[i]];
    }
    const auto permuted =
        evaluate(pp, pl, GroupSet::create(gs.name, pm, gs.group_names, true));
    CHECK(permuted.mean_coverage_error == base.mean_coverage_error);
    CHECK(permuted.mean_equal_opp_error == base.mean_equal_opp_error);
}

TEST_CASE("mean errors equal the counting oracle exactly on random instances") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.index(38);
        const std::size_t k = 1 + rng.index(4);
        const auto gs = oracle::random_groupset(rng, n, std::min(k, n));
        const auto labels = random_binary(rng, n, rng.uniform());
        const auto preds = random_binary(rng, n, rng.uniform());
        const auto rep = evaluate(preds, labels, gs);
        const auto ora = oracle::mean_errors(preds, labels, gs.masks);
        CHECK(rep.mean_coverage_error == ora.coverage);
        CHECK(rep.mean_equal_opp_error == ora.equal_opp);
    }
}

TEST_CASE("roc curve of a perfect scorer passes through (0,1)") {
    const std::vector<double> scores{0.9, 0.8, 0.4, 0.2};
    const std::vector<int> labels{1, 1, 0, 0};
    const auto roc = roc_curve(scores, labels);
    REQUIRE(roc.points.size() == 5);
    CHECK(roc.points.front() == std::pair{0.0, 0.0});
    CHECK(roc.points[2] == std::pair{0.0, 1.0});
    CHECK(roc.points.back() == std::pair{1.0, 1.0});
    CHECK(roc.auc() == 1.0);
    CHECK(roc.label_positive_rate == 0.5);

    const auto op = accurate_coverage_operating_point(roc);
    CHECK(op.first == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(op.second == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant scores collapse the roc to the diagonal endpoints") {
    const std::vector<double> scores{0.3, 0.3, 0.3, 0.3};
    const std::vector<int> labels{1, 0, 1, 0};
    const auto roc = roc_curve(scores, labels);
    REQUIRE(roc.points.size() == 2);
    CHECK(roc.points[0] == std::pair{0.0, 0.0});
    CHECK(roc.points[1] == std::pair{1.0, 1.0});
    CHECK(roc.auc() == doctest::Approx(0.5).epsilon(1e-15));

    const auto op = accurate_coverage_operating_point(roc);
    CHECK(op.first == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(op.second == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("roc requires both classes") {
    CHECK_THROWS_AS(roc_curve({0.1, 0.2}, {1, 1}), ArgumentError);
    CHECK_THROWS_AS(roc_curve({0.1, 0.2}, {0, 0}), ArgumentError);
}

TEST_CASE("auc agrees with pairwise concordance, ties included") {
    Rng rng(91);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 4 + rng.index(40);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = std::round(rng.uniform(-2.0, 2.0) * 4.0) / 4.0;  // force ties
            labels[i] = rng.uniform() < 0.5;
            (labels[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        const auto roc = roc_curve(scores, labels);
        CHECK(roc.auc() ==
              doctest::Approx(oracle::auc_concordance(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("operating point sits on the coverage line and on the curve") {
    Rng rng(55);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 6 + rng.index(50);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.normal(0.0, 1.0);
            labels[i] = rng.uniform() < 0.4;
            (labels[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        const auto roc = roc_curve(scores, labels);
        const auto [fpr, tpr] = accurate_coverage_operating_point(roc);
        CHECK(std::abs(tpr * roc.label_positive_rate + fpr * roc.label_negative_rate -
                       roc.label_positive_rate) <= 1e-9);
        // must lie on some segment of the polyline
        bool on_curve = false;
        for (std::size_t i = 1; i < roc.points.size() && !on_curve; ++i) {
            const auto& a = roc.points[i - 1];
            const auto& b = roc.points[i];
            if (fpr < a.first - 1e-12 || fpr > b.first + 1e-12) continue;
            const double dx = b.first - a.first, dy = b.second - a.second;
            const double cross = (fpr - a.first) * dy - (tpr - a.second) * dx;
            if (std::abs(cross) <= 1e-9 && tpr >= std::min(a.second, b.second) - 1e-12 &&
                tpr <= std::max(a.second, b.second) + 1e-12)
                on_curve = true;
        }
        CHECK(on_curve);
    }
}

TEST_CASE("markdown table formats percentages to two decimals") {
    ExperimentRow row;
    row.shift_feature = "gender";
    row.shift_objective = "fairness";
    row.train_accuracy = 0.8539;
    row.test_accuracy = 0.8519;
    row.errors = {{0.0, 0.0048}, {0.0076, 0.0223}};
    const auto md = markdown_table({"gender", "race"}, {row}, "Cov. Err.");
    CHECK(md.find("| 85.39 | 85.19 |") != std::string::npos);
    CHECK(md.find("| 0.00 | 0.48 |") != std::string::npos);
    CHECK(md.find("| 0.76 | 2.23 |") != std::string::npos);
    CHECK(md.find("Train Cov. Err. gender") != std::string::npos);
    CHECK(md.find("Test Cov. Err. race") != std::string::npos);
}

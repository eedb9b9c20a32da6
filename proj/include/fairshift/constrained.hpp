#pragma once
// Constrained empirical risk minimization: augmented-Lagrangian outer loop
// over sigmoid-relaxed group constraints, gradient inner loop. Feasibility
// is always reported with hard indicator counts, never the surrogate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fairshift/core.hpp"
#include "fairshift/dataset.hpp"
#include "fairshift/model.hpp"

namespace fairshift {

enum class ConstraintKind { coverage_floor, coverage_match, tpr_match };
enum class ConstraintMode { indicator, surrogate };

inline std::string to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::coverage_floor: return "coverage_floor";
        case ConstraintKind::coverage_match: return "coverage_match";
        default: return "tpr_match";
    }
}

// J <= 0 means satisfied, for every kind:
//   coverage_floor:  alpha * overall_coverage - group_coverage
//   coverage_match: |group_coverage - group_label_rate| - slack
//   tpr_match:      |group_TPR - overall_TPR| - slack
struct FairnessConstraint {
    ConstraintKind kind = ConstraintKind::coverage_floor;
    Mask group_mask;
    double alpha = 0.8;  // coverage_floor factor
    double slack = 0.0;
    std::string name = "constraint";

    void validate(std::size_t n) const {
        if (group_mask.size() != n)
            throw ArgumentError("constraint '" + name + "': mask length mismatch");
        std::size_t members = 0;
        for (auto v : group_mask) members += v != 0;
        if (members == 0) throw ContractError("constraint '" + name + "': empty group");
        if (!(alpha > 0.0 && alpha < 2.0))
            throw ArgumentError("constraint '" + name + "': alpha must be in (0, 2)");
        if (slack < 0.0) throw ArgumentError("constraint '" + name + "': negative slack");
    }
};

struct ConstrainedTrainConfig {
    double surrogate_temperature = 0.05;  // tau in sigmoid((score - threshold) / tau)
    double multiplier_step = 1.0;
    std::size_t outer_iterations = 30;
    TrainConfig inner;
};

namespace detail {

struct ConstraintEval {
    double value = 0.0;
    std::vector<double> grad;  // d weights then bias; filled in surrogate mode only
};

// Shared evaluation: u_i is the (relaxed) positive indicator for example i,
// built from the raw score z_i = w.x_i + b. In surrogate mode
// du_i/dtheta = u(1-u)/tau * x_i since z is linear in theta.
inline ConstraintEval eval_constraint(const LinearModel& model, const Matrix& x,
                                      const std::vector<int>& y, const FairnessConstraint& c,
                                      ConstraintMode mode, double tau, bool want_grad) {
    c.validate(x.rows());
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();

    double group_n = 0.0, group_pos_labels = 0.0, all_pos_labels = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        group_n += c.group_mask[i] != 0;
        group_pos_labels += c.group_mask[i] && y[i] == 1;
        all_pos_labels += y[i] == 1;
    }
    if (c.kind == ConstraintKind::tpr_match && (group_pos_labels == 0.0 || all_pos_labels == 0.0))
        throw ContractError("constraint '" + c.name + "': TPR undefined without positive labels");

    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = model.raw(x.row(i));
        u[i] = mode == ConstraintMode::indicator ? (z > model.threshold ? 1.0 : 0.0)
                                                 : sigmoid((z - model.threshold) / tau);
    }

    // Values are computed from aggregate rates with the same expressions the
    // metrics module uses, so indicator-mode values match counting reports
    // exactly; coeff[i] = dJ/du_i feeds the gradient.
    std::vector<double> coeff(n, 0.0);
    double value = 0.0;
    double u_all = 0.0, u_group = 0.0, u_tp_all = 0.0, u_tp_group = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        u_all += u[i];
        if (c.group_mask[i]) u_group += u[i];
        if (y[i] == 1) {
            u_tp_all += u[i];
            if (c.group_mask[i]) u_tp_group += u[i];
        }
    }
    switch (c.kind) {
        case ConstraintKind::coverage_floor: {
            value = c.alpha * (u_all / static_cast<double>(n)) - u_group / group_n;
            for (std::size_t i = 0; i < n; ++i)
                coeff[i] = c.alpha / static_cast<double>(n) -
                           (c.group_mask[i] ? 1.0 / group_n : 0.0);
            break;
        }
        case ConstraintKind::coverage_match: {
            const double diff = u_group / group_n - group_pos_labels / group_n;
            value = std::abs(diff) - c.slack;
            const double sign = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (c.group_mask[i]) coeff[i] = sign / group_n;
            break;
        }
        case ConstraintKind::tpr_match: {
            const double diff = u_tp_group / group_pos_labels - u_tp_all / all_pos_labels;
            value = std::abs(diff) - c.slack;
            const double sign = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (y[i] != 1) continue;
                coeff[i] = sign * ((c.group_mask[i] ? 1.0 / group_pos_labels : 0.0) -
                                   1.0 / all_pos_labels);
            }
            break;
        }
    }

    ConstraintEval out;
    out.value = value;
    if (want_grad) {
        out.grad.assign(d + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (coeff[i] == 0.0) continue;
            const double chain = coeff[i] * u[i] * (1.0 - u[i]) / tau;
            const double* xi = x.row(i);
            for (std::size_t j = 0; j < d; ++j) out.grad[j] += chain * xi[j];
            out.grad[d] += chain;
        }
    }
    return out;
}

}  // namespace detail

inline double constraint_value(const LinearModel& model, const Matrix& features,
                               const std::vector<int>& labels, const FairnessConstraint& c,
                               ConstraintMode mode, double tau = 0.05) {
    return detail::eval_constraint(model, features, labels, c, mode, tau, false).value;
}

// Surrogate gradient with respect to (weights..., bias). Exposed for finite-
// difference verification.
inline std::vector<double> constraint_gradient(const LinearModel& model, const Matrix& features,
                                               const std::vector<int>& labels,
                                               const FairnessConstraint& c, double tau = 0.05) {
    return detail::eval_constraint(model, features, labels, c, ConstraintMode::surrogate, tau, true)
        .grad;
}

// Gradient of logistic_loss with respect to (weights..., bias).
inline std::vector<double> loss_gradient(const LinearModel& model, const Matrix& x,
                                         const std::vector<int>& y, double l2) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    std::vector<double> grad(d + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        const double err = sigmoid(model.raw(xi)) - y[i];
        for (std::size_t j = 0; j < d; ++j) grad[j] += err * xi[j];
        grad[d] += err;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) grad[j] = grad[j] * inv + l2 * model.weights[j];
    grad[d] *= inv;
    return grad;
}

struct TraceRow {
    std::size_t outer_iter = 0;
    double objective = 0.0;               // loss + ridge, constraint-free part
    std::vector<double> indicator;        // hard J_k after the inner loop
    std::vector<double> multipliers;      // lambda_k entering the next iteration
};

struct ConstrainedResult {
    LinearModel model;
    std::vector<TraceRow> trace;
    bool infeasible = false;
    std::vector<double> final_indicator;

    std::string trace_csv(const std::vector<FairnessConstraint>& constraints) const {
        std::string out = "outer_iter,objective";
        for (const auto& c : constraints) out += "," + c.name + "_J";
        for (const auto& c : constraints) out += "," + c.name + "_lambda";
        out += "\n";
        char buf[64];
        for (const auto& row : trace) {
            out += std::to_string(row.outer_iter);
            auto put = [&](double v) {
                std::snprintf(buf, sizeof(buf), ",%.12g", v);
                out += buf;
            };
            put(row.objective);
            for (double v : row.indicator) put(v);
            for (double v : row.multipliers) put(v);
            out += "\n";
        }
        return out;
    }
};

// Multiplier ascent on the surrogate constraints around a full-batch descent
// inner loop, warm-started from the unconstrained model. With no constraints
// this is exactly train_base (same seed, bit-identical result).
inline ConstrainedResult train_constrained(const Dataset& data,
                                           const std::vector<FairnessConstraint>& constraints,
                                           const ConstrainedTrainConfig& cfg) {
    ConstrainedResult result;
    if (constraints.empty()) {
        result.model = train_base(data, cfg.inner);
        return result;
    }

    const Matrix& x = data.features;
    const std::vector<int>& y = data.labels;
    bool has_pos = false, has_neg = false;
    for (int v : y) (v == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw ArgumentError("train_constrained: both classes must be present");
    for (const auto& c : constraints) c.validate(x.rows());
    if (cfg.surrogate_temperature <= 0.0)
        throw ArgumentError("train_constrained: surrogate temperature must be positive");

    LinearModel model = train_base(data, cfg.inner);
    const std::size_t d = x.cols();
    const std::size_t m = constraints.size();
    std::vector<double> lambda(m, 0.0);

    std::vector<LinearModel> snapshots;
    std::vector<double> worst_violation;

    for (std::size_t outer = 0; outer < cfg.outer_iterations; ++outer) {
        for (std::size_t step = 0; step < cfg.inner.epochs; ++step) {
            auto grad = loss_gradient(model, x, y, cfg.inner.l2);
            for (std::size_t k = 0; k < m; ++k) {
                // Inequality-form augmented Lagrangian: the constraint force
                // max(0, lambda + rho J) releases once the iterate is safely
                // feasible, so satisfied constraints stop steering the model
                // instead of driving it deeper into over-satisfaction.
                const double jk = constraint_value(model, x, y, constraints[k],
                                                   ConstraintMode::surrogate,
                                                   cfg.surrogate_temperature);
                const double force = std::max(0.0, lambda[k] + cfg.multiplier_step * jk);
                if (force == 0.0) continue;
                auto cg = constraint_gradient(model, x, y, constraints[k],
                                              cfg.surrogate_temperature);
                for (std::size_t j = 0; j <= d; ++j) grad[j] += force * cg[j];
            }
            for (std::size_t j = 0; j < d; ++j)
                model.weights[j] -= cfg.inner.learning_rate * grad[j];
            model.bias -= cfg.inner.learning_rate * grad[d];
        }

        const double objective = logistic_loss(model, x, y, cfg.inner.l2);
        if (!std::isfinite(objective))
            throw DivergenceError("constrained training objective is not finite", outer);

        TraceRow row;
        row.outer_iter = outer;
        row.objective = objective;
        double worst = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double surrogate = constraint_value(model, x, y, constraints[k],
                                                      ConstraintMode::surrogate,
                                                      cfg.surrogate_temperature);
            lambda[k] = std::max(0.0, lambda[k] + cfg.multiplier_step * surrogate);
            const double hard = constraint_value(model, x, y, constraints[k],
                                                 ConstraintMode::indicator);
            row.indicator.push_back(hard);
            worst = std::max(worst, hard);
        }
        row.multipliers = lambda;
        result.trace.push_back(std::move(row));
        snapshots.push_back(model);
        worst_violation.push_back(worst);
    }

    // Infeasibility heuristic: hard violations never improved across the
    // last half of the outer iterations and never reached zero.
    const std::size_t half = worst_violation.size() / 2;
    bool non_decreasing = worst_violation.size() >= 2;
    for (std::size_t t = half; t + 1 < worst_violation.size(); ++t)
        if (worst_violation[t + 1] < worst_violation[t]) non_decreasing = false;
    if (non_decreasing && worst_violation.back() > 0.0) {
        result.infeasible = true;
        std::size_t best = 0;
        for (std::size_t t = 1; t < snapshots.size(); ++t) {
            if (worst_violation[t] < worst_violation[best] ||
                (worst_violation[t] == worst_violation[best] &&
                 result.trace[t].objective < result.trace[best].objective))
                best = t;
        }
        model = snapshots[best];
    }

    result.model = model;
    for (const auto& c : constraints)
        result.final_indicator.push_back(
            constraint_value(result.model, x, y, c, ConstraintMode::indicator));
    return result;
}

}  // namespace fairshift

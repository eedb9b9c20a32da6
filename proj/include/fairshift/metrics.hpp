#pragma once
// Group fairness measurement by direct counting, plus empirical ROC
// geometry for the accurate-coverage operating point.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairshift/core.hpp"
#include "fairshift/dataset.hpp"

namespace fairshift {

namespace detail {

struct Counts {
    std::size_t n = 0, pos_labels = 0, pos_preds = 0, correct = 0, tp = 0, fp = 0;
};

inline Counts count_group(const std::vector<int>& preds, const std::vector<int>& labels,
                          const Mask& mask) {
    Counts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!mask[i]) continue;
        ++c.n;
        c.pos_labels += labels[i] == 1;
        c.pos_preds += preds[i] == 1;
        c.correct += preds[i] == labels[i];
        c.tp += preds[i] == 1 && labels[i] == 1;
        c.fp += preds[i] == 1 && labels[i] == 0;
    }
    return c;
}

inline void require_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw ArgumentError(std::string(what) + ": length mismatch");
}

inline void require_groups(const GroupSet& groups, std::size_t n) {
    if (groups.example_count() != n)
        throw ArgumentError("group set '" + groups.name + "' covers " +
                            std::to_string(groups.example_count()) + " examples, data has " +
                            std::to_string(n));
}

}  // namespace detail

struct GroupMetrics {
    std::string name;
    std::size_t count = 0;
    double coverage = 0.0;    // predicted-positive rate
    double label_rate = 0.0;  // actual-positive rate
    double accuracy = 0.0;
    std::optional<double> tpr;  // absent when the group has no positive labels
    std::optional<double> fpr;  // absent when the group has no negative labels
};

struct FairnessReport {
    std::vector<GroupMetrics> per_group;  // in GroupSet order
    GroupMetrics aggregate;
    double mean_coverage_error = 0.0;
    double mean_equal_opp_error = 0.0;
    std::vector<std::string> warnings;

    nlohmann::ordered_json to_json() const {
        auto group_json = [](const GroupMetrics& g) {
            nlohmann::ordered_json j;
            j["count"] = g.count;
            j["coverage"] = g.coverage;
            j["label_rate"] = g.label_rate;
            j["accuracy"] = g.accuracy;
            j["tpr"] = g.tpr ? nlohmann::ordered_json(*g.tpr) : nlohmann::ordered_json(nullptr);
            j["fpr"] = g.fpr ? nlohmann::ordered_json(*g.fpr) : nlohmann::ordered_json(nullptr);
            return j;
        };
        nlohmann::ordered_json j;
        j["aggregate"] = group_json(aggregate);
        j["per_group"] = nlohmann::ordered_json::object();
        for (const auto& g : per_group) j["per_group"][g.name] = group_json(g);
        j["mean_coverage_error"] = mean_coverage_error;
        j["mean_equal_opp_error"] = mean_equal_opp_error;
        j["warnings"] = warnings;
        return j;
    }
};

// Per-group counting report plus the two group-averaged unfairness errors:
// mean |coverage_k - label_rate_k| and mean |TPR_k - overall TPR|. The
// overall TPR comes from the same prediction vector being scored. Groups
// without positive labels are excluded from the equal-opportunity mean and
// recorded in `warnings`.
inline FairnessReport evaluate(const std::vector<int>& preds, const std::vector<int>& labels,
                               const GroupSet& groups) {
    detail::require_aligned(preds.size(), labels.size(), "evaluate");
    detail::require_groups(groups, preds.size());

    auto to_metrics = [](const std::string& name, const detail::Counts& c) {
        GroupMetrics g;
        g.name = name;
        g.count = c.n;
        const double n = static_cast<double>(c.n);
        g.coverage = c.pos_preds / n;
        g.label_rate = c.pos_labels / n;
        g.accuracy = c.correct / n;
        if (c.pos_labels > 0) g.tpr = static_cast<double>(c.tp) / c.pos_labels;
        if (c.pos_labels < c.n) g.fpr = static_cast<double>(c.fp) / (c.n - c.pos_labels);
        return g;
    };

    FairnessReport report;
    const Mask all(preds.size(), 1);
    report.aggregate = to_metrics("all", detail::count_group(preds, labels, all));

    double cov_err = 0.0, eo_err = 0.0;
    std::size_t eo_groups = 0;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        auto g = to_metrics(groups.group_names[k],
                            detail::count_group(preds, labels, groups.masks[k]));
        cov_err += std::abs(g.coverage - g.label_rate);
        if (g.tpr && report.aggregate.tpr) {
            eo_err += std::abs(*g.tpr - *report.aggregate.tpr);
            ++eo_groups;
        } else {
            report.warnings.push_back("group '" + g.name +
                                      "' has no positive labels; excluded from equal-opportunity mean");
        }
        report.per_group.push_back(std::move(g));
    }
    if (!report.aggregate.tpr)
        report.warnings.push_back("no positive labels; equal-opportunity terms undefined");
    report.mean_coverage_error = cov_err / static_cast<double>(groups.group_count());
    report.mean_equal_opp_error = eo_groups ? eo_err / static_cast<double>(eo_groups) : 0.0;
    return report;
}

// Table 1 "Statistical Parity": coverage_k - overall coverage.
inline std::map<std::string, double> statistical_parity_gaps(const std::vector<int>& preds,
                                                             const GroupSet& groups) {
    detail::require_groups(groups, preds.size());
    double overall = 0.0;
    for (int p : preds) overall += p;
    overall /= static_cast<double>(preds.size());

    std::map<std::string, double> gaps;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        std::size_t pos = 0, n = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (!groups.masks[k][i]) continue;
            ++n;
            pos += preds[i] == 1;
        }
        gaps[groups.group_names[k]] = static_cast<double>(pos) / static_cast<double>(n) - overall;
    }
    return gaps;
}

struct EqualOddsGaps {
    std::map<std::string, std::optional<double>> tpr_gap;  // absent: no positives in group
    std::map<std::string, std::optional<double>> fpr_gap;  // absent: no negatives in group
    std::vector<std::string> warnings;
};

// Table 1 "Equal Odds": per-group TPR and FPR deviations from the overall
// rates. A group missing a class is flagged and excluded, never NaN.
inline EqualOddsGaps equal_odds_gaps(const std::vector<int>& preds, const std::vector<int>& labels,
                                     const GroupSet& groups) {
    detail::require_aligned(preds.size(), labels.size(), "equal_odds_gaps");
    detail::require_groups(groups, preds.size());
    const Mask all(preds.size(), 1);
    const auto overall = detail::count_group(preds, labels, all);

    EqualOddsGaps out;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto& name = groups.group_names[k];
        const auto c = detail::count_group(preds, labels, groups.masks[k]);
        if (c.pos_labels > 0 && overall.pos_labels > 0) {
            out.tpr_gap[name] = static_cast<double>(c.tp) / c.pos_labels -
                                static_cast<double>(overall.tp) / overall.pos_labels;
        } else {
            out.tpr_gap[name] = std::nullopt;
            out.warnings.push_back("group '" + name + "': TPR gap undefined (no positives)");
        }
        if (c.pos_labels < c.n && overall.pos_labels < overall.n) {
            out.fpr_gap[name] = static_cast<double>(c.fp) / (c.n - c.pos_labels) -
                                static_cast<double>(overall.fp) / (overall.n - overall.pos_labels);
        } else {
            out.fpr_gap[name] = std::nullopt;
            out.warnings.push_back("group '" + name + "': FPR gap undefined (no negatives)");
        }
    }
    return out;
}

// Table 1 "Equal Accuracy": accuracy_k - overall accuracy.
inline std::map<std::string, double> equal_accuracy_gaps(const std::vector<int>& preds,
                                                         const std::vector<int>& labels,
                                                         const GroupSet& groups) {
    detail::require_aligned(preds.size(), labels.size(), "equal_accuracy_gaps");
    detail::require_groups(groups, preds.size());
    const Mask all(preds.size(), 1);
    const auto overall = detail::count_group(preds, labels, all);
    const double overall_acc = static_cast<double>(overall.correct) / overall.n;

    std::map<std::string, double> gaps;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto c = detail::count_group(preds, labels, groups.masks[k]);
        gaps[groups.group_names[k]] = static_cast<double>(c.correct) / c.n - overall_acc;
    }
    return gaps;
}

// Table 1 "Accurate Coverage": signed coverage_k - label_rate_k.
inline std::map<std::string, double> accurate_coverage_gaps(const std::vector<int>& preds,
                                                            const std::vector<int>& labels,
                                                            const GroupSet& groups) {
    detail::require_aligned(preds.size(), labels.size(), "accurate_coverage_gaps");
    detail::require_groups(groups, preds.size());
    std::map<std::string, double> gaps;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto c = detail::count_group(preds, labels, groups.masks[k]);
        gaps[groups.group_names[k]] =
            static_cast<double>(c.pos_preds) / c.n - static_cast<double>(c.pos_labels) / c.n;
    }
    return gaps;
}

// Table 1 "Not Worse Off": new per-group accuracy is no lower than current.
inline std::map<std::string, bool> not_worse_off(const std::vector<int>& new_preds,
                                                 const std::vector<int>& current_preds,
                                                 const std::vector<int>& labels,
                                                 const GroupSet& groups) {
    detail::require_aligned(new_preds.size(), current_preds.size(), "not_worse_off");
    detail::require_aligned(new_preds.size(), labels.size(), "not_worse_off");
    detail::require_groups(groups, new_preds.size());
    std::map<std::string, bool> out;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto n = detail::count_group(new_preds, labels, groups.masks[k]);
        const auto c = detail::count_group(current_preds, labels, groups.masks[k]);
        out[groups.group_names[k]] = n.correct >= c.correct;
    }
    return out;
}

// Table 1 "No Lost Benefits": new per-group coverage is no lower than current.
inline std::map<std::string, bool> no_lost_benefits(const std::vector<int>& new_preds,
                                                    const std::vector<int>& current_preds,
                                                    const GroupSet& groups) {
    detail::require_aligned(new_preds.size(), current_preds.size(), "no_lost_benefits");
    detail::require_groups(groups, new_preds.size());
    std::map<std::string, bool> out;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        std::size_t np = 0, cp = 0;
        for (std::size_t i = 0; i < new_preds.size(); ++i) {
            if (!groups.masks[k][i]) continue;
            np += new_preds[i] == 1;
            cp += current_preds[i] == 1;
        }
        out[groups.group_names[k]] = np >= cp;
    }
    return out;
}

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) to (1,1)
    double label_positive_rate = 0.0;
    double label_negative_rate = 0.0;

    double auc() const {
        double area = 0.0;
        for (std::size_t i = 1; i < points.size(); ++i)
            area += (points[i].first - points[i - 1].first) *
                    (points[i].second + points[i - 1].second) * 0.5;
        return area;
    }
};

// Empirical ROC swept over the unique scores in descending order, matching
// the strict `score > threshold` prediction rule.
inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::require_aligned(scores.size(), labels.size(), "roc_curve");
    std::size_t pos = 0;
    for (int y : labels) pos += y == 1;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw ArgumentError("roc_curve: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.label_positive_rate = static_cast<double>(pos) / labels.size();
    roc.label_negative_rate = static_cast<double>(neg) / labels.size();
    roc.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        // All examples tied at this score flip together as the threshold
        // passes below s.
        while (i < order.size() && scores[order[i]] == s) {
            tp += labels[order[i]] == 1;
            fp += labels[order[i]] == 0;
            ++i;
        }
        roc.points.emplace_back(static_cast<double>(fp) / neg, static_cast<double>(tp) / pos);
    }
    return roc;
}

// Intersection of the ROC polyline with TPR*LPR + FPR*LNR = LPR, the locus
// of operating points whose total coverage equals the label-positive rate.
inline std::pair<double, double> accurate_coverage_operating_point(const RocCurve& roc) {
    const double lpr = roc.label_positive_rate;
    const double lnr = roc.label_negative_rate;
    if (lpr <= 0.0 || lpr >= 1.0)
        throw ArgumentError("accurate_coverage_operating_point: LPR must be in (0,1)");

    auto residual = [&](const std::pair<double, double>& p) {
        return p.second * lpr + p.first * lnr - lpr;
    };
    double prev = residual(roc.points.front());  // -LPR < 0 at (0,0)
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
        const double cur = residual(roc.points[i]);
        if (cur >= 0.0) {
            const double t = prev / (prev - cur);  // prev < 0 <= cur
            const auto& a = roc.points[i - 1];
            const auto& b = roc.points[i];
            return {a.first + t * (b.first - a.first), a.second + t * (b.second - a.second)};
        }
        prev = cur;
    }
    throw ContractError("accurate_coverage_operating_point: constraint line never crossed");
}

// Row layout of the experiment tables: shift feature, objective, accuracies,
// then one (train, test) mean-error pair per evaluated group set.
struct ExperimentRow {
    std::string shift_feature;
    std::string shift_objective;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<std::pair<double, double>> errors;  // per group set: (train, test)
};

inline std::string markdown_table(const std::vector<std::string>& groupset_names,
                                  const std::vector<ExperimentRow>& rows,
                                  const std::string& error_label) {
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
        return std::string(buf);
    };
    std::string out = "| Post-Shift Feature | Post-Shift Obj. | Train Acc. | Test Acc. |";
    std::string rule = "|---|---|---|---|";
    for (const auto& name : groupset_names) {
        out += " Train " + error_label + " " + name + " | Test " + error_label + " " + name + " |";
        rule += "---|---|";
    }
    out += "\n" + rule + "\n";
    for (const auto& r : rows) {
        out += "| " + r.shift_feature + " | " + r.shift_objective + " | " +
               pct(r.train_accuracy) + " | " + pct(r.test_accuracy) + " |";
        for (const auto& [train_err, test_err] : r.errors)
            out += " " + pct(train_err) + " | " + pct(test_err) + " |";
        out += "\n";
    }
    return out;
}

}  // namespace fairshift

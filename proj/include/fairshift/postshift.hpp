#pragma once
// Per-group additive score shifts: shifted_i = score_i + beta_{k(i)}.
// Fitting sweeps the exact discrete candidate set, so every distinct
// thresholding behavior within a group is considered.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairshift/core.hpp"
#include "fairshift/dataset.hpp"

namespace fairshift {

enum class ShiftObjective { fairness, accuracy };
enum class FairnessGoal { accurate_coverage, equal_opportunity };

inline std::string to_string(ShiftObjective o) {
    return o == ShiftObjective::fairness ? "fairness" : "accuracy";
}
inline std::string to_string(FairnessGoal g) {
    return g == FairnessGoal::accurate_coverage ? "accurate_coverage" : "equal_opportunity";
}

struct ShiftModel {
    std::string groupset_name;
    std::map<std::string, double> betas;
    ShiftObjective objective = ShiftObjective::fairness;
    std::optional<FairnessGoal> goal;          // absent for the accuracy objective
    std::optional<double> target_tpr;          // equal-opportunity target, logged for reports
    std::vector<std::string> flagged_groups;   // pinned to 0: no positives, or configured

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["groupset"] = groupset_name;
        j["objective"] = to_string(objective);
        j["goal"] = goal ? nlohmann::ordered_json(to_string(*goal)) : nlohmann::ordered_json(nullptr);
        j["betas"] = betas;
        if (target_tpr) j["target_tpr"] = *target_tpr;
        if (!flagged_groups.empty()) j["flagged_groups"] = flagged_groups;
        return j;
    }

    static ShiftModel from_json(const nlohmann::json& j) {
        ShiftModel m;
        m.groupset_name = j.at("groupset").get<std::string>();
        const std::string obj = j.at("objective").get<std::string>();
        if (obj == "fairness")
            m.objective = ShiftObjective::fairness;
        else if (obj == "accuracy")
            m.objective = ShiftObjective::accuracy;
        else
            throw DataError("shift JSON: unknown objective '" + obj + "'");
        if (j.contains("goal") && !j.at("goal").is_null()) {
            const std::string g = j.at("goal").get<std::string>();
            if (g == "accurate_coverage")
                m.goal = FairnessGoal::accurate_coverage;
            else if (g == "equal_opportunity")
                m.goal = FairnessGoal::equal_opportunity;
            else
                throw DataError("shift JSON: unknown goal '" + g + "'");
        }
        m.betas = j.at("betas").get<std::map<std::string, double>>();
        if (j.contains("target_tpr")) m.target_tpr = j.at("target_tpr").get<double>();
        if (j.contains("flagged_groups"))
            m.flagged_groups = j.at("flagged_groups").get<std::vector<std::string>>();
        for (const auto& [name, b] : m.betas)
            if (!std::isfinite(b)) throw DataError("shift JSON: non-finite beta for '" + name + "'");
        return m;
    }
};

struct FitOptions {
    double threshold = 0.5;
    std::vector<std::string> pin_zero_groups;  // e.g. a top_m_groups catch-all
};

// Overlapping groups make the shifts interact; the constrained trainer is
// the tool for that case.
inline std::vector<double> apply_shift(const std::vector<double>& scores, const GroupSet& groups,
                                       const ShiftModel& shift) {
    if (!groups.is_partition)
        throw ContractError(
            "apply_shift requires a partition; use the constrained trainer for overlapping groups");
    if (groups.example_count() != scores.size())
        throw ArgumentError("apply_shift: score/group length mismatch");
    if (shift.groupset_name != groups.name)
        throw ArgumentError("shift was fitted on group set '" + shift.groupset_name + "', got '" +
                            groups.name + "'");

    std::vector<double> out = scores;
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        auto it = shift.betas.find(groups.group_names[k]);
        if (it == shift.betas.end())
            throw ArgumentError("shift has no beta for group '" + groups.group_names[k] + "'");
        const double beta = it->second;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (groups.masks[k][i]) out[i] += beta;
    }
    return out;
}

namespace detail {

// Candidate betas place the effective in-group threshold (threshold - beta)
// at midpoints between adjacent distinct anchor scores, plus sentinels past
// both ends; beta = 0 is always included.
inline std::vector<double> beta_candidates(std::vector<double> anchors, double threshold) {
    std::vector<double> betas = {0.0};
    if (!anchors.empty()) {
        std::sort(anchors.begin(), anchors.end());
        anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
        std::vector<double> cuts;
        cuts.push_back(anchors.front() - 1.0);
        for (std::size_t i = 1; i < anchors.size(); ++i)
            cuts.push_back(0.5 * (anchors[i - 1] + anchors[i]));
        cuts.push_back(anchors.back() + 1.0);
        for (double t : cuts) betas.push_back(threshold - t);
    }
    std::sort(betas.begin(), betas.end());
    betas.erase(std::unique(betas.begin(), betas.end()), betas.end());
    return betas;
}

struct GroupView {
    std::vector<double> scores;
    std::vector<int> labels;
    std::size_t positives = 0;
};

inline std::vector<GroupView> group_views(const std::vector<double>& scores,
                                          const std::vector<int>& labels,
                                          const GroupSet& groups) {
    if (!groups.is_partition) throw ContractError("shift fitting requires a partition");
    if (groups.example_count() != scores.size() || scores.size() != labels.size())
        throw ArgumentError("shift fitting: length mismatch");
    std::vector<GroupView> views(groups.group_count());
    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (!groups.masks[k][i]) continue;
            views[k].scores.push_back(scores[i]);
            views[k].labels.push_back(labels[i]);
            views[k].positives += labels[i] == 1;
        }
    }
    return views;
}

inline bool pinned(const FitOptions& opt, const std::string& name) {
    return std::find(opt.pin_zero_groups.begin(), opt.pin_zero_groups.end(), name) !=
           opt.pin_zero_groups.end();
}

// Lexicographic preference shared by all objectives after their own key:
// smaller |beta|, then smaller beta, making the selection total.
inline bool beta_tiebreak(double a, double b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
    return a < b;
}

}  // namespace detail

// Accurate coverage: per group, the predicted-positive count should match
// the positive-label count. Ties prefer fewer positives, then the beta
// tiebreak.
inline ShiftModel fit_fairness_coverage(const std::vector<double>& scores,
                                        const std::vector<int>& labels, const GroupSet& groups,
                                        const FitOptions& opt = {}) {
    auto views = detail::group_views(scores, labels, groups);
    ShiftModel model;
    model.groupset_name = groups.name;
    model.objective = ShiftObjective::fairness;
    model.goal = FairnessGoal::accurate_coverage;

    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto& name = groups.group_names[k];
        if (detail::pinned(opt, name)) {
            model.betas[name] = 0.0;
            model.flagged_groups.push_back(name);
            continue;
        }
        const auto& v = views[k];
        // round(label_rate_k * n_k) is exactly the positive-label count
        const long target = static_cast<long>(v.positives);

        double best_beta = 0.0;
        long best_gap = -1, best_count = 0;
        for (double beta : detail::beta_candidates(v.scores, opt.threshold)) {
            long count = 0;
            for (double s : v.scores) count += s + beta > opt.threshold;
            const long gap = std::abs(count - target);
            if (best_gap < 0 || gap < best_gap ||
                (gap == best_gap && count < best_count) ||
                (gap == best_gap && count == best_count && detail::beta_tiebreak(beta, best_beta))) {
                best_gap = gap;
                best_count = count;
                best_beta = beta;
            }
        }
        model.betas[name] = best_beta;
    }
    return model;
}

// Equal opportunity: per group, TPR should match the overall TPR of the
// unshifted predictions (the target is fixed once, before shifting, and is
// recorded on the model). Groups without positive labels get beta = 0.
inline ShiftModel fit_fairness_equal_opportunity(const std::vector<double>& scores,
                                                 const std::vector<int>& labels,
                                                 const GroupSet& groups,
                                                 const FitOptions& opt = {}) {
    auto views = detail::group_views(scores, labels, groups);

    std::size_t tp = 0, pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++pos;
        tp += scores[i] > opt.threshold;
    }
    if (pos == 0) throw ArgumentError("fit_fairness_equal_opportunity: no positive labels");
    const double target = static_cast<double>(tp) / static_cast<double>(pos);

    ShiftModel model;
    model.groupset_name = groups.name;
    model.objective = ShiftObjective::fairness;
    model.goal = FairnessGoal::equal_opportunity;
    model.target_tpr = target;

    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto& name = groups.group_names[k];
        if (detail::pinned(opt, name) || views[k].positives == 0) {
            model.betas[name] = 0.0;
            model.flagged_groups.push_back(name);
            continue;
        }
        const auto& v = views[k];
        std::vector<double> pos_scores;
        for (std::size_t i = 0; i < v.scores.size(); ++i)
            if (v.labels[i] == 1) pos_scores.push_back(v.scores[i]);

        double best_beta = 0.0, best_dev = -1.0;
        std::size_t best_tp = 0;
        for (double beta : detail::beta_candidates(pos_scores, opt.threshold)) {
            std::size_t group_tp = 0;
            for (double s : pos_scores) group_tp += s + beta > opt.threshold;
            const double dev = std::abs(static_cast<double>(group_tp) / pos_scores.size() - target);
            if (best_dev < 0.0 || dev < best_dev ||
                (dev == best_dev && group_tp < best_tp) ||
                (dev == best_dev && group_tp == best_tp &&
                 detail::beta_tiebreak(beta, best_beta))) {
                best_dev = dev;
                best_tp = group_tp;
                best_beta = beta;
            }
        }
        model.betas[name] = best_beta;
    }
    return model;
}

// Accuracy control: per group, maximize in-group thresholded accuracy.
inline ShiftModel fit_accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                               const GroupSet& groups, const FitOptions& opt = {}) {
    auto views = detail::group_views(scores, labels, groups);
    ShiftModel model;
    model.groupset_name = groups.name;
    model.objective = ShiftObjective::accuracy;

    for (std::size_t k = 0; k < groups.group_count(); ++k) {
        const auto& name = groups.group_names[k];
        if (detail::pinned(opt, name)) {
            model.betas[name] = 0.0;
            model.flagged_groups.push_back(name);
            continue;
        }
        const auto& v = views[k];
        double best_beta = 0.0;
        long best_correct = -1;
        for (double beta : detail::beta_candidates(v.scores, opt.threshold)) {
            long correct = 0;
            for (std::size_t i = 0; i < v.scores.size(); ++i)
                correct += (v.scores[i] + beta > opt.threshold ? 1 : 0) == v.labels[i];
            if (correct > best_correct ||
                (correct == best_correct && detail::beta_tiebreak(beta, best_beta))) {
                best_correct = correct;
                best_beta = beta;
            }
        }
        model.betas[name] = best_beta;
    }
    return model;
}

}  // namespace fairshift

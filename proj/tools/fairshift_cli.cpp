// Command-line front end: ingest, train-base, post-shift, evaluate,
// constrained-train, lemma-demo, reproduce-adult. Exit codes: 0 success,
// 1 data/config error, 2 numerical failure.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairshift/constrained.hpp"
#include "fairshift/core.hpp"
#include "fairshift/dataset.hpp"
#include "fairshift/geometry.hpp"
#include "fairshift/harness.hpp"
#include "fairshift/metrics.hpp"
#include "fairshift/model.hpp"
#include "fairshift/postshift.hpp"

namespace {

using namespace fairshift;

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("invalid JSON in '" + path + "': " + e.what());
    }
}

ExperimentConfig require_config(const std::string& config_path) {
    if (config_path.empty()) throw ArgumentError("this subcommand needs --config <json>");
    return ExperimentConfig::from_json(load_json_file(config_path));
}

struct LoadedExperiment {
    Dataset train;
    Dataset test;
    IngestionReport ingestion;
};

LoadedExperiment load_and_encode(const ExperimentConfig& cfg) {
    LoadedExperiment out;
    auto [train_raw, test_raw] = load_adult(cfg.train_path, cfg.test_path, &out.ingestion);
    auto encoded = encode(train_raw, test_raw, cfg.encoding);
    out.train = std::move(encoded.train);
    out.test = std::move(encoded.test);
    return out;
}

GroupSet named_groupset(const Dataset& data, const ExperimentConfig& cfg,
                        const std::string& name) {
    auto it = cfg.groupsets.find(name);
    if (it == cfg.groupsets.end())
        throw ArgumentError("config defines no group set named '" + name + "'");
    GroupSet gs = categorical_groups(data, it->second);
    gs.name = name;
    return gs;
}

std::string fairness_report_markdown(const FairnessReport& report) {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };
    std::string out =
        "| group | count | coverage | label rate | accuracy | tpr | fpr |\n"
        "|---|---|---|---|---|---|---|\n";
    auto line = [&](const GroupMetrics& g) {
        out += "| " + g.name + " | " + std::to_string(g.count) + " | " + num(g.coverage) + " | " +
               num(g.label_rate) + " | " + num(g.accuracy) + " | " +
               (g.tpr ? num(*g.tpr) : std::string("n/a")) + " | " +
               (g.fpr ? num(*g.fpr) : std::string("n/a")) + " |\n";
    };
    line(report.aggregate);
    for (const auto& g : report.per_group) line(g);
    out += "\nmean coverage error: " + num(report.mean_coverage_error) +
           "\nmean equal opportunity error: " + num(report.mean_equal_opp_error) + "\n";
    for (const auto& w : report.warnings) out += "warning: " + w + "\n";
    return out;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"fairshift: per-group score shifts, fairness metrics, constrained training"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = ".";
    std::string format = "json";
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "seed override");
    app.add_option("--config", config_path, "experiment config JSON path");
    app.add_option("--out", out_dir, "output directory (FAIRSHIFT_OUT overrides)");
    app.add_option("--format", format, "stdout format")
        ->check(CLI::IsMember({"json", "md", "csv"}));

    auto apply_overrides = [&](ExperimentConfig& cfg) {
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (app.count("--out") > 0) cfg.out_dir = out_dir;
    };

    // ingest
    std::string train_path, test_path;
    auto* ingest = app.add_subcommand("ingest", "read the data files and report row statistics");
    ingest->add_option("--train", train_path, "training split path")->required();
    ingest->add_option("--test", test_path, "test split path")->required();
    ingest->callback([&] {
        IngestionReport report;
        load_adult(train_path, test_path, &report);
        const auto json = report.to_json().dump(2) + "\n";
        atomic_write(std::filesystem::path(resolve_out_dir(out_dir)) / "ingest.json", json);
        std::cout << json;
    });

    // train-base
    auto* train_cmd = app.add_subcommand("train-base", "train the base model from --config");
    train_cmd->callback([&] {
        auto cfg = require_config(config_path);
        apply_overrides(cfg);
        auto data = load_and_encode(cfg);
        TrainConfig tc = cfg.base_train;
        tc.seed = cfg.seed;
        const LinearModel model = train_base(data.train, tc);
        const double train_acc = accuracy(predict(model, data.train.features), data.train.labels);
        const double test_acc = accuracy(predict(model, data.test.features), data.test.labels);
        const auto path = std::filesystem::path(resolve_out_dir(cfg.out_dir)) / "model.json";
        atomic_write(path, model.to_json().dump(2) + "\n");
        std::cout << "wrote " << path.string() << " (train acc " << train_acc * 100.0
                  << "%, test acc " << test_acc * 100.0 << "%)\n";
    });

    // post-shift
    std::string model_path, feature, objective = "fairness", goal = "accurate_coverage";
    auto* shift_cmd = app.add_subcommand("post-shift", "fit per-group score shifts on the train split");
    shift_cmd->add_option("--model", model_path, "base model JSON")->required();
    shift_cmd->add_option("--feature", feature, "group set to shift on")->required();
    shift_cmd->add_option("--objective", objective, "fairness or accuracy")
        ->check(CLI::IsMember({"fairness", "accuracy"}));
    shift_cmd->add_option("--goal", goal, "fairness goal")
        ->check(CLI::IsMember({"accurate_coverage", "equal_opportunity"}));
    shift_cmd->callback([&] {
        auto cfg = require_config(config_path);
        apply_overrides(cfg);
        auto data = load_and_encode(cfg);
        const LinearModel model = LinearModel::from_json(load_json_file(model_path));
        const GroupSet groups = named_groupset(data.train, cfg, feature);
        const auto scores = model.score(data.train.features);
        FitOptions opt;
        opt.threshold = model.threshold;
        ShiftModel shift;
        if (objective == "accuracy")
            shift = fit_accuracy(scores, data.train.labels, groups, opt);
        else if (goal == "accurate_coverage")
            shift = fit_fairness_coverage(scores, data.train.labels, groups, opt);
        else
            shift = fit_fairness_equal_opportunity(scores, data.train.labels, groups, opt);
        const auto path = std::filesystem::path(resolve_out_dir(cfg.out_dir)) / "shift.json";
        atomic_write(path, shift.to_json().dump(2) + "\n");
        std::cout << "wrote " << path.string() << "\n";
    });

    // evaluate
    std::string shift_path;
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a model (optionally shifted)");
    eval_cmd->add_option("--model", model_path, "base model JSON")->required();
    eval_cmd->add_option("--shift", shift_path, "shift model JSON");
    eval_cmd->callback([&] {
        auto cfg = require_config(config_path);
        apply_overrides(cfg);
        auto data = load_and_encode(cfg);
        const LinearModel model = LinearModel::from_json(load_json_file(model_path));
        std::optional<ShiftModel> shift;
        if (!shift_path.empty()) shift = ShiftModel::from_json(load_json_file(shift_path));

        nlohmann::ordered_json out;
        std::string md;
        const std::array<std::pair<const char*, const Dataset*>, 2> splits = {
            {{"train", &data.train}, {"test", &data.test}}};
        for (const auto& [split_name, split] : splits) {
            auto scores = model.score(split->features);
            if (shift) {
                GroupSet groups = named_groupset(*split, cfg, shift->groupset_name);
                scores = apply_shift(scores, groups, *shift);
            }
            const auto preds = predict(scores, model.threshold);
            out[split_name]["accuracy"] = accuracy(preds, split->labels);
            md += std::string("## ") + split_name + "\n\n";
            for (const auto& name : cfg.evaluate_groupsets) {
                const auto report = evaluate(preds, split->labels, named_groupset(*split, cfg, name));
                out[split_name][name] = report.to_json();
                md += "### " + name + "\n\n" + fairness_report_markdown(report) + "\n";
            }
        }
        const auto dir = std::filesystem::path(resolve_out_dir(cfg.out_dir));
        atomic_write(dir / "evaluation.json", out.dump(2) + "\n");
        atomic_write(dir / "evaluation.md", md);
        std::cout << (format == "md" ? md : out.dump(2) + "\n");
    });

    // constrained-train
    auto* con_cmd = app.add_subcommand("constrained-train",
                                       "train with fairness constraints from --config");
    con_cmd->callback([&] {
        auto cfg = require_config(config_path);
        apply_overrides(cfg);
        const auto raw = load_json_file(config_path);
        if (!raw.contains("constrained"))
            throw DataError("config: constrained-train needs a 'constrained' section");
        const auto& section = raw.at("constrained");

        auto data = load_and_encode(cfg);
        ConstrainedTrainConfig ctc;
        ctc.inner = cfg.base_train;
        ctc.inner.seed = cfg.seed;
        ctc.surrogate_temperature = section.value("temperature", ctc.surrogate_temperature);
        ctc.multiplier_step = section.value("multiplier_step", ctc.multiplier_step);
        ctc.outer_iterations = section.value("outer_iterations", ctc.outer_iterations);

        std::vector<FairnessConstraint> constraints;
        for (const auto& spec : section.value("constraints", nlohmann::json::array())) {
            FairnessConstraint c;
            const std::string kind = spec.at("kind").get<std::string>();
            if (kind == "coverage_floor")
                c.kind = ConstraintKind::coverage_floor;
            else if (kind == "coverage_match")
                c.kind = ConstraintKind::coverage_match;
            else if (kind == "tpr_match")
                c.kind = ConstraintKind::tpr_match;
            else
                throw DataError("config: unknown constraint kind '" + kind + "'");
            const std::string gs_name = spec.at("groupset").get<std::string>();
            const std::string group = spec.at("group").get<std::string>();
            const GroupSet gs = named_groupset(data.train, cfg, gs_name);
            const auto it = std::find(gs.group_names.begin(), gs.group_names.end(), group);
            if (it == gs.group_names.end())
                throw DataError("config: group set '" + gs_name + "' has no group '" + group + "'");
            c.group_mask = gs.masks[static_cast<std::size_t>(it - gs.group_names.begin())];
            c.alpha = spec.value("alpha", c.alpha);
            c.slack = spec.value("slack", c.slack);
            c.name = kind + "_" + group;
            constraints.push_back(std::move(c));
        }

        const auto result = train_constrained(data.train, constraints, ctc);
        const auto dir = std::filesystem::path(resolve_out_dir(cfg.out_dir));
        atomic_write(dir / "constrained_model.json", result.model.to_json().dump(2) + "\n");
        atomic_write(dir / "constrained_trace.csv", result.trace_csv(constraints));
        std::cout << "infeasible: " << (result.infeasible ? "true" : "false") << "\n";
        for (std::size_t k = 0; k < constraints.size(); ++k)
            std::cout << constraints[k].name << " indicator J = " << result.final_indicator[k]
                      << "\n";
        std::cout << "train accuracy: "
                  << accuracy(predict(result.model, data.train.features), data.train.labels) * 100.0
                  << "%\n";
    });

    // lemma-demo
    std::size_t count = 100;
    std::string lemma_case = "all";
    auto* lemma_cmd = app.add_subcommand("lemma-demo",
                                         "generate projection-lemma scenarios and check them");
    lemma_cmd->add_option("--count", count, "number of instances");
    lemma_cmd->add_option("--case", lemma_case, "A, B, C, D, or all (cycles A,B,C)")
        ->check(CLI::IsMember({"A", "B", "C", "D", "all"}));
    lemma_cmd->callback([&] {
        const std::uint64_t base_seed = seed_opt->count() > 0 ? seed : 7;
        std::string csv = "case,d1,d2,pass,theta_star_x,theta_star_y,theta_c_x,theta_c_y\n";
        auto coords = nlohmann::ordered_json::array();
        std::size_t passed = 0;

        for (std::size_t i = 0; i < count; ++i) {
            LemmaCase which;
            if (lemma_case == "all")
                which = std::array{LemmaCase::A, LemmaCase::B, LemmaCase::C}[i % 3];
            else
                which = lemma_case == "A"   ? LemmaCase::A
                        : lemma_case == "B" ? LemmaCase::B
                        : lemma_case == "C" ? LemmaCase::C
                                            : LemmaCase::D;
            const auto inst = generate_case(which, base_seed + i);

            double d1, d2;
            bool pass;
            std::vector<double> theta_c;
            if (which == LemmaCase::D) {
                // The lemma's excluded case: report distances to the true
                // set, where the proxy projection can land farther away.
                theta_c = project_polyhedron(inst.theta_star, inst.proxy_set);
                d1 = distance_to(inst.theta_star, inst.true_set);
                d2 = distance_to(theta_c, inst.true_set);
                pass = false;
            } else {
                const auto report = check_lemma(inst);
                d1 = report.d1;
                d2 = report.d2;
                pass = report.pass;
                theta_c = report.theta_c;
            }
            passed += pass;

            char line[256];
            std::snprintf(line, sizeof(line), "%s,%.12g,%.12g,%s,%.12g,%.12g,%.12g,%.12g\n",
                          to_string(which).c_str(), d1, d2, pass ? "true" : "false",
                          inst.theta_star[0], inst.theta_star[1], theta_c[0], theta_c[1]);
            csv += line;

            nlohmann::ordered_json entry;
            entry["case"] = to_string(which);
            entry["theta_star"] = inst.theta_star;
            entry["theta_c"] = theta_c;
            auto rows_json = [](const Polyhedron& p) {
                auto arr = nlohmann::ordered_json::array();
                for (const auto& r : p.rows) arr.push_back({{"a", r.a}, {"b", r.b}});
                return arr;
            };
            entry["true_set"] = rows_json(inst.true_set);
            entry["proxy_set"] = rows_json(inst.proxy_set);
            entry["d1"] = d1;
            entry["d2"] = d2;
            entry["pass"] = pass;
            coords.push_back(std::move(entry));
        }

        const auto dir = std::filesystem::path(resolve_out_dir(out_dir));
        atomic_write(dir / "lemma_demo.csv", csv);
        atomic_write(dir / "lemma_demo.json", coords.dump(2) + "\n");
        if (format == "csv")
            std::cout << csv;
        else
            std::cout << passed << "/" << count << " instances satisfied the lemma bound\n";
    });

    // reproduce-adult
    std::string adult_train = "data/adult/adult.data";
    std::string adult_test = "data/adult/adult.test";
    auto* repro_cmd = app.add_subcommand("reproduce-adult",
                                         "run both five-row income experiments and compare to the "
                                         "published reference numbers");
    repro_cmd->add_option("--train", adult_train, "adult.data path");
    repro_cmd->add_option("--test", adult_test, "adult.test path");
    repro_cmd->callback([&] {
        const std::uint64_t s = seed_opt->count() > 0 ? seed : 13;
        const auto [coverage, eqopp] = reproduce_adult(adult_train, adult_test, out_dir, s);
        std::cout << "base test accuracy: " << coverage.base_test_accuracy * 100.0 << "%\n"
                  << "reports written to " << resolve_out_dir(out_dir) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const fairshift::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

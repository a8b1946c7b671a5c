/*
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "CLI11.hpp"
#include "json.hpp"

#include "stagewatch/config.hpp"
#include "stagewatch/experiment.hpp"
#include "stagewatch/spcab.hpp"

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace sw = stagewatch;

namespace {

struct CommonOptions {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<unsigned> workers;
};

void add_common(CLI::App *cmd, CommonOptions &o) {
    cmd->add_option("-c,--config", o.config, "Experiment config (JSON)");
    cmd->add_option("--set", o.sets, "Override a config field: /json/pointer=value (repeatable)");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("-o,--out", o.out, "Output directory (default $STAGEWATCH_OUT_DIR or ./stagewatch-out)");
    cmd->add_option("-j,--workers", o.workers, "Worker threads (0 = all cores)");
}

sw::ExperimentConfig load(const CommonOptions &o, std::vector<std::string> extra = {}) {
    std::optional<nlohmann::json> file;
    if (!o.config.empty())
        file = sw::load_config_file(o.config);
    auto sets = o.sets;
    if (o.seed)
        sets.push_back("/seed=" + std::to_string(*o.seed));
    if (!o.out.empty())
        sets.push_back("/output_dir=" + nlohmann::json(o.out).dump());
    if (o.workers)
        sets.push_back("/workers=" + std::to_string(*o.workers));
    sets.insert(sets.end(), extra.begin(), extra.end());
    return sw::parse_config(sw::resolve_config(file, sets));
}

int fail(const std::string &kind, const std::string &message, int code) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

void print(const nlohmann::json &j) { std::cout << j.dump(2) << '\n'; }

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"stagewatch: per-stage power side-channel Trojan detection experiments"};
    app.require_subcommand(1);

    CommonOptions gen_o, train_o, eval_o, sweep_o, cat_o;

    auto *gen = app.add_subcommand("gen", "Generate training and evaluation datasets");
    add_common(gen, gen_o);

    auto *train = app.add_subcommand("train", "Explore topologies, select one and train it");
    add_common(train, train_o);

    auto *eval = app.add_subcommand("eval", "Evaluate a trained model on the evaluation datasets");
    add_common(eval, eval_o);
    std::string eval_model;
    bool allow_training = false;
    eval->add_option("-m,--model", eval_model, "Model file (default <out>/model/model.json)");
    eval->add_flag("--allow-training-benchmarks", allow_training,
                   "Permit evaluation on benchmarks used for training");

    auto *sweep = app.add_subcommand("sweep", "Evaluate a model across a perturbation axis");
    add_common(sweep, sweep_o);
    std::string axis, sweep_model;
    sweep->add_option("axis", axis, "pv_range | aging | input_vector | cross_core_workload | phase")
        ->required();
    sweep->add_option("-m,--model", sweep_model, "Model file (default <out>/model/model.json)");

    auto *cat = app.add_subcommand("catalog", "Print the Trojan catalog");
    add_common(cat, cat_o);
    std::string delta_p_file, delta_p_workload = "add";
    std::size_t delta_p_trials = 10;
    cat->add_option("--delta-p", delta_p_file, "Also write per-stage delta-P of each scenario (CSV)");
    cat->add_option("--workload", delta_p_workload, "Workload for --delta-p")->capture_default_str();
    cat->add_option("--trials", delta_p_trials, "Trials for --delta-p")->capture_default_str();

    auto *sizing = app.add_subcommand("sizing-report", "Current-mirror sizing and power-port count");
    sw::SizingParams sp;
    std::string sizing_file;
    sizing->add_option("--supply-voltage", sp.supply_voltage)->capture_default_str();
    sizing->add_option("--base-width", sp.base_width)->capture_default_str();
    sizing->add_option("--mobility-ratio", sp.mobility_ratio)->capture_default_str();
    sizing->add_option("--min-nmos-width", sp.min_nmos_width)->capture_default_str();
    sizing->add_option("--area-per-width", sp.area_per_width)->capture_default_str();
    sizing->add_option("--write", sizing_file, "Write the report to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (*gen) {
            const auto cfg = load(gen_o);
            const auto m = sw::cmd_gen(cfg);
            print({{"manifest", (sw::data_dir(cfg) / "manifest.json").string()},
                   {"files", m.at("files").size()}});
        } else if (*train) {
            const auto cfg = load(train_o);
            const auto r = sw::cmd_train(cfg);
            const auto &row = r.grid.results[r.selected];
            print({{"model", sw::default_model_path(cfg).string()},
                   {"dse_report", (sw::model_dir(cfg) / "dse.csv").string()},
                   {"selected", row.topology.label()},
                   {"cv_accuracy", row.accuracy},
                   {"parameters", row.parameter_count}});
        } else if (*eval) {
            std::vector<std::string> extra;
            if (allow_training)
                extra.push_back("/evaluation/allow_training_benchmarks=true");
            const auto cfg = load(eval_o, extra);
            std::optional<sw::fs::path> mp;
            if (!eval_model.empty())
                mp = eval_model;
            const auto rs = sw::cmd_eval(cfg, mp);
            nlohmann::json cells = nlohmann::json::array();
            for (const auto &c : rs)
                cells.push_back({{"benchmark", c.report.benchmark},
                                 {"tags", c.report.tags},
                                 {"accuracy", c.report.accuracy},
                                 {"mcc", sw::mcc_text(c.report.mcc)}});
            print({{"report", (sw::reports_dir(cfg) / "benchmark_detection.csv").string()},
                   {"cells", cells}});
        } else if (*sweep) {
            const auto a = sw::parse_axis(axis);
            const auto cfg = load(sweep_o);
            std::optional<sw::fs::path> mp;
            if (!sweep_model.empty())
                mp = sweep_model;
            const auto r = sw::cmd_sweep(cfg, a, mp);
            const std::string stem(sw::axis_file_stem(a));
            print({{"cells", sw::reports_dir(cfg) / "sweep" / (stem + "_accuracy.csv")},
                   {"summary", sw::reports_dir(cfg) / "sweep" / (stem + "_summary.csv")},
                   {"points", r.summary.size()}});
        } else if (*cat) {
            const auto cfg = load(cat_o);
            if (!delta_p_file.empty()) {
                (void)cfg.workload(delta_p_workload);
                sw::io::write_file(delta_p_file, sw::delta_p_csv(cfg, delta_p_workload, delta_p_trials));
            }
            print(cfg.trojans.to_json());
        } else if (*sizing) {
            const auto table = sw::build_instruction_table();
            const auto stages = sw::leon3_stage_profile();
            const auto report =
                sw::sizing_report(stages, sw::default_power_model(table), sp).dump(2) + "\n";
            if (sizing_file.empty())
                std::cout << report;
            else
                sw::io::write_file(sizing_file, report);
        }
    } catch (const sw::UsageError &e) {
        return fail(e.kind(), e.what(), 2);
    } catch (const sw::Error &e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const nlohmann::json::exception &e) {
        return fail("data", e.what(), 1);
    } catch (const std::filesystem::filesystem_error &e) {
        return fail("file", e.what(), 1);
    }
    return 0;
}

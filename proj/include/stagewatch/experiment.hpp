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

#pragma once

// Experiment orchestration: trial generation, dataset files and manifest,
// training with topology selection, evaluation, and perturbation sweeps.
//
// Seeds: every trial seed is derive_seed(cell_seed, "trial", t) with
// cell_seed = derive_seed(master, "train/<scenario>/<workload>") for
// training cells and derive_seed(master, "eval/<benchmark>") for every
// evaluation cell of a benchmark, so PV, aging and cross-core variants of a
// benchmark share instruction streams, noise and trigger windows.

#include "json.hpp"

#include "stagewatch/config.hpp"
#include "stagewatch/dse.hpp"
#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"
#include "stagewatch/job_pool.hpp"
#include "stagewatch/metrics.hpp"
#include "stagewatch/mlp.hpp"
#include "stagewatch/spcab.hpp"
#include "stagewatch/trojan.hpp"
#include "stagewatch/variation.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stagewatch {

namespace fs = std::filesystem;

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char *kFeatureSchema = "stagewatch-features-v1";

struct CellSpec {
    std::string label;
    std::string workload;
    std::vector<std::string> trojans;
    std::size_t trials = 1;
    std::uint64_t activations = 0;
    std::vector<double> pv_ranges{0.0}; // trial t uses pv_ranges[t % size]
    AgingYear year = AgingYear::Y0;
    AgingPolicy policy = AgingPolicy::none;
    std::vector<std::string> neighbours;
    double coupling = 0.0;
    std::optional<PipelineStage> phase; // nullopt = rotate with trial index
    std::optional<std::size_t> input_vector;
    Seed seed = 0;
};

// Applies each Trojan to the clean trace and composes the relative
// changes, so overlapping windows multiply.
inline PowerTrace inject_all(const PowerTrace &clean, std::span<const TrojanModel> models,
                             const InstructionTable &table) {
    PowerTrace out = clean;
    for (const auto &m : models) {
        const auto inj = inject(clean, m, table);
        for (std::size_t t = 0; t < clean.size(); ++t) {
            if (!inj[t].ht_active)
                continue;
            for (std::size_t s = 0; s < kStageCount; ++s)
                out[t].stage_power[s] *= inj[t].stage_power[s] / clean[t].stage_power[s];
            out[t].ht_name = out[t].ht_active ? out[t].ht_name + "+" + m.name : m.name;
            out[t].ht_active = true;
        }
    }
    return out;
}

// One trial: simulate, then PV, aging, Trojan injection and cross-core
// coupling in that order.
inline PowerTrace simulate_trial(const ExperimentConfig &cfg, const CellSpec &cell,
                                 std::size_t trial) {
    const Seed s = derive_seed(cell.seed, "trial", trial);
    const Seed wl_seed = cell.input_vector ? derive_seed(cfg.seed, "input_vector", *cell.input_vector)
                                           : derive_seed(s, "workload");
    const auto wl = generate_workload(cfg.workload(cell.workload), cfg.instructions,
                                      cfg.trace_cycles, wl_seed);
    auto trace = simulate_trace(wl, cfg.power, cfg.trace_cycles, derive_seed(s, "noise"),
                                cfg.noise_sigma);
    const double pv = cell.pv_ranges[trial % cell.pv_ranges.size()];
    if (pv > 0.0)
        trace = apply_pv(trace, {pv, cfg.pv_granularity, cfg.pv_distribution, derive_seed(s, "pv")});
    if (cell.year != AgingYear::Y0)
        trace = apply_aging(trace, {cell.year, cell.policy, cfg.aging_table});
    if (!cell.trojans.empty()) {
        std::vector<TrojanModel> models;
        for (const auto &name : cell.trojans) {
            auto m = cfg.trojans.at(name);
            m.trigger.seed = derive_seed(s, "trigger/" + name);
            if (m.trigger.mode == TriggerMode::fixed_count)
                m.trigger.target_activations = cell.activations;
            models.push_back(std::move(m));
        }
        trace = inject_all(trace, models, cfg.instructions);
    }
    if (!cell.neighbours.empty() && cell.coupling > 0.0) {
        std::vector<PowerTrace> nbs;
        for (std::size_t j = 0; j < cell.neighbours.size(); ++j) {
            const Seed ns = derive_seed(s, "neighbour", j);
            const auto nwl = generate_workload(cfg.workload(cell.neighbours[j]), cfg.instructions,
                                               cfg.trace_cycles, derive_seed(ns, "workload"));
            nbs.push_back(simulate_trace(nwl, cfg.power, cfg.trace_cycles,
                                         derive_seed(ns, "noise"), cfg.noise_sigma));
        }
        apply_cross_core(trace, nbs, cell.coupling);
    }
    return trace;
}

inline std::vector<SampledFeature> generate_cell(const ExperimentConfig &cfg, const CellSpec &cell) {
    std::vector<SampledFeature> out;
    out.reserve(cell.trials * cfg.trace_cycles / cfg.adc.sample_period_cycles);
    for (std::size_t t = 0; t < cell.trials; ++t) {
        const auto trace = simulate_trial(cfg, cell, t);
        const auto start = cell.phase ? *cell.phase : stage_at(t % kStageCount);
        const auto f = acquire(trace, cfg.adc, start, cfg.instructions);
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

inline std::string pv_label(double r) { return io::fmt(r); }

inline std::vector<CellSpec> training_cells(const ExperimentConfig &cfg) {
    std::vector<CellSpec> cells;
    for (const auto &id : cfg.training.scenarios)
        for (const auto &wl : cfg.training.workloads) {
            CellSpec c;
            c.label = id + "__" + wl;
            c.workload = wl;
            c.trojans = cfg.scenario(id).active_trojans;
            c.trials = cfg.training.trials;
            c.activations = cfg.training.activations;
            c.pv_ranges = cfg.training.pv_ranges;
            c.phase = cfg.phase;
            c.seed = derive_seed(cfg.seed, "train/" + id + "/" + wl);
            cells.push_back(std::move(c));
        }
    return cells;
}

inline CellSpec eval_cell(const ExperimentConfig &cfg, const std::string &benchmark, double pv,
                          AgingYear year, AgingPolicy policy) {
    CellSpec c;
    c.label = benchmark + "__pv" + pv_label(pv) + "__" + to_string(year) + "__" + to_string(policy);
    c.workload = cfg.evaluation.workload;
    c.trojans = {benchmark};
    c.trials = cfg.evaluation.trials;
    c.activations = cfg.evaluation.activations;
    c.pv_ranges = {pv};
    c.year = year;
    c.policy = policy;
    c.neighbours = cfg.cross_core.neighbour_workloads;
    c.coupling = cfg.cross_core.coupling;
    c.phase = cfg.phase;
    c.seed = derive_seed(cfg.seed, "eval/" + benchmark);
    return c;
}

inline std::map<std::string, std::string> cell_tags(const CellSpec &c) {
    return {{"pv_range", pv_label(c.pv_ranges.front())},
            {"aging_year", to_string(c.year)},
            {"aging_policy", to_string(c.policy)}};
}

inline std::vector<CellSpec> evaluation_cells(const ExperimentConfig &cfg) {
    std::vector<CellSpec> cells;
    for (const auto &b : cfg.evaluation.benchmarks)
        for (double pv : cfg.evaluation.pv_ranges)
            for (auto y : cfg.evaluation.aging_years)
                for (auto p : cfg.evaluation.aging_policies)
                    cells.push_back(eval_cell(cfg, b, pv, y, p));
    return cells;
}

// Fields that change dataset content; output location and worker count do not.
inline std::string config_fingerprint(const ExperimentConfig &cfg) {
    auto j = cfg.raw;
    j.erase("output_dir");
    j.erase("workers");
    return io::content_hash(j.dump());
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline fs::path data_dir(const ExperimentConfig &cfg) { return cfg.output_dir / "data"; }
inline fs::path model_dir(const ExperimentConfig &cfg) { return cfg.output_dir / "model"; }
inline fs::path reports_dir(const ExperimentConfig &cfg) { return cfg.output_dir / "reports"; }
inline fs::path default_model_path(const ExperimentConfig &cfg) { return model_dir(cfg) / "model.json"; }

// ---- gen ------------------------------------------------------------------

inline nlohmann::json cmd_gen(const ExperimentConfig &cfg) {
    const auto train = training_cells(cfg);
    const auto eval = evaluation_cells(cfg);
    std::vector<std::pair<std::string, const CellSpec *>> jobs;
    for (const auto &c : train)
        jobs.push_back({"train", &c});
    for (const auto &c : eval)
        jobs.push_back({"eval", &c});

    const auto entries = parallel_map<nlohmann::json>(jobs.size(), cfg.workers, [&](std::size_t i) {
        const auto &[split, cell] = jobs[i];
        const auto features = generate_cell(cfg, *cell);
        const auto bytes = features_to_binary(features);
        const fs::path rel = fs::path(split) / (cell->label + ".swf");
        io::write_file(data_dir(cfg) / rel, bytes);
        std::size_t pos = 0;
        for (const auto &f : features)
            pos += f.ground_truth;
        nlohmann::json e{{"path", rel.generic_string()},
                         {"split", split},
                         {"label", cell->label},
                         {"workload", cell->workload},
                         {"trojans", cell->trojans},
                         {"trials", cell->trials},
                         {"activations", cell->activations},
                         {"pv_ranges", cell->pv_ranges},
                         {"aging_year", cell->year},
                         {"aging_policy", cell->policy},
                         {"seed", cell->seed},
                         {"samples", features.size()},
                         {"intruded_samples", pos},
                         {"hash", io::content_hash(bytes)}};
        if (split == std::string("train"))
            e["scenario"] = cell->label.substr(0, cell->label.find("__"));
        else
            e["benchmark"] = cell->trojans.front();
        return e;
    });

    nlohmann::json manifest{
        {"format", "stagewatch-dataset"},
        {"dataset_version", kDatasetFormatVersion},
        {"feature_schema", kFeatureSchema},
        {"seed", cfg.seed},
        {"catalog_version", cfg.trojans.version()},
        {"config_fingerprint", config_fingerprint(cfg)},
        {"files", entries},
        {"metadata", {{"generated_at", utc_timestamp()}}},
    };
    io::write_file(data_dir(cfg) / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

// Manifest without its metadata block, which is the only part allowed to
// differ between identical runs.
inline std::string manifest_digest(const nlohmann::json &manifest) {
    auto m = manifest;
    m.erase("metadata");
    return io::content_hash(m.dump());
}

inline nlohmann::json load_manifest(const ExperimentConfig &cfg) {
    const auto path = data_dir(cfg) / "manifest.json";
    if (!fs::exists(path))
        throw FileError("dataset manifest " + path.string() + " not found; run gen first");
    auto m = nlohmann::json::parse(io::read_file(path));
    if (m.value("dataset_version", -1) != kDatasetFormatVersion ||
        m.value("feature_schema", "") != kFeatureSchema)
        throw CompatibilityError("dataset " + path.string() + " has version " +
                                 m.value("dataset_version", nlohmann::json(nullptr)).dump() +
                                 ", expected " + std::to_string(kDatasetFormatVersion));
    return m;
}

inline std::vector<SampledFeature> load_dataset_file(const ExperimentConfig &cfg,
                                                     const nlohmann::json &entry) {
    const auto path = data_dir(cfg) / entry.at("path").get<std::string>();
    if (!fs::exists(path))
        throw FileError("dataset file " + path.string() + " not found");
    const auto bytes = io::read_file(path);
    if (io::content_hash(bytes) != entry.at("hash").get<std::string>())
        throw DataError("dataset file " + path.string() + " does not match its manifest hash");
    return features_from_binary(bytes);
}

// ---- train ----------------------------------------------------------------

struct TrainOutcome {
    DseGrid grid;
    std::size_t selected = 0;
    MlpModel model;
    nlohmann::json provenance;
};

inline TrainOutcome cmd_train(const ExperimentConfig &cfg) {
    const auto manifest = load_manifest(cfg);
    std::map<std::string, std::vector<SampledFeature>> by_scenario;
    nlohmann::json used = nlohmann::json::array();
    std::set<std::string> workloads;
    for (const auto &e : manifest.at("files")) {
        if (e.at("split") != "train")
            continue;
        const auto scenario = e.at("scenario").get<std::string>();
        const auto workload = e.at("workload").get<std::string>();
        if (std::find(cfg.training.scenarios.begin(), cfg.training.scenarios.end(), scenario) ==
                cfg.training.scenarios.end() ||
            std::find(cfg.training.workloads.begin(), cfg.training.workloads.end(), workload) ==
                cfg.training.workloads.end())
            continue;
        for (const auto &t : e.at("trojans"))
            if (cfg.trojans.at(t.get<std::string>()).split != Split::train)
                throw DataError("training file " + e.at("path").get<std::string>() +
                                " contains evaluation benchmark " + t.get<std::string>());
        auto f = load_dataset_file(cfg, e);
        auto &dst = by_scenario[scenario];
        dst.insert(dst.end(), f.begin(), f.end());
        workloads.insert(workload);
        used.push_back({{"path", e.at("path")}, {"hash", e.at("hash")}});
    }
    for (const auto &id : cfg.training.scenarios)
        if (!by_scenario.count(id))
            throw FileError("no training data for scenario " + id + " in the dataset manifest");

    auto provider = [&](const ScenarioSet &set) {
        std::vector<SampledFeature> fs;
        const auto &ids = set.scenario_ids.empty() ? cfg.training.scenarios : set.scenario_ids;
        for (const auto &id : ids)
            fs.insert(fs.end(), by_scenario.at(id).begin(), by_scenario.at(id).end());
        return TrainingSet::from_features(std::move(fs));
    };

    TrainOutcome out;
    out.grid = explore(provider, cfg.grid, cfg.hyper, cfg.k_folds, cfg.workers);
    out.selected = select(out.grid, cfg.constraints);
    const auto &row = out.grid.results[out.selected];

    ScenarioSet chosen{"all", {}};
    for (const auto &s : cfg.grid.scenario_sets)
        if (s.label() == row.training_scenarios)
            chosen = s;
    auto hyper = cfg.hyper;
    hyper.seed = derive_seed(cfg.hyper.seed, "final");
    out.model = train(provider(chosen), row.topology, hyper);

    out.provenance = {
        {"dataset_version", kDatasetFormatVersion},
        {"feature_schema", kFeatureSchema},
        {"dataset_digest", manifest_digest(manifest)},
        {"catalog_version", manifest.at("catalog_version")},
        {"training_workloads", std::vector<std::string>(workloads.begin(), workloads.end())},
        {"training_scenarios", chosen.scenario_ids.empty() ? cfg.training.scenarios : chosen.scenario_ids},
        {"training_files", used},
        {"selected",
         {{"layers", row.topology.hidden_layers},
          {"neurons", row.topology.neurons_per_layer},
          {"training_scenarios", row.training_scenarios},
          {"dse_row", out.selected}}},
    };
    auto j = out.model.to_json();
    j["provenance"] = out.provenance;
    io::write_file(default_model_path(cfg), j.dump(2) + "\n");
    io::write_file(model_dir(cfg) / "dse.csv", dse_to_csv(out.grid, out.selected));
    return out;
}

struct LoadedModel {
    MlpModel model;
    nlohmann::json provenance;
};

inline LoadedModel load_model(const fs::path &path) {
    if (!fs::exists(path))
        throw FileError("model file " + path.string() + " not found; run train first");
    const auto j = nlohmann::json::parse(io::read_file(path));
    LoadedModel m{MlpModel::from_json(j), j.value("provenance", nlohmann::json::object())};
    if (m.provenance.value("dataset_version", kDatasetFormatVersion) != kDatasetFormatVersion ||
        m.provenance.value("feature_schema", std::string(kFeatureSchema)) != kFeatureSchema)
        throw CompatibilityError("model " + path.string() + " was trained on dataset version " +
                                 m.provenance.value("dataset_version", nlohmann::json()).dump() +
                                 ", expected " + std::to_string(kDatasetFormatVersion));
    return m;
}

// ---- eval -----------------------------------------------------------------

struct CellResult {
    EvalReport report;
    WindowScore windows;
};

inline CellResult score_cell(const MlpModel &model, std::span<const SampledFeature> fs,
                             std::string benchmark, std::map<std::string, std::string> tags) {
    const auto pred = std::make_unique<bool[]>(fs.size());
    const auto truth = std::make_unique<bool[]>(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
        pred[i] = model.classify(fs[i]).intruded;
        truth[i] = fs[i].ground_truth;
    }
    std::span<const bool> ps(pred.get(), fs.size()), ts(truth.get(), fs.size());
    return {EvalReport::from_counts(tally(ps, ts), std::move(benchmark), std::move(tags)),
            score_windows(ps, ts)};
}

inline std::string cell_results_csv(std::span<const CellResult> rs,
                                    std::span<const std::string> tag_columns) {
    std::ostringstream ss;
    ss << "benchmark";
    for (const auto &t : tag_columns)
        ss << ',' << t;
    ss << ",tp,tn,fp,fn,accuracy,mcc,very_good,windows,windows_detected\n";
    for (const auto &c : rs) {
        const auto &r = c.report;
        ss << r.benchmark;
        for (const auto &t : tag_columns) {
            auto it = r.tags.find(t);
            ss << ',' << (it == r.tags.end() ? "" : it->second);
        }
        ss << ',' << r.counts.tp << ',' << r.counts.tn << ',' << r.counts.fp << ',' << r.counts.fn
           << ',' << io::fmt(r.accuracy) << ',' << mcc_text(r.mcc) << ',' << (r.very_good() ? 1 : 0)
           << ',' << c.windows.windows << ',' << c.windows.detected << '\n';
    }
    return ss.str();
}

inline nlohmann::json cell_result_json(const CellResult &c) {
    auto j = c.report.to_json();
    j["windows"] = c.windows.windows;
    j["windows_detected"] = c.windows.detected;
    j["window_false_alarms"] = c.windows.false_alarms;
    return j;
}

inline std::vector<CellResult> cmd_eval(const ExperimentConfig &cfg,
                                        std::optional<fs::path> model_path = std::nullopt) {
    const auto loaded = load_model(model_path.value_or(default_model_path(cfg)));
    const auto manifest = load_manifest(cfg);
    const auto cells = evaluation_cells(cfg);
    std::map<std::string, nlohmann::json> entries;
    for (const auto &e : manifest.at("files"))
        if (e.at("split") == "eval")
            entries[e.at("label").get<std::string>()] = e;
    auto results = parallel_map<CellResult>(cells.size(), cfg.workers, [&](std::size_t i) {
        const auto &c = cells[i];
        const auto it = entries.find(c.label);
        if (it == entries.end())
            throw FileError("no evaluation dataset for cell " + c.label + "; rerun gen");
        const auto fs = load_dataset_file(cfg, it->second);
        return score_cell(loaded.model, fs, c.trojans.front(), cell_tags(c));
    });
    const std::vector<std::string> tags{"pv_range", "aging_year", "aging_policy"};
    for (std::size_t i = 0; i < cells.size(); ++i)
        io::write_file(reports_dir(cfg) / "eval" / (cells[i].label + ".json"),
                       cell_result_json(results[i]).dump(2) + "\n");
    io::write_file(reports_dir(cfg) / "benchmark_detection.csv", cell_results_csv(results, tags));
    return results;
}

// ---- sweep ----------------------------------------------------------------

enum class SweepAxis { pv_range, aging, input_vector, cross_core_workload, phase };

inline SweepAxis parse_axis(std::string_view s) {
    if (s == "pv_range")
        return SweepAxis::pv_range;
    if (s == "aging")
        return SweepAxis::aging;
    if (s == "input_vector")
        return SweepAxis::input_vector;
    if (s == "cross_core_workload")
        return SweepAxis::cross_core_workload;
    if (s == "phase")
        return SweepAxis::phase;
    throw UsageError("unknown sweep axis '" + std::string(s) +
                     "' (expected pv_range, aging, input_vector, cross_core_workload or phase)");
}

inline std::string_view axis_file_stem(SweepAxis a) {
    switch (a) {
    case SweepAxis::pv_range:
        return "pv_range";
    case SweepAxis::aging:
        return "aging";
    case SweepAxis::input_vector:
        return "input_vector";
    case SweepAxis::cross_core_workload:
        return "cross_core";
    case SweepAxis::phase:
        return "phase";
    }
    return "";
}

struct SweepPoint {
    std::map<std::string, std::string> tags;
    std::string baseline; // key of the point this one's drop is measured against
    std::function<CellSpec(const std::string &benchmark)> make;

    std::string key(std::span<const std::string> columns) const {
        std::string k;
        for (const auto &c : columns)
            k += (k.empty() ? "" : "|") + tags.at(c);
        return k;
    }
};

struct SweepSummaryRow {
    std::map<std::string, std::string> tags;
    std::size_t benchmarks = 0;
    double mean_accuracy = 0.0;
    std::optional<double> mean_mcc;
    double drop_pp = 0.0; // baseline mean accuracy minus this one, in percentage points
};

struct SweepOutcome {
    SweepAxis axis;
    std::vector<std::string> tag_columns;
    std::vector<CellResult> cells;
    std::vector<SweepSummaryRow> summary;

    const SweepSummaryRow &row(const std::map<std::string, std::string> &tags) const {
        for (const auto &r : summary) {
            bool match = true;
            for (const auto &[k, v] : tags)
                match = match && r.tags.count(k) && r.tags.at(k) == v;
            if (match)
                return r;
        }
        throw DomainError("sweep: no summary row for the requested tags");
    }
};

inline std::pair<std::vector<std::string>, std::vector<SweepPoint>>
sweep_points(const ExperimentConfig &cfg, SweepAxis axis) {
    std::vector<SweepPoint> pts;
    auto base = [&cfg](const std::string &b) {
        return eval_cell(cfg, b, 0.0, AgingYear::Y0, AgingPolicy::none);
    };
    switch (axis) {
    case SweepAxis::pv_range: {
        const auto first = pv_label(cfg.sweep.pv_ranges.front());
        for (double r : cfg.sweep.pv_ranges)
            pts.push_back({{{"pv_range", pv_label(r)}}, first, [&cfg, r](const std::string &b) {
                               return eval_cell(cfg, b, r, AgingYear::Y0, AgingPolicy::none);
                           }});
        return {{"pv_range"}, pts};
    }
    case SweepAxis::aging: {
        const double r = cfg.sweep.aging_pv_range;
        for (auto p : cfg.sweep.aging_policies)
            for (auto y : cfg.sweep.aging_years)
                pts.push_back({{{"aging_year", to_string(y)}, {"aging_policy", to_string(p)}},
                               "Y0|" + to_string(p),
                               [&cfg, r, y, p](const std::string &b) {
                                   return eval_cell(cfg, b, r, y, p);
                               }});
        return {{"aging_year", "aging_policy"}, pts};
    }
    case SweepAxis::input_vector: {
        const double r = cfg.sweep.input_vector_pv_range;
        for (std::size_t v = 0; v < cfg.sweep.input_vectors; ++v) {
            const auto vs = std::to_string(v);
            pts.push_back({{{"input_vector", vs}, {"condition", "nominal"}}, vs + "|nominal",
                           [&cfg, v](const std::string &b) {
                               auto c = eval_cell(cfg, b, 0.0, AgingYear::Y0, AgingPolicy::none);
                               c.input_vector = v;
                               return c;
                           }});
            for (auto y : kAllYears)
                pts.push_back({{{"input_vector", vs}, {"condition", "pv_" + to_string(y)}},
                               vs + "|nominal", [&cfg, v, r, y](const std::string &b) {
                                   auto c = eval_cell(cfg, b, r, y, AgingPolicy::none);
                                   c.input_vector = v;
                                   return c;
                               }});
        }
        return {{"input_vector", "condition"}, pts};
    }
    case SweepAxis::cross_core_workload: {
        pts.push_back({{{"cross_core", "none"}}, "none", base});
        for (const auto &cc : cfg.sweep.cross_core_configs)
            pts.push_back({{{"cross_core", cc.name}}, "none", [&cfg, cc](const std::string &b) {
                               auto c = eval_cell(cfg, b, 0.0, AgingYear::Y0, AgingPolicy::none);
                               c.neighbours = cc.workloads;
                               c.coupling = cfg.cross_core.coupling;
                               return c;
                           }});
        return {{"cross_core"}, pts};
    }
    case SweepAxis::phase: {
        const std::string first(column_name(cfg.sweep.phases.front()));
        for (auto s : cfg.sweep.phases)
            pts.push_back({{{"phase", std::string(column_name(s))}}, first,
                           [&cfg, s](const std::string &b) {
                               auto c = eval_cell(cfg, b, 0.0, AgingYear::Y0, AgingPolicy::none);
                               c.phase = s;
                               return c;
                           }});
        return {{"phase"}, pts};
    }
    }
    return {};
}

inline std::string sweep_summary_csv(const SweepOutcome &o) {
    std::ostringstream ss;
    for (const auto &t : o.tag_columns)
        ss << t << ',';
    ss << "benchmarks,mean_accuracy,mean_mcc,drop_pp\n";
    for (const auto &r : o.summary) {
        for (const auto &t : o.tag_columns)
            ss << r.tags.at(t) << ',';
        ss << r.benchmarks << ',' << io::fmt(r.mean_accuracy) << ',' << mcc_text(r.mean_mcc) << ','
           << io::fmt(r.drop_pp) << '\n';
    }
    return ss.str();
}

// The trusted core keeps the configured evaluation workload on every axis.
inline SweepOutcome cmd_sweep(const ExperimentConfig &cfg, SweepAxis axis,
                              std::optional<fs::path> model_path = std::nullopt) {
    const auto loaded = load_model(model_path.value_or(default_model_path(cfg)));
    auto [columns, points] = sweep_points(cfg, axis);
    const auto &benchmarks = cfg.evaluation.benchmarks;
    const std::size_t nb = benchmarks.size();

    SweepOutcome out;
    out.axis = axis;
    out.tag_columns = columns;
    out.cells = parallel_map<CellResult>(points.size() * nb, cfg.workers, [&](std::size_t i) {
        const auto &pt = points[i / nb];
        const auto cell = pt.make(benchmarks[i % nb]);
        const auto fs = generate_cell(cfg, cell);
        return score_cell(loaded.model, fs, benchmarks[i % nb], pt.tags);
    });

    std::map<std::string, double> mean_by_key;
    for (std::size_t p = 0; p < points.size(); ++p) {
        SweepSummaryRow row;
        row.tags = points[p].tags;
        row.benchmarks = nb;
        double acc = 0.0, m = 0.0;
        std::size_t defined = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            const auto &r = out.cells[p * nb + b].report;
            acc += r.accuracy;
            if (r.mcc) {
                m += *r.mcc;
                ++defined;
            }
        }
        row.mean_accuracy = acc / static_cast<double>(nb);
        if (defined)
            row.mean_mcc = m / static_cast<double>(defined);
        mean_by_key[points[p].key(columns)] = row.mean_accuracy;
        out.summary.push_back(std::move(row));
    }
    for (std::size_t p = 0; p < points.size(); ++p) {
        const auto it = mean_by_key.find(points[p].baseline);
        if (it != mean_by_key.end())
            out.summary[p].drop_pp = (it->second - out.summary[p].mean_accuracy) * 100.0;
    }

    const auto dir = reports_dir(cfg) / "sweep";
    const std::string stem(axis_file_stem(axis));
    io::write_file(dir / (stem + "_accuracy.csv"), cell_results_csv(out.cells, columns));
    io::write_file(dir / (stem + "_summary.csv"), sweep_summary_csv(out));
    return out;
}

// ---- catalog helpers ------------------------------------------------------

// Per-stage relative power change of each scenario against S0 over a
// noise-free trace of `workload`, averaged over activation cycles.
inline std::string delta_p_csv(const ExperimentConfig &cfg, const std::string &workload,
                               std::size_t trials) {
    std::ostringstream ss;
    ss << "scenario,trojans";
    for (auto s : kAllStages)
        ss << ",delta_p_" << column_name(s);
    ss << '\n';
    auto quiet = cfg;
    quiet.noise_sigma = 0.0;
    for (const auto &sc : cfg.scenarios) {
        PerStage<long double> nominal{}, injected{};
        for (std::size_t t = 0; t < trials; ++t) {
            CellSpec c;
            c.workload = workload;
            c.activations = cfg.evaluation.activations;
            c.seed = derive_seed(cfg.seed, "delta_p/" + sc.id);
            const auto clean = simulate_trial(quiet, c, t);
            c.trojans = sc.active_trojans;
            const auto inj = simulate_trial(quiet, c, t);
            for (std::size_t k = 0; k < clean.size(); ++k) {
                if (!sc.active_trojans.empty() && !inj[k].ht_active)
                    continue;
                for (std::size_t s = 0; s < kStageCount; ++s) {
                    nominal[s] += clean[k].stage_power[s];
                    injected[s] += inj[k].stage_power[s];
                }
            }
        }
        std::string names;
        for (const auto &n : sc.active_trojans)
            names += (names.empty() ? "" : "+") + n;
        ss << sc.id << ',' << names;
        for (std::size_t s = 0; s < kStageCount; ++s)
            ss << ','
               << io::fmt(nominal[s] > 0 ? delta_p_metric(static_cast<double>(nominal[s]),
                                                          static_cast<double>(injected[s]))
                                         : 0.0);
        ss << '\n';
    }
    return ss.str();
}

struct SeparabilityResult {
    std::string benchmark;
    PipelineStage stage = PipelineStage::Fetch;
    InstructionCategory category = InstructionCategory::Cat1;
    double delta = 0.0;
    PvBoundary boundary;
    std::size_t trials = 0;
    std::size_t separated = 0;

    double rate() const { return trials ? static_cast<double>(separated) / trials : 0.0; }
};

// Works on relative power: stage power over the nominal table entry of
// the instruction occupying the stage, which under PV alone is the static
// stage factor. The boundary spans the per-trial clean means at the
// Trojan's dominant stage; a trial separates when the mean over its
// activation windows leaves the boundary on the side the Trojan pushes
// power. Every window cycle counts regardless of instruction category.
inline SeparabilityResult pv_separability(const ExperimentConfig &cfg, const TrojanModel &trojan,
                                          double pv_range, std::size_t trials) {
    const auto dom = trojan.dominant();
    SeparabilityResult r;
    r.benchmark = trojan.name;
    r.stage = dom.stage;
    r.category = dom.category;
    r.delta = dom.delta;
    r.trials = trials;
    const auto s = index_of(dom.stage);
    auto relative = [&](const PowerTraceRecord &rec) {
        return rec.stage_power[s] / cfg.power.power(rec.instruction[s], dom.stage);
    };

    std::vector<double> nominal_means, window_means;
    for (std::size_t t = 0; t < trials; ++t) {
        CellSpec c;
        c.workload = cfg.evaluation.workload;
        c.activations = cfg.evaluation.activations;
        c.pv_ranges = {pv_range};
        c.seed = derive_seed(cfg.seed, "separability/" + trojan.name);
        const auto clean = simulate_trial(cfg, c, t);
        c.trojans = {trojan.name};
        const auto inj = simulate_trial(cfg, c, t);
        long double nsum = 0, wsum = 0;
        std::size_t wcount = 0;
        for (std::size_t k = 0; k < clean.size(); ++k) {
            nsum += relative(clean[k]);
            if (inj[k].ht_active) {
                wsum += relative(inj[k]);
                ++wcount;
            }
        }
        nominal_means.push_back(static_cast<double>(nsum / clean.size()));
        window_means.push_back(wcount ? static_cast<double>(wsum / wcount)
                                      : std::numeric_limits<double>::quiet_NaN());
    }
    r.boundary = pv_boundary(nominal_means);
    for (double w : window_means)
        r.separated += dom.delta > 0 ? w > r.boundary.p_max : w < r.boundary.p_min;
    return r;
}

} // namespace stagewatch

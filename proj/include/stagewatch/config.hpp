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

// Experiment configuration: a versioned JSON document. Values resolve as
// built-in defaults, then a config file (JSON merge patch), then
// individual JSON-pointer overrides, so command-line flags win.

#include "json.hpp"

#include "stagewatch/dse.hpp"
#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"
#include "stagewatch/isa.hpp"
#include "stagewatch/mlp.hpp"
#include "stagewatch/soc_power.hpp"
#include "stagewatch/spcab.hpp"
#include "stagewatch/trojan.hpp"
#include "stagewatch/variation.hpp"

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stagewatch {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char *kOutDirEnv = "STAGEWATCH_OUT_DIR";

inline std::string default_output_dir() {
    const char *env = std::getenv(kOutDirEnv);
    return env && *env ? env : "stagewatch-out";
}

inline nlohmann::json default_config_json() {
    using nlohmann::json;
    json scenarios = json::array();
    for (const auto &s : default_scenarios())
        scenarios.push_back({{"id", s.id}, {"trojans", s.active_trojans}});
    json years = json::array(), policies = json::array();
    for (auto y : kAllYears)
        years.push_back(y);
    for (auto p : kAllPolicies)
        policies.push_back(p);
    json phases = json::array();
    for (auto s : kAllStages)
        phases.push_back(column_name(s));
    return {
        {"schema_version", kConfigSchemaVersion},
        {"seed", 2026},
        {"output_dir", default_output_dir()},
        {"workers", 1},
        {"trace_cycles", 1000},
        {"noise_sigma", 0.005},
        {"phase", "rotate"},
        {"adc", {{"bits", 10}, {"full_scale", nullptr}, {"sample_period_cycles", 1}}},
        {"pv", {{"granularity", PvGranularity::per_stage}, {"distribution", PvDistribution::gaussian_3sigma}}},
        {"inputs",
         {{"instruction_table", nullptr},
          {"power_model", nullptr},
          {"trojan_catalog", nullptr},
          {"degradation_table", nullptr}}},
        {"workload_specs", json::array()},
        {"trojan_overrides", json::object()},
        {"scenarios", scenarios},
        {"training",
         {{"workloads", {"add", "sub", "mul"}},
          {"scenarios", {"S1", "S2", "S3", "S4", "S5", "S6"}},
          {"trials", 20},
          {"activations", 10},
          {"pv_ranges", {0.0}}}},
        {"evaluation",
         {{"workload", "div"},
          {"benchmarks", catalog().names(Split::eval)},
          {"trials", 100},
          {"activations", 10},
          {"pv_ranges", {0.0}},
          {"aging_years", {"Y0"}},
          {"aging_policies", {"none"}},
          {"allow_training_benchmarks", false}}},
        {"cross_core", {{"neighbour_workloads", json::array()}, {"coupling", 0.01}}},
        {"dse",
         {{"layer_options", {1, 2}},
          {"neuron_options", {4, 8, 16, 32, 64, 100}},
          {"training_scenarios", json::array()},
          {"k_folds", 3},
          {"max_params", nullptr},
          {"max_cost", nullptr}}},
        {"mlp",
         {{"epochs", 40},
          {"learning_rate", 0.03},
          {"class_weight", 2.0},
          {"optimizer", Optimizer::adam},
          {"batch_size", 256},
          {"decision_threshold", 0.5}}},
        {"sweep",
         {{"pv_ranges", {0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10}},
          {"aging_years", years},
          {"aging_policies", policies},
          {"aging_pv_range", 0.10},
          {"input_vectors", 3},
          {"input_vector_pv_range", 0.10},
          {"cross_core_configs",
           {{{"name", "idle"}, {"workloads", {"idle", "idle", "idle"}}},
            {{"name", "add"}, {"workloads", {"add", "add", "add"}}},
            {{"name", "mul"}, {"workloads", {"mul", "mul", "mul"}}},
            {{"name", "div"}, {"workloads", {"div", "div", "div"}}},
            {{"name", "mixed"}, {"workloads", {"add", "mul", "div"}}}}},
          {"phases", phases}}},
    };
}

namespace detail {

// Every key in `patch` must exist in `base`; free-form maps are exempt.
inline void check_known_keys(const nlohmann::json &base, const nlohmann::json &patch,
                             const std::string &path) {
    if (!patch.is_object() || !base.is_object())
        return;
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string p = path + "/" + it.key();
        if (!base.contains(it.key()))
            throw ConfigError("config: unknown field " + p);
        if (p == "/trojan_overrides")
            continue;
        check_known_keys(base.at(it.key()), it.value(), p);
    }
}

inline nlohmann::json parse_override_value(const std::string &text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &) {
        return text; // bare strings need no quoting
    }
}

} // namespace detail

// `overrides` entries look like "/mlp/epochs=10".
inline nlohmann::json resolve_config(const std::optional<nlohmann::json> &file,
                                     const std::vector<std::string> &overrides = {}) {
    auto cfg = default_config_json();
    if (file) {
        if (!file->is_object())
            throw ConfigError("config: top level must be an object");
        detail::check_known_keys(cfg, *file, "");
        cfg.merge_patch(*file);
    }
    for (const auto &o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || o.empty() || o[0] != '/')
            throw UsageError("override '" + o + "' must look like /json/pointer=value");
        const nlohmann::json::json_pointer ptr(o.substr(0, eq));
        if (!cfg.contains(ptr) && ptr.parent_pointer().to_string() != "/trojan_overrides")
            throw ConfigError("config: unknown field " + ptr.to_string());
        cfg[ptr] = detail::parse_override_value(o.substr(eq + 1));
    }
    return cfg;
}

inline nlohmann::json load_config_file(const std::filesystem::path &path) {
    try {
        return nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error &e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

struct CrossCoreConfig {
    std::string name;
    std::vector<std::string> workloads;
};

struct ExperimentConfig {
    nlohmann::json raw;

    Seed seed = 0;
    std::filesystem::path output_dir;
    unsigned workers = 1;
    std::size_t trace_cycles = 0;
    double noise_sigma = 0.0;
    std::optional<PipelineStage> phase; // nullopt = rotate with trial index

    InstructionTable instructions;
    PowerModelTable power;
    TrojanCatalog trojans;
    DegradationTable aging_table;
    AdcSpec adc;
    PvGranularity pv_granularity = PvGranularity::per_stage;
    PvDistribution pv_distribution = PvDistribution::gaussian_3sigma;
    std::vector<WorkloadSpec> workload_specs;
    std::vector<Scenario> scenarios;

    struct {
        std::vector<std::string> workloads;
        std::vector<std::string> scenarios;
        std::size_t trials = 0;
        std::uint64_t activations = 0;
        std::vector<double> pv_ranges;
    } training;

    struct {
        std::string workload;
        std::vector<std::string> benchmarks;
        std::size_t trials = 0;
        std::uint64_t activations = 0;
        std::vector<double> pv_ranges;
        std::vector<AgingYear> aging_years;
        std::vector<AgingPolicy> aging_policies;
        bool allow_training_benchmarks = false;
    } evaluation;

    struct {
        std::vector<std::string> neighbour_workloads;
        double coupling = 0.0;
    } cross_core;

    DseGrid grid;
    std::size_t k_folds = 3;
    DseConstraints constraints;
    MlpHyper hyper;

    struct {
        std::vector<double> pv_ranges;
        std::vector<AgingYear> aging_years;
        std::vector<AgingPolicy> aging_policies;
        double aging_pv_range = 0.0;
        std::size_t input_vectors = 0;
        double input_vector_pv_range = 0.0;
        std::vector<CrossCoreConfig> cross_core_configs;
        std::vector<PipelineStage> phases;
    } sweep;

    const Scenario &scenario(const std::string &id) const {
        for (const auto &s : scenarios)
            if (s.id == id)
                return s;
        throw ConfigError("config: unknown scenario '" + id + "'");
    }

    const WorkloadSpec &workload(const std::string &name) const {
        return find_workload_spec(workload_specs, name);
    }
};

namespace detail {

template <class T>
T field(const nlohmann::json &cfg, const std::string &pointer) {
    const nlohmann::json::json_pointer ptr(pointer);
    if (!cfg.contains(ptr))
        throw ConfigError("config: missing field " + pointer);
    try {
        return cfg.at(ptr).get<T>();
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError("config: " + pointer + ": " + e.what());
    }
}

inline void require(bool ok, const std::string &pointer, const std::string &what) {
    if (!ok)
        throw ConfigError("config: " + pointer + ": " + what);
}

inline void check_ranges(const std::vector<double> &rs, const std::string &pointer) {
    require(!rs.empty(), pointer, "must not be empty");
    for (double r : rs)
        require(r >= 0.0 && r < 1.0, pointer, "PV ranges must lie in [0, 1)");
}

template <class E>
E enum_field(const nlohmann::json &cfg, const std::string &pointer,
             const std::vector<E> &allowed) {
    const auto v = cfg.at(nlohmann::json::json_pointer(pointer));
    for (auto e : allowed)
        if (nlohmann::json(e) == v)
            return e;
    throw ConfigError("config: " + pointer + ": unsupported value " + v.dump());
}

template <class E>
std::vector<E> enum_list(const nlohmann::json &cfg, const std::string &pointer,
                         const std::vector<E> &allowed) {
    const auto &arr = cfg.at(nlohmann::json::json_pointer(pointer));
    require(arr.is_array() && !arr.empty(), pointer, "must be a non-empty list");
    std::vector<E> out;
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(enum_field<E>(cfg, pointer + "/" + std::to_string(i), allowed));
    return out;
}

inline WorkloadSpec workload_spec_from_json(const nlohmann::json &j, const std::string &pointer) {
    WorkloadSpec w;
    w.name = j.at("name").get<std::string>();
    const auto weights = j.at("category_weights").get<std::vector<double>>();
    require(weights.size() == kCategoryCount, pointer + "/category_weights",
            "needs one weight per category");
    std::copy(weights.begin(), weights.end(), w.category_weights.begin());
    if (j.contains("opcodes"))
        for (auto c : kAllCategories)
            if (j.at("opcodes").contains(std::string(to_string(c))))
                w.opcodes[index_of(c)] =
                    j.at("opcodes").at(std::string(to_string(c))).get<std::vector<std::string>>();
    w.cat2_run_length = j.value("cat2_run_length", std::size_t{1});
    return w;
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json &cfg) {
    using detail::field;
    using detail::require;
    ExperimentConfig c;
    c.raw = cfg;

    const int version = field<int>(cfg, "/schema_version");
    if (version != kConfigSchemaVersion)
        throw CompatibilityError("config: schema_version " + std::to_string(version) +
                                 " is not supported (expected " +
                                 std::to_string(kConfigSchemaVersion) + ")");
    c.seed = field<Seed>(cfg, "/seed");
    c.output_dir = field<std::string>(cfg, "/output_dir");
    c.workers = field<unsigned>(cfg, "/workers");
    c.trace_cycles = field<std::size_t>(cfg, "/trace_cycles");
    require(c.trace_cycles >= kStageCount, "/trace_cycles", "must be >= 7");
    c.noise_sigma = field<double>(cfg, "/noise_sigma");
    require(c.noise_sigma >= 0.0, "/noise_sigma", "must be >= 0");
    const auto phase = field<std::string>(cfg, "/phase");
    if (phase != "rotate") {
        try {
            c.phase = parse_stage(phase);
        } catch (const Error &) {
            throw ConfigError("config: /phase: expected 'rotate' or a stage name, got '" + phase + "'");
        }
    }

    // Built-in tables unless a file is named.
    const auto &inputs = cfg.at("inputs");
    auto path_of = [&](const char *key) -> std::optional<std::string> {
        if (inputs.at(key).is_null())
            return std::nullopt;
        return inputs.at(key).get<std::string>();
    };
    c.instructions = path_of("instruction_table")
                         ? InstructionTable::from_csv(io::read_file(*path_of("instruction_table")))
                         : build_instruction_table();
    c.power = path_of("power_model")
                  ? PowerModelTable::from_csv(io::read_file(*path_of("power_model")), c.instructions)
                  : default_power_model(c.instructions);
    c.power.validate_against(c.instructions);
    auto cat_json = path_of("trojan_catalog")
                        ? load_config_file(*path_of("trojan_catalog"))
                        : catalog().to_json();
    const auto &overrides = cfg.at("trojan_overrides");
    require(overrides.is_object(), "/trojan_overrides", "must be an object keyed by Trojan name");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        bool found = false;
        for (auto &m : cat_json.at("trojans"))
            if (m.at("name") == it.key()) {
                m.merge_patch(it.value());
                found = true;
            }
        require(found, "/trojan_overrides/" + it.key(), "no such Trojan in the catalog");
    }
    c.trojans = TrojanCatalog::from_json(cat_json);
    c.aging_table = path_of("degradation_table")
                        ? DegradationTable::from_json(load_config_file(*path_of("degradation_table")))
                        : default_degradation_table();

    c.adc = default_adc(c.power);
    c.adc.bits = field<unsigned>(cfg, "/adc/bits");
    if (!cfg.at("adc").at("full_scale").is_null())
        c.adc.full_scale = field<double>(cfg, "/adc/full_scale");
    c.adc.sample_period_cycles = field<unsigned>(cfg, "/adc/sample_period_cycles");
    c.adc.validate();

    c.pv_granularity = detail::enum_field<PvGranularity>(
        cfg, "/pv/granularity", {PvGranularity::per_chip, PvGranularity::per_stage});
    c.pv_distribution = detail::enum_field<PvDistribution>(
        cfg, "/pv/distribution", {PvDistribution::gaussian_3sigma, PvDistribution::uniform});

    c.workload_specs = default_workload_specs();
    const auto &custom = cfg.at("workload_specs");
    for (std::size_t i = 0; i < custom.size(); ++i) {
        auto w = detail::workload_spec_from_json(custom[i], "/workload_specs/" + std::to_string(i));
        for (const auto &existing : c.workload_specs)
            require(existing.name != w.name, "/workload_specs/" + std::to_string(i),
                    "workload '" + w.name + "' already exists");
        c.workload_specs.push_back(std::move(w));
    }

    for (const auto &s : cfg.at("scenarios")) {
        Scenario sc{s.at("id").get<std::string>(), s.at("trojans").get<std::vector<std::string>>()};
        for (const auto &t : sc.active_trojans)
            (void)c.trojans.at(t);
        for (const auto &prev : c.scenarios)
            require(prev.id != sc.id, "/scenarios", "duplicate id " + sc.id);
        c.scenarios.push_back(std::move(sc));
    }

    c.training.workloads = field<std::vector<std::string>>(cfg, "/training/workloads");
    require(!c.training.workloads.empty(), "/training/workloads", "must not be empty");
    for (const auto &w : c.training.workloads) {
        (void)c.workload(w);
        require(w != field<std::string>(cfg, "/evaluation/workload"), "/training/workloads",
                "the evaluation workload '" + w + "' must not be used for training");
    }
    c.training.scenarios = field<std::vector<std::string>>(cfg, "/training/scenarios");
    require(!c.training.scenarios.empty(), "/training/scenarios", "must not be empty");
    for (const auto &id : c.training.scenarios)
        for (const auto &t : c.scenario(id).active_trojans)
            require(c.trojans.at(t).split == Split::train, "/training/scenarios",
                    "scenario " + id + " contains evaluation benchmark " + t);
    c.training.trials = field<std::size_t>(cfg, "/training/trials");
    require(c.training.trials > 0, "/training/trials", "must be > 0");
    c.training.activations = field<std::uint64_t>(cfg, "/training/activations");
    c.training.pv_ranges = field<std::vector<double>>(cfg, "/training/pv_ranges");
    detail::check_ranges(c.training.pv_ranges, "/training/pv_ranges");

    c.evaluation.workload = field<std::string>(cfg, "/evaluation/workload");
    (void)c.workload(c.evaluation.workload);
    c.evaluation.benchmarks = field<std::vector<std::string>>(cfg, "/evaluation/benchmarks");
    require(!c.evaluation.benchmarks.empty(), "/evaluation/benchmarks", "must not be empty");
    c.evaluation.allow_training_benchmarks =
        field<bool>(cfg, "/evaluation/allow_training_benchmarks");
    for (const auto &b : c.evaluation.benchmarks) {
        const auto &m = c.trojans.at(b);
        require(m.split == Split::eval || c.evaluation.allow_training_benchmarks,
                "/evaluation/benchmarks",
                b + " is a training benchmark; set /evaluation/allow_training_benchmarks to "
                    "evaluate on it");
    }
    c.evaluation.trials = field<std::size_t>(cfg, "/evaluation/trials");
    require(c.evaluation.trials > 0, "/evaluation/trials", "must be > 0");
    c.evaluation.activations = field<std::uint64_t>(cfg, "/evaluation/activations");
    c.evaluation.pv_ranges = field<std::vector<double>>(cfg, "/evaluation/pv_ranges");
    detail::check_ranges(c.evaluation.pv_ranges, "/evaluation/pv_ranges");
    const std::vector<AgingYear> all_years(kAllYears.begin(), kAllYears.end());
    const std::vector<AgingPolicy> all_policies(kAllPolicies.begin(), kAllPolicies.end());
    c.evaluation.aging_years = detail::enum_list(cfg, "/evaluation/aging_years", all_years);
    c.evaluation.aging_policies = detail::enum_list(cfg, "/evaluation/aging_policies", all_policies);

    c.cross_core.neighbour_workloads =
        field<std::vector<std::string>>(cfg, "/cross_core/neighbour_workloads");
    for (const auto &w : c.cross_core.neighbour_workloads)
        (void)c.workload(w);
    c.cross_core.coupling = field<double>(cfg, "/cross_core/coupling");
    require(c.cross_core.coupling >= 0.0, "/cross_core/coupling", "must be >= 0");

    c.grid.layer_options = field<std::vector<unsigned>>(cfg, "/dse/layer_options");
    c.grid.neuron_options = field<std::vector<unsigned>>(cfg, "/dse/neuron_options");
    for (const auto &s : cfg.at("dse").at("training_scenarios")) {
        ScenarioSet set{s.at("name").get<std::string>(),
                        s.at("scenarios").get<std::vector<std::string>>()};
        for (const auto &id : set.scenario_ids)
            require(std::find(c.training.scenarios.begin(), c.training.scenarios.end(), id) !=
                        c.training.scenarios.end(),
                    "/dse/training_scenarios", "scenario " + id + " is not a training scenario");
        c.grid.scenario_sets.push_back(std::move(set));
    }
    try {
        c.grid.validate();
    } catch (const ConfigError &e) {
        throw ConfigError(std::string("config: /dse: ") + e.what());
    }
    c.k_folds = field<std::size_t>(cfg, "/dse/k_folds");
    require(c.k_folds >= 2, "/dse/k_folds", "must be >= 2");
    if (!cfg.at("dse").at("max_params").is_null())
        c.constraints.max_params = field<std::size_t>(cfg, "/dse/max_params");
    if (!cfg.at("dse").at("max_cost").is_null())
        c.constraints.max_cost = field<std::size_t>(cfg, "/dse/max_cost");

    c.hyper.seed = derive_seed(c.seed, "mlp");
    c.hyper.epochs = field<unsigned>(cfg, "/mlp/epochs");
    c.hyper.learning_rate = field<double>(cfg, "/mlp/learning_rate");
    require(c.hyper.learning_rate > 0.0, "/mlp/learning_rate", "must be > 0");
    const auto &cw = cfg.at("mlp").at("class_weight");
    if (cw.is_string()) {
        require(cw == "auto", "/mlp/class_weight", "must be a positive number or \"auto\"");
        c.hyper.class_weight = std::nullopt;
    } else {
        c.hyper.class_weight = field<double>(cfg, "/mlp/class_weight");
        require(*c.hyper.class_weight > 0.0, "/mlp/class_weight", "must be > 0");
    }
    c.hyper.optimizer =
        detail::enum_field<Optimizer>(cfg, "/mlp/optimizer", {Optimizer::gd, Optimizer::adam});
    c.hyper.batch_size = field<std::size_t>(cfg, "/mlp/batch_size");
    c.hyper.decision_threshold = field<double>(cfg, "/mlp/decision_threshold");
    require(c.hyper.decision_threshold > 0.0 && c.hyper.decision_threshold < 1.0,
            "/mlp/decision_threshold", "must lie in (0, 1)");

    c.sweep.pv_ranges = field<std::vector<double>>(cfg, "/sweep/pv_ranges");
    detail::check_ranges(c.sweep.pv_ranges, "/sweep/pv_ranges");
    c.sweep.aging_years = detail::enum_list(cfg, "/sweep/aging_years", all_years);
    c.sweep.aging_policies = detail::enum_list(cfg, "/sweep/aging_policies", all_policies);
    c.sweep.aging_pv_range = field<double>(cfg, "/sweep/aging_pv_range");
    detail::check_ranges({c.sweep.aging_pv_range}, "/sweep/aging_pv_range");
    c.sweep.input_vectors = field<std::size_t>(cfg, "/sweep/input_vectors");
    require(c.sweep.input_vectors > 0, "/sweep/input_vectors", "must be > 0");
    c.sweep.input_vector_pv_range = field<double>(cfg, "/sweep/input_vector_pv_range");
    detail::check_ranges({c.sweep.input_vector_pv_range}, "/sweep/input_vector_pv_range");
    for (const auto &cc : cfg.at("sweep").at("cross_core_configs")) {
        CrossCoreConfig x{cc.at("name").get<std::string>(),
                          cc.at("workloads").get<std::vector<std::string>>()};
        for (const auto &w : x.workloads)
            (void)c.workload(w);
        c.sweep.cross_core_configs.push_back(std::move(x));
    }
    for (const auto &p : field<std::vector<std::string>>(cfg, "/sweep/phases"))
        c.sweep.phases.push_back(parse_stage(p));
    return c;
}

} // namespace stagewatch

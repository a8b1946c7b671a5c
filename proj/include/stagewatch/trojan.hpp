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

// Hardware Trojans as parameterised perturbations of the trusted core's
// stage power: a trigger process placing activation windows, and inside
// each window a per-stage relative delta scaled by how sensitive the
// Trojan is to the category of the instruction occupying that stage.

#include "json.hpp"

#include "stagewatch/error.hpp"
#include "stagewatch/isa.hpp"
#include "stagewatch/random.hpp"
#include "stagewatch/soc_power.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace stagewatch {

enum class TriggerMode { fixed_count, bernoulli };

NLOHMANN_JSON_SERIALIZE_ENUM(TriggerMode, {{TriggerMode::fixed_count, "fixed_count"},
                                           {TriggerMode::bernoulli, "bernoulli"}})

struct TriggerSpec {
    TriggerMode mode = TriggerMode::fixed_count;
    std::uint64_t target_activations = 0;
    double per_cycle_probability = 0.0;
    Seed seed = 0;
};

enum class Split { train, eval };

NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::train, "train"}, {Split::eval, "eval"}})

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "eval"; }

struct TrojanModel {
    std::string name;
    Split split = Split::train;
    PerStage<double> stage_delta{};
    std::array<double, kCategoryCount> instruction_sensitivity{1, 1, 1, 1, 1};
    TriggerSpec trigger;
    std::uint64_t duration_cycles = 2;

    double induced_delta(std::size_t stage, InstructionCategory c) const {
        return stage_delta[stage] * instruction_sensitivity[index_of(c)];
    }

    struct Dominant {
        PipelineStage stage;
        InstructionCategory category;
        double delta;
    };

    // (stage, category) with the largest |delta x sensitivity|.
    Dominant dominant() const {
        Dominant d{PipelineStage::Fetch, InstructionCategory::Cat1, 0.0};
        for (auto s : kAllStages)
            for (auto c : kAllCategories) {
                const double v = induced_delta(index_of(s), c);
                if (std::abs(v) > std::abs(d.delta))
                    d = {s, c, v};
            }
        return d;
    }

    void validate() const {
        if (name.empty())
            throw ConfigError("Trojan model without a name");
        if (duration_cycles < 2)
            throw ConfigError("Trojan " + name + ": duration_cycles must be >= 2");
        for (double s : instruction_sensitivity)
            if (s < 0.0 || !std::isfinite(s))
                throw ConfigError("Trojan " + name + ": sensitivity must be finite and >= 0");
        for (double d : stage_delta)
            if (!std::isfinite(d) || d <= -1.0)
                throw ConfigError("Trojan " + name + ": stage delta must be finite and > -1");
    }
};

inline void to_json(nlohmann::json &j, const TrojanModel &m) {
    nlohmann::json sens = nlohmann::json::object();
    for (auto c : kAllCategories)
        sens[std::string(to_string(c))] = m.instruction_sensitivity[index_of(c)];
    j = {{"name", m.name},
         {"split", m.split},
         {"stage_delta", m.stage_delta},
         {"instruction_sensitivity", sens},
         {"duration_cycles", m.duration_cycles},
         {"trigger",
          {{"mode", m.trigger.mode}, {"per_cycle_probability", m.trigger.per_cycle_probability}}}};
}

inline void from_json(const nlohmann::json &j, TrojanModel &m) {
    m.name = j.at("name").get<std::string>();
    m.split = j.at("split").get<Split>();
    m.stage_delta = j.at("stage_delta").get<PerStage<double>>();
    const auto &sens = j.at("instruction_sensitivity");
    for (auto c : kAllCategories)
        m.instruction_sensitivity[index_of(c)] = sens.at(std::string(to_string(c))).get<double>();
    m.duration_cycles = j.at("duration_cycles").get<std::uint64_t>();
    if (j.contains("trigger")) {
        const auto &t = j.at("trigger");
        m.trigger.mode = t.value("mode", TriggerMode::fixed_count);
        m.trigger.per_cycle_probability = t.value("per_cycle_probability", 0.0);
    }
    m.validate();
}

struct Scenario {
    std::string id;
    std::vector<std::string> active_trojans;
};

struct ActivationWindow {
    std::uint64_t start = 0;
    std::uint64_t length = 0;
    bool operator==(const ActivationWindow &) const = default;
};

// Windows are separated by at least one inactive cycle so that each stays
// distinguishable in the ground-truth marks.
inline std::vector<ActivationWindow> activation_windows(const TriggerSpec &trigger,
                                                        std::uint64_t duration,
                                                        std::uint64_t trace_length) {
    std::vector<ActivationWindow> out;
    Rng rng(trigger.seed);
    if (trigger.mode == TriggerMode::fixed_count) {
        const std::uint64_t k = trigger.target_activations;
        if (k == 0)
            return out;
        const std::uint64_t needed = k * (duration + 1) - 1;
        if (k * duration > trace_length || needed > trace_length)
            throw ConfigError("trigger: " + std::to_string(k) + " windows of " +
                              std::to_string(duration) + " cycles do not fit in " +
                              std::to_string(trace_length) + " cycles");
        const std::uint64_t slack = trace_length - needed;
        std::vector<std::uint64_t> offsets(k);
        for (auto &o : offsets)
            o = rng.below(slack + 1);
        std::sort(offsets.begin(), offsets.end());
        out.reserve(k);
        for (std::uint64_t i = 0; i < k; ++i)
            out.push_back({offsets[i] + i * (duration + 1), duration});
        return out;
    }
    const double p = trigger.per_cycle_probability;
    if (p < 0.0 || p > 1.0)
        throw ConfigError("trigger: per_cycle_probability outside [0,1]");
    std::uint64_t t = 0;
    while (t + duration <= trace_length) {
        if (rng.bernoulli(p)) {
            out.push_back({t, duration});
            t += duration + 1;
        } else {
            ++t;
        }
    }
    return out;
}

// Multiplies stage power inside each window by
// 1 + stage_delta[s] * sensitivity[category of the instruction in s].
inline PowerTrace inject(const PowerTrace &trace, const TrojanModel &model,
                         const InstructionTable &table) {
    model.validate();
    for (const auto &r : trace)
        if (r.ht_active)
            throw DataError("inject: input trace already carries Trojan activity at cycle " +
                            std::to_string(r.cycle));
    PowerTrace out = trace;
    for (const auto &w : activation_windows(model.trigger, model.duration_cycles, trace.size())) {
        for (std::uint64_t t = w.start; t < w.start + w.length; ++t) {
            auto &r = out[t];
            for (std::size_t s = 0; s < kStageCount; ++s)
                r.stage_power[s] *=
                    1.0 + model.induced_delta(s, table.category_of(r.instruction[s]));
            r.ht_active = true;
            r.ht_name = model.name;
        }
    }
    return out;
}

// (|P_nominal| - |P_scenario|) / |P_nominal|; negative when the Trojan adds power.
inline double delta_p_metric(double nominal_power, double scenario_power) {
    if (!(nominal_power > 0.0))
        throw DomainError("delta_p_metric: nominal power must be > 0");
    return (std::abs(nominal_power) - std::abs(scenario_power)) / std::abs(nominal_power);
}

class TrojanCatalog {
  public:
    static constexpr int kFormatVersion = 1;

    TrojanCatalog() = default;
    TrojanCatalog(std::string version, std::vector<TrojanModel> models)
        : version_(std::move(version)), models_(std::move(models)) {
        for (std::size_t i = 0; i < models_.size(); ++i) {
            models_[i].validate();
            for (std::size_t j = 0; j < i; ++j)
                if (models_[i].name == models_[j].name)
                    throw ConfigError("catalog: duplicate Trojan " + models_[i].name);
        }
    }

    const std::string &version() const { return version_; }
    const std::vector<TrojanModel> &models() const { return models_; }

    const TrojanModel *find(std::string_view name) const {
        for (const auto &m : models_)
            if (m.name == name)
                return &m;
        return nullptr;
    }

    const TrojanModel &at(std::string_view name) const {
        if (const auto *m = find(name))
            return *m;
        throw ConfigError("unknown Trojan benchmark '" + std::string(name) + "'");
    }

    std::vector<std::string> names(Split split) const {
        std::vector<std::string> out;
        for (const auto &m : models_)
            if (m.split == split)
                out.push_back(m.name);
        return out;
    }

    nlohmann::json to_json() const {
        return {{"format_version", kFormatVersion},
                {"catalog_version", version_},
                {"trojans", models_}};
    }

    static TrojanCatalog from_json(const nlohmann::json &j) {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw CompatibilityError("catalog: unsupported format_version");
        return TrojanCatalog(j.at("catalog_version").get<std::string>(),
                             j.at("trojans").get<std::vector<TrojanModel>>());
    }

  private:
    std::string version_;
    std::vector<TrojanModel> models_;
};

// Shipped catalog. Deltas are calibrated assumptions: Exception is left
// untouched, Fetch barely moves, ethernetMAC10GE-T700 (scenario S6) has the
// largest effect, and every dominant |delta| stays inside [0.01, 0.35].
inline TrojanCatalog catalog() {
    auto make = [](std::string name, Split split, PerStage<double> delta,
                   std::array<double, kCategoryCount> sens, std::uint64_t duration) {
        TrojanModel m;
        m.name = std::move(name);
        m.split = split;
        m.stage_delta = delta;
        m.instruction_sensitivity = sens;
        m.duration_cycles = duration;
        return m;
    };
    constexpr auto T = Split::train;
    constexpr auto E = Split::eval;
    return TrojanCatalog(
        "2026.1",
        {
            make("AES-T100", T, {0.02, 0.25, 0.22, 0.18, 0.20, 0.0, 0.15}, {1.0, 0.8, 0.6, 0.7, 0.9}, 3),
            make("AES-T800", T, {0.03, 0.30, 0.20, 0.25, 0.15, 0.0, 0.20}, {0.7, 1.0, 0.8, 0.6, 0.8}, 4),
            make("vgalcd-T100", T, {0.01, 0.18, 0.30, 0.20, 0.25, 0.0, 0.18}, {0.9, 0.7, 1.0, 0.8, 0.6}, 3),
            make("RS232-T1000", T, {0.02, 0.20, 0.15, 0.30, 0.18, 0.0, 0.22}, {0.8, 1.0, 0.7, 0.9, 0.7}, 2),
            make("memctrl-T100", T, {0.04, 0.15, 0.25, 0.20, 0.30, 0.0, 0.25}, {1.0, 0.9, 0.8, 0.7, 1.0}, 3),
            make("ethernetMAC10GE-T700", T, {0.05, 0.35, 0.30, 0.32, 0.28, 0.01, 0.30}, {1.0, 1.0, 0.9, 0.9, 0.8}, 4),
            make("MC8051-T200", E, {0.03, 0.28, 0.24, 0.20, 0.22, 0.0, 0.20}, {0.9, 1.0, 0.8, 0.7, 0.8}, 3),
            make("MC8051-T600", E, {0.05, 0.32, 0.22, 0.26, 0.20, 0.0, 0.24}, {1.0, 0.9, 0.9, 0.8, 0.7}, 4),
            make("MC8051-T800", E, {0.02, 0.20, 0.28, 0.22, 0.26, 0.0, 0.18}, {0.8, 1.0, 0.7, 0.9, 0.8}, 3),
            make("RS232-T1200", E, {0.02, 0.22, 0.20, 0.28, 0.16, 0.0, 0.24}, {0.9, 0.8, 1.0, 0.7, 0.8}, 2),
            make("BasicRSA-T300", E, {0.03, 0.26, 0.18, 0.24, 0.28, 0.0, 0.20}, {1.0, 0.8, 0.8, 0.9, 0.6}, 3),
            make("ethernetMAC10GE-T710", E, {0.02, 0.24, 0.26, 0.18, 0.24, 0.0, 0.28}, {0.7, 1.0, 0.9, 0.8, 0.9}, 3),
        });
}

// S0 is the clean baseline; S1..S7 each activate one Trojan. S7 uses an
// eval-split benchmark, so only S1..S6 may feed training.
inline std::vector<Scenario> default_scenarios() {
    return {
        {"S0", {}},
        {"S1", {"AES-T100"}},
        {"S2", {"AES-T800"}},
        {"S3", {"vgalcd-T100"}},
        {"S4", {"RS232-T1000"}},
        {"S5", {"memctrl-T100"}},
        {"S6", {"ethernetMAC10GE-T700"}},
        {"S7", {"MC8051-T600"}},
    };
}

} // namespace stagewatch

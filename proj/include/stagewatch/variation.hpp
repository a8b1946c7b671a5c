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

// Process variation and aging as static per-stage multiplicative factors.
// PV draws one factor per die (per chip or per stage); aging looks up a
// drift factor per stage for a (year, policy) pair.

#include "json.hpp"

#include "stagewatch/error.hpp"
#include "stagewatch/random.hpp"
#include "stagewatch/soc_power.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>

namespace stagewatch {

enum class PvGranularity { per_chip, per_stage };
enum class PvDistribution { gaussian_3sigma, uniform };

NLOHMANN_JSON_SERIALIZE_ENUM(PvGranularity, {{PvGranularity::per_chip, "per_chip"},
                                             {PvGranularity::per_stage, "per_stage"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PvDistribution, {{PvDistribution::gaussian_3sigma, "gaussian_3sigma"},
                                              {PvDistribution::uniform, "uniform"}})

struct PvSpec {
    double range = 0.0; // +/- fraction
    PvGranularity granularity = PvGranularity::per_stage;
    PvDistribution distribution = PvDistribution::gaussian_3sigma;
    Seed seed = 0;
};

inline double draw_pv_factor(Rng &rng, double range, PvDistribution dist) {
    if (range == 0.0)
        return 1.0;
    if (dist == PvDistribution::uniform)
        return 1.0 + rng.uniform(-range, range);
    // Gaussian with sigma = range / 3, truncated at +/- range by rejection.
    for (;;) {
        const double x = rng.gaussian() * range / 3.0;
        if (std::abs(x) <= range)
            return 1.0 + x;
    }
}

inline PerStage<double> draw_pv_factors(const PvSpec &pv) {
    if (pv.range < 0.0 || !std::isfinite(pv.range))
        throw ConfigError("pv: range must be finite and >= 0");
    if (pv.range >= 1.0)
        throw ConfigError("pv: range must be < 1");
    Rng rng(pv.seed);
    PerStage<double> f{};
    if (pv.granularity == PvGranularity::per_chip) {
        f.fill(draw_pv_factor(rng, pv.range, pv.distribution));
    } else {
        for (auto &x : f)
            x = draw_pv_factor(rng, pv.range, pv.distribution);
    }
    return f;
}

inline PowerTrace scale_stages(const PowerTrace &trace, const PerStage<double> &factors) {
    PowerTrace out = trace;
    for (auto &r : out)
        for (std::size_t s = 0; s < kStageCount; ++s)
            r.stage_power[s] *= factors[s];
    return out;
}

// PV is static per die: the same factors apply to every cycle.
inline PowerTrace apply_pv(const PowerTrace &trace, const PvSpec &pv) {
    if (pv.range < 0.0)
        throw ConfigError("pv: range must be >= 0");
    if (pv.range == 0.0)
        return trace;
    return scale_stages(trace, draw_pv_factors(pv));
}

struct PvBoundary {
    double p_min = 0.0;
    double p_max = 0.0;
    double width = 0.0;
};

// |B_PV| = |P_max| - |P_min|.
inline PvBoundary pv_boundary(std::span<const double> samples) {
    if (samples.empty())
        throw DomainError("pv_boundary: empty sample list");
    auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    return {*lo, *hi, std::abs(*hi) - std::abs(*lo)};
}

enum class AgingYear { Y0, Y1, Y2, Y5, Y10 };
enum class AgingPolicy { none, fast_core_age_first, balanced };

NLOHMANN_JSON_SERIALIZE_ENUM(AgingYear, {{AgingYear::Y0, "Y0"},
                                         {AgingYear::Y1, "Y1"},
                                         {AgingYear::Y2, "Y2"},
                                         {AgingYear::Y5, "Y5"},
                                         {AgingYear::Y10, "Y10"}})
NLOHMANN_JSON_SERIALIZE_ENUM(AgingPolicy, {{AgingPolicy::none, "none"},
                                           {AgingPolicy::fast_core_age_first, "fast_core_age_first"},
                                           {AgingPolicy::balanced, "balanced"}})

inline constexpr std::array<AgingYear, 5> kAllYears{AgingYear::Y0, AgingYear::Y1, AgingYear::Y2,
                                                    AgingYear::Y5, AgingYear::Y10};
inline constexpr std::array<AgingPolicy, 3> kAllPolicies{
    AgingPolicy::none, AgingPolicy::fast_core_age_first, AgingPolicy::balanced};

inline int years_of(AgingYear y) {
    switch (y) {
    case AgingYear::Y0: return 0;
    case AgingYear::Y1: return 1;
    case AgingYear::Y2: return 2;
    case AgingYear::Y5: return 5;
    case AgingYear::Y10: return 10;
    }
    return 0;
}

inline std::string to_string(AgingYear y) { return nlohmann::json(y).get<std::string>(); }
inline std::string to_string(AgingPolicy p) { return nlohmann::json(p).get<std::string>(); }

class DegradationTable {
  public:
    using Key = std::pair<AgingYear, AgingPolicy>;

    void set(AgingYear y, AgingPolicy p, const PerStage<double> &f) {
        for (double x : f)
            if (!(x > 0.0) || !std::isfinite(x))
                throw ConfigError("degradation table: factors must be positive and finite");
        if (y == AgingYear::Y0)
            for (double x : f)
                if (x != 1.0)
                    throw ConfigError("degradation table: Y0 factors must be exactly 1");
        rows_[{y, p}] = f;
    }

    bool contains(AgingYear y, AgingPolicy p) const { return rows_.count({y, p}) != 0; }

    const PerStage<double> &at(AgingYear y, AgingPolicy p) const {
        auto it = rows_.find({y, p});
        if (it == rows_.end())
            throw ConfigError("degradation table has no entry for (" + to_string(y) + ", " +
                              to_string(p) + ")");
        return it->second;
    }

    static double spread(const PerStage<double> &f) {
        auto [lo, hi] = std::minmax_element(f.begin(), f.end());
        return *hi - *lo;
    }

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto &[k, f] : rows_)
            rows.push_back({{"year", k.first}, {"policy", k.second}, {"factors", f}});
        return {{"format_version", 1}, {"rows", rows}};
    }

    static DegradationTable from_json(const nlohmann::json &j) {
        if (j.at("format_version").get<int>() != 1)
            throw CompatibilityError("degradation table: unsupported format_version");
        DegradationTable t;
        for (const auto &r : j.at("rows"))
            t.set(r.at("year").get<AgingYear>(), r.at("policy").get<AgingPolicy>(),
                  r.at("factors").get<PerStage<double>>());
        return t;
    }

  private:
    std::map<Key, PerStage<double>> rows_;
};

// Peak drift per year for the unmitigated policy. The per-stage weight
// puts Execute at the peak; other stages drift to 60-92% of it.
inline constexpr std::array<double, 5> kPeakDrift{0.0, 0.02, 0.035, 0.06, 0.09};
inline constexpr PerStage<double> kStageAgingWeight{0.8, 0.5, 0.6, 1.0, 0.4, 0.3, 0.7};

// none:                1 + d (0.6 + 0.4 w)
// balanced:            1 + d (0.5 + 0.2 w)   (half the spread of none)
// fast_core_age_first: Fetch/Execute as none, the rest at half of none
inline DegradationTable default_degradation_table() {
    DegradationTable t;
    for (std::size_t yi = 0; yi < kAllYears.size(); ++yi) {
        const double d = kPeakDrift[yi];
        PerStage<double> none{}, bal{}, fcaf{};
        for (std::size_t s = 0; s < kStageCount; ++s) {
            const double w = kStageAgingWeight[s];
            none[s] = 1.0 + d * (0.6 + 0.4 * w);
            bal[s] = 1.0 + d * (0.5 + 0.2 * w);
            const bool hot = s == index_of(PipelineStage::Fetch) ||
                             s == index_of(PipelineStage::Execute);
            fcaf[s] = hot ? none[s] : 1.0 + 0.5 * d * (0.6 + 0.4 * w);
        }
        t.set(kAllYears[yi], AgingPolicy::none, none);
        t.set(kAllYears[yi], AgingPolicy::balanced, bal);
        t.set(kAllYears[yi], AgingPolicy::fast_core_age_first, fcaf);
    }
    return t;
}

struct AgingSpec {
    AgingYear year = AgingYear::Y0;
    AgingPolicy policy = AgingPolicy::none;
    DegradationTable table = default_degradation_table();
};

inline PowerTrace apply_aging(const PowerTrace &trace, const AgingSpec &aging) {
    return scale_stages(trace, aging.table.at(aging.year, aging.policy));
}

} // namespace stagewatch

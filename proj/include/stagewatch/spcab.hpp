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

// Single power-port current acquisition: current-mirror sizing, the
// round-robin stage multiplexer and the ADC that together turn a 7-stage
// power trace into the one-value-per-cycle stream the detector sees.
//
// Sizing is an offline design aid. A correctly sized mirror copies its
// branch current ideally, so sizing never alters acquired values.

#include "json.hpp"

#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"
#include "stagewatch/isa.hpp"
#include "stagewatch/soc_power.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace stagewatch {

// SF_i = I_i / max(I).
inline std::vector<double> scale_factors(std::span<const double> branch_currents) {
    if (branch_currents.empty())
        throw DomainError("scale_factors: empty current list");
    double max_i = 0.0;
    for (double i : branch_currents) {
        if (!(i > 0.0) || !std::isfinite(i))
            throw DomainError("scale_factors: currents must be positive and finite");
        max_i = std::max(max_i, i);
    }
    std::vector<double> sf;
    sf.reserve(branch_currents.size());
    for (double i : branch_currents)
        sf.push_back(i / max_i);
    return sf;
}

// W'_i = SF_i * W.
inline std::vector<double> mirrored_widths(double base_width, std::span<const double> sf) {
    if (!(base_width > 0.0))
        throw DomainError("mirrored_widths: base width must be > 0");
    std::vector<double> out;
    out.reserve(sf.size());
    for (double f : sf) {
        if (!(f > 0.0) || f > 1.0)
            throw DomainError("mirrored_widths: scale factor outside (0, 1]");
        out.push_back(f * base_width);
    }
    return out;
}

// W_ps = (mu_n / mu_p) * W_n_min / c, with c the number of components the
// collector serves.
inline double collector_width(double min_nmos_width, double mobility_ratio,
                              unsigned component_count) {
    if (component_count == 0)
        throw DomainError("collector_width: component_count must be > 0");
    if (!(min_nmos_width > 0.0) || !(mobility_ratio > 0.0))
        throw DomainError("collector_width: widths and mobility ratio must be > 0");
    return mobility_ratio * min_nmos_width / static_cast<double>(component_count);
}

struct MirrorSizing {
    PipelineStage stage = PipelineStage::Fetch;
    std::vector<double> branch_currents; // A
    double base_width = 0.0;             // um
    std::vector<double> scale_factors;
    std::vector<double> mirrored_widths; // um
    double collector_width = 0.0;        // um
    double mobility_ratio = 0.0;
    double min_nmos_width = 0.0;         // um
    unsigned component_count = 0;
};

inline MirrorSizing size_mirrors(PipelineStage stage, std::vector<double> branch_currents,
                                 double base_width, double mobility_ratio,
                                 double min_nmos_width) {
    MirrorSizing m;
    m.stage = stage;
    m.component_count = static_cast<unsigned>(branch_currents.size());
    m.scale_factors = scale_factors(branch_currents);
    m.mirrored_widths = mirrored_widths(base_width, m.scale_factors);
    m.collector_width = collector_width(min_nmos_width, mobility_ratio, m.component_count);
    m.branch_currents = std::move(branch_currents);
    m.base_width = base_width;
    m.mobility_ratio = mobility_ratio;
    m.min_nmos_width = min_nmos_width;
    return m;
}

struct SizingParams {
    double supply_voltage = 1.0;     // V
    double base_width = 1.0;         // um
    double mobility_ratio = 2.0;     // mu_n / mu_p
    double min_nmos_width = 0.12;    // um
    double area_per_width = 0.06;    // um^2 per um of width (channel length)
};

// Branch currents per stage come from the peak table power of that stage,
// split over its components with weights 1, 1/1.25, 1/1.5, ...
inline std::vector<MirrorSizing> size_acquisition_block(std::span<const StageInfo> stages,
                                                        const PowerModelTable &model,
                                                        const SizingParams &p) {
    std::vector<MirrorSizing> out;
    for (const auto &st : stages) {
        double peak = 0.0;
        for (const auto &[op, row] : model.rows())
            peak = std::max(peak, row[index_of(st.stage)]);
        std::vector<double> w;
        double total = 0.0;
        for (unsigned i = 0; i < st.component_count; ++i) {
            w.push_back(1.0 / (1.0 + 0.25 * i));
            total += w.back();
        }
        std::vector<double> currents;
        for (double x : w)
            currents.push_back(peak / p.supply_voltage * x / total);
        out.push_back(size_mirrors(st.stage, std::move(currents), p.base_width,
                                   p.mobility_ratio, p.min_nmos_width));
    }
    return out;
}

inline nlohmann::json sizing_report(std::span<const StageInfo> stages,
                                    const PowerModelTable &model, const SizingParams &p) {
    const auto sizing = size_acquisition_block(stages, model, p);
    nlohmann::json js = nlohmann::json::array();
    double total_width = 0.0;
    for (const auto &m : sizing) {
        double w = m.collector_width;
        for (double x : m.mirrored_widths)
            w += x;
        total_width += w;
        js.push_back({{"stage", to_string(m.stage)},
                      {"component_count", m.component_count},
                      {"branch_currents_a", m.branch_currents},
                      {"scale_factors", m.scale_factors},
                      {"mirrored_widths_um", m.mirrored_widths},
                      {"collector_width_um", m.collector_width}});
    }
    const unsigned naive = power_port_count(stages);
    return {{"format_version", 1},
            {"params",
             {{"supply_voltage", p.supply_voltage},
              {"base_width_um", p.base_width},
              {"mobility_ratio", p.mobility_ratio},
              {"min_nmos_width_um", p.min_nmos_width},
              {"area_per_width_um2_per_um", p.area_per_width}}},
            {"stages", js},
            {"total_transistor_width_um", total_width},
            {"estimated_sensor_area_um2", total_width * p.area_per_width},
            {"power_ports",
             {{"naive_multi_port", naive},
              {"single_port", 1},
              {"reduction_ratio", static_cast<double>(naive)}}}};
}

struct AdcSpec {
    unsigned bits = 10;
    double full_scale = 0.2;             // W
    unsigned sample_period_cycles = 1;

    double step() const { return full_scale / std::ldexp(1.0, static_cast<int>(bits)); }

    void validate() const {
        if (bits == 0 || bits > 30)
            throw ConfigError("adc: bits must be in 1..30");
        if (!(full_scale > 0.0))
            throw ConfigError("adc: full_scale must be > 0");
        if (sample_period_cycles == 0)
            throw ConfigError("adc: sample_period_cycles must be >= 1");
    }
};

// Full scale at twice the largest nominal stage power.
inline AdcSpec default_adc(const PowerModelTable &model) {
    AdcSpec a;
    a.full_scale = 2.0 * model.max_power();
    return a;
}

inline double quantize(double power, const AdcSpec &adc) {
    const double step = adc.step();
    const double q = std::round(power / step) * step;
    return std::clamp(q, 0.0, adc.full_scale);
}

struct SampledFeature {
    std::uint64_t cycle = 0;
    PipelineStage stage = PipelineStage::Fetch;
    double quantized_power = 0.0;
    OpcodeId opcode_id = 0;
    InstructionCategory category = InstructionCategory::Cat1;
    bool ground_truth = false; // evaluation only; never a model input

    bool operator==(const SampledFeature &) const = default;
};

// The multiplexer visits stage (start + k) mod 7 on the k-th sample; one
// sample is taken every sample_period_cycles cycles.
inline std::vector<SampledFeature> acquire(const PowerTrace &trace, const AdcSpec &adc,
                                           PipelineStage start_stage,
                                           const InstructionTable &table) {
    adc.validate();
    std::vector<SampledFeature> out;
    out.reserve(trace.size() / adc.sample_period_cycles + 1);
    std::size_t k = 0;
    for (std::size_t t = 0; t < trace.size(); t += adc.sample_period_cycles, ++k) {
        const auto &r = trace[t];
        const std::size_t s = (index_of(start_stage) + k) % kStageCount;
        SampledFeature f;
        f.cycle = r.cycle;
        f.stage = stage_at(s);
        f.quantized_power = quantize(r.stage_power[s], adc);
        f.opcode_id = r.instruction[s];
        f.category = table.category_of(f.opcode_id);
        f.ground_truth = r.ht_active;
        out.push_back(f);
    }
    return out;
}

// ---- codecs ---------------------------------------------------------------

inline constexpr std::string_view kFeatureCsvHeader =
    "cycle,stage,power,opcode,category,ground_truth";

inline std::string features_to_csv(std::span<const SampledFeature> fs) {
    std::ostringstream ss;
    ss << kFeatureCsvHeader << '\n';
    for (const auto &f : fs)
        ss << f.cycle << ',' << to_string(f.stage) << ',' << io::fmt(f.quantized_power) << ','
           << f.opcode_id << ',' << to_string(f.category) << ',' << (f.ground_truth ? 1 : 0)
           << '\n';
    return ss.str();
}

inline std::vector<SampledFeature> features_from_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || io::split(line) != io::split(kFeatureCsvHeader))
        throw DataError("feature csv: bad header");
    std::vector<SampledFeature> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto f = io::split(line);
        if (f.size() != 6)
            throw DataError("feature csv: wrong field count at row " + std::to_string(out.size()));
        SampledFeature s;
        s.cycle = static_cast<std::uint64_t>(io::parse_int(f[0], "cycle"));
        s.stage = parse_stage(f[1]);
        s.quantized_power = io::parse_double(f[2], "power");
        s.opcode_id = static_cast<OpcodeId>(io::parse_int(f[3], "opcode"));
        s.category = parse_category(f[4]);
        s.ground_truth = f[5] == "1";
        out.push_back(s);
    }
    return out;
}

// Binary framing: magic "SWFEAT01", u64 count, then 24-byte records:
//   u64 cycle, f64 power, i32 opcode, u8 stage, u8 category,
//   u8 ground_truth, u8 reserved (0).
inline constexpr std::string_view kFeatureMagic = "SWFEAT01";

inline std::string features_to_binary(std::span<const SampledFeature> fs) {
    io::LeWriter w;
    w.bytes(kFeatureMagic);
    w.u64(fs.size());
    for (const auto &f : fs) {
        w.u64(f.cycle);
        w.f64(f.quantized_power);
        w.i32(f.opcode_id);
        w.u8(static_cast<std::uint8_t>(f.stage));
        w.u8(static_cast<std::uint8_t>(f.category));
        w.u8(f.ground_truth ? 1 : 0);
        w.u8(0);
    }
    return w.str();
}

inline std::vector<SampledFeature> features_from_binary(std::string_view data) {
    io::LeReader rd(data);
    if (rd.bytes(kFeatureMagic.size()) != kFeatureMagic)
        throw DataError("feature binary: bad magic");
    const auto n = rd.u64();
    if (n > data.size() / 24)
        throw DataError("feature binary: record count exceeds file size");
    std::vector<SampledFeature> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        SampledFeature f;
        f.cycle = rd.u64();
        f.quantized_power = rd.f64();
        f.opcode_id = rd.i32();
        const auto st = rd.u8();
        const auto cat = rd.u8();
        if (st >= kStageCount || cat >= kCategoryCount)
            throw DataError("feature binary: stage or category out of range");
        f.stage = static_cast<PipelineStage>(st);
        f.category = static_cast<InstructionCategory>(cat);
        f.ground_truth = rd.u8() != 0;
        (void)rd.u8();
        out.push_back(f);
    }
    if (!rd.done())
        throw DataError("feature binary: trailing bytes");
    return out;
}

} // namespace stagewatch

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

// Per-cycle, per-stage nominal power of the trusted core's 7-stage
// pipeline, plus the trace record type and its CSV/binary codecs.

#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"
#include "stagewatch/isa.hpp"
#include "stagewatch/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace stagewatch {

enum class PipelineStage : std::uint8_t {
    Fetch = 0,
    Decode,
    RegisterAccess,
    Execute,
    Memory,
    Exception,
    Write,
};

inline constexpr std::size_t kStageCount = 7;

inline constexpr std::array<PipelineStage, kStageCount> kAllStages{
    PipelineStage::Fetch,  PipelineStage::Decode,    PipelineStage::RegisterAccess,
    PipelineStage::Execute, PipelineStage::Memory,   PipelineStage::Exception,
    PipelineStage::Write};

constexpr std::size_t index_of(PipelineStage s) { return static_cast<std::size_t>(s); }

constexpr PipelineStage stage_at(std::size_t i) { return kAllStages[i % kStageCount]; }

inline std::string_view to_string(PipelineStage s) {
    static constexpr std::array<std::string_view, kStageCount> names{
        "Fetch", "Decode", "RegisterAccess", "Execute", "Memory", "Exception", "Write"};
    return names[index_of(s)];
}

// Lower-case column suffix used in CSV headers.
inline std::string_view column_name(PipelineStage s) {
    static constexpr std::array<std::string_view, kStageCount> names{
        "fetch", "decode", "register_access", "execute", "memory", "exception", "write"};
    return names[index_of(s)];
}

inline PipelineStage parse_stage(std::string_view s) {
    for (auto st : kAllStages)
        if (to_string(st) == s || column_name(st) == s)
            return st;
    throw DataError("unknown pipeline stage '" + std::string(s) + "'");
}

template <typename T> using PerStage = std::array<T, kStageCount>;

struct StageInfo {
    PipelineStage stage;
    unsigned component_count = 1;
};

// LEON3: Fetch feeds 4 components (I-cache, AHB, adder, mux), the maximum.
inline std::vector<StageInfo> leon3_stage_profile() {
    constexpr PerStage<unsigned> counts{4, 2, 2, 2, 2, 1, 1};
    std::vector<StageInfo> out;
    for (auto s : kAllStages)
        out.push_back({s, counts[index_of(s)]});
    return out;
}

// Ports a multi-port monitor would need: one per component, N_p = sum C_i.
inline unsigned power_port_count(std::span<const StageInfo> stages) {
    if (stages.empty())
        throw DomainError("power_port_count: empty stage list");
    unsigned n = 0;
    for (const auto &s : stages) {
        if (s.component_count == 0)
            throw DomainError("power_port_count: stage " + std::string(to_string(s.stage)) +
                              " has zero components");
        n += s.component_count;
    }
    return n;
}

// Nominal stage power in watts per opcode. The bubble opcode's row is the
// idle power of an empty stage.
class PowerModelTable {
  public:
    static constexpr std::string_view kFormatTag = "# stagewatch power model v1";

    PowerModelTable() = default;

    void set(OpcodeId op, const PerStage<double> &p) {
        for (double w : p)
            if (!(w > 0.0) || !std::isfinite(w))
                throw DataError("power model: non-positive or non-finite power for opcode " +
                                std::to_string(op));
        rows_[op] = p;
    }

    bool contains(OpcodeId op) const { return rows_.count(op) != 0; }

    const PerStage<double> &at(OpcodeId op) const {
        auto it = rows_.find(op);
        if (it == rows_.end())
            throw DataError("power model has no entry for opcode " + std::to_string(op));
        return it->second;
    }

    double power(OpcodeId op, PipelineStage s) const { return at(op)[index_of(s)]; }

    const PerStage<double> &idle_power() const { return at(kBubbleOpcode); }

    const std::map<OpcodeId, PerStage<double>> &rows() const { return rows_; }

    double max_power() const {
        double m = 0.0;
        for (const auto &[op, p] : rows_)
            for (double w : p)
                m = std::max(m, w);
        return m;
    }

    double min_power() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto &[op, p] : rows_)
            for (double w : p)
                m = std::min(m, w);
        return m;
    }

    // Every instruction of `table` must have all seven entries.
    void validate_against(const InstructionTable &table) const {
        for (const auto &ins : table.rows())
            if (!contains(ins.opcode_id))
                throw DataError("power model has no entry for opcode " +
                                std::to_string(ins.opcode_id) + " (" + ins.mnemonic + ")");
    }

    std::string to_csv(const InstructionTable &table) const {
        std::ostringstream ss;
        ss << kFormatTag << '\n' << "mnemonic";
        for (auto s : kAllStages)
            ss << ",p_" << column_name(s);
        ss << '\n';
        for (const auto &ins : table.rows()) {
            if (!contains(ins.opcode_id))
                continue;
            ss << ins.mnemonic;
            for (double w : at(ins.opcode_id))
                ss << ',' << io::fmt(w);
            ss << '\n';
        }
        return ss.str();
    }

    static PowerModelTable from_csv(std::string_view text, const InstructionTable &table) {
        std::istringstream in{std::string(text)};
        std::string line;
        PowerModelTable out;
        bool header = false;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#')
                continue;
            if (!header) {
                if (line.rfind("mnemonic,p_fetch", 0) != 0)
                    throw DataError("power model: bad header '" + line + "'");
                header = true;
                continue;
            }
            auto f = io::split(line);
            if (f.size() != 1 + kStageCount)
                throw DataError("power model: expected 8 fields in '" + line + "'");
            PerStage<double> p{};
            for (std::size_t i = 0; i < kStageCount; ++i)
                p[i] = io::parse_double(f[1 + i], "stage power");
            out.set(table.at(f[0]).opcode_id, p);
        }
        out.validate_against(table);
        return out;
    }

  private:
    std::map<OpcodeId, PerStage<double>> rows_;
};

// Published LEON3 LD profile at one clock (watts, Fetch..Write).
inline constexpr PerStage<double> kLdStagePower{0.086649, 0.027123, 0.027238, 0.013182,
                                                0.015111, 0.012424, 0.059794};

// Default table: LD profile x category scale x per-instruction factor.
// Only the LD row is measured; every other number is a declared assumption.
inline constexpr std::array<double, kCategoryCount> kDefaultCategoryScale{1.0, 0.8, 0.65,
                                                                          0.55, 1.25};
inline constexpr double kDefaultIdleScale = 0.5;

inline double default_instruction_factor(std::string_view mnemonic) {
    static const std::map<std::string, double, std::less<>> f{
        {"LD", 1.00},    {"LDD", 1.04},   {"LDF", 0.98},   {"ST", 0.96},    {"STD", 1.02},
        {"ADD", 1.00},   {"ADDCC", 1.01}, {"SUB", 1.02},   {"SUBCC", 1.03}, {"ULMUL", 1.05},
        {"SMUL", 1.04},  {"ADCC", 0.99},  {"AND", 0.97},   {"OR", 0.97},    {"XOR", 0.98},
        {"SLL", 0.96},   {"SRL", 0.96},   {"RESTORE", 1.00}, {"CALL", 1.03}, {"SAVE", 1.01},
        {"BA", 0.97},    {"BNE", 0.98},   {"JMPL", 1.02},  {"WRPSR", 1.00}, {"WRY", 0.98},
        {"RDY", 0.97},   {"RDPSR", 0.99}, {"FMOV", 0.97},  {"FCMP", 1.00},  {"FADD", 1.03},
        {"FMUL", 1.05},
    };
    auto it = f.find(mnemonic);
    return it == f.end() ? 1.0 : it->second;
}

inline PowerModelTable default_power_model(const InstructionTable &table) {
    PowerModelTable m;
    for (const auto &ins : table.rows()) {
        PerStage<double> p{};
        double scale = ins.opcode_id == kBubbleOpcode
                           ? kDefaultIdleScale
                           : kDefaultCategoryScale[index_of(ins.category)] *
                                 default_instruction_factor(ins.mnemonic);
        for (std::size_t s = 0; s < kStageCount; ++s)
            p[s] = kLdStagePower[s] * scale;
        m.set(ins.opcode_id, p);
    }
    return m;
}

struct PowerTraceRecord {
    std::uint64_t cycle = 0;
    PerStage<double> stage_power{};
    PerStage<OpcodeId> instruction{};
    bool ht_active = false;
    std::string ht_name; // empty when no Trojan is active

    bool operator==(const PowerTraceRecord &) const = default;
};

using PowerTrace = std::vector<PowerTraceRecord>;

inline void check_record(const PowerTraceRecord &r) {
    for (double w : r.stage_power)
        if (!(w > 0.0) || !std::isfinite(w))
            throw DataError("trace cycle " + std::to_string(r.cycle) +
                            ": non-positive or non-finite stage power");
    if (r.ht_active && r.ht_name.empty())
        throw DataError("trace cycle " + std::to_string(r.cycle) +
                        ": active Trojan without a name");
}

// One instruction enters Fetch per cycle and moves one stage per cycle; no
// stalls. The stream is treated as a loop that has already been running,
// so the pipeline is full from cycle 0. An idle workload leaves every
// stage holding a bubble. Noise is multiplicative N(0, noise_sigma).
inline PowerTrace simulate_trace(const Workload &workload, const PowerModelTable &model,
                                 std::size_t cycles, Seed seed, double noise_sigma = 0.005) {
    if (cycles < kStageCount)
        throw ConfigError("simulate_trace: need at least 7 cycles to fill the pipeline");
    if (noise_sigma < 0.0)
        throw ConfigError("simulate_trace: negative noise sigma");
    for (OpcodeId op : workload.stream)
        (void)model.at(op);
    (void)model.idle_power();

    const auto &stream = workload.stream;
    const std::size_t n = stream.size();
    Rng rng(seed);
    PowerTrace trace(cycles);
    for (std::size_t t = 0; t < cycles; ++t) {
        auto &r = trace[t];
        r.cycle = t;
        for (std::size_t s = 0; s < kStageCount; ++s) {
            const OpcodeId op =
                n == 0 ? kBubbleOpcode : stream[(t + n * kStageCount - s) % n];
            r.instruction[s] = op;
            const double nominal = model.at(op)[s];
            double p = nominal;
            if (noise_sigma > 0.0)
                p = nominal * (1.0 + noise_sigma * rng.gaussian());
            r.stage_power[s] = std::max(p, nominal * 1e-6);
        }
    }
    return trace;
}

// Activity on un-trusted cores couples into the trusted rail through the
// shared grid: each neighbour adds `coupling` times its own stage power.
inline void apply_cross_core(PowerTrace &trace, std::span<const PowerTrace> neighbours,
                             double coupling) {
    for (const auto &nb : neighbours) {
        if (nb.size() < trace.size())
            throw DataError("cross-core trace shorter than trusted trace");
        for (std::size_t t = 0; t < trace.size(); ++t)
            for (std::size_t s = 0; s < kStageCount; ++s)
                trace[t].stage_power[s] += coupling * nb[t].stage_power[s];
    }
}

// ---- codecs ---------------------------------------------------------------

inline std::string trace_csv_header() {
    std::string h = "cycle";
    for (auto s : kAllStages)
        h += ",p_" + std::string(column_name(s));
    for (auto s : kAllStages)
        h += ",opcode_" + std::string(column_name(s));
    h += ",ht_active,ht_name";
    return h;
}

inline std::string trace_to_csv(const PowerTrace &trace) {
    std::ostringstream ss;
    ss << trace_csv_header() << '\n';
    for (const auto &r : trace) {
        ss << r.cycle;
        for (double w : r.stage_power)
            ss << ',' << io::fmt(w);
        for (OpcodeId op : r.instruction)
            ss << ',' << op;
        ss << ',' << (r.ht_active ? 1 : 0) << ',' << r.ht_name << '\n';
    }
    return ss.str();
}

inline PowerTrace trace_from_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || io::split(line) != io::split(trace_csv_header()))
        throw DataError("trace csv: bad header");
    PowerTrace out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto f = io::split(line);
        if (f.size() != 3 + 2 * kStageCount)
            throw DataError("trace csv: wrong field count at row " + std::to_string(out.size()));
        PowerTraceRecord r;
        r.cycle = static_cast<std::uint64_t>(io::parse_int(f[0], "cycle"));
        for (std::size_t s = 0; s < kStageCount; ++s) {
            r.stage_power[s] = io::parse_double(f[1 + s], "stage power");
            r.instruction[s] = static_cast<OpcodeId>(io::parse_int(f[1 + kStageCount + s], "opcode"));
        }
        r.ht_active = f[1 + 2 * kStageCount] == "1";
        r.ht_name = f[2 + 2 * kStageCount];
        check_record(r);
        out.push_back(std::move(r));
    }
    return out;
}

// Binary framing (little-endian), documented in docs/formats.md:
//   magic "SWTRACE1", u64 count, then per record:
//   u64 cycle, 7 x f64 power, 7 x i32 opcode, u8 ht_active,
//   u32 name length, name bytes.
inline constexpr std::string_view kTraceMagic = "SWTRACE1";

inline std::string trace_to_binary(const PowerTrace &trace) {
    io::LeWriter w;
    w.bytes(kTraceMagic);
    w.u64(trace.size());
    for (const auto &r : trace) {
        w.u64(r.cycle);
        for (double p : r.stage_power)
            w.f64(p);
        for (OpcodeId op : r.instruction)
            w.i32(op);
        w.u8(r.ht_active ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(r.ht_name.size()));
        w.bytes(r.ht_name);
    }
    return w.str();
}

inline PowerTrace trace_from_binary(std::string_view data) {
    io::LeReader rd(data);
    if (rd.bytes(kTraceMagic.size()) != kTraceMagic)
        throw DataError("trace binary: bad magic");
    const auto n = rd.u64();
    if (n > data.size() / 97)
        throw DataError("trace binary: record count exceeds file size");
    PowerTrace out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        PowerTraceRecord r;
        r.cycle = rd.u64();
        for (auto &p : r.stage_power)
            p = rd.f64();
        for (auto &op : r.instruction)
            op = rd.i32();
        r.ht_active = rd.u8() != 0;
        r.ht_name = std::string(rd.bytes(rd.u32()));
        out.push_back(std::move(r));
    }
    if (!rd.done())
        throw DataError("trace binary: trailing bytes");
    return out;
}

} // namespace stagewatch

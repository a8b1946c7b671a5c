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

// Instruction identities, the five SPARC V8 instruction categories and
// synthetic workload streams. Only identity and category matter here; no
// architectural semantics are modelled.

#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"
#include "stagewatch/random.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace stagewatch {

enum class InstructionCategory : std::uint8_t {
    Cat1 = 0, // load/store
    Cat2,     // arithmetic/logical/shift
    Cat3,     // control transfer
    Cat4,     // register read/write
    Cat5,     // floating point
};

inline constexpr std::size_t kCategoryCount = 5;

inline constexpr std::array<InstructionCategory, kCategoryCount> kAllCategories{
    InstructionCategory::Cat1, InstructionCategory::Cat2,
    InstructionCategory::Cat3, InstructionCategory::Cat4,
    InstructionCategory::Cat5};

constexpr std::size_t index_of(InstructionCategory c) {
    return static_cast<std::size_t>(c);
}

inline std::string_view to_string(InstructionCategory c) {
    static constexpr std::array<std::string_view, kCategoryCount> names{
        "Cat1", "Cat2", "Cat3", "Cat4", "Cat5"};
    return names[index_of(c)];
}

inline InstructionCategory parse_category(std::string_view s) {
    for (auto c : kAllCategories)
        if (to_string(c) == s)
            return c;
    throw DataError("unknown instruction category '" + std::string(s) + "'");
}

using OpcodeId = std::int32_t;

// Opcode 0 is NOP; an empty pipeline slot (bubble) is represented by it.
inline constexpr OpcodeId kBubbleOpcode = 0;

struct Instruction {
    std::string mnemonic;
    OpcodeId opcode_id = 0;
    InstructionCategory category = InstructionCategory::Cat2;

    bool operator==(const Instruction &) const = default;
};

class InstructionTable {
  public:
    static constexpr std::string_view kFormatTag = "# stagewatch instruction table v1";

    InstructionTable() = default;

    explicit InstructionTable(std::vector<Instruction> rows) : rows_(std::move(rows)) {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (rows_[i].opcode_id == rows_[j].opcode_id)
                    throw DataError("duplicate opcode_id " +
                                    std::to_string(rows_[i].opcode_id));
                if (rows_[i].mnemonic == rows_[j].mnemonic)
                    throw DataError("duplicate mnemonic " + rows_[i].mnemonic);
            }
            if (rows_[i].opcode_id < 0)
                throw DataError("negative opcode_id for " + rows_[i].mnemonic);
        }
    }

    const std::vector<Instruction> &rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    const Instruction *find(std::string_view mnemonic) const {
        auto it = std::find_if(rows_.begin(), rows_.end(),
                               [&](const Instruction &i) { return i.mnemonic == mnemonic; });
        return it == rows_.end() ? nullptr : &*it;
    }

    const Instruction *find(OpcodeId id) const {
        auto it = std::find_if(rows_.begin(), rows_.end(),
                               [&](const Instruction &i) { return i.opcode_id == id; });
        return it == rows_.end() ? nullptr : &*it;
    }

    const Instruction &at(std::string_view mnemonic) const {
        if (const auto *i = find(mnemonic))
            return *i;
        throw DataError("unknown mnemonic '" + std::string(mnemonic) + "'");
    }

    const Instruction &at(OpcodeId id) const {
        if (const auto *i = find(id))
            return *i;
        throw DataError("unknown opcode_id " + std::to_string(id));
    }

    InstructionCategory category_of(OpcodeId id) const { return at(id).category; }

    OpcodeId max_opcode() const {
        OpcodeId m = 0;
        for (const auto &r : rows_)
            m = std::max(m, r.opcode_id);
        return m;
    }

    std::vector<OpcodeId> opcodes_in(InstructionCategory c) const {
        std::vector<OpcodeId> out;
        for (const auto &r : rows_)
            if (r.category == c && r.opcode_id != kBubbleOpcode)
                out.push_back(r.opcode_id);
        return out;
    }

    std::string to_csv() const {
        std::ostringstream ss;
        ss << kFormatTag << '\n' << "mnemonic,opcode_id,category\n";
        for (const auto &r : rows_)
            ss << r.mnemonic << ',' << r.opcode_id << ',' << to_string(r.category) << '\n';
        return ss.str();
    }

    static InstructionTable from_csv(std::string_view text) {
        std::istringstream in{std::string(text)};
        std::string line;
        std::vector<Instruction> rows;
        bool header = false;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#')
                continue;
            if (!header) {
                if (line.rfind("mnemonic,opcode_id,category", 0) != 0)
                    throw DataError("instruction table: bad header '" + line + "'");
                header = true;
                continue;
            }
            auto f = io::split(line);
            if (f.size() != 3)
                throw DataError("instruction table: expected 3 fields in '" + line + "'");
            rows.push_back({f[0], static_cast<OpcodeId>(io::parse_int(f[1], "opcode_id")),
                            parse_category(f[2])});
        }
        return InstructionTable(std::move(rows));
    }

  private:
    std::vector<Instruction> rows_;
};

// The shipped table. Opcode ids follow table order; edits must append.
inline InstructionTable build_instruction_table() {
    using C = InstructionCategory;
    static const std::vector<std::pair<const char *, C>> rows{
        {"NOP", C::Cat2},
        {"LD", C::Cat1},      {"LDD", C::Cat1},    {"LDF", C::Cat1},
        {"ST", C::Cat1},      {"STD", C::Cat1},
        {"ADD", C::Cat2},     {"ADDCC", C::Cat2},  {"SUB", C::Cat2},
        {"SUBCC", C::Cat2},   {"ULMUL", C::Cat2},  {"SMUL", C::Cat2},
        {"ADCC", C::Cat2},    {"AND", C::Cat2},    {"OR", C::Cat2},
        {"XOR", C::Cat2},     {"SLL", C::Cat2},    {"SRL", C::Cat2},
        {"RESTORE", C::Cat3}, {"CALL", C::Cat3},   {"SAVE", C::Cat3},
        {"BA", C::Cat3},      {"BNE", C::Cat3},    {"JMPL", C::Cat3},
        {"WRPSR", C::Cat4},   {"WRY", C::Cat4},    {"RDY", C::Cat4},
        {"RDPSR", C::Cat4},
        {"FMOV", C::Cat5},    {"FCMP", C::Cat5},   {"FADD", C::Cat5},
        {"FMUL", C::Cat5},
    };
    std::vector<Instruction> out;
    out.reserve(rows.size());
    OpcodeId id = 0;
    for (const auto &[m, c] : rows)
        out.push_back({m, id++, c});
    return InstructionTable(std::move(out));
}

// How a named workload mixes instruction categories. Empty opcode lists
// mean "every instruction of that category". A Cat2 run length above 1
// emits Cat2 instructions in bursts while keeping the per-instruction
// category fractions equal to category_weights.
struct WorkloadSpec {
    std::string name;
    std::array<double, kCategoryCount> category_weights{};
    std::array<std::vector<std::string>, kCategoryCount> opcodes{};
    std::size_t cat2_run_length = 1;

    bool idle() const {
        return std::all_of(category_weights.begin(), category_weights.end(),
                           [](double w) { return w == 0.0; });
    }
};

struct Workload {
    std::string name;
    std::vector<OpcodeId> stream;
    Seed seed = 0;
};

inline constexpr std::array<double, kCategoryCount> kDefaultCategoryMix{0.30, 0.40, 0.10,
                                                                        0.15, 0.05};

inline std::vector<WorkloadSpec> default_workload_specs() {
    auto make = [](std::string name, std::vector<std::string> cat2, std::size_t run) {
        WorkloadSpec w;
        w.name = std::move(name);
        w.category_weights = kDefaultCategoryMix;
        w.opcodes[index_of(InstructionCategory::Cat2)] = std::move(cat2);
        w.cat2_run_length = run;
        return w;
    };
    // Division is a shift/subtract routine, so it reuses opcodes that the
    // training workloads also exercise.
    std::vector<WorkloadSpec> specs{
        make("add", {"ADD", "ADDCC", "ADCC", "AND", "OR", "SLL"}, 1),
        make("sub", {"SUB", "SUBCC", "AND", "OR", "XOR", "SRL"}, 1),
        make("mul", {"ULMUL", "SMUL", "ADD", "SLL", "SRL"}, 1),
        make("div", {"SUB", "SUBCC", "ADDCC", "SLL", "SRL"}, 3),
    };
    WorkloadSpec idle;
    idle.name = "idle";
    specs.push_back(idle);
    return specs;
}

inline const WorkloadSpec &find_workload_spec(const std::vector<WorkloadSpec> &specs,
                                              std::string_view name) {
    for (const auto &s : specs)
        if (s.name == name)
            return s;
    throw ConfigError("unknown workload '" + std::string(name) + "'");
}

inline Workload generate_workload(const WorkloadSpec &spec, const InstructionTable &table,
                                  std::size_t length, Seed seed) {
    Workload w{spec.name, {}, seed};
    if (spec.idle())
        return w;
    if (length == 0)
        throw ConfigError("workload '" + spec.name + "' needs length >= 1");

    std::array<std::vector<OpcodeId>, kCategoryCount> pools;
    std::array<double, kCategoryCount> block_weights{};
    for (auto c : kAllCategories) {
        const auto ci = index_of(c);
        const double weight = spec.category_weights[ci];
        if (weight < 0.0)
            throw ConfigError("workload '" + spec.name + "': negative category weight");
        if (spec.opcodes[ci].empty()) {
            pools[ci] = table.opcodes_in(c);
        } else {
            for (const auto &m : spec.opcodes[ci]) {
                const auto &ins = table.at(m);
                if (ins.category != c)
                    throw ConfigError("workload '" + spec.name + "': " + m + " is not in " +
                                      std::string(to_string(c)));
                pools[ci].push_back(ins.opcode_id);
            }
        }
        if (weight > 0.0 && pools[ci].empty())
            throw ConfigError("workload '" + spec.name + "': no opcodes for " +
                              std::string(to_string(c)));
        const double run =
            c == InstructionCategory::Cat2 ? static_cast<double>(std::max<std::size_t>(1, spec.cat2_run_length)) : 1.0;
        block_weights[ci] = weight / run;
    }

    Rng rng(seed);
    w.stream.reserve(length);
    while (w.stream.size() < length) {
        const auto ci = rng.categorical(block_weights);
        const std::size_t run =
            ci == index_of(InstructionCategory::Cat2) ? std::max<std::size_t>(1, spec.cat2_run_length) : 1;
        for (std::size_t k = 0; k < run && w.stream.size() < length; ++k) {
            const auto &pool = pools[ci];
            w.stream.push_back(pool[rng.below(pool.size())]);
        }
    }
    return w;
}

inline Workload generate_workload(std::string_view name, std::size_t length, Seed seed) {
    static const auto specs = default_workload_specs();
    static const auto table = build_instruction_table();
    return generate_workload(find_workload_spec(specs, name), table, length, seed);
}

} // namespace stagewatch

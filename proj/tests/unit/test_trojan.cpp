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

#include "stagewatch/trojan.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace stagewatch;

namespace {

const InstructionTable &table() {
    static const auto t = build_instruction_table();
    return t;
}

const PowerModelTable &model() {
    static const auto m = default_power_model(table());
    return m;
}

const TrojanCatalog &shipped() {
    static const auto c = catalog();
    return c;
}

PowerTrace nominal(std::size_t cycles, Seed seed, double noise = 0.005) {
    return simulate_trace(generate_workload("add", cycles, seed), model(), cycles, seed, noise);
}

TrojanModel fixed(TrojanModel m, std::uint64_t k, Seed seed) {
    m.trigger.mode = TriggerMode::fixed_count;
    m.trigger.target_activations = k;
    m.trigger.seed = seed;
    return m;
}

std::size_t count_windows(const PowerTrace &t) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        n += t[i].ht_active && (i == 0 || !t[i - 1].ht_active);
    return n;
}

} // namespace

TEST(DeltaP, Examples) {
    EXPECT_DOUBLE_EQ(delta_p_metric(10.0, 10.0), 0.0);
    EXPECT_NEAR(delta_p_metric(10.0, 13.5), -0.35, 1e-15);
    EXPECT_NEAR(delta_p_metric(0.086649, 0.086649 * 1.05), -0.05, 1e-12);
    EXPECT_THROW(delta_p_metric(0.0, 1.0), DomainError);
    EXPECT_THROW(delta_p_metric(-1.0, 1.0), DomainError);
}

TEST(Catalog, SplitMembershipAndDisjointness) {
    const auto c = shipped();
    EXPECT_EQ(c.at("AES-T100").split, Split::train);
    EXPECT_EQ(c.at("MC8051-T600").split, Split::eval);
    EXPECT_EQ(c.at("MC8051-T200").split, Split::eval);
    const std::vector<std::string> expected_train{"AES-T100",     "AES-T800",     "vgalcd-T100",
                                                  "RS232-T1000",  "memctrl-T100", "ethernetMAC10GE-T700"};
    EXPECT_EQ(c.names(Split::train), expected_train);
    const auto tr = c.names(Split::train), ev = c.names(Split::eval);
    std::set<std::string> a(tr.begin(), tr.end());
    for (const auto &e : ev)
        EXPECT_FALSE(a.count(e)) << e;
    EXPECT_THROW(c.at("nope"), ConfigError);
}

TEST(Catalog, EnvelopeDurationAndExceptionStage) {
    for (const auto &m : shipped().models()) {
        const auto d = m.dominant();
        EXPECT_GE(std::abs(d.delta), 0.01) << m.name;
        EXPECT_LE(std::abs(d.delta), 0.35) << m.name;
        for (auto s : kAllStages)
            for (auto c : kAllCategories)
                EXPECT_LE(std::abs(m.induced_delta(index_of(s), c)), 0.35);
        EXPECT_GE(m.duration_cycles, 2u);
        EXPECT_LE(std::abs(m.stage_delta[index_of(PipelineStage::Exception)]), 0.01) << m.name;
    }
}

TEST(Catalog, ScenarioS6HasTheLargestEffect) {
    const auto c = shipped();
    const auto scen = default_scenarios();
    double s6 = 0, others = 0;
    for (const auto &s : scen) {
        if (s.active_trojans.empty())
            continue;
        const auto &m = c.at(s.active_trojans.front());
        double sum = 0;
        for (double d : m.stage_delta)
            sum += d;
        (s.id == "S6" ? s6 : others) = std::max(s.id == "S6" ? s6 : others, sum);
    }
    EXPECT_GT(s6, others);
}

TEST(Catalog, ScenarioStructure) {
    const auto scen = default_scenarios();
    ASSERT_EQ(scen.size(), 8u);
    EXPECT_EQ(scen[0].id, "S0");
    EXPECT_TRUE(scen[0].active_trojans.empty());
    for (std::size_t i = 1; i < scen.size(); ++i) {
        EXPECT_EQ(scen[i].id, "S" + std::to_string(i));
        EXPECT_EQ(scen[i].active_trojans.size(), 1u);
        (void)shipped().at(scen[i].active_trojans.front());
    }
}

TEST(Catalog, JsonRoundTripAndVersioning) {
    const auto c = shipped();
    auto j = c.to_json();
    const auto back = TrojanCatalog::from_json(j);
    EXPECT_EQ(back.to_json(), j);
    EXPECT_EQ(back.version(), "2026.1");
    j["format_version"] = 99;
    EXPECT_THROW(TrojanCatalog::from_json(j), CompatibilityError);
    auto dup = c.to_json();
    dup["trojans"].push_back(dup["trojans"][0]);
    EXPECT_THROW(TrojanCatalog::from_json(dup), ConfigError);
}

TEST(Inject, ZeroDeltaMarksWindowsButKeepsPower) {
    auto m = fixed(shipped().at("AES-T100"), 5, 3);
    m.stage_delta.fill(0.0);
    const auto t = nominal(500, 1);
    const auto out = inject(t, m, table());
    std::size_t active = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_EQ(out[i].stage_power, t[i].stage_power);
        active += out[i].ht_active;
        if (out[i].ht_active) {
            EXPECT_EQ(out[i].ht_name, "AES-T100");
        }
    }
    EXPECT_EQ(active, 5 * m.duration_cycles);
    EXPECT_EQ(count_windows(out), 5u);
}

TEST(Inject, ThousandActivationsOverHundredThousandCycles) {
    const auto m = fixed(shipped().at("MC8051-T600"), 1000, 11);
    const auto t = nominal(100000, 2);
    const auto out = inject(t, m, table());
    std::size_t active = 0;
    for (const auto &r : out)
        active += r.ht_active;
    EXPECT_EQ(active, 1000 * m.duration_cycles);
    EXPECT_EQ(count_windows(out), 1000u);
    const auto ws = activation_windows(m.trigger, m.duration_cycles, t.size());
    ASSERT_EQ(ws.size(), 1000u);
    for (std::size_t i = 1; i < ws.size(); ++i)
        EXPECT_GT(ws[i].start, ws[i - 1].start + ws[i - 1].length);
    EXPECT_LE(ws.back().start + ws.back().length, t.size());
}

TEST(Inject, SingleStageDecodeDeltaGivesMatchingDeltaP) {
    TrojanModel m;
    m.name = "decode-only";
    m.stage_delta[index_of(PipelineStage::Decode)] = 0.35;
    m.instruction_sensitivity = {0, 1, 0, 0, 0};
    m.duration_cycles = 4;
    m = fixed(m, 200, 5);
    const auto t = nominal(20000, 9);
    const auto out = inject(t, m, table());
    long double nom = 0, inj = 0;
    std::size_t n = 0;
    const auto d = index_of(PipelineStage::Decode);
    for (std::size_t i = 0; i < t.size(); ++i)
        if (out[i].ht_active && table().category_of(t[i].instruction[d]) == InstructionCategory::Cat2) {
            nom += t[i].stage_power[d];
            inj += out[i].stage_power[d];
            ++n;
        }
    ASSERT_GT(n, 50u);
    EXPECT_NEAR(delta_p_metric(static_cast<double>(nom), static_cast<double>(inj)), -0.35, 1e-9);
}

TEST(Inject, ConservationOutsideWindows) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto &models = shipped().models();
        const auto m = fixed(models[rng.below(models.size())], rng.below(20), rng.next_u64());
        const auto t = nominal(2000, rng.next_u64());
        const auto out = inject(t, m, table());
        for (std::size_t i = 0; i < t.size(); ++i)
            if (!out[i].ht_active) {
                ASSERT_EQ(out[i], t[i]);
            }
        EXPECT_EQ(count_windows(out), m.trigger.target_activations);
    }
}

TEST(Inject, ExactMultiplicativeEffectInsideWindows) {
    const auto m = fixed(shipped().at("BasicRSA-T300"), 30, 4);
    const auto t = nominal(3000, 6);
    const auto out = inject(t, m, table());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!out[i].ht_active)
            continue;
        for (std::size_t s = 0; s < kStageCount; ++s) {
            const double f = 1.0 + m.induced_delta(s, table().category_of(t[i].instruction[s]));
            EXPECT_DOUBLE_EQ(out[i].stage_power[s], t[i].stage_power[s] * f);
        }
    }
}

TEST(Inject, MonotoneScalingOfDeltas) {
    const auto base = fixed(shipped().at("AES-T800"), 40, 8);
    const auto t = nominal(4000, 3, 0.0);
    const auto a = inject(t, base, table());
    for (double k : {1.5, 2.0, 3.0}) {
        auto scaled = base;
        for (auto &d : scaled.stage_delta)
            d *= k;
        const auto b = inject(t, scaled, table());
        for (std::size_t i = 0; i < t.size(); ++i) {
            ASSERT_EQ(a[i].ht_active, b[i].ht_active);
            if (!a[i].ht_active)
                continue;
            for (std::size_t s = 0; s < kStageCount; ++s) {
                const double da = delta_p_metric(t[i].stage_power[s], a[i].stage_power[s]);
                const double db = delta_p_metric(t[i].stage_power[s], b[i].stage_power[s]);
                EXPECT_NEAR(std::abs(db), k * std::abs(da), 1e-12);
            }
        }
    }
}

TEST(Inject, WindowsThatCannotFitAreConfigErrors) {
    auto m = fixed(shipped().at("AES-T100"), 100, 1);
    const auto t = nominal(200, 1);
    EXPECT_THROW(inject(t, m, table()), ConfigError);
    // k * duration fits but the one-cycle gaps do not.
    m.duration_cycles = 2;
    m.trigger.target_activations = 100;
    EXPECT_THROW(inject(t, m, table()), ConfigError);
    m.trigger.target_activations = 67;
    EXPECT_NO_THROW(inject(t, m, table()));
}

TEST(Inject, RejectsNonNominalInput) {
    const auto m = fixed(shipped().at("AES-T100"), 3, 1);
    auto t = nominal(100, 1);
    t[5].ht_active = true;
    t[5].ht_name = "x";
    EXPECT_THROW(inject(t, m, table()), DataError);
}

TEST(Inject, DeterministicPerTriggerSeed) {
    const auto m = fixed(shipped().at("AES-T100"), 10, 77);
    const auto t = nominal(1000, 1);
    EXPECT_EQ(inject(t, m, table()), inject(t, m, table()));
    auto other = m;
    other.trigger.seed = 78;
    EXPECT_NE(inject(t, m, table()), inject(t, other, table()));
}

TEST(Trigger, BernoulliWindowsAreDisjointAndRateTracksProbability) {
    TriggerSpec trig{TriggerMode::bernoulli, 0, 0.01, 5};
    const auto ws = activation_windows(trig, 3, 100000);
    for (std::size_t i = 1; i < ws.size(); ++i)
        EXPECT_GT(ws[i].start, ws[i - 1].start + ws[i - 1].length - 1);
    // Expected window count: each window consumes ~4 cycles of opportunity.
    const double expected = 100000.0 / (1.0 / 0.01 + 3.0);
    EXPECT_NEAR(static_cast<double>(ws.size()), expected, 0.1 * expected);
    trig.per_cycle_probability = 1.5;
    EXPECT_THROW(activation_windows(trig, 3, 100), ConfigError);
    EXPECT_TRUE(activation_windows({TriggerMode::fixed_count, 0, 0, 1}, 3, 100).empty());
}

TEST(TrojanModel, ValidationAndDominant) {
    TrojanModel m;
    m.name = "x";
    m.duration_cycles = 1;
    EXPECT_THROW(m.validate(), ConfigError);
    m.duration_cycles = 2;
    m.stage_delta[3] = -0.2;
    m.instruction_sensitivity = {0.1, 0.1, 2.0, 0.1, 0.1};
    const auto d = m.dominant();
    EXPECT_EQ(d.stage, PipelineStage::Execute);
    EXPECT_EQ(d.category, InstructionCategory::Cat3);
    EXPECT_DOUBLE_EQ(d.delta, -0.4);
    m.stage_delta[0] = -1.0;
    EXPECT_THROW(m.validate(), ConfigError);
}

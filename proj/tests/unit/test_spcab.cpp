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

#include "stagewatch/spcab.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

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

} // namespace

TEST(ScaleFactors, Examples) {
    EXPECT_EQ(scale_factors(std::vector<double>{2e-6, 4e-6, 8e-6}), (std::vector<double>{0.25, 0.5, 1.0}));
    EXPECT_EQ(scale_factors(std::vector<double>{5e-6}), (std::vector<double>{1.0}));
    EXPECT_THROW(scale_factors(std::vector<double>{}), DomainError);
    EXPECT_THROW(scale_factors(std::vector<double>{1.0, 0.0}), DomainError);
    EXPECT_THROW(scale_factors(std::vector<double>{1.0, -2.0}), DomainError);
}

TEST(ScaleFactors, MaxIsExactlyOneAndAllInUnitInterval) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto cur = gen::positive_doubles(rng, 1 + rng.below(100));
        const auto sf = scale_factors(cur);
        EXPECT_EQ(*std::max_element(sf.begin(), sf.end()), 1.0);
        for (double f : sf) {
            EXPECT_GT(f, 0.0);
            EXPECT_LE(f, 1.0);
        }
    }
}

TEST(MirroredWidths, Examples) {
    EXPECT_EQ(mirrored_widths(10.0, std::vector<double>{1.0}), (std::vector<double>{10.0}));
    EXPECT_EQ(mirrored_widths(10.0, std::vector<double>{0.25, 0.5, 1.0}),
              (std::vector<double>{2.5, 5.0, 10.0}));
    EXPECT_THROW(mirrored_widths(0.0, std::vector<double>{1.0}), DomainError);
    EXPECT_THROW(mirrored_widths(1.0, std::vector<double>{1.5}), DomainError);
}

TEST(MirroredWidths, RatioOracleAndBound) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const double w = rng.uniform(0.1, 50.0);
        std::vector<double> sf(1 + rng.below(20));
        for (auto &f : sf)
            f = rng.uniform(1e-6, 1.0);
        const auto out = mirrored_widths(w, sf);
        for (std::size_t i = 0; i < sf.size(); ++i) {
            EXPECT_NEAR(out[i] / w, sf[i], 1e-15);
            EXPECT_LE(out[i], w);
        }
    }
}

TEST(CollectorWidth, ExamplesAndMonotonicity) {
    EXPECT_DOUBLE_EQ(collector_width(1.0, 2.0, 1), 2.0);
    EXPECT_DOUBLE_EQ(collector_width(1.0, 2.0, 4), 0.5);
    EXPECT_THROW(collector_width(1.0, 2.0, 0), DomainError);
    EXPECT_THROW(collector_width(0.0, 2.0, 1), DomainError);
    double prev = collector_width(0.12, 2.4, 1);
    for (unsigned c = 2; c <= 10; ++c) {
        const double w = collector_width(0.12, 2.4, c);
        EXPECT_LT(w, prev);
        EXPECT_GT(w, 0.0);
        prev = w;
    }
}

TEST(Sizing, RoundTripRecoversCurrentRatios) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto cur = gen::positive_doubles(rng, 2 + rng.below(10));
        const auto w = mirrored_widths(rng.uniform(0.5, 5.0), scale_factors(cur));
        for (std::size_t i = 0; i < cur.size(); ++i)
            for (std::size_t j = 0; j < cur.size(); ++j)
                EXPECT_NEAR((w[i] / w[j]) / (cur[i] / cur[j]), 1.0, 1e-12);
    }
}

TEST(Sizing, AcquisitionBlockAndReport) {
    const auto stages = leon3_stage_profile();
    const SizingParams p;
    const auto sizing = size_acquisition_block(stages, model(), p);
    ASSERT_EQ(sizing.size(), kStageCount);
    for (std::size_t i = 0; i < sizing.size(); ++i) {
        EXPECT_EQ(sizing[i].component_count, stages[i].component_count);
        EXPECT_EQ(*std::max_element(sizing[i].scale_factors.begin(), sizing[i].scale_factors.end()), 1.0);
        EXPECT_GT(sizing[i].collector_width, 0.0);
    }
    const auto r = sizing_report(stages, model(), p);
    EXPECT_EQ(r["power_ports"]["naive_multi_port"], 14);
    EXPECT_EQ(r["power_ports"]["single_port"], 1);
    EXPECT_EQ(r["power_ports"]["reduction_ratio"], 14.0);
    EXPECT_NEAR(r["estimated_sensor_area_um2"].get<double>(),
                r["total_transistor_width_um"].get<double>() * p.area_per_width, 1e-15);
}

TEST(Adc, DefaultsAndValidation) {
    const auto a = default_adc(model());
    EXPECT_EQ(a.bits, 10u);
    EXPECT_EQ(a.sample_period_cycles, 1u);
    EXPECT_DOUBLE_EQ(a.full_scale, 2.0 * model().max_power());
    EXPECT_GT(a.step(), 0.0);
    AdcSpec bad = a;
    bad.bits = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = a;
    bad.full_scale = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = a;
    bad.sample_period_cycles = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Adc, QuantizationExamples) {
    const AdcSpec a{10, 0.2, 1};
    EXPECT_EQ(quantize(0.2, a), 0.2);
    EXPECT_EQ(quantize(0.5, a), 0.2);
    EXPECT_EQ(quantize(-0.01, a), 0.0);
    const double q = quantize(0.086649, a);
    EXPECT_LE(std::abs(q - 0.086649), 0.2 / 1024);
    EXPECT_NEAR(q / a.step(), std::round(q / a.step()), 1e-9);
}

TEST(Adc, FivePercentChangeMovesAtLeastOneStep) {
    const auto a = default_adc(model());
    for (const auto &[op, row] : model().rows())
        for (double v : row) {
            EXPECT_GE(quantize(1.05 * v, a) - quantize(v, a), a.step() * (1 - 1e-9));
            EXPECT_GE(quantize(v, a) - quantize(0.95 * v, a), a.step() * (1 - 1e-9));
        }
}

TEST(Acquire, RoundRobinOrderFromFetch) {
    PowerTrace t(7);
    for (std::size_t c = 0; c < 7; ++c) {
        t[c].cycle = c;
        t[c].stage_power.fill(0.05);
        t[c].instruction.fill(table().at("ADD").opcode_id);
    }
    const auto fs = acquire(t, AdcSpec{10, 0.2, 1}, PipelineStage::Fetch, table());
    ASSERT_EQ(fs.size(), 7u);
    for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_EQ(fs[c].stage, kAllStages[c]);
        EXPECT_EQ(fs[c].category, InstructionCategory::Cat2);
    }
}

TEST(Acquire, InvariantsOnRandomTraces) {
    Rng rng(6);
    const auto adc = default_adc(model());
    for (int trial = 0; trial < 30; ++trial) {
        const auto t = gen::random_trace(rng, 1 + rng.below(3000), table(), adc.full_scale);
        const auto start = stage_at(rng.below(kStageCount));
        const auto fs = acquire(t, adc, start, table());
        ASSERT_EQ(fs.size(), t.size());
        for (std::size_t c = 0; c < fs.size(); ++c) {
            const auto s = (index_of(start) + c) % kStageCount;
            ASSERT_EQ(index_of(fs[c].stage), s);
            EXPECT_EQ(fs[c].opcode_id, t[c].instruction[s]);
            EXPECT_EQ(fs[c].category, table().category_of(t[c].instruction[s]));
            EXPECT_LE(std::abs(fs[c].quantized_power - t[c].stage_power[s]), adc.step() / 2 * (1 + 1e-12));
            EXPECT_EQ(fs[c].ground_truth, t[c].ht_active);
        }
        for (std::size_t c = 0; c + 7 <= fs.size(); ++c) {
            std::array<int, kStageCount> seen{};
            for (std::size_t k = c; k < c + 7; ++k)
                ++seen[index_of(fs[k].stage)];
            for (int x : seen)
                ASSERT_EQ(x, 1);
        }
    }
}

TEST(Acquire, SamplePeriodSkipsCycles) {
    Rng rng(7);
    const auto t = gen::random_trace(rng, 100, table(), 0.2);
    const auto fs = acquire(t, AdcSpec{10, 0.2, 3}, PipelineStage::Decode, table());
    ASSERT_EQ(fs.size(), 34u);
    EXPECT_EQ(fs[1].cycle, 3u);
    EXPECT_EQ(fs[1].stage, PipelineStage::RegisterAccess);
}

TEST(FeatureCodec, RoundTrips) {
    Rng rng(8);
    auto fs = gen::random_features(rng, 500, 0.1);
    const AdcSpec a{10, 0.2, 1};
    for (auto &f : fs)
        f.quantized_power = quantize(f.quantized_power, a);
    EXPECT_EQ(features_from_csv(features_to_csv(fs)), fs);
    EXPECT_EQ(features_from_binary(features_to_binary(fs)), fs);
    EXPECT_EQ(features_to_binary(fs).size(), 16 + 24 * fs.size());
}

TEST(FeatureCodec, RejectsMalformedInput) {
    EXPECT_THROW(features_from_csv("cycle,stage\n"), DataError);
    EXPECT_THROW(features_from_binary("SWFEAT01"), DataError);
    auto bin = features_to_binary(std::vector<SampledFeature>(2));
    bin[16 + 20] = 9; // stage byte of record 0
    EXPECT_THROW(features_from_binary(bin), DataError);
    auto huge = features_to_binary(std::vector<SampledFeature>{});
    huge[8] = '\xff';
    EXPECT_THROW(features_from_binary(huge), DataError);
}

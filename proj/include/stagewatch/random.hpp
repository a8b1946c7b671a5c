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

// Seeded random streams.
//
// The standard <random> distributions are implementation-defined, so the
// library draws uniform and Gaussian variates itself from std::mt19937_64
// (whose output sequence is fixed by the standard). Every stochastic step
// takes its own Rng built from a seed derived through derive_seed(), so a
// sub-run can be regenerated without replaying anything before it.
//
// Derivation rule: child = splitmix64(parent ^ fnv1a64(label)) mixed with
// the index through a second splitmix64 round. Labels name the module and
// role ("train/trace", "eval/pv", ...), indices name the trial.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace stagewatch {

using Seed = std::uint64_t;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr Seed derive_seed(Seed parent, std::string_view label,
                           std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(parent ^ fnv1a64(label)) + index);
}

class Rng {
  public:
    explicit Rng(Seed seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // Rejecting the short low band keeps the modulo unbiased.
        const std::uint64_t limit = -n % n;
        for (;;) {
            const std::uint64_t x = engine_();
            if (x >= limit)
                return x % n;
        }
    }

    // Standard normal via Box-Muller; the second variate is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Index drawn from unnormalized non-negative weights.
    template <typename Weights> std::size_t categorical(const Weights &w) {
        double total = 0.0;
        for (double x : w)
            total += x;
        double target = uniform() * total;
        std::size_t i = 0;
        for (double x : w) {
            if (target < x)
                return i;
            target -= x;
            ++i;
        }
        return i - 1;
    }

    template <typename It> void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i)
            std::iter_swap(first + (i - 1), first + below(i));
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace stagewatch

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

// Fixed-size worker pool for independent jobs. Results land in their
// job's slot, so output order never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace stagewatch {

inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0)
        return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(0..n-1) on up to `workers` threads (0 = hardware concurrency).
// If jobs throw, the exception from the lowest-indexed failing job is
// rethrown after all workers join.
template <class R, class Fn>
std::vector<R> parallel_map(std::size_t n, unsigned workers, Fn &&fn) {
    std::vector<R> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                out[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned w = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), n));
    if (w <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < w; ++t)
            pool.emplace_back(worker);
    }
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

} // namespace stagewatch

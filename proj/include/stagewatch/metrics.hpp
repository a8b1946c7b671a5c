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

// Confusion counting, accuracy and Matthews correlation for the intruded
// (positive) vs un-intruded (negative) decision.

#include "json.hpp"

#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace stagewatch {

struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }

    ConfusionCounts &operator+=(const ConfusionCounts &o) {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts &b) { return a += b; }
    bool operator==(const ConfusionCounts &) const = default;
};

inline ConfusionCounts tally(std::span<const bool> predictions, std::span<const bool> truth) {
    if (predictions.size() != truth.size())
        throw DomainError("tally: " + std::to_string(predictions.size()) + " predictions vs " +
                          std::to_string(truth.size()) + " labels");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i])
            predictions[i] ? ++c.tp : ++c.fn;
        else
            predictions[i] ? ++c.fp : ++c.tn;
    }
    return c;
}

inline double accuracy(const ConfusionCounts &c) {
    if (c.total() == 0)
        throw DomainError("accuracy: no classified samples");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

// Undefined (nullopt) when any marginal is zero.
inline std::optional<double> mcc(const ConfusionCounts &c) {
    using W = long double;
    const W tp = c.tp, tn = c.tn, fp = c.fp, fn = c.fn;
    const W den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (den == 0)
        return std::nullopt;
    return static_cast<double>((tp * tn - fp * fn) / std::sqrt(den));
}

inline constexpr double kVeryGoodMcc = 0.7;

// Window scoring: a ground-truth activation window (maximal run of true
// labels) counts as detected when any sample inside it is flagged.
struct WindowScore {
    std::uint64_t windows = 0;
    std::uint64_t detected = 0;
    std::uint64_t false_alarms = 0; // flagged samples outside every window

    double detection_rate() const {
        return windows == 0 ? 0.0 : static_cast<double>(detected) / static_cast<double>(windows);
    }
};

inline WindowScore score_windows(std::span<const bool> predictions, std::span<const bool> truth) {
    if (predictions.size() != truth.size())
        throw DomainError("score_windows: length mismatch");
    WindowScore w;
    bool in_window = false, hit = false;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            if (!in_window) {
                in_window = true;
                hit = false;
                ++w.windows;
            }
            if (predictions[i] && !hit) {
                hit = true;
                ++w.detected;
            }
        } else {
            in_window = false;
            if (predictions[i])
                ++w.false_alarms;
        }
    }
    return w;
}

struct EvalReport {
    ConfusionCounts counts;
    double accuracy = 0.0;
    std::optional<double> mcc;
    std::string benchmark;
    std::map<std::string, std::string> tags; // pv_range, aging_year, policy, ...

    bool very_good() const { return mcc && *mcc > kVeryGoodMcc; }

    static EvalReport from_counts(const ConfusionCounts &c, std::string benchmark = {},
                                  std::map<std::string, std::string> tags = {}) {
        EvalReport r;
        r.counts = c;
        r.accuracy = stagewatch::accuracy(c);
        r.mcc = stagewatch::mcc(c);
        r.benchmark = std::move(benchmark);
        r.tags = std::move(tags);
        return r;
    }

    nlohmann::json to_json() const {
        return {{"benchmark", benchmark},
                {"tags", tags},
                {"tp", counts.tp},
                {"tn", counts.tn},
                {"fp", counts.fp},
                {"fn", counts.fn},
                {"accuracy", accuracy},
                {"mcc", mcc ? nlohmann::json(*mcc) : nlohmann::json("undefined")},
                {"very_good_classifier", very_good()}};
    }
};

inline std::string mcc_text(const std::optional<double> &m) {
    return m ? io::fmt(*m) : std::string("undefined");
}

// CSV rows keyed by benchmark plus the given tag columns.
inline std::string reports_to_csv(std::span<const EvalReport> reports,
                                  std::span<const std::string> tag_columns) {
    std::ostringstream ss;
    ss << "benchmark";
    for (const auto &t : tag_columns)
        ss << ',' << t;
    ss << ",tp,tn,fp,fn,accuracy,mcc\n";
    for (const auto &r : reports) {
        ss << r.benchmark;
        for (const auto &t : tag_columns) {
            auto it = r.tags.find(t);
            ss << ',' << (it == r.tags.end() ? "" : it->second);
        }
        ss << ',' << r.counts.tp << ',' << r.counts.tn << ',' << r.counts.fp << ','
           << r.counts.fn << ',' << io::fmt(r.accuracy) << ',' << mcc_text(r.mcc) << '\n';
    }
    return ss.str();
}

} // namespace stagewatch

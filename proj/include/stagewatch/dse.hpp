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

// Topology sweep: cross-validate every (layers, neurons) point, optionally
// per training-scenario set, then pick the most accurate feasible model.

#include "stagewatch/error.hpp"
#include "stagewatch/io.hpp"
#include "stagewatch/job_pool.hpp"
#include "stagewatch/metrics.hpp"
#include "stagewatch/mlp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stagewatch {

struct ScenarioSet {
    std::string name;
    std::vector<std::string> scenario_ids;

    std::string label() const {
        if (!name.empty())
            return name;
        std::string s;
        for (const auto &id : scenario_ids)
            s += (s.empty() ? "" : "+") + id;
        return s;
    }
};

struct DseResult {
    MlpTopology topology;
    std::string training_scenarios;
    double accuracy = 0.0; // mean over folds
    std::optional<double> mcc; // over pooled fold counts
    std::size_t parameter_count = 0;
    std::size_t cost = 0; // MACs per inference
    std::vector<EvalReport> folds;
};

struct DseGrid {
    std::vector<unsigned> layer_options{1, 2};
    std::vector<unsigned> neuron_options{4, 8, 16, 32, 64, 100};
    std::vector<ScenarioSet> scenario_sets; // empty = one set covering all training data
    std::vector<DseResult> results;

    std::vector<MlpTopology> topologies() const {
        std::vector<MlpTopology> t;
        for (auto l : layer_options)
            for (auto n : neuron_options)
                t.push_back({l, n});
        return t;
    }

    void validate() const {
        if (layer_options.empty() || neuron_options.empty())
            throw ConfigError("dse: grid must have at least one layer and one neuron option");
        for (auto l : layer_options)
            if (l != 1 && l != 2)
                throw ConfigError("dse: layer_options must be a subset of {1, 2}");
        for (auto n : neuron_options)
            if (n == 0)
                throw ConfigError("dse: neuron_options must be positive");
    }
};

struct DseConstraints {
    std::optional<std::size_t> max_params;
    std::optional<std::size_t> max_cost;

    bool admits(const DseResult &r) const {
        return (!max_params || r.parameter_count <= *max_params) &&
               (!max_cost || r.cost <= *max_cost);
    }
};

using TrainingSetProvider = std::function<TrainingSet(const ScenarioSet &)>;

inline DseResult summarize(const MlpTopology &topo, std::string scenarios,
                           std::vector<EvalReport> folds) {
    DseResult r;
    r.topology = topo;
    r.training_scenarios = std::move(scenarios);
    r.parameter_count = topo.parameter_count();
    r.cost = topo.mac_cost();
    ConfusionCounts pooled;
    double acc = 0.0;
    for (const auto &f : folds) {
        acc += f.accuracy;
        pooled += f.counts;
    }
    r.accuracy = folds.empty() ? 0.0 : acc / static_cast<double>(folds.size());
    r.mcc = mcc(pooled);
    r.folds = std::move(folds);
    return r;
}

inline DseGrid explore(const TrainingSetProvider &provider, DseGrid grid, const MlpHyper &hyper,
                       std::size_t k, unsigned workers = 1) {
    grid.validate();
    auto sets = grid.scenario_sets;
    if (sets.empty())
        sets.push_back({"all", {}});
    std::vector<TrainingSet> data;
    for (const auto &s : sets)
        data.push_back(provider(s));
    const auto topos = grid.topologies();
    const std::size_t n = sets.size() * topos.size();
    grid.results = parallel_map<DseResult>(n, workers, [&](std::size_t i) {
        const auto &set = sets[i / topos.size()];
        const auto &topo = topos[i % topos.size()];
        try {
            return summarize(topo, set.label(),
                             k_fold_validate(data[i / topos.size()], topo, k, hyper));
        } catch (const Error &e) {
            throw TrainingError("dse " + topo.label() + " on " + set.label() + ": " + e.what());
        }
    });
    return grid;
}

inline DseGrid explore(const TrainingSet &data, DseGrid grid, const MlpHyper &hyper,
                       std::size_t k, unsigned workers = 1) {
    grid.scenario_sets.clear();
    return explore([&](const ScenarioSet &) { return data; }, std::move(grid), hyper, k, workers);
}

// True when a is preferred over b: higher accuracy, then fewer
// parameters, then fewer layers.
inline bool better(const DseResult &a, const DseResult &b) {
    if (a.accuracy != b.accuracy)
        return a.accuracy > b.accuracy;
    if (a.parameter_count != b.parameter_count)
        return a.parameter_count < b.parameter_count;
    return a.topology.hidden_layers < b.topology.hidden_layers;
}

// Index into grid.results of the chosen configuration.
inline std::size_t select(const DseGrid &grid, const DseConstraints &c = {}) {
    if (grid.results.empty())
        throw ConstraintError("dse: no results to select from");
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < grid.results.size(); ++i) {
        if (!c.admits(grid.results[i]))
            continue;
        if (!best || better(grid.results[i], grid.results[*best]))
            best = i;
    }
    if (best)
        return *best;
    std::size_t min_params = SIZE_MAX, min_cost = SIZE_MAX;
    for (const auto &r : grid.results) {
        min_params = std::min(min_params, r.parameter_count);
        min_cost = std::min(min_cost, r.cost);
    }
    std::string msg = "dse: no feasible configuration;";
    if (c.max_params && min_params > *c.max_params)
        msg += " binding constraint max_params=" + std::to_string(*c.max_params) +
               " (smallest candidate has " + std::to_string(min_params) + ")";
    else if (c.max_cost && min_cost > *c.max_cost)
        msg += " binding constraint max_cost=" + std::to_string(*c.max_cost) +
               " (cheapest candidate costs " + std::to_string(min_cost) + ")";
    else
        msg += " max_params and max_cost are jointly unsatisfiable";
    throw ConstraintError(msg);
}

inline std::string dse_to_csv(const DseGrid &grid, std::optional<std::size_t> selected) {
    std::ostringstream ss;
    ss << "layers,neurons,training_scenarios,accuracy,mcc,params,cost,selected\n";
    for (std::size_t i = 0; i < grid.results.size(); ++i) {
        const auto &r = grid.results[i];
        ss << r.topology.hidden_layers << ',' << r.topology.neurons_per_layer << ','
           << r.training_scenarios << ',' << io::fmt(r.accuracy) << ',' << mcc_text(r.mcc) << ','
           << r.parameter_count << ',' << r.cost << ',' << (selected == i ? 1 : 0) << '\n';
    }
    return ss.str();
}

} // namespace stagewatch

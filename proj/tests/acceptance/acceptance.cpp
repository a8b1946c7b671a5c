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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 5-9 run the full pipelines under --work-dir.

#include "CLI11.hpp"
#include "json.hpp"

#include "stagewatch/config.hpp"
#include "stagewatch/experiment.hpp"
#include "stagewatch/metrics.hpp"
#include "stagewatch/mlp.hpp"
#include "stagewatch/soc_power.hpp"
#include "stagewatch/spcab.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sw = stagewatch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    double budget_s; // runtime bound; 0 = none
    std::function<Outcome()> run;
};

fs::path g_work;
unsigned g_workers = 1;

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(prec);
    ss << v;
    return ss.str();
}

bool rel_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

sw::ExperimentConfig config(const std::string &file, const std::string &out,
                            std::vector<std::string> sets = {}) {
    const fs::path dir = g_work / out;
    fs::remove_all(dir);
    sets.push_back("/output_dir=" + json(dir.string()).dump());
    sets.push_back("/workers=" + std::to_string(g_workers));
    std::optional<json> f;
    if (!file.empty())
        f = sw::load_config_file(fs::path(STAGEWATCH_SOURCE_DIR) / "configs" / file);
    return sw::parse_config(sw::resolve_config(f, sets));
}

// ---- 1 --------------------------------------------------------------------

Outcome sizing_oracles() {
    sw::Rng rng(sw::derive_seed(20261015, "acceptance/sizing"));
    std::size_t bad = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> cur(1 + rng.below(64));
        for (auto &c : cur)
            c = std::exp(rng.uniform(std::log(1e-9), std::log(1e-1)));
        const auto sf = sw::scale_factors(cur);
        long double mx = 0;
        for (double c : cur)
            mx = std::max<long double>(mx, c);
        for (std::size_t k = 0; k < cur.size(); ++k)
            bad += !rel_close(sf[k], static_cast<double>(cur[k] / mx), 1e-12);
    }
    for (int i = 0; i < 1000; ++i) {
        const double w = rng.uniform(0.05, 100.0);
        std::vector<double> f(1 + rng.below(64));
        for (auto &x : f)
            x = 1.0 - rng.uniform();
        const auto out = sw::mirrored_widths(w, f);
        for (std::size_t k = 0; k < f.size(); ++k)
            bad += !rel_close(out[k], static_cast<double>(static_cast<long double>(f[k]) * w), 1e-12);
    }
    for (int i = 0; i < 1000; ++i) {
        const double wn = rng.uniform(0.01, 2.0), mu = rng.uniform(1.0, 4.0);
        const unsigned c = 1 + static_cast<unsigned>(rng.below(32));
        const long double expect = static_cast<long double>(mu) * wn / c;
        bad += !rel_close(sw::collector_width(wn, mu, c), static_cast<double>(expect), 1e-12);
    }
    return {bad == 0, "3000 random inputs, " + std::to_string(bad) + " mismatches"};
}

// ---- 2 --------------------------------------------------------------------

Outcome sampler_invariants() {
    const auto table = sw::build_instruction_table();
    const auto model = sw::default_power_model(table);
    const auto adc = sw::default_adc(model);
    sw::Rng rng(sw::derive_seed(20261015, "acceptance/sampler"));
    std::size_t bad = 0, total = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t cycles = trial == 0 ? 100000 : 7 + rng.below(100000 - 7);
        sw::PowerTrace t(cycles);
        for (std::size_t c = 0; c < cycles; ++c) {
            t[c].cycle = c;
            for (std::size_t s = 0; s < sw::kStageCount; ++s) {
                t[c].stage_power[s] = rng.uniform(0.0, adc.full_scale);
                t[c].instruction[s] = table.rows()[rng.below(table.size())].opcode_id;
            }
        }
        const auto start = sw::stage_at(rng.below(sw::kStageCount));
        const auto fs = sw::acquire(t, adc, start, table);
        bad += fs.size() != cycles;
        for (std::size_t c = 0; c < fs.size(); ++c) {
            const auto s = sw::index_of(fs[c].stage);
            bad += fs[c].cycle != c;
            const double err = std::abs(fs[c].quantized_power - t[c].stage_power[s]);
            worst = std::max(worst, err / adc.step());
            bad += err > adc.step() / 2 * (1 + 1e-12);
        }
        std::array<std::size_t, sw::kStageCount> seen{};
        for (std::size_t c = 0; c < fs.size(); ++c) {
            ++seen[sw::index_of(fs[c].stage)];
            if (c >= sw::kStageCount)
                --seen[sw::index_of(fs[c - sw::kStageCount].stage)];
            if (c + 1 >= sw::kStageCount)
                for (auto n : seen)
                    bad += n != 1;
        }
        total += cycles;
    }
    return {bad == 0, std::to_string(total) + " samples over 12 traces, max error " + fmt(worst, 6) +
                          " steps, " + std::to_string(bad) + " violations"};
}

// ---- 3 --------------------------------------------------------------------

Outcome gradient_check() {
    sw::Rng rng(sw::derive_seed(20261015, "acceptance/gradient"));
    constexpr double eps = 1e-5;
    double worst = 0.0;
    for (int net = 0; net < 50; ++net) {
        const sw::MlpTopology topo{1 + static_cast<unsigned>(rng.below(2)),
                                   1 + static_cast<unsigned>(rng.below(3))};
        auto m = sw::MlpModel::initialize(topo, {}, rng.next_u64());
        auto p = m.flatten();
        for (auto &v : p)
            v = rng.uniform(-1.5, 1.5);
        m.assign(p);
        const std::size_t n = 1 + rng.below(4);
        std::vector<sw::InputVector> xs(n);
        auto labels = std::make_unique<bool[]>(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto &v : xs[i])
                v = rng.uniform(-2, 2);
            labels[i] = rng.bernoulli(0.5);
        }
        const std::span<const bool> ls(labels.get(), n);
        const double cw = rng.uniform(0.5, 3.0);
        const auto g = sw::loss_and_gradient(m, xs, ls, cw).gradient;
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto q = p;
            q[k] = p[k] + eps;
            m.assign(q);
            const double up = sw::loss_and_gradient(m, xs, ls, cw).loss;
            q[k] = p[k] - eps;
            m.assign(q);
            const double down = sw::loss_and_gradient(m, xs, ls, cw).loss;
            const double num = (up - down) / (2 * eps);
            worst = std::max(worst, std::abs(g[k] - num) /
                                        std::max(std::abs(g[k]) + std::abs(num), 1e-7));
        }
    }
    std::ostringstream ss;
    ss << "50 networks, worst relative error " << worst;
    return {worst < 1e-4, ss.str()};
}

// ---- 4 --------------------------------------------------------------------

Outcome metrics_oracles() {
    using C = sw::ConfusionCounts;
    bool ok = true;
    ok &= sw::accuracy(C{1, 1, 0, 0}) == 1.0;
    ok &= sw::accuracy(C{0, 0, 1, 1}) == 0.0;
    ok &= sw::accuracy(C{990, 98010, 990, 10}) == 0.99;
    ok &= sw::mcc(C{5, 9, 0, 0}) == 1.0;
    ok &= sw::mcc(C{0, 0, 4, 6}) == -1.0;
    ok &= sw::mcc(C{500, 49500, 49500, 500}) == 0.0;
    ok &= !sw::mcc(C{0, 100, 0, 0}).has_value();
    ok &= !sw::mcc(C{10, 0, 0, 0}).has_value();
    ok &= !sw::mcc(C{0, 90, 0, 10}).has_value();

    bool p[100], t[100];
    for (int i = 0; i < 100; ++i)
        p[i] = t[i] = i < 10;
    ok &= sw::tally(std::span<const bool>(p), std::span<const bool>(t)) == C{10, 90, 0, 0};

    sw::Rng rng(sw::derive_seed(20261015, "acceptance/metrics"));
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(2000), cut = rng.below(n + 1);
        auto pr = std::make_unique<bool[]>(n), tr = std::make_unique<bool[]>(n);
        for (std::size_t i = 0; i < n; ++i) {
            pr[i] = rng.bernoulli(0.3);
            tr[i] = rng.bernoulli(0.2);
        }
        const auto whole = sw::tally(std::span<const bool>(pr.get(), n), std::span<const bool>(tr.get(), n));
        const auto a = sw::tally(std::span<const bool>(pr.get(), cut), std::span<const bool>(tr.get(), cut));
        const auto b = sw::tally(std::span<const bool>(pr.get() + cut, n - cut),
                                 std::span<const bool>(tr.get() + cut, n - cut));
        ok &= whole == a + b && whole.total() == n;
    }
    return {ok, "tabulated cases, undefined MCC and 100 split-merge tallies"};
}

// ---- 5 --------------------------------------------------------------------

sw::TrainingSet training_data(const sw::ExperimentConfig &cfg) {
    const auto manifest = sw::load_manifest(cfg);
    std::vector<sw::SampledFeature> all;
    for (const auto &id : cfg.training.scenarios)
        for (const auto &e : manifest.at("files"))
            if (e.at("split") == "train" && e.at("scenario") == id) {
                const auto f = sw::load_dataset_file(cfg, e);
                all.insert(all.end(), f.begin(), f.end());
            }
    return sw::TrainingSet::from_features(std::move(all));
}

struct Means {
    double accuracy = 0.0, mcc = 0.0;
    bool mcc_defined = true;
};

Means means(const std::vector<sw::CellResult> &rs) {
    Means m;
    for (const auto &r : rs) {
        m.accuracy += r.report.accuracy;
        if (r.report.mcc)
            m.mcc += *r.report.mcc;
        else
            m.mcc_defined = false;
    }
    m.accuracy /= static_cast<double>(rs.size());
    m.mcc /= static_cast<double>(rs.size());
    return m;
}

Outcome topology_exploration() {
    const auto cfg = config("topology_dse.json", "topology_dse");
    sw::cmd_gen(cfg);
    const auto trained = sw::cmd_train(cfg);
    const auto chosen = trained.grid.results[trained.selected].topology;
    const auto selected = means(sw::cmd_eval(cfg));

    // The (1, 4) baseline sees the same training data and hyperparameters.
    auto hyper = cfg.hyper;
    hyper.seed = sw::derive_seed(cfg.hyper.seed, "final");
    const auto small = sw::train(training_data(cfg), {1, 4}, hyper);
    const auto manifest = sw::load_manifest(cfg);
    std::vector<sw::CellResult> small_rs;
    for (const auto &e : manifest.at("files"))
        if (e.at("split") == "eval") {
            const auto f = sw::load_dataset_file(cfg, e);
            small_rs.push_back(sw::score_cell(small, f, e.at("benchmark"), {}));
        }
    const auto baseline = means(small_rs);

    const bool ok = chosen == sw::MlpTopology{2, 8} && selected.accuracy >= 0.95 &&
                    selected.mcc_defined && selected.mcc >= 0.6 &&
                    selected.accuracy > baseline.accuracy;
    return {ok, "selected " + chosen.label() + ", accuracy " + fmt(selected.accuracy) + ", MCC " +
                    (selected.mcc_defined ? fmt(selected.mcc) : "undefined") +
                    "; MLP(1,4) accuracy " + fmt(baseline.accuracy) + ", MCC " +
                    (baseline.mcc_defined ? fmt(baseline.mcc) : "undefined")};
}

// ---- 6 --------------------------------------------------------------------

Outcome pv_sweep() {
    const auto cfg = config("pv_sweep.json", "pv_sweep");
    sw::cmd_gen(cfg);
    sw::cmd_train(cfg);
    const auto s = sw::cmd_sweep(cfg, sw::SweepAxis::pv_range);
    const auto &base = s.row({{"pv_range", "0"}});
    const auto &top = s.row({{"pv_range", "0.1"}});
    std::ostringstream ss;
    ss << "accuracy at 0% " << fmt(base.mean_accuracy) << ", at 10% " << fmt(top.mean_accuracy)
       << ", drop " << fmt(top.drop_pp, 3) << " pp; drops by range:";
    for (const auto &r : s.summary)
        ss << ' ' << fmt(r.drop_pp, 2);
    return {top.drop_pp <= 1.5, ss.str()};
}

// ---- 7 --------------------------------------------------------------------

Outcome aging_sweep() {
    const auto cfg = config("aging_sweep.json", "aging_sweep");
    sw::cmd_gen(cfg);
    sw::cmd_train(cfg);
    const auto s = sw::cmd_sweep(cfg, sw::SweepAxis::aging);
    auto drop = [&](const char *y, const char *p) {
        return s.row({{"aging_year", y}, {"aging_policy", p}}).drop_pp;
    };
    bool ok = drop("Y10", "none") <= 10.0;
    std::ostringstream ss;
    ss << "Y10 none drop " << fmt(drop("Y10", "none"), 3) << " pp";
    for (const char *y : {"Y5", "Y10"}) {
        const double none = drop(y, "none"), fc = drop(y, "fast_core_age_first"),
                     bal = drop(y, "balanced");
        ok &= fc < none && bal < none;
        ss << "; " << y << " none/fast_core_age_first/balanced " << fmt(none, 2) << '/'
           << fmt(fc, 2) << '/' << fmt(bal, 2);
    }
    return {ok, ss.str()};
}

// ---- 8 --------------------------------------------------------------------

Outcome separability() {
    const auto cfg = config("", "separability");
    bool ok = true;
    std::size_t checked = 0;
    std::ostringstream ss;
    for (const auto &name : cfg.trojans.names(sw::Split::eval)) {
        const auto &t = cfg.trojans.at(name);
        if (std::abs(t.dominant().delta) < 0.15)
            continue;
        const auto r = sw::pv_separability(cfg, t, 0.10, 100);
        ok &= r.rate() >= 0.9;
        ++checked;
        ss << (checked > 1 ? ", " : "") << name << ' ' << fmt(r.rate(), 2);
    }
    ok &= checked > 0;
    return {ok, std::to_string(checked) + " Trojans: " + ss.str()};
}

// ---- 9 --------------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path &root) {
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) {
            auto bytes = sw::io::read_file(e.path());
            const auto rel = fs::relative(e.path(), root).generic_string();
            if (rel == "data/manifest.json") {
                auto j = json::parse(bytes);
                j.erase("metadata");
                bytes = j.dump();
            }
            out[rel] = std::move(bytes);
        }
    return out;
}

Outcome determinism() {
    std::vector<std::map<std::string, std::string>> runs;
    for (const char *name : {"determinism_a", "determinism_b"}) {
        const auto cfg = config("smoke.json", name);
        sw::cmd_gen(cfg);
        sw::cmd_train(cfg);
        sw::cmd_eval(cfg);
        sw::cmd_sweep(cfg, sw::SweepAxis::pv_range);
        runs.push_back(tree(cfg.output_dir));
    }
    std::size_t differing = 0;
    for (const auto &[k, v] : runs[0])
        differing += !runs[1].count(k) || runs[1].at(k) != v;
    differing += runs[1].size() - std::min(runs[1].size(), runs[0].size());
    return {differing == 0 && !runs[0].empty(),
            std::to_string(runs[0].size()) + " files compared, " + std::to_string(differing) +
                " differ"};
}

// ---- 10 -------------------------------------------------------------------

Outcome power_ports() {
    const auto stages = sw::leon3_stage_profile();
    unsigned sum = 0;
    for (const auto &s : stages)
        sum += s.component_count;
    const auto report = sw::sizing_report(stages, sw::default_power_model(sw::build_instruction_table()), {});
    const auto &ports = report.at("power_ports");
    const bool ok = sw::power_port_count(stages) == sum && ports.at("naive_multi_port") == sum &&
                    ports.at("single_port") == 1 && ports.at("reduction_ratio") == double(sum);
    return {ok, "N_p = " + std::to_string(sw::power_port_count(stages)) + " (component sum " +
                    std::to_string(sum) + "), single-port design uses " +
                    ports.at("single_port").dump() + ", ratio " + ports.at("reduction_ratio").dump()};
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"stagewatch acceptance suite"};
    std::string work = "acceptance-work";
    std::vector<int> only;
    app.add_option("--work-dir", work, "Scratch directory for pipeline outputs");
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("-j,--workers", g_workers, "Worker threads for pipeline criteria");
    CLI11_PARSE(app, argc, argv);
    g_work = work;
    fs::create_directories(g_work);

    const std::vector<Criterion> criteria{
        {1, "sizing-math oracles", 1, sizing_oracles},
        {2, "sampler invariants", 5, sampler_invariants},
        {3, "gradient check", 10, gradient_check},
        {4, "metrics oracles", 1, metrics_oracles},
        {5, "detection protocol analog", 600, topology_exploration},
        {6, "PV-range sweep analog", 1800, pv_sweep},
        {7, "aging sweep analog", 1800, aging_sweep},
        {8, "PV separability", 300, separability},
        {9, "determinism", 0, determinism},
        {10, "power-port arithmetic", 0, power_ports},
    };

    int failures = 0;
    for (const auto &c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end())
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            o.pass = false;
            o.detail += "; over the " + fmt(c.budget_s, 0) + " s budget";
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title
                  << "): " << o.detail << " [" << fmt(secs, 1) << " s]" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}

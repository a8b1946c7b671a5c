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

// A small feed-forward binary classifier over (power, instruction,
// category) samples. Sigmoid hidden layers, a two-way softmax output and
// class-weighted cross-entropy, trained with seeded mini-batch Adam or
// plain gradient descent. Everything is deterministic per seed.
//
// Input encoding (7 values): z-scored power, z-scored opcode id, one-hot
// category. The pipeline stage is deliberately not an input.

#include "json.hpp"

#include "stagewatch/error.hpp"
#include "stagewatch/metrics.hpp"
#include "stagewatch/random.hpp"
#include "stagewatch/spcab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <tuple>
#include <span>
#include <string>
#include <vector>

namespace stagewatch {

inline constexpr std::size_t kInputWidth = 2 + kCategoryCount;
inline constexpr std::size_t kOutputWidth = 2; // un-intruded, intruded

using InputVector = std::array<double, kInputWidth>;

struct MlpTopology {
    unsigned hidden_layers = 2;
    unsigned neurons_per_layer = 8;

    void validate() const {
        if (hidden_layers < 1 || hidden_layers > 2)
            throw ConfigError("topology: hidden_layers must be 1 or 2");
        if (neurons_per_layer == 0)
            throw ConfigError("topology: neurons_per_layer must be >= 1");
    }

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> s{kInputWidth};
        for (unsigned i = 0; i < hidden_layers; ++i)
            s.push_back(neurons_per_layer);
        s.push_back(kOutputWidth);
        return s;
    }

    // Weights plus biases.
    std::size_t parameter_count() const {
        const auto s = layer_sizes();
        std::size_t n = 0;
        for (std::size_t i = 1; i < s.size(); ++i)
            n += s[i - 1] * s[i] + s[i];
        return n;
    }

    // Multiply-accumulates per inference.
    std::size_t mac_cost() const {
        const auto s = layer_sizes();
        std::size_t n = 0;
        for (std::size_t i = 1; i < s.size(); ++i)
            n += s[i - 1] * s[i];
        return n;
    }

    std::string label() const {
        return "MLP(" + std::to_string(hidden_layers) + "," + std::to_string(neurons_per_layer) + ")";
    }

    bool operator==(const MlpTopology &) const = default;
};

struct FeatureNormalization {
    double power_mean = 0.0;
    double power_scale = 1.0;
    double opcode_mean = 0.0;
    double opcode_scale = 1.0;

    static FeatureNormalization fit(std::span<const SampledFeature> fs) {
        if (fs.empty())
            throw TrainingError("cannot fit normalization on an empty set");
        auto moments = [&](auto get) {
            long double sum = 0, sq = 0;
            for (const auto &f : fs)
                sum += get(f);
            const long double mean = sum / fs.size();
            for (const auto &f : fs) {
                const long double d = get(f) - mean;
                sq += d * d;
            }
            double sd = static_cast<double>(std::sqrt(sq / fs.size()));
            if (!(sd > 0.0))
                sd = 1.0;
            return std::pair<double, double>{static_cast<double>(mean), sd};
        };
        FeatureNormalization n;
        std::tie(n.power_mean, n.power_scale) =
            moments([](const SampledFeature &f) { return f.quantized_power; });
        std::tie(n.opcode_mean, n.opcode_scale) =
            moments([](const SampledFeature &f) { return static_cast<double>(f.opcode_id); });
        return n;
    }

    bool operator==(const FeatureNormalization &) const = default;
};

inline InputVector encode(const SampledFeature &f, const FeatureNormalization &norm) {
    InputVector x{};
    x[0] = (f.quantized_power - norm.power_mean) / norm.power_scale;
    x[1] = (static_cast<double>(f.opcode_id) - norm.opcode_mean) / norm.opcode_scale;
    x[2 + index_of(f.category)] = 1.0;
    return x;
}

enum class Optimizer { gd, adam };

NLOHMANN_JSON_SERIALIZE_ENUM(Optimizer, {{Optimizer::gd, "gd"}, {Optimizer::adam, "adam"}})

struct MlpHyper {
    Seed seed = 1;
    unsigned epochs = 40;
    double learning_rate = 0.01;
    // Weight on intruded samples. nullopt selects the negative/positive ratio.
    std::optional<double> class_weight = 2.0;
    Optimizer optimizer = Optimizer::adam;
    std::size_t batch_size = 256; // 0 = full batch
    double decision_threshold = 0.5;
};

struct TrainMeta {
    Seed seed = 0;
    unsigned epochs = 0;
    double learning_rate = 0.0;
    double class_weight = 1.0;
    Optimizer optimizer = Optimizer::adam;
    std::size_t batch_size = 0;
    std::vector<double> loss_trace; // epoch-mean weighted loss
};

struct DenseLayer {
    std::size_t in = 0, out = 0;
    std::vector<double> weights; // out x in, row-major
    std::vector<double> biases;
};

struct Classification {
    bool intruded = false;
    double score = 0.0; // intruded-class probability
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::array<double, kOutputWidth> softmax2(double z0, double z1) {
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

class MlpModel {
  public:
    static constexpr int kFormatVersion = 1;

    MlpTopology topology;
    std::vector<DenseLayer> layers;
    FeatureNormalization normalization;
    double decision_threshold = 0.5;
    TrainMeta meta;

    // Glorot-uniform weights in +/- sqrt(6 / (fan_in + fan_out)), zero biases.
    static MlpModel initialize(const MlpTopology &topo, const FeatureNormalization &norm,
                               Seed seed) {
        topo.validate();
        MlpModel m;
        m.topology = topo;
        m.normalization = norm;
        Rng rng(derive_seed(seed, "mlp/init"));
        const auto sizes = topo.layer_sizes();
        for (std::size_t i = 1; i < sizes.size(); ++i) {
            DenseLayer l;
            l.in = sizes[i - 1];
            l.out = sizes[i];
            const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
            l.weights.resize(l.in * l.out);
            for (auto &w : l.weights)
                w = rng.uniform(-limit, limit);
            l.biases.assign(l.out, 0.0);
            m.layers.push_back(std::move(l));
        }
        return m;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto &l : layers)
            n += l.weights.size() + l.biases.size();
        return n;
    }

    // Layer by layer: weights then biases.
    std::vector<double> flatten() const {
        std::vector<double> p;
        p.reserve(parameter_count());
        for (const auto &l : layers) {
            p.insert(p.end(), l.weights.begin(), l.weights.end());
            p.insert(p.end(), l.biases.begin(), l.biases.end());
        }
        return p;
    }

    void assign(std::span<const double> p) {
        if (p.size() != parameter_count())
            throw DomainError("assign: parameter count mismatch");
        std::size_t k = 0;
        for (auto &l : layers) {
            for (auto &w : l.weights)
                w = p[k++];
            for (auto &b : l.biases)
                b = p[k++];
        }
    }

    // Output-layer pre-activations.
    std::array<double, kOutputWidth> logits(const InputVector &x) const {
        std::vector<double> a(x.begin(), x.end()), z;
        for (std::size_t li = 0; li < layers.size(); ++li) {
            const auto &l = layers[li];
            z.assign(l.out, 0.0);
            for (std::size_t o = 0; o < l.out; ++o) {
                double acc = l.biases[o];
                const double *w = &l.weights[o * l.in];
                for (std::size_t i = 0; i < l.in; ++i)
                    acc += w[i] * a[i];
                z[o] = li + 1 < layers.size() ? sigmoid(acc) : acc;
            }
            a.swap(z);
        }
        return {a[0], a[1]};
    }

    std::array<double, kOutputWidth> probabilities(const InputVector &x) const {
        const auto z = logits(x);
        return softmax2(z[0], z[1]);
    }

    Classification classify(const InputVector &x) const {
        const double score = probabilities(x)[1];
        return {score >= decision_threshold, score};
    }

    Classification classify(const SampledFeature &f) const {
        return classify(encode(f, normalization));
    }

    nlohmann::json to_json() const {
        nlohmann::json ls = nlohmann::json::array();
        for (const auto &l : layers)
            ls.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"biases", l.biases}});
        return {
            {"format_version", kFormatVersion},
            {"topology",
             {{"hidden_layers", topology.hidden_layers},
              {"neurons_per_layer", topology.neurons_per_layer},
              {"inputs", kInputWidth},
              {"outputs", kOutputWidth},
              {"input_encoding", "zscore_power,zscore_opcode,onehot_category5"},
              {"output_labels", {"un_intruded", "intruded"}}}},
            {"normalization",
             {{"power_mean", normalization.power_mean},
              {"power_scale", normalization.power_scale},
              {"opcode_mean", normalization.opcode_mean},
              {"opcode_scale", normalization.opcode_scale}}},
            {"decision_threshold", decision_threshold},
            {"layers", ls},
            {"train_meta",
             {{"seed", meta.seed},
              {"epochs", meta.epochs},
              {"learning_rate", meta.learning_rate},
              {"class_weight", meta.class_weight},
              {"optimizer", meta.optimizer},
              {"batch_size", meta.batch_size},
              {"loss_trace", meta.loss_trace}}},
        };
    }

    static MlpModel from_json(const nlohmann::json &j) {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw CompatibilityError("model: unsupported format_version " +
                                     j.at("format_version").dump());
        MlpModel m;
        const auto &t = j.at("topology");
        m.topology.hidden_layers = t.at("hidden_layers").get<unsigned>();
        m.topology.neurons_per_layer = t.at("neurons_per_layer").get<unsigned>();
        m.topology.validate();
        if (t.at("inputs").get<std::size_t>() != kInputWidth ||
            t.at("outputs").get<std::size_t>() != kOutputWidth)
            throw CompatibilityError("model: input/output width mismatch");
        const auto &n = j.at("normalization");
        m.normalization = {n.at("power_mean").get<double>(), n.at("power_scale").get<double>(),
                           n.at("opcode_mean").get<double>(), n.at("opcode_scale").get<double>()};
        if (!(m.normalization.power_scale > 0.0) || !(m.normalization.opcode_scale > 0.0))
            throw DataError("model: normalization scale must be > 0");
        m.decision_threshold = j.at("decision_threshold").get<double>();
        const auto sizes = m.topology.layer_sizes();
        const auto &ls = j.at("layers");
        if (ls.size() + 1 != sizes.size())
            throw DataError("model: layer count does not match topology");
        for (std::size_t i = 0; i < ls.size(); ++i) {
            DenseLayer l;
            l.in = ls[i].at("in").get<std::size_t>();
            l.out = ls[i].at("out").get<std::size_t>();
            l.weights = ls[i].at("weights").get<std::vector<double>>();
            l.biases = ls[i].at("biases").get<std::vector<double>>();
            if (l.in != sizes[i] || l.out != sizes[i + 1] || l.weights.size() != l.in * l.out ||
                l.biases.size() != l.out)
                throw DataError("model: layer " + std::to_string(i) + " shape mismatch");
            m.layers.push_back(std::move(l));
        }
        const auto &meta = j.at("train_meta");
        m.meta.seed = meta.at("seed").get<Seed>();
        m.meta.epochs = meta.at("epochs").get<unsigned>();
        m.meta.learning_rate = meta.at("learning_rate").get<double>();
        m.meta.class_weight = meta.at("class_weight").get<double>();
        m.meta.optimizer = meta.at("optimizer").get<Optimizer>();
        m.meta.batch_size = meta.at("batch_size").get<std::size_t>();
        m.meta.loss_trace = meta.at("loss_trace").get<std::vector<double>>();
        return m;
    }
};

// Scratch space for forward/backward passes over one sample.
class Backprop {
  public:
    explicit Backprop(const MlpModel &m) : model_(m) {
        acts_.resize(m.layers.size() + 1);
        deltas_.resize(m.layers.size());
        acts_[0].resize(kInputWidth);
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            acts_[i + 1].resize(m.layers[i].out);
            deltas_[i].resize(m.layers[i].out);
        }
    }

    // Accumulates weight * d(-log p_label)/d(params) into grad (flattened
    // layout) and returns weight * (-log p_label).
    double accumulate(const InputVector &x, bool label, double weight, std::span<double> grad) {
        const auto &layers = model_.layers;
        std::copy(x.begin(), x.end(), acts_[0].begin());
        for (std::size_t li = 0; li < layers.size(); ++li) {
            const auto &l = layers[li];
            const auto &a = acts_[li];
            auto &z = acts_[li + 1];
            for (std::size_t o = 0; o < l.out; ++o) {
                double acc = l.biases[o];
                const double *w = &l.weights[o * l.in];
                for (std::size_t i = 0; i < l.in; ++i)
                    acc += w[i] * a[i];
                z[o] = li + 1 < layers.size() ? sigmoid(acc) : acc;
            }
        }
        auto &out = acts_.back();
        const auto p = softmax2(out[0], out[1]);
        const std::size_t y = label ? 1 : 0;
        const double loss = -weight * std::log(std::max(p[y], 1e-300));

        auto &d_last = deltas_.back();
        d_last[0] = weight * (p[0] - (y == 0 ? 1.0 : 0.0));
        d_last[1] = weight * (p[1] - (y == 1 ? 1.0 : 0.0));

        // Offsets of each layer's block in the flattened gradient.
        std::size_t offset = grad.size();
        for (std::size_t li = layers.size(); li-- > 0;) {
            const auto &l = layers[li];
            offset -= l.weights.size() + l.biases.size();
            const auto &a = acts_[li];
            const auto &d = deltas_[li];
            double *gw = &grad[offset];
            double *gb = gw + l.weights.size();
            for (std::size_t o = 0; o < l.out; ++o) {
                const double dv = d[o];
                double *row = gw + o * l.in;
                for (std::size_t i = 0; i < l.in; ++i)
                    row[i] += dv * a[i];
                gb[o] += dv;
            }
            if (li > 0) {
                auto &dp = deltas_[li - 1];
                for (std::size_t i = 0; i < l.in; ++i) {
                    double acc = 0.0;
                    for (std::size_t o = 0; o < l.out; ++o)
                        acc += l.weights[o * l.in + i] * d[o];
                    dp[i] = acc * a[i] * (1.0 - a[i]);
                }
            }
        }
        return loss;
    }

  private:
    const MlpModel &model_;
    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> deltas_;
};

// Weighted mean cross-entropy and its gradient over a sample set.
struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

inline LossAndGradient loss_and_gradient(const MlpModel &m, std::span<const InputVector> xs,
                                         std::span<const bool> labels, double class_weight) {
    LossAndGradient r;
    r.gradient.assign(m.parameter_count(), 0.0);
    Backprop bp(m);
    double wsum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double w = labels[i] ? class_weight : 1.0;
        r.loss += bp.accumulate(xs[i], labels[i], w, r.gradient);
        wsum += w;
    }
    if (wsum > 0.0) {
        r.loss /= wsum;
        for (auto &g : r.gradient)
            g /= wsum;
    }
    return r;
}

struct TrainingSet {
    std::vector<SampledFeature> features;
    std::vector<bool> labels;
    std::string split_tag = "train";
    nlohmann::json provenance = nlohmann::json::object();

    // Labels come from the ground-truth marks, which never reach encode().
    static TrainingSet from_features(std::vector<SampledFeature> fs, std::string tag = "train") {
        TrainingSet t;
        t.labels.reserve(fs.size());
        for (const auto &f : fs)
            t.labels.push_back(f.ground_truth);
        t.features = std::move(fs);
        t.split_tag = std::move(tag);
        return t;
    }

    std::size_t size() const { return features.size(); }

    std::size_t positives() const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    }

    TrainingSet subset(std::span<const std::size_t> idx) const {
        TrainingSet t;
        t.split_tag = split_tag;
        t.provenance = provenance;
        t.features.reserve(idx.size());
        t.labels.reserve(idx.size());
        for (auto i : idx) {
            t.features.push_back(features[i]);
            t.labels.push_back(labels[i]);
        }
        return t;
    }
};

inline MlpModel train(const TrainingSet &data, const MlpTopology &topology,
                      const MlpHyper &hyper) {
    topology.validate();
    if (data.features.size() != data.labels.size())
        throw TrainingError("training set: features and labels differ in length");
    const std::size_t n = data.size();
    const std::size_t pos = data.positives();
    if (pos == 0 || pos == n)
        throw TrainingError("training set must contain both classes (" + std::to_string(pos) +
                            " intruded of " + std::to_string(n) + ")");
    if (!(hyper.learning_rate > 0.0))
        throw ConfigError("learning_rate must be > 0");

    const double cw = hyper.class_weight ? *hyper.class_weight
                                         : static_cast<double>(n - pos) / static_cast<double>(pos);
    if (!(cw > 0.0))
        throw ConfigError("class_weight must be > 0");

    auto model = MlpModel::initialize(topology, FeatureNormalization::fit(data.features), hyper.seed);
    model.decision_threshold = hyper.decision_threshold;
    model.meta = {hyper.seed, hyper.epochs, hyper.learning_rate, cw, hyper.optimizer,
                  hyper.batch_size, {}};

    std::vector<InputVector> xs;
    xs.reserve(n);
    for (const auto &f : data.features)
        xs.push_back(encode(f, model.normalization));

    const std::size_t batch = hyper.batch_size == 0 ? n : std::min(hyper.batch_size, n);
    const std::size_t np = model.parameter_count();
    std::vector<double> params = model.flatten();
    std::vector<double> grad(np), m1(np, 0.0), m2(np, 0.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t step = 0;

    for (unsigned epoch = 0; epoch < hyper.epochs; ++epoch) {
        if (batch < n) {
            Rng rng(derive_seed(hyper.seed, "mlp/shuffle", epoch));
            rng.shuffle(order.begin(), order.end());
        }
        double epoch_loss = 0.0, epoch_weight = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            Backprop bp(model);
            double wsum = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto i = order[k];
                const double w = data.labels[i] ? cw : 1.0;
                epoch_loss += bp.accumulate(xs[i], data.labels[i], w, grad);
                wsum += w;
            }
            epoch_weight += wsum;
            ++step;
            if (hyper.optimizer == Optimizer::adam) {
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                for (std::size_t p = 0; p < np; ++p) {
                    const double g = grad[p] / wsum;
                    m1[p] = beta1 * m1[p] + (1.0 - beta1) * g;
                    m2[p] = beta2 * m2[p] + (1.0 - beta2) * g * g;
                    params[p] -= hyper.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + eps);
                }
            } else {
                for (std::size_t p = 0; p < np; ++p)
                    params[p] -= hyper.learning_rate * grad[p] / wsum;
            }
            model.assign(params);
        }
        model.meta.loss_trace.push_back(epoch_loss / epoch_weight);
    }
    return model;
}

inline std::vector<std::vector<std::size_t>> k_fold_partition(std::size_t n, std::size_t k,
                                                              Seed seed) {
    if (k < 2)
        throw ConfigError("k-fold: k must be >= 2");
    if (k > n)
        throw ConfigError("k-fold: k = " + std::to_string(k) + " exceeds " + std::to_string(n) +
                          " samples");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, "kfold/partition"));
    rng.shuffle(idx.begin(), idx.end());
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(idx.begin() + pos, idx.begin() + pos + size);
        std::sort(folds[f].begin(), folds[f].end());
        pos += size;
    }
    return folds;
}

inline ConfusionCounts evaluate(const MlpModel &model, const TrainingSet &data) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool pred = model.classify(data.features[i]).intruded;
        if (data.labels[i])
            pred ? ++c.tp : ++c.fn;
        else
            pred ? ++c.fp : ++c.tn;
    }
    return c;
}

inline std::vector<EvalReport> k_fold_validate(const TrainingSet &data, const MlpTopology &topology,
                                               std::size_t k, const MlpHyper &hyper) {
    const auto folds = k_fold_partition(data.size(), k, hyper.seed);
    std::vector<EvalReport> out;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < k; ++g)
            if (g != f)
                train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        std::sort(train_idx.begin(), train_idx.end());
        auto h = hyper;
        h.seed = derive_seed(hyper.seed, "kfold/train", f);
        const auto model = train(data.subset(train_idx), topology, h);
        out.push_back(EvalReport::from_counts(evaluate(model, data.subset(folds[f])), "",
                                              {{"fold", std::to_string(f)},
                                               {"topology", topology.label()}}));
    }
    return out;
}

} // namespace stagewatch

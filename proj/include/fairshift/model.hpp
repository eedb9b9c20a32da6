#pragma once
// Linear scorer with logistic training. Scores are raw logits w.x + b; a
// prediction is positive iff score > threshold (strict), threshold 0 being
// probability one-half.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairshift/core.hpp"
#include "fairshift/dataset.hpp"

namespace fairshift {

inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
    double threshold = 0.0;
    std::vector<std::string> feature_names;

    double raw(const double* x) const {
        double z = bias;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
        return z;
    }

    std::vector<double> score(const Matrix& features) const {
        if (features.cols() != weights.size())
            throw ArgumentError("model expects " + std::to_string(weights.size()) +
                                " features, got " + std::to_string(features.cols()));
        std::vector<double> s(features.rows());
        for (std::size_t i = 0; i < features.rows(); ++i) s[i] = raw(features.row(i));
        return s;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["weights"] = weights;
        j["bias"] = bias;
        j["threshold"] = threshold;
        j["feature_names"] = feature_names;
        return j;
    }

    static LinearModel from_json(const nlohmann::json& j) {
        LinearModel m;
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.threshold = j.at("threshold").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        if (m.feature_names.size() != m.weights.size())
            throw DataError("model JSON: weight/feature_name count mismatch");
        return m;
    }
};

inline std::vector<int> predict(const std::vector<double>& scores, double threshold) {
    std::vector<int> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] > threshold ? 1 : 0;
    return preds;
}

inline std::vector<int> predict(const LinearModel& model, const Matrix& features) {
    return predict(model.score(features), model.threshold);
}

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw ArgumentError("accuracy: size mismatch or empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double l2 = 1e-4;  // applied to weights only, never the bias
    std::uint64_t seed = 1;
};

// Mean cross-entropy plus an L2 ridge on the weights. Exposed for the
// constrained trainer, which reuses it as the accuracy term.
inline double logistic_loss(const LinearModel& model, const Matrix& x,
                            const std::vector<int>& y, double l2) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double z = model.raw(x.row(i));
        // log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, stably
        const double m = y[i] ? z : -z;
        loss += m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
    loss /= static_cast<double>(x.rows());
    double w2 = 0.0;
    for (double w : model.weights) w2 += w * w;
    return loss + 0.5 * l2 * w2;
}

// Minibatch SGD from a zero start. The sample order depends only on the
// seed, so results are reproducible across platforms.
inline LinearModel train_base(const Dataset& data, const TrainConfig& cfg) {
    if (data.features.empty()) throw ArgumentError("train_base: dataset is not encoded");
    if (data.features.rows() != data.labels.size())
        throw ArgumentError("train_base: feature/label count mismatch");

    const std::size_t n = data.features.rows();
    const std::size_t d = data.features.cols();
    LinearModel model;
    model.weights.assign(d, 0.0);
    model.feature_names = data.feature_names;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> grad(d);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, n);
            const double inv = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double grad_bias = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                const double* x = data.features.row(i);
                const double err = sigmoid(model.raw(x)) - data.labels[i];
                for (std::size_t j = 0; j < d; ++j) grad[j] += err * x[j];
                grad_bias += err;
            }
            for (std::size_t j = 0; j < d; ++j)
                model.weights[j] -= cfg.learning_rate * (grad[j] * inv + cfg.l2 * model.weights[j]);
            model.bias -= cfg.learning_rate * grad_bias * inv;
        }
        const double loss = logistic_loss(model, data.features, data.labels, cfg.l2);
        if (!std::isfinite(loss)) throw DivergenceError("training loss is not finite", epoch);
    }
    return model;
}

}  // namespace fairshift

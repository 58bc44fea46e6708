#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "por/encoder.hpp"
#include "por/error.hpp"
#include "por/matrix.hpp"
#include "por/rng.hpp"

namespace por {

// Probabilities are floored at this value before taking logs; keeps losses
// finite without renormalizing the distribution.
inline constexpr double kProbFloor = 1e-12;

// Classifier head over pooled patch encodings. The standardization vectors
// are frozen statistics, not trainable parameters, but they travel with the
// weights so a weight snapshot alone reproduces the model's outputs.
struct ClassifierWeights {
    std::vector<double> norm_mean;
    std::vector<double> norm_scale;
    Matrix w_hidden;  // input_dim x hidden_dim
    std::vector<double> b_hidden;
    Matrix w_out;  // hidden_dim x num_classes
    std::vector<double> b_out;

    std::size_t input_dim() const { return w_hidden.rows; }
    std::size_t hidden_dim() const { return w_hidden.cols; }
    std::size_t num_classes() const { return w_out.cols; }

    bool operator==(const ClassifierWeights&) const = default;

    void check_consistent() const {
        if (w_hidden.rows == 0 || w_hidden.cols == 0 || w_out.rows == 0 || w_out.cols == 0) {
            throw ShapeError("classifier: empty weight matrix");
        }
        if (norm_mean.size() != w_hidden.rows || norm_scale.size() != w_hidden.rows) {
            throw ShapeError("classifier: standardization length does not match input width");
        }
        if (b_hidden.size() != w_hidden.cols) {
            throw ShapeError("classifier: hidden bias length does not match hidden width");
        }
        if (w_out.rows != w_hidden.cols) {
            throw ShapeError("classifier: output matrix height does not match hidden width");
        }
        if (b_out.size() != w_out.cols) {
            throw ShapeError("classifier: output bias length does not match class count");
        }
    }
};

// Gradients for the trainable fields of ClassifierWeights.
struct ClassifierGradients {
    Matrix w_hidden;
    std::vector<double> b_hidden;
    Matrix w_out;
    std::vector<double> b_out;
};

struct TrainingExample {
    EncodedDatapoint encoding;
    std::uint64_t label = 0;
};

// Hyperparameters for local training. learning_rate zero is tolerated as an
// explicit no-op step.
struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 1;
    double dropout_rate = 0.0;
    std::uint64_t rng_seed = 0;

    void check() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw InvalidInput("train config: learning_rate must be finite and non-negative");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw InvalidInput("train config: dropout_rate must lie in [0, 1)");
        }
    }
};

// Element-wise mean over the encoded patches of one datapoint.
inline std::vector<double> global_average_pool(const EncodedDatapoint& encoding) {
    if (encoding.empty()) throw InvalidInput("global_average_pool: empty encoding");
    const std::size_t d = encoding.front().values.size();
    std::vector<double> pooled(d, 0.0);
    for (const EncodedPatch& patch : encoding) {
        if (patch.values.size() != d) {
            throw ShapeError("global_average_pool: ragged encoding widths");
        }
        for (std::size_t j = 0; j < d; ++j) pooled[j] += patch.values[j];
    }
    const double inv = 1.0 / static_cast<double>(encoding.size());
    for (double& v : pooled) v *= inv;
    return pooled;
}

// Stable softmax with a post-normalization floor of kProbFloor. The floor is
// applied without renormalizing, so entries sum to 1 up to floor effects.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw InvalidInput("softmax: empty logits");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - peak);
        total += probs[i];
    }
    for (double& p : probs) {
        p /= total;
        if (p < kProbFloor) p = kProbFloor;
    }
    return probs;
}

inline double cross_entropy(const std::vector<double>& probs, std::uint64_t label) {
    if (label >= probs.size()) throw InvalidInput("cross_entropy: label out of range");
    return -std::log(std::max(probs[label], kProbFloor));
}

// Lowest index wins ties.
inline std::size_t predict_class(const std::vector<double>& probs) {
    if (probs.empty()) throw InvalidInput("predict_class: empty probabilities");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

namespace detail {

// Intermediate activations for one example, kept for the backward pass.
struct ForwardTrace {
    std::vector<double> standardized;    // input after pool + standardize
    std::vector<double> pre_activation;  // hidden layer before relu
    std::vector<double> hidden;          // after relu and dropout scaling
    std::vector<double> probs;
};

inline ForwardTrace run_forward(const ClassifierWeights& w, const EncodedDatapoint& encoding,
                                const std::vector<double>* dropout_mask) {
    const std::size_t in = w.input_dim();
    const std::size_t hid = w.hidden_dim();
    const std::size_t classes = w.num_classes();

    std::vector<double> pooled = global_average_pool(encoding);
    if (pooled.size() != in) {
        throw ShapeError("forward: encoding width does not match classifier input width");
    }

    ForwardTrace trace;
    trace.standardized.resize(in);
    for (std::size_t i = 0; i < in; ++i) {
        trace.standardized[i] = (pooled[i] - w.norm_mean[i]) / w.norm_scale[i];
    }

    trace.pre_activation.assign(hid, 0.0);
    for (std::size_t i = 0; i < in; ++i) {
        const double z = trace.standardized[i];
        for (std::size_t j = 0; j < hid; ++j) {
            trace.pre_activation[j] += z * w.w_hidden(i, j);
        }
    }
    trace.hidden.resize(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        double h = trace.pre_activation[j] + w.b_hidden[j];
        trace.pre_activation[j] = h;
        h = h > 0.0 ? h : 0.0;
        if (dropout_mask != nullptr) h *= (*dropout_mask)[j];
        trace.hidden[j] = h;
    }

    std::vector<double> logits(classes, 0.0);
    for (std::size_t j = 0; j < hid; ++j) {
        const double h = trace.hidden[j];
        for (std::size_t c = 0; c < classes; ++c) {
            logits[c] += h * w.w_out(j, c);
        }
    }
    for (std::size_t c = 0; c < classes; ++c) logits[c] += w.b_out[c];

    trace.probs = softmax(logits);
    return trace;
}

} // namespace detail

// Inference pass: pooled encoding -> standardize -> relu hidden -> softmax.
// Dropout is inactive here.
inline std::vector<double> forward(const ClassifierWeights& w, const EncodedDatapoint& encoding) {
    w.check_consistent();
    return detail::run_forward(w, encoding, nullptr).probs;
}

// Inverted-dropout mask: each hidden unit is either 0 (dropped) or
// 1 / (1 - rate), so the expected activation matches inference.
inline std::vector<double> make_dropout_mask(std::size_t hidden_dim, double rate, Rng& rng) {
    if (hidden_dim == 0) throw InvalidInput("make_dropout_mask: hidden_dim must be positive");
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw InvalidInput("make_dropout_mask: rate must lie in [0, 1)");
    }
    std::vector<double> mask(hidden_dim, 1.0);
    if (rate == 0.0) return mask;
    const double scale = 1.0 / (1.0 - rate);
    for (double& m : mask) {
        m = rng.uniform() < rate ? 0.0 : scale;
    }
    return mask;
}

inline std::vector<double> no_dropout_mask(std::size_t hidden_dim) {
    return std::vector<double>(hidden_dim, 1.0);
}

namespace detail {

inline void check_batch(const ClassifierWeights& w, const std::vector<TrainingExample>& batch,
                        const std::vector<double>& dropout_mask) {
    w.check_consistent();
    if (batch.empty()) throw InvalidInput("batch: empty batch");
    if (dropout_mask.size() != w.hidden_dim()) {
        throw ShapeError("batch: dropout mask length does not match hidden width");
    }
    for (const TrainingExample& ex : batch) {
        if (ex.label >= w.num_classes()) throw InvalidInput("batch: label out of range");
    }
}

} // namespace detail

// Mean cross-entropy over the batch under a fixed dropout mask.
inline double batch_loss(const ClassifierWeights& w, const std::vector<TrainingExample>& batch,
                         const std::vector<double>& dropout_mask) {
    detail::check_batch(w, batch, dropout_mask);
    double total = 0.0;
    for (const TrainingExample& ex : batch) {
        detail::ForwardTrace trace = detail::run_forward(w, ex.encoding, &dropout_mask);
        total += cross_entropy(trace.probs, ex.label);
    }
    return total / static_cast<double>(batch.size());
}

// Gradients of batch_loss with respect to the trainable fields. The
// standardization vectors are frozen and receive no gradient.
inline ClassifierGradients batch_gradients(const ClassifierWeights& w,
                                           const std::vector<TrainingExample>& batch,
                                           const std::vector<double>& dropout_mask) {
    detail::check_batch(w, batch, dropout_mask);
    const std::size_t in = w.input_dim();
    const std::size_t hid = w.hidden_dim();
    const std::size_t classes = w.num_classes();

    ClassifierGradients g;
    g.w_hidden = Matrix(in, hid);
    g.b_hidden.assign(hid, 0.0);
    g.w_out = Matrix(hid, classes);
    g.b_out.assign(classes, 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::vector<double> d_logits(classes);
    std::vector<double> d_hidden(hid);

    for (const TrainingExample& ex : batch) {
        detail::ForwardTrace trace = detail::run_forward(w, ex.encoding, &dropout_mask);

        for (std::size_t c = 0; c < classes; ++c) {
            d_logits[c] = (trace.probs[c] - (c == ex.label ? 1.0 : 0.0)) * inv_batch;
            g.b_out[c] += d_logits[c];
        }
        for (std::size_t j = 0; j < hid; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                g.w_out(j, c) += trace.hidden[j] * d_logits[c];
                acc += w.w_out(j, c) * d_logits[c];
            }
            acc *= dropout_mask[j];
            d_hidden[j] = trace.pre_activation[j] > 0.0 ? acc : 0.0;
            g.b_hidden[j] += d_hidden[j];
        }
        for (std::size_t i = 0; i < in; ++i) {
            const double z = trace.standardized[i];
            for (std::size_t j = 0; j < hid; ++j) {
                g.w_hidden(i, j) += z * d_hidden[j];
            }
        }
    }
    return g;
}

// One SGD step on a batch. learning_rate of zero is allowed and returns the
// weights unchanged.
inline ClassifierWeights train_step(const ClassifierWeights& w,
                                    const std::vector<TrainingExample>& batch,
                                    double learning_rate, const std::vector<double>& dropout_mask) {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidInput("train_step: learning_rate must be finite and non-negative");
    }
    ClassifierGradients g = batch_gradients(w, batch, dropout_mask);
    ClassifierWeights next = w;
    for (std::size_t i = 0; i < next.w_hidden.data.size(); ++i) {
        next.w_hidden.data[i] -= learning_rate * g.w_hidden.data[i];
    }
    for (std::size_t j = 0; j < next.b_hidden.size(); ++j) {
        next.b_hidden[j] -= learning_rate * g.b_hidden[j];
    }
    for (std::size_t i = 0; i < next.w_out.data.size(); ++i) {
        next.w_out.data[i] -= learning_rate * g.w_out.data[i];
    }
    for (std::size_t j = 0; j < next.b_out.size(); ++j) {
        next.b_out[j] -= learning_rate * g.b_out[j];
    }
    return next;
}

// Config-driven variant: runs cfg.epochs full-batch steps, drawing a fresh
// dropout mask per step from an rng seeded with cfg.rng_seed.
inline ClassifierWeights train_step(const ClassifierWeights& w,
                                    const std::vector<TrainingExample>& batch,
                                    const TrainConfig& cfg) {
    cfg.check();
    w.check_consistent();
    Rng rng(cfg.rng_seed);
    ClassifierWeights cur = w;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::vector<double> mask = make_dropout_mask(cur.hidden_dim(), cfg.dropout_rate, rng);
        cur = train_step(cur, batch, cfg.learning_rate, mask);
    }
    return cur;
}

// Convex combination of classifier snapshots, element-wise across every
// field including the frozen standardization vectors.
inline ClassifierWeights average_weights(const std::vector<ClassifierWeights>& models,
                                         const std::vector<double>& coefficients) {
    if (models.empty()) throw InvalidInput("average_weights: no models");
    if (coefficients.size() != models.size()) {
        throw InvalidInput("average_weights: coefficient count does not match model count");
    }
    double total = 0.0;
    for (double c : coefficients) {
        if (!std::isfinite(c) || c < 0.0) {
            throw InvalidInput("average_weights: coefficients must be finite and non-negative");
        }
        total += c;
    }
    if (std::fabs(total - 1.0) > 1e-9) {
        throw InvalidInput("average_weights: coefficients must sum to 1");
    }

    const ClassifierWeights& first = models.front();
    first.check_consistent();
    for (const ClassifierWeights& m : models) {
        m.check_consistent();
        if (!m.w_hidden.same_shape(first.w_hidden) || !m.w_out.same_shape(first.w_out)) {
            throw ShapeError("average_weights: model shapes differ");
        }
    }

    ClassifierWeights avg;
    avg.norm_mean.assign(first.norm_mean.size(), 0.0);
    avg.norm_scale.assign(first.norm_scale.size(), 0.0);
    avg.w_hidden = Matrix(first.w_hidden.rows, first.w_hidden.cols);
    avg.b_hidden.assign(first.b_hidden.size(), 0.0);
    avg.w_out = Matrix(first.w_out.rows, first.w_out.cols);
    avg.b_out.assign(first.b_out.size(), 0.0);

    for (std::size_t m = 0; m < models.size(); ++m) {
        const double c = coefficients[m];
        const ClassifierWeights& src = models[m];
        for (std::size_t i = 0; i < avg.norm_mean.size(); ++i) avg.norm_mean[i] += c * src.norm_mean[i];
        for (std::size_t i = 0; i < avg.norm_scale.size(); ++i) {
            avg.norm_scale[i] += c * src.norm_scale[i];
        }
        for (std::size_t i = 0; i < avg.w_hidden.data.size(); ++i) {
            avg.w_hidden.data[i] += c * src.w_hidden.data[i];
        }
        for (std::size_t i = 0; i < avg.b_hidden.size(); ++i) avg.b_hidden[i] += c * src.b_hidden[i];
        for (std::size_t i = 0; i < avg.w_out.data.size(); ++i) {
            avg.w_out.data[i] += c * src.w_out.data[i];
        }
        for (std::size_t i = 0; i < avg.b_out.size(); ++i) avg.b_out[i] += c * src.b_out[i];
    }
    return avg;
}

// Fresh classifier with N(0, 1/sqrt(fan_in)) weights, zero biases, and
// identity standardization.
inline ClassifierWeights init_classifier(std::size_t input_dim, std::size_t hidden_dim,
                                         std::size_t num_classes, Rng& rng) {
    if (input_dim == 0 || hidden_dim == 0 || num_classes == 0) {
        throw InvalidInput("init_classifier: all dimensions must be positive");
    }
    ClassifierWeights w;
    w.norm_mean.assign(input_dim, 0.0);
    w.norm_scale.assign(input_dim, 1.0);
    w.w_hidden = Matrix(input_dim, hidden_dim);
    w.b_hidden.assign(hidden_dim, 0.0);
    w.w_out = Matrix(hidden_dim, num_classes);
    w.b_out.assign(num_classes, 0.0);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (double& v : w.w_hidden.data) v = rng.normal(0.0, s1);
    for (double& v : w.w_out.data) v = rng.normal(0.0, s2);
    return w;
}

// Installs frozen standardization statistics. Scales must be positive.
inline void set_standardization(ClassifierWeights& w, const std::vector<double>& mean,
                                const std::vector<double>& scale) {
    if (mean.size() != w.input_dim() || scale.size() != w.input_dim()) {
        throw ShapeError("set_standardization: length does not match classifier input width");
    }
    for (double s : scale) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw InvalidInput("set_standardization: scales must be positive and finite");
        }
    }
    for (double m : mean) {
        if (!std::isfinite(m)) throw InvalidInput("set_standardization: means must be finite");
    }
    w.norm_mean = mean;
    w.norm_scale = scale;
}

} // namespace por

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/param_vector.hpp"
#include "otmdr/rng.hpp"
#include "otmdr/tensor.hpp"

namespace otmdr {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

/// Fully connected classifier family: layer_sizes = (input, hidden..., classes).
struct ModelSpec {
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::relu;

    void validate() const {
        if (layer_sizes.size() < 2)
            throw std::invalid_argument("model spec: need at least input and output sizes");
        if (layer_sizes.back() < 2)
            throw std::invalid_argument("model spec: need at least 2 classes");
        for (std::size_t s : layer_sizes)
            if (s == 0) throw std::invalid_argument("model spec: zero layer size");
    }

    std::size_t n_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t n_classes() const { return layer_sizes.back(); }
};

inline std::string weight_name(std::size_t layer) { return "w" + std::to_string(layer); }
inline std::string bias_name(std::size_t layer) { return "b" + std::to_string(layer); }

/// He initialization N(0, 2/fan_in) for relu, Xavier N(0, 1/fan_in) for tanh;
/// biases zero. Purely a function of (spec, seed).
inline ParamVector init_params(const ModelSpec& model, std::uint64_t seed) {
    model.validate();
    ParamVector params;
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        const std::size_t fan_in = model.layer_sizes[l];
        const std::size_t fan_out = model.layer_sizes[l + 1];
        const double gain = model.activation == Activation::relu ? 2.0 : 1.0;
        const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
        RngStream rng = RngStream::root(seed).lane({.step = l, .purpose = Rand::init});
        Tensor w({fan_in, fan_out});
        for (double& v : w.data) v = stddev * rng.normal();
        params.add(weight_name(l), std::move(w));
        params.add(bias_name(l), Tensor({fan_out}));
    }
    return params;
}

/// Straight-line forward pass (no graph): logits of shape (batch, classes).
inline Tensor forward_logits(const ParamVector& params, const ModelSpec& model,
                             const Tensor& inputs) {
    model.validate();
    if (inputs.cols() != model.input_dim())
        throw std::invalid_argument("forward: input dim " + std::to_string(inputs.cols()) +
                                    " != model input " + std::to_string(model.input_dim()));
    const std::size_t n = inputs.rows();
    Tensor x = inputs;
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        const Tensor& w = params.segment(weight_name(l));
        const Tensor& b = params.segment(bias_name(l));
        if (w.rows() != x.cols())
            throw std::invalid_argument("forward: segment '" + weight_name(l) +
                                        "' expects fan_in " + std::to_string(w.rows()) +
                                        ", got " + std::to_string(x.cols()));
        const std::size_t k = w.rows(), m = w.cols();
        Tensor y({n, m});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double xv = x.data[i * k + p];
                const double* wrow = w.data.data() + p * m;
                double* yrow = y.data.data() + i * m;
                for (std::size_t j = 0; j < m; ++j) yrow[j] += xv * wrow[j];
            }
            for (std::size_t j = 0; j < m; ++j) y.data[i * m + j] += b.data[j];
        }
        if (l + 1 < model.n_layers()) {
            if (model.activation == Activation::relu) {
                for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            } else {
                for (double& v : y.data) v = std::tanh(v);
            }
        }
        x = std::move(y);
    }
    return x;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& logits) {
    const std::size_t n = logits.rows(), c = logits.cols();
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data.data() + i * c;
        double zmax = z[0];
        for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(z[j] - zmax);
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = std::exp(z[j] - zmax) / denom;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mean-field Gaussian posterior over the parameters.
// ---------------------------------------------------------------------------

/// Per-segment (mu, log sigma). Sigma is stored in log space so gradient
/// steps can never drive a scale non-positive.
struct VariationalParams {
    ParamVector mu;
    ParamVector log_sigma;

    void validate() const { check_same_structure(mu, log_sigma, "variational params"); }
};

/// One standard-normal draw per coordinate; regenerated once per training
/// iteration and reused across all particles and both ascent sub-steps.
struct NoiseDraw {
    ParamVector kappa;
};

inline constexpr double kInitialLogSigma = -2.9957322735539909;  // ln 0.05

inline VariationalParams init_variational(const ModelSpec& model, std::uint64_t seed) {
    VariationalParams v;
    v.mu = init_params(model, seed);
    v.log_sigma = zeros_like(v.mu);
    for (auto& [_, t] : v.log_sigma.segments)
        for (double& x : t.data) x = kInitialLogSigma;
    return v;
}

inline NoiseDraw draw_noise(const VariationalParams& v, RngStream stream) {
    return NoiseDraw{stream.normal_like(v.mu)};
}

/// W = mu + exp(log sigma) ⊙ kappa.
inline ParamVector reparam_sample(const VariationalParams& v, const NoiseDraw& noise) {
    v.validate();
    check_same_structure(v.mu, noise.kappa, "reparam sample");
    ParamVector out = v.mu;
    for (std::size_t s = 0; s < out.segments.size(); ++s) {
        const auto& ls = v.log_sigma.segments[s].second.data;
        const auto& ks = noise.kappa.segments[s].second.data;
        auto& os = out.segments[s].second.data;
        for (std::size_t i = 0; i < os.size(); ++i) os[i] += std::exp(ls[i]) * ks[i];
    }
    return out;
}

}  // namespace otmdr

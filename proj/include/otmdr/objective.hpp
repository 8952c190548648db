#pragma once

#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/autodiff.hpp"
#include "otmdr/data.hpp"
#include "otmdr/nn.hpp"
#include "otmdr/param_vector.hpp"

namespace otmdr {

namespace detail {

struct LossGraph {
    ad::Graph graph;
    std::vector<ad::Node*> leaves;  // aligned with params.segments
    ad::Node* loss = nullptr;
};

/// Builds the cross-entropy graph for an MLP: leaves for every parameter
/// segment, the layer chain, and the fused mean-NLL head.
inline void build_mlp_loss(LossGraph& lg, const ParamVector& params, const ModelSpec& model,
                           const Batch& batch) {
    model.validate();
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (batch.inputs.cols() != model.input_dim())
        throw std::invalid_argument("loss: batch dim " + std::to_string(batch.inputs.cols()) +
                                    " != model input " + std::to_string(model.input_dim()));
    if (params.segments.size() != 2 * model.n_layers())
        throw std::invalid_argument("loss: params have " +
                                    std::to_string(params.segments.size()) +
                                    " segments, model expects " +
                                    std::to_string(2 * model.n_layers()));
    for (const auto& seg : params.segments) lg.leaves.push_back(lg.graph.leaf(seg.second));

    ad::Node* x = lg.graph.leaf(batch.inputs);
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        const std::size_t wi = 2 * l, bi = 2 * l + 1;
        const auto& wseg = params.segments[wi];
        if (wseg.first != weight_name(l) || params.segments[bi].first != bias_name(l))
            throw std::invalid_argument("loss: unexpected segment order at layer " +
                                        std::to_string(l) + " ('" + wseg.first + "')");
        if (wseg.second.rows() != x->value.cols())
            throw std::invalid_argument("loss: segment '" + wseg.first + "' expects fan_in " +
                                        std::to_string(wseg.second.rows()) + ", got " +
                                        std::to_string(x->value.cols()));
        x = lg.graph.matmul(x, lg.leaves[wi]);
        x = lg.graph.add_row(x, lg.leaves[bi]);
        if (l + 1 < model.n_layers())
            x = model.activation == Activation::relu ? lg.graph.relu(x) : lg.graph.tanh_act(x);
    }
    if (x->value.cols() != model.n_classes())
        throw std::invalid_argument("loss: logits have " + std::to_string(x->value.cols()) +
                                    " columns, expected " + std::to_string(model.n_classes()));
    lg.loss = lg.graph.mean_nll_from_logits(x, batch.labels);
}

inline ParamVector collect_leaf_grads(const LossGraph& lg, const ParamVector& params) {
    ParamVector grads = zeros_like(params);
    for (std::size_t s = 0; s < params.segments.size(); ++s)
        grads.segments[s].second.data = lg.leaves[s]->grad.data;
    return grads;
}

}  // namespace detail

/// Mean cross-entropy of the model on the batch: (1/|B|) sum of per-sample
/// NLL, reduced by the index-ascending pairwise tree.
inline double evaluate_loss(const ParamVector& params, const ModelSpec& model,
                            const Batch& batch) {
    detail::LossGraph lg;
    detail::build_mlp_loss(lg, params, model, batch);
    return lg.loss->value.data[0];
}

/// Exact reverse-mode gradient of evaluate_loss w.r.t. every segment.
inline ParamVector gradient(const ParamVector& params, const ModelSpec& model,
                            const Batch& batch) {
    detail::LossGraph lg;
    detail::build_mlp_loss(lg, params, model, batch);
    lg.graph.backward(lg.loss);
    return detail::collect_leaf_grads(lg, params);
}

/// Central differences, probe step h*(1 + |theta_i|) per coordinate. Lives on
/// the plain-evaluation path only, independent of the reverse sweep it checks.
template <typename LossFn>
ParamVector finite_diff_gradient_of(const ParamVector& params, double h, LossFn&& loss_at) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff: h must be positive");
    ParamVector grads = zeros_like(params);
    ParamVector probe = params;
    for (std::size_t s = 0; s < params.segments.size(); ++s) {
        const auto& name = params.segments[s].first;
        auto& pdata = probe.segments[s].second.data;
        for (std::size_t i = 0; i < pdata.size(); ++i) {
            const double orig = pdata[i];
            const double hi = h * (1.0 + std::abs(orig));
            pdata[i] = orig + hi;
            const double up = loss_at(probe);
            pdata[i] = orig - hi;
            const double down = loss_at(probe);
            pdata[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw std::runtime_error("finite_diff: non-finite loss probing segment '" + name +
                                         "' index " + std::to_string(i));
            grads.segments[s].second.data[i] = (up - down) / (2.0 * hi);
        }
    }
    return grads;
}

inline ParamVector finite_diff_gradient(const ParamVector& params, const ModelSpec& model,
                                        const Batch& batch, double h) {
    return finite_diff_gradient_of(
        params, h, [&](const ParamVector& p) { return evaluate_loss(p, model, batch); });
}

// ---------------------------------------------------------------------------
// Objective concept: the optimizer family is generic over what it descends.
// ---------------------------------------------------------------------------

template <typename F>
concept Objective = requires(const F& f, const ParamVector& p, const Batch& b) {
    { f.loss(p, b) } -> std::convertible_to<double>;
    { f.gradient(p, b) } -> std::convertible_to<ParamVector>;
};

struct MlpObjective {
    ModelSpec model;

    double loss(const ParamVector& p, const Batch& b) const {
        return evaluate_loss(p, model, b);
    }
    ParamVector gradient(const ParamVector& p, const Batch& b) const {
        return otmdr::gradient(p, model, b);
    }
};

/// Quadratic test head L = 0.5 * ||theta||^2, routed through the graph so the
/// elementwise ops get exercised on the same path as the real models.
inline double quadratic_head_loss(const ParamVector& params) {
    ad::Graph g;
    ad::Node* acc = nullptr;
    for (const auto& [_, t] : params.segments) {
        ad::Node* leaf = g.leaf(t);
        ad::Node* sq = g.sum_all(g.mul(leaf, leaf));
        acc = acc == nullptr ? sq : g.add(acc, sq);
    }
    return g.affine(acc, 0.5, 0.0)->value.data[0];
}

inline ParamVector quadratic_head_gradient(const ParamVector& params) {
    ad::Graph g;
    std::vector<ad::Node*> leaves;
    ad::Node* acc = nullptr;
    for (const auto& [_, t] : params.segments) {
        leaves.push_back(g.leaf(t));
        ad::Node* sq = g.sum_all(g.mul(leaves.back(), leaves.back()));
        acc = acc == nullptr ? sq : g.add(acc, sq);
    }
    ad::Node* loss = g.affine(acc, 0.5, 0.0);
    g.backward(loss);
    ParamVector grads = zeros_like(params);
    for (std::size_t s = 0; s < leaves.size(); ++s)
        grads.segments[s].second.data = leaves[s]->grad.data;
    return grads;
}

struct QuadraticObjective {
    double loss(const ParamVector& p, const Batch&) const { return quadratic_head_loss(p); }
    ParamVector gradient(const ParamVector& p, const Batch&) const {
        return quadratic_head_gradient(p);
    }
};

/// Loss as a function of mu with (log sigma, kappa) held fixed:
/// L(mu' + exp(log sigma) ⊙ kappa). The gradient w.r.t. mu equals the
/// gradient w.r.t. theta at the reparameterized point.
struct BnnMuObjective {
    ModelSpec model;
    const ParamVector* log_sigma = nullptr;
    const ParamVector* kappa = nullptr;

    ParamVector theta_at(const ParamVector& mu) const {
        VariationalParams v{mu, *log_sigma};
        return reparam_sample(v, NoiseDraw{*kappa});
    }
    double loss(const ParamVector& mu, const Batch& b) const {
        return evaluate_loss(theta_at(mu), model, b);
    }
    ParamVector gradient(const ParamVector& mu, const Batch& b) const {
        return otmdr::gradient(theta_at(mu), model, b);
    }
};

}  // namespace otmdr

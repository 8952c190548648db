#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/data.hpp"
#include "otmdr/nn.hpp"
#include "otmdr/objective.hpp"
#include "otmdr/param_vector.hpp"
#include "otmdr/rng.hpp"

namespace otmdr {

enum class Variant { sgd, sam, otmdr_single, otmdr_ensemble, otmdr_bnn };
enum class NoiseMode { fixed, paper_eq9 };

/// How the mini-batch feeds the two ascent sub-steps. `full_batch` (both
/// sub-steps see the whole batch) is the degenerate mode under which the
/// single-particle, zero-noise, rho2=0 update coincides bit-for-bit with SAM.
enum class SplitMode { random_halves, full_batch };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::sgd: return "sgd";
        case Variant::sam: return "sam";
        case Variant::otmdr_single: return "otmdr_single";
        case Variant::otmdr_ensemble: return "otmdr_ensemble";
        case Variant::otmdr_bnn: return "otmdr_bnn";
    }
    return "?";
}

struct PerturbConfig {
    double rho1 = 0.05;
    double rho2 = 0.10;  // convention: 2 * rho1 unless overridden
    std::size_t K = 1;
    double noise_std = 1e-4;
    NoiseMode noise_mode = NoiseMode::fixed;
    double lr = 0.05;
    Variant variant = Variant::otmdr_single;
    SplitMode split_mode = SplitMode::random_halves;

    void validate() const {
        if (!(rho1 > 0.0)) throw std::invalid_argument("perturb: rho1 must be positive");
        if (rho2 < 0.0) throw std::invalid_argument("perturb: rho2 must be nonnegative");
        if (K < 1) throw std::invalid_argument("perturb: K must be >= 1");
        if (noise_std < 0.0) throw std::invalid_argument("perturb: noise_std must be nonnegative");
        if (!(lr > 0.0)) throw std::invalid_argument("perturb: lr must be positive");
    }

    double noise_scale(double rho_substep) const {
        return noise_mode == NoiseMode::fixed ? noise_std : std::sqrt(rho_substep);
    }
};

struct SplitBatch {
    Batch first;
    Batch second;
};

struct Particle {
    ParamVector theta_tilde;   // second ascent point, where the descent gradient is taken
    ParamVector intermediate;  // first ascent point
    std::uint64_t split_id = 0;
    double noise1_norm = 0.0;
    double noise2_norm = 0.0;
};

struct EnsembleState {
    std::vector<ParamVector> members;

    std::size_t size() const { return members.size(); }
};

namespace detail {

inline Batch subset_batch(const Batch& b, const std::vector<std::size_t>& rows) {
    const std::size_t d = b.inputs.cols();
    Batch out;
    out.inputs = Tensor({rows.size(), d});
    out.labels.reserve(rows.size());
    out.indices.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t src = rows[r];
        for (std::size_t j = 0; j < d; ++j) out.inputs.data[r * d + j] = b.inputs.data[src * d + j];
        out.labels.push_back(b.labels[src]);
        out.indices.push_back(b.indices[src]);
    }
    return out;
}

inline std::uint64_t partition_fingerprint(const std::vector<std::size_t>& first_half_sources) {
    std::vector<std::size_t> sorted = first_half_sources;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (std::size_t v : sorted) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (v >> (8 * byte)) & 0xFFu;
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

}  // namespace detail

/// Uniformly random partition of the batch into halves of sizes
/// (ceil(n/2), floor(n/2)), deterministic per stream.
inline SplitBatch split_batch(const Batch& batch, RngStream stream) {
    const std::size_t n = batch.size();
    if (n < 2) throw std::invalid_argument("batch too small to split");
    const std::vector<std::size_t> perm = stream.permutation(n);
    const std::size_t n_first = (n + 1) / 2;
    std::vector<std::size_t> first_rows(perm.begin(),
                                        perm.begin() + static_cast<std::ptrdiff_t>(n_first));
    std::vector<std::size_t> second_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_first),
                                         perm.end());
    SplitBatch out;
    out.first = detail::subset_batch(batch, first_rows);
    out.second = detail::subset_batch(batch, second_rows);
    return out;
}

/// One normalized ascent move: theta + rho * g/||g|| (+ noise). A gradient
/// below 1e-12 in norm contributes nothing, as does rho = 0; both are skipped
/// outright so degenerate configurations stay bit-exact.
inline ParamVector ascent_step(const ParamVector& theta, const ParamVector& grad, double rho,
                               const ParamVector* noise = nullptr) {
    check_same_structure(theta, grad, "ascent_step");
    if (!grad.all_finite()) throw std::runtime_error("ascent_step: non-finite gradient");
    ParamVector out = theta;
    const double gnorm = norm2(grad);
    if (rho != 0.0 && gnorm >= 1e-12) axpy(rho / gnorm, grad, out);
    if (noise != nullptr) axpy(1.0, *noise, out);
    return out;
}

/// Builds the K perturbed particles of the two-step chain: per particle a
/// fresh random half/half split, a normalized noisy ascent on the first half
/// from theta, and a second one on the second half from the intermediate
/// point. Sub-streams are keyed per particle and purpose, so particles can be
/// evaluated in any order or concurrently without changing results.
template <Objective Obj>
std::vector<Particle> otmdr_particles(const ParamVector& theta, const Obj& objective,
                                      const Batch& batch, const PerturbConfig& cfg,
                                      const RngStream& rng) {
    cfg.validate();
    if (cfg.variant == Variant::sgd || cfg.variant == Variant::sam)
        throw std::invalid_argument("otmdr_particles: variant does not build particles");
    std::vector<Particle> particles;
    particles.reserve(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k) {
        const RngStream sub = rng.with_particle(k);
        SplitBatch sb;
        if (cfg.split_mode == SplitMode::full_batch) {
            sb.first = batch;
            sb.second = batch;
        } else {
            sb = split_batch(batch, sub.with_purpose(Rand::split));
        }
        Particle p;
        p.split_id = detail::partition_fingerprint(sb.first.indices);

        const ParamVector g1 = objective.gradient(theta, sb.first);
        ParamVector noise1;
        const double scale1 = cfg.noise_scale(cfg.rho1);
        if (scale1 > 0.0) {
            noise1 = sub.with_purpose(Rand::noise_first).normal_like(theta);
            scale_in_place(noise1, scale1);
            p.noise1_norm = norm2(noise1);
        }
        p.intermediate = ascent_step(theta, g1, cfg.rho1, scale1 > 0.0 ? &noise1 : nullptr);

        const ParamVector g2 = objective.gradient(p.intermediate, sb.second);
        ParamVector noise2;
        const double scale2 = cfg.noise_scale(cfg.rho2);
        if (scale2 > 0.0) {
            noise2 = sub.with_purpose(Rand::noise_second).normal_like(theta);
            scale_in_place(noise2, scale2);
            p.noise2_norm = norm2(noise2);
        }
        p.theta_tilde = ascent_step(p.intermediate, g2, cfg.rho2, scale2 > 0.0 ? &noise2 : nullptr);
        particles.push_back(std::move(p));
    }
    return particles;
}

/// One optimizer step: descend from theta along the particle-averaged
/// gradient, each particle's gradient taken on the full batch and treated as
/// a constant w.r.t. theta. The K-sum is reduced in ascending particle index.
template <Objective Obj>
ParamVector otmdr_update(const ParamVector& theta, const Obj& objective, const Batch& batch,
                         const PerturbConfig& cfg, const RngStream& rng,
                         std::vector<Particle>* particles_out = nullptr) {
    std::vector<Particle> particles = otmdr_particles(theta, objective, batch, cfg, rng);
    ParamVector grad_sum = zeros_like(theta);
    for (const Particle& p : particles)
        axpy(1.0, objective.gradient(p.theta_tilde, batch), grad_sum);
    ParamVector next = theta;
    axpy(-(cfg.lr / static_cast<double>(cfg.K)), grad_sum, next);
    if (particles_out != nullptr) *particles_out = std::move(particles);
    return next;
}

template <Objective Obj>
ParamVector sgd_update(const ParamVector& theta, const Obj& objective, const Batch& batch,
                       double lr) {
    ParamVector next = theta;
    axpy(-lr, objective.gradient(theta, batch), next);
    return next;
}

/// SAM step: ascend to the first-order worst point in the rho-ball, descend
/// with the gradient taken there. A vanishing gradient descends from theta
/// itself.
template <Objective Obj>
ParamVector sam_update(const ParamVector& theta, const Obj& objective, const Batch& batch,
                       double rho, double lr) {
    const ParamVector g = objective.gradient(theta, batch);
    const ParamVector adversarial = ascent_step(theta, g, rho);
    ParamVector next = theta;
    axpy(-lr, objective.gradient(adversarial, batch), next);
    return next;
}

// ModelSpec-facing convenience overloads.
inline ParamVector otmdr_update(const ParamVector& theta, const ModelSpec& model,
                                const Batch& batch, const PerturbConfig& cfg,
                                const RngStream& rng,
                                std::vector<Particle>* particles_out = nullptr) {
    return otmdr_update(theta, MlpObjective{model}, batch, cfg, rng, particles_out);
}
inline ParamVector sgd_update(const ParamVector& theta, const ModelSpec& model,
                              const Batch& batch, double lr) {
    return sgd_update(theta, MlpObjective{model}, batch, lr);
}
inline ParamVector sam_update(const ParamVector& theta, const ModelSpec& model,
                              const Batch& batch, double rho, double lr) {
    return sam_update(theta, MlpObjective{model}, batch, rho, lr);
}

/// Every member takes an independent otmdr_update with member-keyed
/// sub-streams; nothing couples the members beyond sharing the batch.
template <Objective Obj>
EnsembleState ensemble_otmdr_update(const EnsembleState& state, const Obj& objective,
                                    const Batch& batch, const PerturbConfig& cfg,
                                    const RngStream& rng) {
    if (state.members.empty()) throw std::invalid_argument("ensemble: no members");
    EnsembleState next;
    next.members.reserve(state.members.size());
    for (std::size_t m = 0; m < state.members.size(); ++m)
        next.members.push_back(
            otmdr_update(state.members[m], objective, batch, cfg, rng.with_member(m)));
    return next;
}

inline EnsembleState ensemble_otmdr_update(const EnsembleState& state, const ModelSpec& model,
                                           const Batch& batch, const PerturbConfig& cfg,
                                           const RngStream& rng) {
    return ensemble_otmdr_update(state, MlpObjective{model}, batch, cfg, rng);
}

/// Mean of the member softmax outputs; rows stay on the simplex.
inline Tensor ensemble_predict(const EnsembleState& state, const ModelSpec& model,
                               const Tensor& inputs) {
    if (state.members.empty()) throw std::invalid_argument("ensemble_predict: no members");
    Tensor acc;
    for (std::size_t m = 0; m < state.members.size(); ++m) {
        Tensor probs = softmax_rows(forward_logits(state.members[m], model, inputs));
        if (m == 0) {
            acc = std::move(probs);
        } else {
            for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += probs.data[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(state.members.size());
    for (double& v : acc.data) v *= inv;
    return acc;
}

/// Diagnostics captured by the BNN step for instrumentation.
struct BnnStepTrace {
    ParamVector kappa;
    std::vector<Particle> mu_particles;
    std::vector<ParamVector> theta_tildes;
};

/// BNN step: one kappa draw per call, reused by both ascent sub-steps of all
/// K particles. The perturbation walks mu only; sigma and kappa are frozen
/// inside it. mu descends the particle-averaged gradient; log sigma takes a
/// plain gradient step on L_B(theta) + beta * KL(q || N(0, I)) at the
/// unperturbed reparameterized theta, chain-ruled into log space.
inline VariationalParams bnn_otmdr_update(const VariationalParams& v, const ModelSpec& model,
                                          const Batch& batch, const PerturbConfig& cfg,
                                          const RngStream& rng, double kl_weight,
                                          BnnStepTrace* trace = nullptr) {
    v.validate();
    cfg.validate();
    if (cfg.variant != Variant::otmdr_bnn)
        throw std::invalid_argument("bnn_otmdr_update: variant must be otmdr_bnn");

    const NoiseDraw kappa{rng.with_purpose(Rand::kappa).normal_like(v.mu)};
    const BnnMuObjective mu_objective{model, &v.log_sigma, &kappa.kappa};

    std::vector<Particle> particles = otmdr_particles(v.mu, mu_objective, batch, cfg, rng);
    ParamVector grad_sum = zeros_like(v.mu);
    for (const Particle& p : particles)
        axpy(1.0, mu_objective.gradient(p.theta_tilde, batch), grad_sum);

    VariationalParams next = v;
    axpy(-(cfg.lr / static_cast<double>(cfg.K)), grad_sum, next.mu);

    // Sigma step at the unperturbed theta = mu + sigma ⊙ kappa.
    const ParamVector theta = reparam_sample(v, kappa);
    const ParamVector g_theta = gradient(theta, model, batch);
    for (std::size_t s = 0; s < next.log_sigma.segments.size(); ++s) {
        auto& ls = next.log_sigma.segments[s].second.data;
        const auto& ls0 = v.log_sigma.segments[s].second.data;
        const auto& ks = kappa.kappa.segments[s].second.data;
        const auto& gs = g_theta.segments[s].second.data;
        for (std::size_t i = 0; i < ls.size(); ++i) {
            const double sigma = std::exp(ls0[i]);
            const double d_data = sigma * ks[i] * gs[i];          // dL/d(log sigma)
            const double d_kl = kl_weight * (sigma * sigma - 1);  // dKL/d(log sigma)
            ls[i] -= cfg.lr * (d_data + d_kl);
        }
    }

    if (trace != nullptr) {
        trace->kappa = kappa.kappa;
        trace->theta_tildes.clear();
        for (const Particle& p : particles) {
            VariationalParams shifted{p.theta_tilde, v.log_sigma};
            trace->theta_tildes.push_back(reparam_sample(shifted, kappa));
        }
        trace->mu_particles = std::move(particles);
    }
    return next;
}

}  // namespace otmdr

#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/data.hpp"
#include "otmdr/objective.hpp"
#include "otmdr/param_vector.hpp"
#include "otmdr/rng.hpp"

namespace otmdr {

struct LandscapeGrid {
    std::vector<double> alphas, betas;
    std::vector<double> losses;  // row-major (|alphas| x |betas|)
    ParamVector dir1, dir2;

    double at(std::size_t i, std::size_t j) const { return losses[i * betas.size() + j]; }
};

/// Two Gaussian directions, each rescaled segment-wise so the direction's
/// block norm matches the parameter's block norm; the second direction is
/// then orthogonalized against the first in flat space.
inline std::pair<ParamVector, ParamVector> random_directions(const ParamVector& params,
                                                             RngStream rng) {
    auto draw = [&]() {
        ParamVector d = rng.normal_like(params);
        for (std::size_t s = 0; s < d.segments.size(); ++s) {
            auto& dd = d.segments[s].second.data;
            const auto& pd = params.segments[s].second.data;
            double dn = 0.0, pn = 0.0;
            for (double v : dd) dn += v * v;
            for (double v : pd) pn += v * v;
            dn = std::sqrt(dn);
            pn = std::sqrt(pn);
            const double scale = dn >= 1e-300 ? pn / dn : 0.0;
            for (double& v : dd) v *= scale;
        }
        return d;
    };
    ParamVector d1 = draw();
    ParamVector d2 = draw();
    const double d11 = dot(d1, d1);
    if (d11 > 0.0) axpy(-dot(d1, d2) / d11, d1, d2);
    return {std::move(d1), std::move(d2)};
}

/// Loss surface over theta + alpha*d1 + beta*d2 for a caller-supplied loss
/// functional; steps must be odd so alpha = beta = 0 is a grid point.
inline LandscapeGrid loss_grid_fn(const ParamVector& params, const ParamVector& d1,
                                  const ParamVector& d2, double half_range, std::size_t steps,
                                  const std::function<double(const ParamVector&)>& loss_at) {
    if (steps < 3 || steps % 2 == 0)
        throw std::invalid_argument("loss_grid: steps must be odd and >= 3");
    LandscapeGrid grid;
    grid.dir1 = d1;
    grid.dir2 = d2;
    grid.alphas.resize(steps);
    grid.betas.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = -half_range +
                         2.0 * half_range * static_cast<double>(i) / static_cast<double>(steps - 1);
        grid.alphas[i] = t;
        grid.betas[i] = t;
    }
    grid.losses.resize(steps * steps);
    for (std::size_t i = 0; i < steps; ++i) {
        ParamVector row_base = add_scaled(params, grid.alphas[i], d1);
        for (std::size_t j = 0; j < steps; ++j)
            grid.losses[i * steps + j] = loss_at(add_scaled(row_base, grid.betas[j], d2));
    }
    return grid;
}

/// Full-dataset cross-entropy surface of a single model.
inline LandscapeGrid loss_grid(const ParamVector& params, const ModelSpec& model,
                               const Dataset& ds, const ParamVector& d1, const ParamVector& d2,
                               double half_range, std::size_t steps) {
    const Batch everything = full_batch(ds);
    return loss_grid_fn(params, d1, d2, half_range, steps,
                        [&](const ParamVector& p) { return evaluate_loss(p, model, everything); });
}

/// First-order sharpness: L(theta + rho * g/||g||) - L(theta) on the full
/// dataset; zero when the gradient vanishes.
inline double sharpness_probe(const ParamVector& params, const ModelSpec& model,
                              const Dataset& ds, double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("sharpness_probe: rho must be positive");
    const Batch everything = full_batch(ds);
    const ParamVector g = gradient(params, model, everything);
    const double gnorm = norm2(g);
    if (gnorm < 1e-12) return 0.0;
    const ParamVector shifted = add_scaled(params, rho / gnorm, g);
    return evaluate_loss(shifted, model, everything) - evaluate_loss(params, model, everything);
}

/// CSV emission: header `alpha,beta,loss`, one row per cell, floats with 17
/// significant digits.
inline void write_landscape_csv(const LandscapeGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("landscape: cannot write " + path);
    out << "alpha,beta,loss\n";
    char line[128];
    for (std::size_t i = 0; i < grid.alphas.size(); ++i)
        for (std::size_t j = 0; j < grid.betas.size(); ++j) {
            std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", grid.alphas[i],
                          grid.betas[j], grid.at(i, j));
            out << line;
        }
}

}  // namespace otmdr

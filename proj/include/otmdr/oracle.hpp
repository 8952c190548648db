#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/rng.hpp"
#include "otmdr/tensor.hpp"

namespace otmdr {

enum class ToyKind { quadratic, sine, rosenbrock, custom_table };

/// Low-dimensional losses the theorem checks run on. quadratic = sum x_i^2,
/// sine = sum sin(x_i), rosenbrock is the classic 2-D valley, custom_table
/// interpolates a tabulated loss (piecewise linear).
struct ToyLoss {
    ToyKind kind = ToyKind::quadratic;
    std::vector<double> xs, ys;   // table axes (ys empty in 1-D)
    std::vector<double> values;   // row-major table, xs-major

    static ToyLoss quadratic() { return ToyLoss{ToyKind::quadratic, {}, {}, {}}; }
    static ToyLoss sine() { return ToyLoss{ToyKind::sine, {}, {}, {}}; }
    static ToyLoss rosenbrock() { return ToyLoss{ToyKind::rosenbrock, {}, {}, {}}; }
    static ToyLoss table1d(std::vector<double> xs, std::vector<double> values) {
        if (xs.size() < 2 || xs.size() != values.size())
            throw std::invalid_argument("toy table: need matching axes and values");
        return ToyLoss{ToyKind::custom_table, std::move(xs), {}, std::move(values)};
    }
    static ToyLoss table2d(std::vector<double> xs, std::vector<double> ys,
                           std::vector<double> values) {
        if (xs.size() < 2 || ys.size() < 2 || values.size() != xs.size() * ys.size())
            throw std::invalid_argument("toy table: need matching axes and values");
        return ToyLoss{ToyKind::custom_table, std::move(xs), std::move(ys), std::move(values)};
    }

    double operator()(std::span<const double> p) const {
        switch (kind) {
            case ToyKind::quadratic: {
                double acc = 0.0;
                for (double v : p) acc += v * v;
                return acc;
            }
            case ToyKind::sine: {
                double acc = 0.0;
                for (double v : p) acc += std::sin(v);
                return acc;
            }
            case ToyKind::rosenbrock: {
                if (p.size() != 2) throw std::invalid_argument("rosenbrock is 2-D");
                const double a = 1.0 - p[0];
                const double b = p[1] - p[0] * p[0];
                return a * a + 100.0 * b * b;
            }
            case ToyKind::custom_table:
                return interpolate(p);
        }
        throw std::logic_error("toy loss: unknown kind");
    }

    std::vector<double> gradient(std::span<const double> p) const {
        std::vector<double> g(p.size(), 0.0);
        switch (kind) {
            case ToyKind::quadratic:
                for (std::size_t i = 0; i < p.size(); ++i) g[i] = 2.0 * p[i];
                return g;
            case ToyKind::sine:
                for (std::size_t i = 0; i < p.size(); ++i) g[i] = std::cos(p[i]);
                return g;
            case ToyKind::rosenbrock:
                if (p.size() != 2) throw std::invalid_argument("rosenbrock is 2-D");
                g[0] = -2.0 * (1.0 - p[0]) - 400.0 * p[0] * (p[1] - p[0] * p[0]);
                g[1] = 200.0 * (p[1] - p[0] * p[0]);
                return g;
            case ToyKind::custom_table: {
                // central differences on the interpolant
                std::vector<double> probe(p.begin(), p.end());
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double h = 1e-6 * (1.0 + std::abs(p[i]));
                    probe[i] = p[i] + h;
                    const double up = interpolate(probe);
                    probe[i] = p[i] - h;
                    const double down = interpolate(probe);
                    probe[i] = p[i];
                    g[i] = (up - down) / (2.0 * h);
                }
                return g;
            }
        }
        throw std::logic_error("toy loss: unknown kind");
    }

private:
    static std::size_t bracket(const std::vector<double>& axis, double v) {
        if (v <= axis.front()) return 0;
        if (v >= axis.back()) return axis.size() - 2;
        std::size_t lo = 0;
        while (lo + 2 < axis.size() && axis[lo + 1] <= v) ++lo;
        return lo;
    }

    double interpolate(std::span<const double> p) const {
        if (ys.empty()) {
            if (p.size() != 1) throw std::invalid_argument("toy table: 1-D table, 2-D point");
            const std::size_t i = bracket(xs, p[0]);
            const double t = (p[0] - xs[i]) / (xs[i + 1] - xs[i]);
            return values[i] + t * (values[i + 1] - values[i]);
        }
        if (p.size() != 2) throw std::invalid_argument("toy table: 2-D table, 1-D point");
        const std::size_t i = bracket(xs, p[0]);
        const std::size_t j = bracket(ys, p[1]);
        const double tx = (p[0] - xs[i]) / (xs[i + 1] - xs[i]);
        const double ty = (p[1] - ys[j]) / (ys[j + 1] - ys[j]);
        const std::size_t m = ys.size();
        const double v00 = values[i * m + j], v01 = values[i * m + j + 1];
        const double v10 = values[(i + 1) * m + j], v11 = values[(i + 1) * m + j + 1];
        return (1 - tx) * ((1 - ty) * v00 + ty * v01) + tx * ((1 - ty) * v10 + ty * v11);
    }
};

/// Ball grid geometry shared by the oracle ops: per axis, `resolution`
/// points spanning [center - rho, center + rho].
namespace detail {

inline std::vector<double> ball_axis(double center, double rho, std::size_t resolution) {
    std::vector<double> axis(resolution);
    const double h = 2.0 * rho / static_cast<double>(resolution - 1);
    for (std::size_t j = 0; j < resolution; ++j)
        axis[j] = center - rho + h * static_cast<double>(j);
    return axis;
}

inline void check_dim(std::size_t dim) {
    if (dim < 1 || dim > 2)
        throw std::invalid_argument("oracle: dimension must be 1 or 2, got " +
                                    std::to_string(dim));
}

}  // namespace detail

struct WorstCase {
    std::vector<double> point;
    double value = -std::numeric_limits<double>::infinity();
    double cell = 0.0;  // axis step of the grid used
};

/// Exhaustive maximum of the loss over the grid restricted to the Euclidean
/// rho-ball. Iteration is lexicographic and updates on strict improvement, so
/// ties resolve to the lexicographically smallest point.
inline WorstCase grid_worst_case(const ToyLoss& loss, const std::vector<double>& center,
                                 double rho, std::size_t resolution) {
    detail::check_dim(center.size());
    if (resolution < 2) throw std::invalid_argument("oracle: resolution must be >= 2");
    if (!(rho > 0.0)) throw std::invalid_argument("oracle: rho must be positive");
    const double r2 = rho * rho * (1.0 + 1e-12);
    WorstCase best;
    best.cell = 2.0 * rho / static_cast<double>(resolution - 1);
    if (center.size() == 1) {
        for (double x : detail::ball_axis(center[0], rho, resolution)) {
            const double v = loss(std::span<const double>(&x, 1));
            if (v > best.value) {
                best.value = v;
                best.point = {x};
            }
        }
        return best;
    }
    const std::vector<double> ax = detail::ball_axis(center[0], rho, resolution);
    const std::vector<double> ay = detail::ball_axis(center[1], rho, resolution);
    for (double x : ax)
        for (double y : ay) {
            const double dx = x - center[0], dy = y - center[1];
            if (dx * dx + dy * dy > r2) continue;
            const std::array<double, 2> p = {x, y};
            const double v = loss(std::span<const double>(p.data(), 2));
            if (v > best.value) {
                best.value = v;
                best.point = {x, y};
            }
        }
    return best;
}

/// SAM's first-order surrogate of the ball maximum: one normalized gradient
/// ascent step of length rho. A vanishing gradient stays at the center.
inline WorstCase sam_first_order_worst(const ToyLoss& loss, const std::vector<double>& center,
                                       double rho) {
    detail::check_dim(center.size());
    const std::vector<double> g = loss.gradient(center);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    norm = std::sqrt(norm);
    WorstCase out;
    out.point = center;
    if (norm >= 1e-12)
        for (std::size_t i = 0; i < center.size(); ++i) out.point[i] += rho * g[i] / norm;
    out.value = loss(std::span<const double>(out.point.data(), out.point.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Gibbs conditional over the ball: density proportional to exp(lambda * L),
// normalized by trapezoidal quadrature on the same grid.
// ---------------------------------------------------------------------------

struct GibbsSpec {
    std::vector<double> center;  // dim <= 2
    double rho = 1.0;
    double lambda = 1.0;
    std::size_t resolution = 201;  // per axis; keep >= 51 for acceptance runs

    void validate() const {
        detail::check_dim(center.size());
        if (!(rho > 0.0)) throw std::invalid_argument("gibbs: rho must be positive");
        if (lambda < 0.0) throw std::invalid_argument("gibbs: lambda must be nonnegative");
        if (resolution < 3) throw std::invalid_argument("gibbs: resolution must be >= 3");
    }
};

struct GibbsDensity {
    std::vector<std::vector<double>> axes;
    std::vector<double> density;      // 0 outside the ball
    std::vector<double> quad_weight;  // trapezoid weight x cell measure
    double cell = 0.0;

    std::size_t dim() const { return axes.size(); }

    std::vector<double> point_at(std::size_t idx) const {
        if (dim() == 1) return {axes[0][idx]};
        const std::size_t m = axes[1].size();
        return {axes[0][idx / m], axes[1][idx % m]};
    }

    double mass() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < density.size(); ++i) acc += density[i] * quad_weight[i];
        return acc;
    }

    std::size_t argmax_index() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < density.size(); ++i)
            if (density[i] > density[best]) best = i;
        return best;
    }

    /// Probability mass on grid points within `n_cells` axis steps
    /// (Euclidean) of the given point.
    double mass_within_cells(const std::vector<double>& point, double n_cells) const {
        const double radius = n_cells * cell * (1.0 + 1e-12);
        double acc = 0.0;
        for (std::size_t i = 0; i < density.size(); ++i) {
            const std::vector<double> p = point_at(i);
            double d2 = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) d2 += (p[k] - point[k]) * (p[k] - point[k]);
            if (d2 <= radius * radius) acc += density[i] * quad_weight[i];
        }
        return acc;
    }
};

/// Tabulates gamma*(theta~ | theta) = exp(lambda L) / Z over the ball grid.
/// Z comes from the trapezoidal rule on the same grid, with the max of
/// lambda*L subtracted before exponentiation; the density then integrates to
/// 1 under its own quadrature by construction.
inline GibbsDensity gibbs_density_grid(const GibbsSpec& spec, const ToyLoss& loss) {
    spec.validate();
    GibbsDensity out;
    out.cell = 2.0 * spec.rho / static_cast<double>(spec.resolution - 1);
    const std::size_t dim = spec.center.size();
    for (std::size_t k = 0; k < dim; ++k)
        out.axes.push_back(detail::ball_axis(spec.center[k], spec.rho, spec.resolution));

    const std::size_t total = dim == 1 ? spec.resolution : spec.resolution * spec.resolution;
    std::vector<double> scaled_loss(total, -std::numeric_limits<double>::infinity());
    out.quad_weight.assign(total, 0.0);
    out.density.assign(total, 0.0);

    auto axis_weight = [&](std::size_t j) {
        return (j == 0 || j + 1 == spec.resolution) ? 0.5 : 1.0;
    };
    const double r2 = spec.rho * spec.rho * (1.0 + 1e-12);
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < total; ++i) {
        const std::vector<double> p = out.point_at(i);
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (p[k] - spec.center[k]) * (p[k] - spec.center[k]);
        if (d2 > r2) continue;
        double w = 1.0;
        if (dim == 1) {
            w = axis_weight(i) * out.cell;
        } else {
            w = axis_weight(i / spec.resolution) * axis_weight(i % spec.resolution) * out.cell *
                out.cell;
        }
        out.quad_weight[i] = w;
        scaled_loss[i] = spec.lambda * loss(std::span<const double>(p.data(), p.size()));
        max_scaled = std::max(max_scaled, scaled_loss[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        if (out.quad_weight[i] == 0.0) continue;
        out.density[i] = std::exp(scaled_loss[i] - max_scaled);
        z += out.density[i] * out.quad_weight[i];
    }
    for (double& d : out.density) d /= z;
    return out;
}

// ---------------------------------------------------------------------------
// Mode-seeking check: does the two-step noisy normalized-ascent chain land
// where the Gibbs density concentrates?
// ---------------------------------------------------------------------------

struct SgldReport {
    double fraction_within = 0.0;   // terminals within 2 cells of the density argmax
    double mean_terminal_loss = 0.0;
    double ball_max_loss = 0.0;
    std::vector<double> mode_point;  // density argmax
    std::size_t trials = 0;
};

/// Runs `trials` independent two-step chains from the center (sub-step radii
/// default to rho/2 each, noise scale `noise_std`), projects each terminal
/// point onto the closed ball, and reports how often it lands within 2 grid
/// cells of the Gibbs argmax plus the mean terminal loss against the grid
/// ball maximum.
inline SgldReport sgld_mode_check(const GibbsSpec& spec, const ToyLoss& loss, std::size_t trials,
                                  const RngStream& rng, double noise_std = 1e-4,
                                  std::optional<double> rho1_override = {},
                                  std::optional<double> rho2_override = {}) {
    spec.validate();
    if (trials == 0) throw std::invalid_argument("sgld_mode_check: trials must be >= 1");
    const GibbsDensity density = gibbs_density_grid(spec, loss);
    const std::vector<double> mode = density.point_at(density.argmax_index());
    const WorstCase ball_max = grid_worst_case(loss, spec.center, spec.rho, spec.resolution);

    const double rho1 = rho1_override.value_or(spec.rho / 2.0);
    const double rho2 = rho2_override.value_or(spec.rho / 2.0);
    const std::size_t dim = spec.center.size();

    std::vector<double> terminal_losses(trials);
    std::size_t within = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        RngStream stream = rng.with_purpose(Rand::trial).with_particle(t);
        std::vector<double> x = spec.center;
        for (double rho_sub : {rho1, rho2}) {
            const std::vector<double> g = loss.gradient(x);
            double gnorm = 0.0;
            for (double v : g) gnorm += v * v;
            gnorm = std::sqrt(gnorm);
            if (rho_sub != 0.0 && gnorm >= 1e-12)
                for (std::size_t k = 0; k < dim; ++k) x[k] += rho_sub * g[k] / gnorm;
            if (noise_std > 0.0)
                for (std::size_t k = 0; k < dim; ++k) x[k] += noise_std * stream.normal();
        }
        // Project onto the closed ball; containment keeps the terminal loss
        // comparable against the in-ball maximum.
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (x[k] - spec.center[k]) * (x[k] - spec.center[k]);
        const double dist = std::sqrt(d2);
        if (dist > spec.rho)
            for (std::size_t k = 0; k < dim; ++k)
                x[k] = spec.center[k] + (x[k] - spec.center[k]) * (spec.rho / dist);

        terminal_losses[t] = loss(std::span<const double>(x.data(), dim));
        double dmode2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dmode2 += (x[k] - mode[k]) * (x[k] - mode[k]);
        const double radius = 2.0 * density.cell * (1.0 + 1e-12);
        if (dmode2 <= radius * radius) ++within;
    }

    SgldReport report;
    report.fraction_within = static_cast<double>(within) / static_cast<double>(trials);
    report.mean_terminal_loss = pairwise_mean(terminal_losses);
    report.ball_max_loss = ball_max.value;
    report.mode_point = mode;
    report.trials = trials;
    return report;
}

}  // namespace otmdr

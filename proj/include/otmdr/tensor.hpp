#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace otmdr {

/// Dense row-major tensor of 64-bit floats. Shapes are immutable after
/// construction; all numerics in this library run in double precision.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0)
        : shape(std::move(shape_)), data(element_count(shape), fill) {}

    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (data.size() != element_count(shape)) {
            throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape product " +
                                        std::to_string(element_count(shape)));
        }
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Deterministic pairwise-tree sum, splitting at the midpoint and recursing on
/// [lo, mid) then [mid, hi). Index-ascending, so the reduction order is a pure
/// function of the length.
inline double pairwise_sum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) return 0.0;
    if (n == 1) return xs[0];
    if (n == 2) return xs[0] + xs[1];
    const std::size_t mid = n / 2;
    return pairwise_sum(xs.first(mid)) + pairwise_sum(xs.subspan(mid));
}

inline double pairwise_mean(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("pairwise_mean: empty input");
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

}  // namespace otmdr

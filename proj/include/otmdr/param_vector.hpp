#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "otmdr/tensor.hpp"

namespace otmdr {

/// Named, ordered collection of parameter tensors. This is the flat model
/// state every optimizer in the library moves around: segment names identify
/// layers, flatten()/unflatten() give the linear-algebra view.
struct ParamVector {
    std::vector<std::pair<std::string, Tensor>> segments;

    ParamVector() = default;

    void add(std::string name, Tensor t) {
        for (const auto& [existing, _] : segments) {
            if (existing == name)
                throw std::invalid_argument("param vector: duplicate segment name '" + name + "'");
        }
        segments.emplace_back(std::move(name), std::move(t));
    }

    std::size_t total_len() const {
        std::size_t n = 0;
        for (const auto& [_, t] : segments) n += t.size();
        return n;
    }

    const Tensor& segment(const std::string& name) const {
        for (const auto& [n, t] : segments)
            if (n == name) return t;
        throw std::invalid_argument("param vector: no segment named '" + name + "'");
    }

    Tensor& segment(const std::string& name) {
        for (auto& [n, t] : segments)
            if (n == name) return t;
        throw std::invalid_argument("param vector: no segment named '" + name + "'");
    }

    bool same_structure(const ParamVector& other) const {
        if (segments.size() != other.segments.size()) return false;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            if (segments[i].first != other.segments[i].first) return false;
            if (segments[i].second.shape != other.segments[i].second.shape) return false;
        }
        return true;
    }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(total_len());
        for (const auto& [_, t] : segments) out.insert(out.end(), t.data.begin(), t.data.end());
        return out;
    }

    /// Rebuilds a vector with this one's structure from flat coordinates.
    ParamVector unflatten(std::span<const double> flat) const {
        if (flat.size() != total_len())
            throw std::invalid_argument("unflatten: flat length " + std::to_string(flat.size()) +
                                        " != total_len " + std::to_string(total_len()));
        ParamVector out;
        std::size_t offset = 0;
        for (const auto& [name, t] : segments) {
            Tensor copy(t.shape);
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(),
                        copy.data.begin());
            offset += t.size();
            out.segments.emplace_back(name, std::move(copy));
        }
        return out;
    }

    bool all_finite() const {
        for (const auto& [_, t] : segments)
            if (!t.all_finite()) return false;
        return true;
    }
};

inline ParamVector zeros_like(const ParamVector& p) {
    ParamVector out;
    for (const auto& [name, t] : p.segments) out.segments.emplace_back(name, Tensor(t.shape));
    return out;
}

inline void check_same_structure(const ParamVector& a, const ParamVector& b, const char* what) {
    if (a.same_structure(b)) return;
    std::string detail = "structure mismatch in ";
    detail += what;
    if (a.segments.size() != b.segments.size()) {
        detail += ": segment counts " + std::to_string(a.segments.size()) + " vs " +
                  std::to_string(b.segments.size());
    } else {
        for (std::size_t i = 0; i < a.segments.size(); ++i) {
            if (a.segments[i].first != b.segments[i].first ||
                a.segments[i].second.shape != b.segments[i].second.shape) {
                detail += ": segment '" + a.segments[i].first + "' vs '" + b.segments[i].first + "'";
                break;
            }
        }
    }
    throw std::invalid_argument(detail);
}

/// y += alpha * x
inline void axpy(double alpha, const ParamVector& x, ParamVector& y) {
    check_same_structure(x, y, "axpy");
    for (std::size_t s = 0; s < x.segments.size(); ++s) {
        const auto& xs = x.segments[s].second.data;
        auto& ys = y.segments[s].second.data;
        for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += alpha * xs[i];
    }
}

inline ParamVector add_scaled(const ParamVector& base, double alpha, const ParamVector& dir) {
    ParamVector out = base;
    axpy(alpha, dir, out);
    return out;
}

inline void scale_in_place(ParamVector& p, double alpha) {
    for (auto& [_, t] : p.segments)
        for (double& v : t.data) v *= alpha;
}

inline double dot(const ParamVector& a, const ParamVector& b) {
    check_same_structure(a, b, "dot");
    double acc = 0.0;
    for (std::size_t s = 0; s < a.segments.size(); ++s) {
        const auto& as = a.segments[s].second.data;
        const auto& bs = b.segments[s].second.data;
        for (std::size_t i = 0; i < as.size(); ++i) acc += as[i] * bs[i];
    }
    return acc;
}

inline double norm2(const ParamVector& p) {
    double acc = 0.0;
    for (const auto& [_, t] : p.segments)
        for (double v : t.data) acc += v * v;
    return std::sqrt(acc);
}

inline double l2_distance(const ParamVector& a, const ParamVector& b) {
    check_same_structure(a, b, "l2_distance");
    double acc = 0.0;
    for (std::size_t s = 0; s < a.segments.size(); ++s) {
        const auto& as = a.segments[s].second.data;
        const auto& bs = b.segments[s].second.data;
        for (std::size_t i = 0; i < as.size(); ++i) {
            const double d = as[i] - bs[i];
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

inline bool bitwise_equal(const ParamVector& a, const ParamVector& b) {
    if (!a.same_structure(b)) return false;
    for (std::size_t s = 0; s < a.segments.size(); ++s)
        if (a.segments[s].second.data != b.segments[s].second.data) return false;
    return true;
}

}  // namespace otmdr

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "otmdr/param_vector.hpp"

namespace otmdr {

/// Purpose tag of an RNG lane. Every consumer of randomness draws from a lane
/// keyed by (seed, epoch, step, member, particle, purpose), so adding or
/// reordering consumers never shifts anyone else's stream.
enum class Rand : std::uint64_t {
    init = 1,
    shuffle,
    split,
    noise_first,
    noise_second,
    kappa,
    directions,
    trial,
    moons,
    digits,
    calib,
    probe,
};

namespace detail {

// SplitMix64 finalizer (Stafford mix13).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t fold(std::uint64_t key, std::uint64_t field) {
    return mix64(key ^ (field + 0x632BE59BD9B4E019ull));
}

}  // namespace detail

/// Counter-based random stream. A stream is a value: copy freely, derive
/// sub-streams by re-keying the lane. Draws advance an internal counter; the
/// i-th output is a pure function of (key, i).
class RngStream {
public:
    struct Lane {
        std::uint64_t epoch = 0;
        std::uint64_t step = 0;
        std::uint64_t member = 0;
        std::uint64_t particle = 0;
        Rand purpose = Rand::init;
    };

    static RngStream root(std::uint64_t seed) { return RngStream(seed, Lane{}); }

    RngStream lane(Lane l) const { return RngStream(seed_, l); }

    RngStream with_member(std::uint64_t m) const {
        Lane l = lane_;
        l.member = m;
        return RngStream(seed_, l);
    }

    RngStream with_particle(std::uint64_t k) const {
        Lane l = lane_;
        l.particle = k;
        return RngStream(seed_, l);
    }

    RngStream with_purpose(Rand p) const {
        Lane l = lane_;
        l.purpose = p;
        return RngStream(seed_, l);
    }

    std::uint64_t seed() const { return seed_; }
    const Lane& current_lane() const { return lane_; }

    std::uint64_t next_u64() {
        return detail::mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull);
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; used where a log is taken.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Unbiased-enough bounded draw via 128-bit multiply; n must be > 0.
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = below(i);
            std::swap(idx[i - 1], idx[j]);
        }
        return idx;
    }

    /// Standard-normal draw per coordinate, same structure as the template.
    ParamVector normal_like(const ParamVector& shape) {
        ParamVector out = zeros_like(shape);
        for (auto& [_, t] : out.segments)
            for (double& v : t.data) v = normal();
        return out;
    }

private:
    RngStream(std::uint64_t seed, Lane l) : seed_(seed), lane_(l) {
        std::uint64_t k = detail::mix64(seed ^ 0x517CC1B727220A95ull);
        k = detail::fold(k, l.epoch);
        k = detail::fold(k, l.step);
        k = detail::fold(k, l.member);
        k = detail::fold(k, l.particle);
        k = detail::fold(k, static_cast<std::uint64_t>(l.purpose));
        key_ = k;
    }

    std::uint64_t seed_ = 0;
    Lane lane_;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace otmdr

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/nn.hpp"
#include "otmdr/param_vector.hpp"

namespace otmdr {

enum class CheckpointKind : std::uint8_t { single = 0, ensemble = 1, bnn = 2 };

/// Durable model state. Binary layout: magic "OTMDR1", kind byte, activation
/// byte, layer-size table, member count, then the parameter payload as
/// little-endian 64-bit floats (mu followed by log sigma for BNNs, every
/// member in order for ensembles). save/load round-trips bit-for-bit.
struct Checkpoint {
    CheckpointKind kind = CheckpointKind::single;
    ModelSpec model;
    std::vector<ParamVector> members;  // single: 1 entry; bnn: unused
    VariationalParams variational;     // bnn only
};

namespace detail {

constexpr char kMagic[6] = {'O', 'T', 'M', 'D', 'R', '1'};

inline void put_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}
inline void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::ostream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline std::uint8_t get_u8(std::istream& in, const std::string& path) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint: truncated file " + path);
    return static_cast<std::uint8_t>(c);
}
inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(get_u8(in, path)) << (8 * i);
    return v;
}
inline double get_f64(std::istream& in, const std::string& path) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(get_u8(in, path)) << (8 * i);
    return std::bit_cast<double>(bits);
}

inline void put_param_vector(std::ostream& out, const ParamVector& p) {
    put_u32(out, static_cast<std::uint32_t>(p.segments.size()));
    for (const auto& [name, t] : p.segments) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f64(out, v);
    }
}

inline ParamVector get_param_vector(std::istream& in, const std::string& path) {
    ParamVector p;
    const std::uint32_t n_segments = get_u32(in, path);
    for (std::uint32_t s = 0; s < n_segments; ++s) {
        const std::uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
        const std::uint32_t ndim = get_u32(in, path);
        std::vector<std::size_t> shape;
        for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(get_u32(in, path));
        Tensor t(shape);
        for (double& v : t.data) v = get_f64(in, path);
        p.segments.emplace_back(std::move(name), std::move(t));
    }
    return p;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(detail::kMagic, sizeof(detail::kMagic));
    detail::put_u8(out, static_cast<std::uint8_t>(ckpt.kind));
    detail::put_u8(out, ckpt.model.activation == Activation::relu ? 0 : 1);
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.model.layer_sizes.size()));
    for (std::size_t s : ckpt.model.layer_sizes)
        detail::put_u32(out, static_cast<std::uint32_t>(s));
    if (ckpt.kind == CheckpointKind::bnn) {
        detail::put_u32(out, 1);
        detail::put_param_vector(out, ckpt.variational.mu);
        detail::put_param_vector(out, ckpt.variational.log_sigma);
    } else {
        detail::put_u32(out, static_cast<std::uint32_t>(ckpt.members.size()));
        for (const ParamVector& m : ckpt.members) detail::put_param_vector(out, m);
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[6];
    in.read(magic, 6);
    if (!in || !std::equal(magic, magic + 6, detail::kMagic))
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ckpt;
    const std::uint8_t kind = detail::get_u8(in, path);
    if (kind > 2) throw std::runtime_error("checkpoint: unknown kind in " + path);
    ckpt.kind = static_cast<CheckpointKind>(kind);
    ckpt.model.activation = detail::get_u8(in, path) == 0 ? Activation::relu : Activation::tanh;
    const std::uint32_t n_sizes = detail::get_u32(in, path);
    for (std::uint32_t i = 0; i < n_sizes; ++i)
        ckpt.model.layer_sizes.push_back(detail::get_u32(in, path));
    ckpt.model.validate();
    const std::uint32_t members = detail::get_u32(in, path);
    if (ckpt.kind == CheckpointKind::bnn) {
        ckpt.variational.mu = detail::get_param_vector(in, path);
        ckpt.variational.log_sigma = detail::get_param_vector(in, path);
        ckpt.variational.validate();
    } else {
        for (std::uint32_t m = 0; m < members; ++m)
            ckpt.members.push_back(detail::get_param_vector(in, path));
        if (ckpt.members.empty()) throw std::runtime_error("checkpoint: no members in " + path);
    }
    return ckpt;
}

}  // namespace otmdr

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/rng.hpp"
#include "otmdr/tensor.hpp"

namespace otmdr {

struct Dataset {
    Tensor inputs;            // (n, d)
    std::vector<int> labels;  // values in [0, n_classes)
    int n_classes = 0;

    std::size_t size() const { return inputs.rows(); }
    std::size_t dim() const { return inputs.cols(); }
};

struct Batch {
    Tensor inputs;
    std::vector<int> labels;
    std::vector<std::size_t> indices;  // source row ids

    std::size_t size() const { return labels.size(); }
};

inline Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t d = ds.dim();
    Batch b;
    b.indices = indices;
    b.inputs = Tensor({indices.size(), d});
    b.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t src = indices[r];
        if (src >= ds.size())
            throw std::invalid_argument("make_batch: index " + std::to_string(src) +
                                        " outside dataset of size " + std::to_string(ds.size()));
        for (std::size_t j = 0; j < d; ++j) b.inputs.data[r * d + j] = ds.inputs.data[src * d + j];
        b.labels.push_back(ds.labels[src]);
    }
    return b;
}

inline Batch full_batch(const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return make_batch(ds, idx);
}

// ---------------------------------------------------------------------------
// IDX files (big-endian): 2 zero bytes, type byte 0x08, ndim byte, then ndim
// 32-bit dimension sizes, then raw bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw std::runtime_error("idx: truncated file " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const std::array<unsigned char, 4> b = {
        static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b.data()), 4);
}

struct IdxPayload {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;
};

inline IdxPayload read_idx_u8(const std::string& path, std::size_t expect_ndim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    const std::uint32_t magic = read_be32(in, path);
    if ((magic >> 8) != 0x000008u)
        throw std::runtime_error("idx: bad magic number in " + path +
                                 " (expected unsigned-byte type 0x08)");
    const std::size_t ndim = magic & 0xFFu;
    if (ndim != expect_ndim)
        throw std::runtime_error("idx: " + path + " has " + std::to_string(ndim) +
                                 " dimensions, expected " + std::to_string(expect_ndim));
    IdxPayload out;
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        out.dims.push_back(read_be32(in, path));
        total *= out.dims.back();
    }
    out.bytes.resize(total);
    in.read(reinterpret_cast<char*>(out.bytes.data()), static_cast<std::streamsize>(total));
    if (!in || in.gcount() != static_cast<std::streamsize>(total))
        throw std::runtime_error("idx: truncated file " + path);
    return out;
}

}  // namespace detail

inline void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                             std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    if (pixels.size() != std::size_t(n) * rows * cols)
        throw std::invalid_argument("write_idx_images: pixel count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("idx: cannot write " + path);
    detail::write_be32(out, 0x00000803u);
    detail::write_be32(out, n);
    detail::write_be32(out, rows);
    detail::write_be32(out, cols);
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("idx: cannot write " + path);
    detail::write_be32(out, 0x00000801u);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

struct StandardizeStats {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Loads an IDX image/label pair. Pixels are scaled to [0,1] and then
/// standardized; by default the statistics come from the loaded data itself,
/// `apply` substitutes externally supplied statistics (e.g. the training
/// split's), and `used` reports whichever pair was applied.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const StandardizeStats* apply = nullptr,
                        StandardizeStats* used = nullptr) {
    const detail::IdxPayload images = detail::read_idx_u8(images_path, 3);
    const detail::IdxPayload labels = detail::read_idx_u8(labels_path, 1);
    const std::size_t n = images.dims[0];
    if (labels.dims[0] != n)
        throw std::runtime_error("idx: image/label count mismatch images=" + std::to_string(n) +
                                 " labels=" + std::to_string(labels.dims[0]));
    const std::size_t d = std::size_t(images.dims[1]) * images.dims[2];

    Dataset ds;
    ds.inputs = Tensor({n, d});
    for (std::size_t i = 0; i < n * d; ++i) ds.inputs.data[i] = images.bytes[i] / 255.0;

    StandardizeStats stats;
    if (apply != nullptr) {
        stats = *apply;
    } else {
        double mean = 0.0;
        for (double v : ds.inputs.data) mean += v;
        mean /= static_cast<double>(n * d);
        double var = 0.0;
        for (double v : ds.inputs.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n * d);
        stats.mean = mean;
        stats.stddev = std::sqrt(var);
        if (stats.stddev < 1e-12) stats.stddev = 1.0;  // constant image set
    }
    for (double& v : ds.inputs.data) v = (v - stats.mean) / stats.stddev;
    if (used != nullptr) *used = stats;

    ds.labels.reserve(n);
    int max_label = 0;
    for (std::uint8_t l : labels.bytes) {
        ds.labels.push_back(static_cast<int>(l));
        max_label = std::max(max_label, static_cast<int>(l));
    }
    ds.n_classes = max_label + 1;
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic 2-D classification: two interleaved half-circles.
// ---------------------------------------------------------------------------

/// Class 0 lies on the upper unit arc (cos t, sin t), class 1 on the shifted
/// lower arc (1 - cos t, 0.5 - sin t), t uniform over [0, pi]; Gaussian jitter
/// of the given std is added to both coordinates. Class counts are
/// (ceil(n/2), floor(n/2)).
inline Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("make_two_moons: n must be >= 2");
    RngStream rng = RngStream::root(seed).lane({.purpose = Rand::moons});
    const std::size_t n0 = (n + 1) / 2, n1 = n / 2;
    Dataset ds;
    ds.inputs = Tensor({n, 2});
    ds.labels.resize(n);
    ds.n_classes = 2;
    auto arc_t = [](std::size_t i, std::size_t count) {
        return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1)
                         : 0.0;
    };
    for (std::size_t i = 0; i < n0; ++i) {
        const double t = arc_t(i, n0);
        ds.inputs.data[i * 2 + 0] = std::cos(t);
        ds.inputs.data[i * 2 + 1] = std::sin(t);
        ds.labels[i] = 0;
    }
    for (std::size_t i = 0; i < n1; ++i) {
        const double t = arc_t(i, n1);
        ds.inputs.data[(n0 + i) * 2 + 0] = 1.0 - std::cos(t);
        ds.inputs.data[(n0 + i) * 2 + 1] = 0.5 - std::sin(t);
        ds.labels[n0 + i] = 1;
    }
    if (noise > 0.0)
        for (double& v : ds.inputs.data) v += noise * rng.normal();
    return ds;
}

// ---------------------------------------------------------------------------
// Deterministic batching.
// ---------------------------------------------------------------------------

/// Partitions the dataset into consecutive batches; the last one may be
/// short. With shuffling, the epoch permutation is drawn from the stream.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, RngStream stream,
                                  bool shuffle) {
    const std::size_t n = ds.size();
    if (batch_size < 1 || batch_size > n)
        throw std::invalid_argument("batches: batch_size " + std::to_string(batch_size) +
                                    " out of range [1, " + std::to_string(n) + "]");
    std::vector<std::size_t> order;
    if (shuffle) {
        order = stream.permutation(n);
    } else {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
    }
    std::vector<Batch> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, n);
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
        out.push_back(make_batch(ds, idx));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic digit glyphs, written as IDX so the image pipeline is exercised
// end to end. Desk-scale stand-in for a real 28x28 digit corpus.
// ---------------------------------------------------------------------------

namespace detail {

// 5x7 digit font, one string per row, '#' = on.
inline const std::array<std::array<const char*, 7>, 10>& digit_font() {
    static const std::array<std::array<const char*, 7>, 10> font = {{
        {{" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},  // 0
        {{"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},  // 1
        {{" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},  // 2
        {{" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "}},  // 3
        {{"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},  // 4
        {{"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},  // 5
        {{" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "}},  // 6
        {{"#####", "    #", "   # ", "  #  ", "  #  ", "  #  ", "  #  "}},  // 7
        {{" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},  // 8
        {{" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "}},  // 9
    }};
    return font;
}

}  // namespace detail

/// Renders n digit images (28x28, balanced labels) with per-image shift,
/// intensity scaling and pixel noise, deterministic in the seed. Returns raw
/// bytes suitable for write_idx_images.
inline void make_synth_digits(std::size_t n, std::uint64_t seed,
                              std::vector<std::uint8_t>& pixels,
                              std::vector<std::uint8_t>& labels) {
    constexpr std::size_t kSide = 28, kScale = 3;
    const auto& font = detail::digit_font();
    RngStream rng = RngStream::root(seed).lane({.purpose = Rand::digits});
    pixels.assign(n * kSide * kSide, 0);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        labels[i] = static_cast<std::uint8_t>(digit);
        const int dx = static_cast<int>(rng.below(7)) - 3;  // glyph box 15x21 in 28x28
        const int dy = static_cast<int>(rng.below(7)) - 3;
        const double intensity = 0.55 + 0.45 * rng.uniform();
        std::uint8_t* img = pixels.data() + i * kSide * kSide;
        for (std::size_t gr = 0; gr < 7; ++gr)
            for (std::size_t gc = 0; gc < 5; ++gc) {
                if (font[static_cast<std::size_t>(digit)][gr][gc] != '#') continue;
                for (std::size_t sr = 0; sr < kScale; ++sr)
                    for (std::size_t sc = 0; sc < kScale; ++sc) {
                        const int r = static_cast<int>(3 + gr * kScale + sr) + dy;
                        const int c = static_cast<int>(6 + gc * kScale + sc) + dx;
                        img[r * kSide + c] = 255;
                    }
            }
        for (std::size_t p = 0; p < kSide * kSide; ++p) {
            double v = img[p] / 255.0 * intensity + 0.18 * rng.normal();
            v = std::min(1.0, std::max(0.0, v));
            img[p] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    // Mix class order so contiguous subsets stay balanced-ish after batching.
    RngStream order_rng = RngStream::root(seed).lane({.step = 1, .purpose = Rand::digits});
    const std::vector<std::size_t> perm = order_rng.permutation(n);
    std::vector<std::uint8_t> px(pixels.size());
    std::vector<std::uint8_t> lb(n);
    for (std::size_t i = 0; i < n; ++i) {
        lb[i] = labels[perm[i]];
        std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(perm[i] * kSide * kSide),
                    kSide * kSide, px.begin() + static_cast<std::ptrdiff_t>(i * kSide * kSide));
    }
    pixels = std::move(px);
    labels = std::move(lb);
}

/// Writes a synthetic digit train/test pair under dir and returns the four
/// file paths (train images, train labels, test images, test labels).
inline std::array<std::string, 4> synth_digits_to_idx(const std::string& dir,
                                                      std::size_t n_train, std::size_t n_test,
                                                      std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::uint8_t> px, lb;
    const std::array<std::string, 4> paths = {
        dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
        dir + "/test-images-idx3-ubyte", dir + "/test-labels-idx1-ubyte"};
    make_synth_digits(n_train, seed, px, lb);
    write_idx_images(paths[0], px, static_cast<std::uint32_t>(n_train), 28, 28);
    write_idx_labels(paths[1], lb);
    make_synth_digits(n_test, seed ^ 0x7E57DA7Aull, px, lb);
    write_idx_images(paths[2], px, static_cast<std::uint32_t>(n_test), 28, 28);
    write_idx_labels(paths[3], lb);
    return paths;
}

}  // namespace otmdr

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/nn.hpp"
#include "otmdr/perturb.hpp"

namespace otmdr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LrSchedule { constant, cosine };

/// One experiment: dataset, model, optimizer variant and all hyperparameters.
/// Parsed from `key = value` lines with `#` comments; unknown keys are
/// rejected, ranges are validated at parse time.
struct RunConfig {
    Variant variant = Variant::otmdr_single;
    std::string dataset;   // two_moons | synth_digits | mnist_idx
    std::string data_dir;  // mnist_idx only
    std::size_t train_n = 2000;
    std::size_t test_n = 1000;
    double moons_noise = 0.2;

    ModelSpec model;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    double lr = 0.0;
    LrSchedule lr_schedule = LrSchedule::constant;

    double rho1 = 0.0;   // defaulted per variant when absent
    double rho2 = 0.0;   // defaults to 2*rho1 when absent
    std::size_t K = 1;
    std::size_t M = 3;
    double noise_std = 1e-4;
    NoiseMode noise_mode = NoiseMode::fixed;
    std::optional<double> kl_weight;  // absent = 1/N_train

    std::uint64_t seed = 0;
    std::string out_dir = "otmdr_out";
    int n_bins = 15;
    double calib_fraction = 0.1;

    std::vector<std::size_t> k_sweep;  // non-empty: train sweeps K
    std::size_t landscape_steps = 41;
    double landscape_half_range = 1.0;

    PerturbConfig perturb() const {
        PerturbConfig cfg;
        cfg.rho1 = rho1;
        cfg.rho2 = rho2;
        cfg.K = K;
        cfg.noise_std = noise_std;
        cfg.noise_mode = noise_mode;
        cfg.lr = lr;
        cfg.variant = variant;
        return cfg;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] inline void config_fail(int line, const std::string& message) {
    throw ConfigError("config: line " + std::to_string(line) + ": " + message);
}

inline double parse_double(const std::string& key, const std::string& value, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        config_fail(line, "key '" + key + "': cannot parse number from '" + value + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& value, int line) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        config_fail(line, "key '" + key + "': cannot parse integer from '" + value + "'");
    }
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value,
                                                int line) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) config_fail(line, "key '" + key + "': empty list entry");
        const long long v = parse_int(key, item, line);
        if (v <= 0) config_fail(line, "key '" + key + "': entries must be positive");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) config_fail(line, "key '" + key + "': empty list");
    return out;
}

}  // namespace detail

inline RunConfig parse_config_stream(std::istream& in) {
    RunConfig cfg;
    std::set<std::string> seen;
    bool have_rho1 = false, have_rho2 = false;

    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) detail::config_fail(line_no, "expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) detail::config_fail(line_no, "empty key");
        if (value.empty()) detail::config_fail(line_no, "key '" + key + "': empty value");
        if (!seen.insert(key).second) detail::config_fail(line_no, "duplicate key '" + key + "'");

        if (key == "variant") {
            if (value == "sgd") cfg.variant = Variant::sgd;
            else if (value == "sam") cfg.variant = Variant::sam;
            else if (value == "otmdr_single") cfg.variant = Variant::otmdr_single;
            else if (value == "otmdr_ensemble") cfg.variant = Variant::otmdr_ensemble;
            else if (value == "otmdr_bnn") cfg.variant = Variant::otmdr_bnn;
            else detail::config_fail(line_no, "key 'variant': unknown variant '" + value + "'");
        } else if (key == "dataset") {
            if (value != "two_moons" && value != "synth_digits" && value != "mnist_idx")
                detail::config_fail(line_no, "key 'dataset': unknown dataset '" + value + "'");
            cfg.dataset = value;
        } else if (key == "data_dir") {
            cfg.data_dir = value;
        } else if (key == "train_n") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 2) detail::config_fail(line_no, "train_n must be >= 2");
            cfg.train_n = static_cast<std::size_t>(v);
        } else if (key == "test_n") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 2) detail::config_fail(line_no, "test_n must be >= 2");
            cfg.test_n = static_cast<std::size_t>(v);
        } else if (key == "moons_noise") {
            const double v = detail::parse_double(key, value, line_no);
            if (v < 0.0) detail::config_fail(line_no, "moons_noise must be nonnegative");
            cfg.moons_noise = v;
        } else if (key == "layer_sizes") {
            cfg.model.layer_sizes = detail::parse_size_list(key, value, line_no);
        } else if (key == "activation") {
            if (value == "relu") cfg.model.activation = Activation::relu;
            else if (value == "tanh") cfg.model.activation = Activation::tanh;
            else detail::config_fail(line_no, "key 'activation': must be relu or tanh");
        } else if (key == "epochs") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 1) detail::config_fail(line_no, "epochs must be >= 1");
            cfg.epochs = static_cast<std::size_t>(v);
        } else if (key == "batch_size") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 2) detail::config_fail(line_no, "batch_size must be >= 2");
            cfg.batch_size = static_cast<std::size_t>(v);
        } else if (key == "lr") {
            const double v = detail::parse_double(key, value, line_no);
            if (!(v > 0.0)) detail::config_fail(line_no, "lr must be positive");
            cfg.lr = v;
        } else if (key == "lr_schedule") {
            if (value == "constant") cfg.lr_schedule = LrSchedule::constant;
            else if (value == "cosine") cfg.lr_schedule = LrSchedule::cosine;
            else detail::config_fail(line_no, "key 'lr_schedule': must be constant or cosine");
        } else if (key == "rho1") {
            const double v = detail::parse_double(key, value, line_no);
            if (!(v > 0.0)) detail::config_fail(line_no, "rho1 must be positive");
            cfg.rho1 = v;
            have_rho1 = true;
        } else if (key == "rho2") {
            const double v = detail::parse_double(key, value, line_no);
            if (v < 0.0) detail::config_fail(line_no, "rho2 must be nonnegative");
            cfg.rho2 = v;
            have_rho2 = true;
        } else if (key == "K") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 1) detail::config_fail(line_no, "K must be >= 1");
            cfg.K = static_cast<std::size_t>(v);
        } else if (key == "M") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 1) detail::config_fail(line_no, "M must be >= 1");
            cfg.M = static_cast<std::size_t>(v);
        } else if (key == "noise_std") {
            const double v = detail::parse_double(key, value, line_no);
            if (v < 0.0) detail::config_fail(line_no, "noise_std must be nonnegative");
            cfg.noise_std = v;
        } else if (key == "noise_mode") {
            if (value == "fixed") cfg.noise_mode = NoiseMode::fixed;
            else if (value == "paper_eq9") cfg.noise_mode = NoiseMode::paper_eq9;
            else detail::config_fail(line_no, "key 'noise_mode': must be fixed or paper_eq9");
        } else if (key == "kl_weight") {
            if (value == "auto") {
                cfg.kl_weight.reset();
            } else {
                const double v = detail::parse_double(key, value, line_no);
                if (v < 0.0) detail::config_fail(line_no, "kl_weight must be nonnegative");
                cfg.kl_weight = v;
            }
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(detail::parse_int(key, value, line_no));
        } else if (key == "out") {
            cfg.out_dir = value;
        } else if (key == "n_bins") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 1) detail::config_fail(line_no, "n_bins must be >= 1");
            cfg.n_bins = static_cast<int>(v);
        } else if (key == "calib_fraction") {
            const double v = detail::parse_double(key, value, line_no);
            if (!(v > 0.0) || v > 0.5)
                detail::config_fail(line_no, "calib_fraction must be in (0, 0.5]");
            cfg.calib_fraction = v;
        } else if (key == "k_sweep") {
            cfg.k_sweep = detail::parse_size_list(key, value, line_no);
        } else if (key == "landscape_steps") {
            const long long v = detail::parse_int(key, value, line_no);
            if (v < 3 || v % 2 == 0)
                detail::config_fail(line_no, "landscape_steps must be odd and >= 3");
            cfg.landscape_steps = static_cast<std::size_t>(v);
        } else if (key == "landscape_half_range") {
            const double v = detail::parse_double(key, value, line_no);
            if (!(v > 0.0)) detail::config_fail(line_no, "landscape_half_range must be positive");
            cfg.landscape_half_range = v;
        } else {
            detail::config_fail(line_no, "unknown key '" + key + "'");
        }
    }

    for (const char* required : {"variant", "dataset", "layer_sizes", "epochs", "batch_size", "lr"})
        if (!seen.count(required))
            throw ConfigError(std::string("config: missing required key '") + required + "'");

    if (!have_rho1) cfg.rho1 = cfg.variant == Variant::otmdr_bnn ? 0.005 : 0.05;
    if (!have_rho2) cfg.rho2 = 2.0 * cfg.rho1;
    cfg.model.validate();
    if (cfg.dataset == "mnist_idx" && cfg.data_dir.empty())
        throw ConfigError("config: dataset mnist_idx requires data_dir");
    return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config_stream(in);
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return parse_config_stream(in);
}

}  // namespace otmdr

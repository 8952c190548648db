// Command-line harness: train / eval / landscape / verify.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "otmdr/run.hpp"

namespace {

otmdr::RunConfig resolve_config(const std::string& config_path,
                                const std::optional<std::uint64_t>& seed,
                                const std::string& out_dir) {
    otmdr::RunConfig cfg = otmdr::parse_config(config_path);
    if (seed.has_value()) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    return cfg;
}

void print_epoch(const otmdr::EpochRecord& r) {
    std::printf(
        "epoch %3zu  train_loss %.4f  acc %.4f  nll %.4f  ece_cal %.4f  sharpness %+.5f\n",
        r.epoch, r.train_loss, r.acc, r.nll, r.ece_calibrated, r.sharpness);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OT-MDR training and verification toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string checkpoint_path;
    std::optional<std::uint64_t> seed_override;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "run configuration file");
        if (config_required) opt->required();
        sub->add_option("--seed", seed_override, "overrides the config seed");
        sub->add_option("--out", out_dir, "overrides the config output directory");
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write run artifacts");
    add_common(train, true);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval, true);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();

    CLI::App* landscape = app.add_subcommand("landscape", "emit a loss-landscape CSV slice");
    add_common(landscape, true);
    landscape->add_option("--checkpoint", checkpoint_path, "checkpoint to probe")->required();

    CLI::App* verify = app.add_subcommand("verify", "run the numeric verification suite");
    add_common(verify, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            const otmdr::RunConfig cfg = resolve_config(config_path, seed_override, out_dir);
            if (!cfg.k_sweep.empty()) {
                const auto summary = otmdr::run_k_sweep(cfg);
                for (const auto& j : summary) std::cout << j.dump() << "\n";
                std::cout << "sweep artifacts under " << cfg.out_dir << "\n";
                return 0;
            }
            const otmdr::TrainResult result = otmdr::run_train_files(cfg);
            for (const auto& r : result.records) print_epoch(r);
            std::cout << "artifacts under " << cfg.out_dir << "\n";
            return 0;
        }
        if (eval->parsed()) {
            const otmdr::RunConfig cfg = resolve_config(config_path, seed_override, out_dir);
            const otmdr::EvalOutput out = otmdr::run_eval(cfg, checkpoint_path);
            std::printf(
                "acc %.4f  nll %.4f  brier %.4f  ece_raw %.4f  ece_cal %.4f  aac %.4f  T* %.3f\n",
                out.acc, out.nll, out.brier, out.ece_raw, out.ece_calibrated, out.aac,
                out.temperature);
            std::cout << "wrote " << cfg.out_dir << "/eval.json\n";
            return 0;
        }
        if (landscape->parsed()) {
            const otmdr::RunConfig cfg = resolve_config(config_path, seed_override, out_dir);
            const std::string csv = otmdr::run_landscape(cfg, checkpoint_path);
            std::cout << "wrote " << csv << "\n";
            return 0;
        }
        if (verify->parsed()) {
            std::uint64_t seed = 0;
            double noise_std = 1e-4;
            std::string dir = out_dir.empty() ? "verify_out" : out_dir;
            if (!config_path.empty()) {
                const otmdr::RunConfig cfg = resolve_config(config_path, seed_override, out_dir);
                seed = cfg.seed;
                noise_std = cfg.noise_std;
                dir = cfg.out_dir;
            } else if (seed_override.has_value()) {
                seed = *seed_override;
            }
            const auto entries = otmdr::run_verify_files(seed, noise_std, dir);
            bool all_pass = true;
            for (const auto& e : entries) {
                std::printf("[%s] %-48s measured %.6g (threshold %.6g)\n",
                            e.pass ? "PASS" : "FAIL", e.name.c_str(), e.measured, e.threshold);
                all_pass = all_pass && e.pass;
            }
            std::cout << "report: " << dir << "/verify.jsonl\n";
            return all_pass ? 0 : 1;
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}

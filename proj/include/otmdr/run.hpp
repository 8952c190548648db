#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otmdr/checkpoint.hpp"
#include "otmdr/config.hpp"
#include "otmdr/data.hpp"
#include "otmdr/landscape.hpp"
#include "otmdr/metrics.hpp"
#include "otmdr/nn.hpp"
#include "otmdr/objective.hpp"
#include "otmdr/oracle.hpp"
#include "otmdr/perturb.hpp"

namespace otmdr {

using ordered_json = nlohmann::ordered_json;

constexpr double kSharpnessProbeRho = 0.05;

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double acc = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double ece_raw = 0.0;
    double ece_calibrated = 0.0;
    double aac = 0.0;
    double temperature = 1.0;
    double sharpness = 0.0;
    double wall_ms = 0.0;  // emitted to the timing sidecar, not metrics.jsonl
};

struct TrainResult {
    std::vector<EpochRecord> records;
    Checkpoint checkpoint;
    std::size_t kappa_draws = 0;  // BNN instrumentation: one per iteration
};

// ---------------------------------------------------------------------------
// Data loading.
// ---------------------------------------------------------------------------

struct DataPair {
    Dataset train;
    Dataset test;
};

namespace detail {

/// Label-stratified row selection: per class, a seed-shuffled quota
/// proportional to the class frequency, remainders distributed in class
/// order.
inline std::vector<std::size_t> stratified_rows(const Dataset& ds, std::size_t n,
                                                RngStream stream) {
    if (n > ds.size())
        throw std::invalid_argument("stratified subset: asked for " + std::to_string(n) +
                                    " of " + std::to_string(ds.size()) + " rows");
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    std::vector<std::size_t> quota(by_class.size(), 0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        quota[c] = n * by_class[c].size() / ds.size();
        assigned += quota[c];
    }
    for (std::size_t c = 0; assigned < n; c = (c + 1) % by_class.size()) {
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const std::vector<std::size_t> perm = stream.permutation(by_class[c].size());
        for (std::size_t i = 0; i < quota[c]; ++i) rows.push_back(by_class[c][perm[i]]);
    }
    const std::vector<std::size_t> order = stream.permutation(rows.size());
    std::vector<std::size_t> mixed(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) mixed[i] = rows[order[i]];
    return mixed;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.n_classes = ds.n_classes;
    const Batch b = make_batch(ds, rows);
    out.inputs = b.inputs;
    out.labels = b.labels;
    return out;
}

}  // namespace detail

/// Materializes the configured dataset pair. `scratch_dir` hosts generated
/// IDX files for synth_digits; test splits of IDX-backed data are
/// standardized with the training split's statistics.
inline DataPair load_run_data(const RunConfig& cfg, const std::string& scratch_dir) {
    DataPair out;
    if (cfg.dataset == "two_moons") {
        out.train = make_two_moons(cfg.train_n, cfg.moons_noise,
                                   detail::mix64(cfg.seed ^ 0x7261696Eull));
        out.test = make_two_moons(cfg.test_n, cfg.moons_noise,
                                  detail::mix64(cfg.seed ^ 0x74657374ull));
        return out;
    }
    if (cfg.dataset == "synth_digits") {
        const auto paths = synth_digits_to_idx(scratch_dir, cfg.train_n, cfg.test_n, cfg.seed);
        StandardizeStats stats;
        out.train = load_idx(paths[0], paths[1], nullptr, &stats);
        out.test = load_idx(paths[2], paths[3], &stats);
        return out;
    }
    if (cfg.dataset == "mnist_idx") {
        StandardizeStats stats;
        Dataset train_full = load_idx(cfg.data_dir + "/train-images-idx3-ubyte",
                                      cfg.data_dir + "/train-labels-idx1-ubyte", nullptr, &stats);
        Dataset test_full = load_idx(cfg.data_dir + "/t10k-images-idx3-ubyte",
                                     cfg.data_dir + "/t10k-labels-idx1-ubyte", &stats);
        RngStream subset = RngStream::root(cfg.seed).lane({.purpose = Rand::digits});
        out.train = detail::take_rows(train_full, detail::stratified_rows(train_full, cfg.train_n,
                                                                          subset));
        out.test = detail::take_rows(
            test_full, detail::stratified_rows(test_full, cfg.test_n, subset.with_particle(1)));
        return out;
    }
    throw std::invalid_argument("unknown dataset '" + cfg.dataset + "'");
}

// ---------------------------------------------------------------------------
// Evaluation protocol: temperature fitted on a stratified calibration split
// of the test set, metrics on the remainder; raw and calibrated ECE both
// reported.
// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> calibration_split(
    const Dataset& ds, double fraction, RngStream stream) {
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::vector<std::size_t> calib, rest;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& rows = by_class[c];
        if (rows.empty()) continue;
        std::size_t take = static_cast<std::size_t>(std::llround(fraction * rows.size()));
        take = std::max<std::size_t>(1, std::min(take, rows.size() - 1));
        const std::vector<std::size_t> perm = stream.permutation(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            (i < take ? calib : rest).push_back(rows[perm[i]]);
    }
    return {calib, rest};
}

inline Tensor slice_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    const std::size_t c = t.cols();
    Tensor out({rows.size(), c});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * c), c,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * c));
    return out;
}

template <typename T>
std::vector<T> slice(const std::vector<T>& xs, const std::vector<std::size_t>& rows) {
    std::vector<T> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(xs[r]);
    return out;
}

}  // namespace detail

/// Prediction logits of a model state. Ensembles average member softmax
/// probabilities and return their log (so temperature 1 reproduces the
/// averaged probabilities exactly); BNNs predict with the posterior mean.
inline Tensor state_logits(const Checkpoint& state, const Tensor& inputs) {
    switch (state.kind) {
        case CheckpointKind::single:
            return forward_logits(state.members.at(0), state.model, inputs);
        case CheckpointKind::ensemble: {
            EnsembleState ens{state.members};
            Tensor probs = ensemble_predict(ens, state.model, inputs);
            for (double& v : probs.data) v = std::log(std::max(v, 1e-300));
            return probs;
        }
        case CheckpointKind::bnn:
            return forward_logits(state.variational.mu, state.model, inputs);
    }
    throw std::logic_error("state_logits: unknown kind");
}

inline double state_sharpness(const Checkpoint& state, const Dataset& ds, double rho) {
    switch (state.kind) {
        case CheckpointKind::single:
            return sharpness_probe(state.members.at(0), state.model, ds, rho);
        case CheckpointKind::ensemble: {
            std::vector<double> vals;
            vals.reserve(state.members.size());
            for (const ParamVector& m : state.members)
                vals.push_back(sharpness_probe(m, state.model, ds, rho));
            return pairwise_mean(vals);
        }
        case CheckpointKind::bnn:
            return sharpness_probe(state.variational.mu, state.model, ds, rho);
    }
    throw std::logic_error("state_sharpness: unknown kind");
}

struct EvalOutput {
    double acc = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double ece_raw = 0.0;
    double ece_calibrated = 0.0;
    double aac = 0.0;
    double temperature = 1.0;
};

inline EvalOutput evaluate_state(const Checkpoint& state, const Dataset& test,
                                 const RunConfig& cfg) {
    const Tensor logits = state_logits(state, test.inputs);
    const auto [calib_rows, eval_rows] = detail::calibration_split(
        test, cfg.calib_fraction, RngStream::root(cfg.seed).lane({.purpose = Rand::calib}));

    const Tensor calib_logits = detail::slice_rows(logits, calib_rows);
    const std::vector<int> calib_labels = detail::slice(test.labels, calib_rows);
    const double t_star = temperature_scale(calib_logits, calib_labels);

    const Tensor eval_logits = detail::slice_rows(logits, eval_rows);
    const std::vector<int> eval_labels = detail::slice(test.labels, eval_rows);
    const MetricsRecord raw = compute_metrics(softmax_rows(eval_logits), eval_labels, cfg.n_bins);
    const MetricsRecord cal =
        compute_metrics(probs_at_temperature(eval_logits, t_star), eval_labels, cfg.n_bins);

    EvalOutput out;
    out.acc = cal.acc;
    out.nll = cal.nll;
    out.brier = cal.brier;
    out.ece_raw = raw.ece;
    out.ece_calibrated = cal.ece;
    out.aac = cal.aac;
    out.temperature = t_star;
    return out;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

namespace detail {

inline double scheduled_lr(const RunConfig& cfg, std::size_t epoch) {
    if (cfg.lr_schedule == LrSchedule::constant) return cfg.lr;
    return cfg.lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                           static_cast<double>(cfg.epochs)));
}

inline double ensemble_batch_nll(const EnsembleState& ens, const ModelSpec& model,
                                 const Batch& batch) {
    const Tensor probs = ensemble_predict(ens, model, batch.inputs);
    std::vector<double> terms(batch.size());
    const std::size_t c = probs.cols();
    for (std::size_t i = 0; i < batch.size(); ++i)
        terms[i] = -std::log(std::max(probs.data[i * c + batch.labels[i]], kNllProbFloor));
    return pairwise_mean(terms);
}

}  // namespace detail

/// Runs one training job as a pure function of (config, seed): parameters,
/// per-epoch metrics and the final checkpoint depend only on them (wall_ms is
/// the one measured quantity, and stays out of the deterministic artifacts).
inline TrainResult run_train(const RunConfig& cfg, const std::string& scratch_dir) {
    cfg.model.validate();
    const DataPair data = load_run_data(cfg, scratch_dir);
    if (data.train.dim() != cfg.model.input_dim())
        throw std::invalid_argument("train: dataset dim " + std::to_string(data.train.dim()) +
                                    " != model input " + std::to_string(cfg.model.input_dim()));
    const bool splits_batches = cfg.variant == Variant::otmdr_single ||
                                cfg.variant == Variant::otmdr_ensemble ||
                                cfg.variant == Variant::otmdr_bnn;
    if (splits_batches && data.train.size() % cfg.batch_size == 1)
        throw std::invalid_argument(
            "train: final batch would have 1 sample and cannot be split; adjust batch_size");
    if (cfg.batch_size > data.train.size())
        throw std::invalid_argument("train: batch_size exceeds training set size");

    const RngStream root = RngStream::root(cfg.seed);
    const double kl_weight =
        cfg.kl_weight.value_or(1.0 / static_cast<double>(data.train.size()));

    TrainResult result;
    result.checkpoint.model = cfg.model;
    switch (cfg.variant) {
        case Variant::otmdr_ensemble: {
            result.checkpoint.kind = CheckpointKind::ensemble;
            for (std::size_t m = 0; m < cfg.M; ++m) {
                RngStream member_seed = root.lane({.member = m, .purpose = Rand::init});
                result.checkpoint.members.push_back(
                    init_params(cfg.model, member_seed.next_u64()));
            }
            break;
        }
        case Variant::otmdr_bnn:
            result.checkpoint.kind = CheckpointKind::bnn;
            result.checkpoint.variational = init_variational(cfg.model, cfg.seed);
            break;
        default:
            result.checkpoint.kind = CheckpointKind::single;
            result.checkpoint.members.push_back(init_params(cfg.model, cfg.seed));
            break;
    }
    Checkpoint& state = result.checkpoint;
    const MlpObjective objective{cfg.model};

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = detail::scheduled_lr(cfg, epoch);
        PerturbConfig step_cfg = cfg.perturb();
        step_cfg.lr = lr;

        const std::vector<Batch> epoch_batches = batches(
            data.train, cfg.batch_size, root.lane({.epoch = epoch, .purpose = Rand::shuffle}),
            /*shuffle=*/true);

        std::vector<double> step_losses;
        step_losses.reserve(epoch_batches.size());
        for (std::size_t step = 0; step < epoch_batches.size(); ++step) {
            const Batch& batch = epoch_batches[step];
            const RngStream stream = root.lane({.epoch = epoch, .step = step});
            double loss_before = 0.0;
            switch (cfg.variant) {
                case Variant::sgd:
                    loss_before = evaluate_loss(state.members[0], cfg.model, batch);
                    state.members[0] = sgd_update(state.members[0], objective, batch, lr);
                    break;
                case Variant::sam:
                    loss_before = evaluate_loss(state.members[0], cfg.model, batch);
                    state.members[0] =
                        sam_update(state.members[0], objective, batch, cfg.rho1, lr);
                    break;
                case Variant::otmdr_single:
                    loss_before = evaluate_loss(state.members[0], cfg.model, batch);
                    state.members[0] =
                        otmdr_update(state.members[0], objective, batch, step_cfg, stream);
                    break;
                case Variant::otmdr_ensemble: {
                    EnsembleState ens{state.members};
                    loss_before = detail::ensemble_batch_nll(ens, cfg.model, batch);
                    state.members =
                        ensemble_otmdr_update(ens, objective, batch, step_cfg, stream).members;
                    break;
                }
                case Variant::otmdr_bnn: {
                    const VariationalParams before = state.variational;
                    BnnStepTrace trace;
                    state.variational = bnn_otmdr_update(before, cfg.model, batch, step_cfg,
                                                         stream, kl_weight, &trace);
                    ++result.kappa_draws;
                    loss_before =
                        evaluate_loss(reparam_sample(before, NoiseDraw{trace.kappa}), cfg.model,
                                      batch);
                    break;
                }
            }
            if (!std::isfinite(loss_before))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch + 1) + " step " +
                                         std::to_string(step));
            step_losses.push_back(loss_before);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = pairwise_mean(step_losses);
        const EvalOutput eval = evaluate_state(state, data.test, cfg);
        rec.acc = eval.acc;
        rec.nll = eval.nll;
        rec.brier = eval.brier;
        rec.ece_raw = eval.ece_raw;
        rec.ece_calibrated = eval.ece_calibrated;
        rec.aac = eval.aac;
        rec.temperature = eval.temperature;
        rec.sharpness = state_sharpness(state, data.train, kSharpnessProbeRho);
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                t0)
                          .count();
        result.records.push_back(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Artifact emission (all deterministic except the timing sidecar).
// ---------------------------------------------------------------------------

inline ordered_json metrics_json(const EpochRecord& r) {
    ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["acc"] = r.acc;
    j["nll"] = r.nll;
    j["brier"] = r.brier;
    j["ece_raw"] = r.ece_raw;
    j["ece_calibrated"] = r.ece_calibrated;
    j["aac"] = r.aac;
    j["temperature"] = r.temperature;
    j["sharpness"] = r.sharpness;
    return j;
}

inline void write_jsonl(const std::vector<ordered_json>& lines, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& j : lines) out << j.dump() << "\n";
}

/// Runs training and writes metrics.jsonl, timing.jsonl and checkpoint.bin
/// under cfg.out_dir. metrics.jsonl and the checkpoint are byte-reproducible
/// for a fixed (config, seed).
inline TrainResult run_train_files(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    TrainResult result = run_train(cfg, cfg.out_dir + "/data");
    std::vector<ordered_json> metric_lines, timing_lines;
    for (const EpochRecord& r : result.records) {
        metric_lines.push_back(metrics_json(r));
        timing_lines.push_back(ordered_json{{"epoch", r.epoch}, {"wall_ms", r.wall_ms}});
    }
    write_jsonl(metric_lines, cfg.out_dir + "/metrics.jsonl");
    write_jsonl(timing_lines, cfg.out_dir + "/timing.jsonl");
    save_checkpoint(result.checkpoint, cfg.out_dir + "/checkpoint.bin");
    return result;
}

/// K-ablation sweep: one record per configured K, each trained in its own
/// subdirectory, summarized in ksweep.jsonl.
inline std::vector<ordered_json> run_k_sweep(const RunConfig& cfg) {
    std::vector<ordered_json> summary;
    for (std::size_t k : cfg.k_sweep) {
        RunConfig sub = cfg;
        sub.K = k;
        sub.k_sweep.clear();
        sub.out_dir = cfg.out_dir + "/K" + std::to_string(k);
        const TrainResult result = run_train_files(sub);
        const EpochRecord& last = result.records.back();
        summary.push_back(ordered_json{{"K", k},
                                       {"final_acc", last.acc},
                                       {"final_nll", last.nll},
                                       {"final_sharpness", last.sharpness},
                                       {"out", sub.out_dir}});
    }
    std::filesystem::create_directories(cfg.out_dir);
    write_jsonl(summary, cfg.out_dir + "/ksweep.jsonl");
    return summary;
}

inline void check_checkpoint_compatible(const Checkpoint& ckpt, const RunConfig& cfg) {
    if (ckpt.model.layer_sizes != cfg.model.layer_sizes ||
        ckpt.model.activation != cfg.model.activation)
        throw std::runtime_error("incompatible checkpoint: model spec does not match config");
}

inline EvalOutput run_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    check_checkpoint_compatible(ckpt, cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const DataPair data = load_run_data(cfg, cfg.out_dir + "/data");
    const EvalOutput out = evaluate_state(ckpt, data.test, cfg);
    ordered_json j;
    j["acc"] = out.acc;
    j["nll"] = out.nll;
    j["brier"] = out.brier;
    j["ece_raw"] = out.ece_raw;
    j["ece_calibrated"] = out.ece_calibrated;
    j["aac"] = out.aac;
    j["temperature"] = out.temperature;
    std::ofstream file(cfg.out_dir + "/eval.json", std::ios::binary);
    file << j.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Landscape emission. Ensembles are shifted jointly: members are packed into
// one flat vector, the two directions live in that joint space, and the loss
// is the NLL of the averaged prediction.
// ---------------------------------------------------------------------------

namespace detail {

inline ParamVector pack_members(const std::vector<ParamVector>& members) {
    ParamVector joint;
    for (std::size_t m = 0; m < members.size(); ++m)
        for (const auto& [name, t] : members[m].segments)
            joint.segments.emplace_back("m" + std::to_string(m) + "/" + name, t);
    return joint;
}

inline std::vector<ParamVector> unpack_members(const ParamVector& joint,
                                               const std::vector<ParamVector>& like) {
    std::vector<ParamVector> members = like;
    std::size_t cursor = 0;
    for (ParamVector& member : members)
        for (auto& [_, t] : member.segments) t = joint.segments[cursor++].second;
    return members;
}

}  // namespace detail

inline LandscapeGrid landscape_of_state(const Checkpoint& ckpt, const Dataset& ds,
                                        std::uint64_t seed, double half_range,
                                        std::size_t steps) {
    RngStream dir_stream = RngStream::root(seed).lane({.purpose = Rand::directions});
    if (ckpt.kind == CheckpointKind::ensemble) {
        const ParamVector joint = detail::pack_members(ckpt.members);
        auto [d1, d2] = random_directions(joint, dir_stream);
        const Batch everything = full_batch(ds);
        return loss_grid_fn(joint, d1, d2, half_range, steps, [&](const ParamVector& p) {
            EnsembleState shifted{detail::unpack_members(p, ckpt.members)};
            return detail::ensemble_batch_nll(shifted, ckpt.model, everything);
        });
    }
    const ParamVector& params =
        ckpt.kind == CheckpointKind::bnn ? ckpt.variational.mu : ckpt.members.at(0);
    auto [d1, d2] = random_directions(params, dir_stream);
    return loss_grid(params, ckpt.model, ds, d1, d2, half_range, steps);
}

/// Writes landscape.csv plus a sidecar recording everything needed to
/// regenerate the same grid from the checkpoint.
inline std::string run_landscape(const RunConfig& cfg, const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    check_checkpoint_compatible(ckpt, cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const DataPair data = load_run_data(cfg, cfg.out_dir + "/data");
    const LandscapeGrid grid = landscape_of_state(ckpt, data.train, cfg.seed,
                                                  cfg.landscape_half_range, cfg.landscape_steps);
    const std::string csv_path = cfg.out_dir + "/landscape.csv";
    write_landscape_csv(grid, csv_path);
    ordered_json sidecar;
    sidecar["checkpoint"] = checkpoint_path;
    sidecar["seed"] = cfg.seed;
    sidecar["direction_purpose"] = "gaussian, segment-norm matched, d2 orthogonalized";
    sidecar["steps"] = cfg.landscape_steps;
    sidecar["half_range"] = cfg.landscape_half_range;
    sidecar["dataset"] = cfg.dataset;
    std::ofstream meta(cfg.out_dir + "/landscape_meta.json", std::ios::binary);
    meta << sidecar.dump(2) << "\n";
    return csv_path;
}

// ---------------------------------------------------------------------------
// Verification: the oracle suite plus the SAM-reduction identity, emitted as
// pass/fail JSON lines with measured values.
// ---------------------------------------------------------------------------

struct VerifyEntry {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
};

inline std::vector<VerifyEntry> run_verify_checks(std::uint64_t seed, double noise_std = 1e-4) {
    std::vector<VerifyEntry> entries;
    auto push = [&](const std::string& name, bool pass, double measured, double threshold,
                    std::string detail = "") {
        entries.push_back({name, pass, measured, threshold, std::move(detail)});
    };

    {  // otmdr(K=1, no noise, rho2=0, B1=B2=B) must equal SAM bit-for-bit
        const ModelSpec model{{3, 8, 2}, Activation::tanh};
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 20; ++trial) {
            const std::uint64_t s = detail::mix64(seed + trial);
            const ParamVector theta = init_params(model, s);
            Dataset ds = make_two_moons(12, 0.1, s);
            Tensor wide({12, 3});
            for (std::size_t i = 0; i < 12; ++i) {
                wide.data[i * 3 + 0] = ds.inputs.data[i * 2 + 0];
                wide.data[i * 3 + 1] = ds.inputs.data[i * 2 + 1];
                wide.data[i * 3 + 2] = 1.0;
            }
            ds.inputs = std::move(wide);
            const Batch batch = full_batch(ds);
            PerturbConfig cfg;
            cfg.rho1 = 0.05;
            cfg.rho2 = 0.0;
            cfg.K = 1;
            cfg.noise_std = 0.0;
            cfg.lr = 0.1;
            cfg.split_mode = SplitMode::full_batch;
            const ParamVector a =
                otmdr_update(theta, model, batch, cfg, RngStream::root(s).lane({.step = trial}));
            const ParamVector b = sam_update(theta, model, batch, cfg.rho1, cfg.lr);
            const std::vector<double> fa = a.flatten(), fb = b.flatten();
            for (std::size_t i = 0; i < fa.size(); ++i)
                worst = std::max(worst, std::abs(fa[i] - fb[i]));
        }
        push("sam_reduction_identity_max_abs_delta", worst == 0.0, worst, 0.0,
             "20 random states, bit equality required");
    }

    {  // Theorem 3 desk checks
        const std::vector<double> qc{1.0, 0.0};
        const WorstCase grid_q = grid_worst_case(ToyLoss::quadratic(), qc, 0.5, 201);
        const WorstCase fo_q = sam_first_order_worst(ToyLoss::quadratic(), qc, 0.5);
        push("theorem3_quadratic_first_order_vs_grid", std::abs(fo_q.value - grid_q.value) <= 1e-3,
             std::abs(fo_q.value - grid_q.value), 1e-3);

        const std::vector<double> sc{0.0};
        const WorstCase grid_s =
            grid_worst_case(ToyLoss::sine(), sc, std::numbers::pi / 2.0, 201);
        const WorstCase fo_s = sam_first_order_worst(ToyLoss::sine(), sc, std::numbers::pi / 2.0);
        push("theorem3_sine_first_order_vs_grid", std::abs(fo_s.value - grid_s.value) <= 1e-3,
             std::abs(fo_s.value - grid_s.value), 1e-3);

        const std::vector<double> rc{0.0, 0.0};
        const WorstCase grid_r = grid_worst_case(ToyLoss::rosenbrock(), rc, 0.5, 201);
        const WorstCase fo_r = sam_first_order_worst(ToyLoss::rosenbrock(), rc, 0.5);
        push("theorem3_rosenbrock_first_order_below_grid", fo_r.value <= grid_r.value,
             grid_r.value - fo_r.value, 0.0, "first-order surrogate must not beat the ball max");
    }

    {  // Theorem 2 desk checks
        const GibbsSpec spec1{{0.0}, 1.0, 1.0, 201};
        const GibbsDensity d1 = gibbs_density_grid(spec1, ToyLoss::quadratic());
        push("gibbs_mass_1d", std::abs(d1.mass() - 1.0) <= 1e-6, std::abs(d1.mass() - 1.0), 1e-6);

        const GibbsSpec spec2{{0.3, -0.2}, 0.8, 2.0, 101};
        const GibbsDensity d2 = gibbs_density_grid(spec2, ToyLoss::rosenbrock());
        push("gibbs_mass_2d", std::abs(d2.mass() - 1.0) <= 1e-6, std::abs(d2.mass() - 1.0), 1e-6);

        // density at t = 1 against a high-resolution quadrature of
        // e / integral exp(t^2) dt over [-1, 1]
        double z_ref = 0.0;
        const std::size_t hi_res = 100001;
        const double h = 2.0 / static_cast<double>(hi_res - 1);
        for (std::size_t j = 0; j < hi_res; ++j) {
            const double t = -1.0 + h * static_cast<double>(j);
            const double w = (j == 0 || j + 1 == hi_res) ? 0.5 : 1.0;
            z_ref += w * h * std::exp(t * t);
        }
        const double density_ref = std::exp(1.0) / z_ref;
        const double density_measured = d1.density.back();
        push("gibbs_quadratic_endpoint_density",
             std::abs(density_measured - density_ref) <= 1e-3,
             std::abs(density_measured - density_ref), 1e-3,
             "reference " + std::to_string(density_ref));

        double prev_mass = -1.0;
        bool monotone = true;
        for (double lambda : {1.0, 10.0, 100.0}) {
            const GibbsSpec spec{{0.0}, 1.0, lambda, 201};
            const GibbsDensity d = gibbs_density_grid(spec, ToyLoss::quadratic());
            const WorstCase ball = grid_worst_case(ToyLoss::quadratic(), {0.0}, 1.0, 201);
            const double mass = d.mass_within_cells(ball.point, 2.0);
            if (mass < prev_mass) monotone = false;
            prev_mass = mass;
        }
        push("gibbs_argmax_concentration_monotone_in_lambda", monotone, prev_mass, 0.0,
             "mass within 2 cells at lambda {1, 10, 100} must be nondecreasing");
    }

    {  // SGLD mode-seeking
        const GibbsSpec spec{{1.0}, 1.0, 10.0, 201};
        const SgldReport report = sgld_mode_check(spec, ToyLoss::quadratic(), 500,
                                                  RngStream::root(seed), noise_std);
        push("sgld_mode_fraction_within_2_cells", report.fraction_within >= 0.95,
             report.fraction_within, 0.95);
        push("sgld_mean_terminal_loss_below_ball_max",
             report.mean_terminal_loss <= report.ball_max_loss + 1e-12,
             report.ball_max_loss - report.mean_terminal_loss, 0.0);
    }

    return entries;
}

inline std::vector<VerifyEntry> run_verify_files(std::uint64_t seed, double noise_std,
                                                 const std::string& out_dir) {
    const std::vector<VerifyEntry> entries = run_verify_checks(seed, noise_std);
    std::filesystem::create_directories(out_dir);
    std::vector<ordered_json> lines;
    for (const VerifyEntry& e : entries) {
        ordered_json j;
        j["check"] = e.name;
        j["pass"] = e.pass;
        j["measured"] = e.measured;
        j["threshold"] = e.threshold;
        if (!e.detail.empty()) j["detail"] = e.detail;
        lines.push_back(j);
    }
    write_jsonl(lines, out_dir + "/verify.jsonl");
    return entries;
}

}  // namespace otmdr

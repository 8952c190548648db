#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "otmdr/run.hpp"

using namespace otmdr;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("otmdr_harness_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kBaseConfig = R"(
# two-moons smoke run
variant = otmdr_single
dataset = two_moons
train_n = 200
test_n = 100
moons_noise = 0.2
layer_sizes = 2,16,2
epochs = 2
batch_size = 32
lr = 0.05
K = 2
)";

}  // namespace

TEST_CASE("config defaults follow the conventions") {
    const RunConfig cfg = parse_config_string(kBaseConfig);
    CHECK(cfg.rho1 == 0.05);
    CHECK(cfg.rho2 == 0.10);  // doubles rho1 when absent
    CHECK(cfg.noise_std == 1e-4);
    CHECK(cfg.noise_mode == NoiseMode::fixed);
    CHECK(cfg.n_bins == 15);
    CHECK(cfg.calib_fraction == 0.1);
    CHECK_FALSE(cfg.kl_weight.has_value());

    const RunConfig explicit_rho = parse_config_string(std::string(kBaseConfig) + "rho1 = 0.2\n");
    CHECK(explicit_rho.rho2 == 0.4);

    std::string bnn = kBaseConfig;
    bnn.replace(bnn.find("otmdr_single"), std::string("otmdr_single").size(), "otmdr_bnn");
    const RunConfig bnn_cfg = parse_config_string(bnn);
    CHECK(bnn_cfg.rho1 == 0.005);
    CHECK(bnn_cfg.rho2 == 0.01);
}

TEST_CASE("config parser rejects the malformed corpus with named errors") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            parse_config_string(text);
            FAIL("expected ConfigError for: " << needle);
        } catch (const ConfigError& err) {
            CHECK_THAT(err.what(), Catch::Matchers::ContainsSubstring(needle));
        }
    };
    expect_error(std::string(kBaseConfig) + "K = 0\n", "K must be >= 1");
    expect_error(std::string(kBaseConfig) + "frobnicate = 3\n", "unknown key 'frobnicate'");
    expect_error(std::string(kBaseConfig) + "frobnicate = 3\n", "line 13");
    expect_error(std::string(kBaseConfig) + "lr = -1\n", "duplicate key");
    expect_error(std::string(kBaseConfig) + "epochs == 3\n", "duplicate");
    expect_error("variant = sgd\n", "missing required key 'dataset'");
    expect_error(std::string(kBaseConfig) + "batch_size3\n", "expected 'key = value'");
    expect_error(std::string(kBaseConfig) + "noise_std = minus\n", "cannot parse number");
    expect_error(std::string(kBaseConfig) + "activation = gelu\n", "relu or tanh");
    expect_error(std::string(kBaseConfig) + "calib_fraction = 0.9\n", "(0, 0.5]");

    std::string no_dir = kBaseConfig;
    no_dir.replace(no_dir.find("two_moons"), std::string("two_moons").size(), "mnist_idx");
    expect_error(no_dir, "requires data_dir");

    CHECK(parse_config_string(std::string(kBaseConfig) + "K = 3  # inline comment\n").K == 3);
}

TEST_CASE("checkpoints round-trip bit-for-bit") {
    TempDir dir;
    const ModelSpec model{{2, 6, 3}, Activation::tanh};

    Checkpoint single;
    single.kind = CheckpointKind::single;
    single.model = model;
    single.members.push_back(init_params(model, 3));
    save_checkpoint(single, dir.sub("single.bin"));
    const Checkpoint single_back = load_checkpoint(dir.sub("single.bin"));
    CHECK(single_back.kind == CheckpointKind::single);
    CHECK(bitwise_equal(single_back.members[0], single.members[0]));
    CHECK(single_back.model.layer_sizes == model.layer_sizes);

    Checkpoint ens;
    ens.kind = CheckpointKind::ensemble;
    ens.model = model;
    for (std::uint64_t m = 0; m < 3; ++m) ens.members.push_back(init_params(model, 10 + m));
    save_checkpoint(ens, dir.sub("ens.bin"));
    const Checkpoint ens_back = load_checkpoint(dir.sub("ens.bin"));
    REQUIRE(ens_back.members.size() == 3);
    for (std::size_t m = 0; m < 3; ++m)
        CHECK(bitwise_equal(ens_back.members[m], ens.members[m]));

    Checkpoint bnn;
    bnn.kind = CheckpointKind::bnn;
    bnn.model = model;
    bnn.variational = init_variational(model, 7);
    save_checkpoint(bnn, dir.sub("bnn.bin"));
    const Checkpoint bnn_back = load_checkpoint(dir.sub("bnn.bin"));
    CHECK(bitwise_equal(bnn_back.variational.mu, bnn.variational.mu));
    CHECK(bitwise_equal(bnn_back.variational.log_sigma, bnn.variational.log_sigma));

    std::ofstream junk(dir.sub("junk.bin"), std::ios::binary);
    junk << "NOTAMAGIC and more";
    junk.close();
    CHECK_THROWS_WITH(load_checkpoint(dir.sub("junk.bin")),
                      Catch::Matchers::ContainsSubstring("bad magic"));
}

TEST_CASE("identical train invocations are byte-identical") {
    TempDir dir;
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.seed = 4;

    cfg.out_dir = dir.sub("a");
    run_train_files(cfg);
    cfg.out_dir = dir.sub("b");
    run_train_files(cfg);

    CHECK(read_file(dir.sub("a") + "/metrics.jsonl") == read_file(dir.sub("b") + "/metrics.jsonl"));
    CHECK(read_file(dir.sub("a") + "/checkpoint.bin") ==
          read_file(dir.sub("b") + "/checkpoint.bin"));
    CHECK(read_file(dir.sub("a") + "/metrics.jsonl").find("wall_ms") == std::string::npos);
    CHECK(read_file(dir.sub("a") + "/timing.jsonl").find("wall_ms") != std::string::npos);
}

TEST_CASE("single checkpoint evaluates identically through the ensemble path") {
    TempDir dir;
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.seed = 6;
    cfg.out_dir = dir.sub("run");
    const TrainResult result = run_train(cfg, dir.sub("scratch"));

    Checkpoint as_single = result.checkpoint;
    Checkpoint as_ensemble = result.checkpoint;
    as_ensemble.kind = CheckpointKind::ensemble;

    const DataPair data = load_run_data(cfg, dir.sub("scratch"));
    const EvalOutput a = evaluate_state(as_single, data.test, cfg);
    const EvalOutput b = evaluate_state(as_ensemble, data.test, cfg);
    CHECK(a.acc == b.acc);
    CHECK(a.nll == Catch::Approx(b.nll).margin(1e-9));
    CHECK(a.ece_calibrated == Catch::Approx(b.ece_calibrated).margin(1e-9));
    CHECK(a.temperature == Catch::Approx(b.temperature).margin(1e-6));
}

TEST_CASE("calibration split is disjoint from the scored split") {
    const Dataset test = make_two_moons(100, 0.2, 3);
    const auto [calib, rest] = detail::calibration_split(
        test, 0.1, RngStream::root(1).lane({.purpose = Rand::calib}));
    CHECK(calib.size() == 10);
    CHECK(calib.size() + rest.size() == 100);
    std::set<std::size_t> seen(calib.begin(), calib.end());
    for (std::size_t idx : rest) CHECK(seen.insert(idx).second);
}

TEST_CASE("landscape artifacts regenerate identically from the sidecar inputs") {
    TempDir dir;
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.seed = 9;
    cfg.epochs = 1;
    cfg.landscape_steps = 5;
    cfg.out_dir = dir.sub("train");
    run_train_files(cfg);

    cfg.out_dir = dir.sub("ls1");
    run_landscape(cfg, dir.sub("train") + "/checkpoint.bin");
    cfg.out_dir = dir.sub("ls2");
    run_landscape(cfg, dir.sub("train") + "/checkpoint.bin");
    CHECK(read_file(dir.sub("ls1") + "/landscape.csv") ==
          read_file(dir.sub("ls2") + "/landscape.csv"));
    const std::string csv = read_file(dir.sub("ls1") + "/landscape.csv");
    CHECK(csv.rfind("alpha,beta,loss\n", 0) == 0);

    RunConfig incompatible = cfg;
    incompatible.model.layer_sizes = {2, 8, 2};
    CHECK_THROWS_WITH(run_landscape(incompatible, dir.sub("train") + "/checkpoint.bin"),
                      Catch::Matchers::ContainsSubstring("incompatible checkpoint"));
}

TEST_CASE("bnn training draws kappa once per iteration and lowers train NLL") {
    TempDir dir;
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.variant = Variant::otmdr_bnn;
    cfg.rho1 = 0.005;
    cfg.rho2 = 0.01;
    cfg.epochs = 8;
    cfg.seed = 2;
    const TrainResult result = run_train(cfg, dir.sub("scratch"));
    const std::size_t steps_per_epoch = (200 + 32 - 1) / 32;
    CHECK(result.kappa_draws == cfg.epochs * steps_per_epoch);
    CHECK(result.records.back().train_loss < result.records.front().train_loss);
    for (const auto& [_, t] : result.checkpoint.variational.log_sigma.segments)
        for (double v : t.data) CHECK(std::exp(v) > 0.0);
}

TEST_CASE("k sweep emits one record per configured K") {
    TempDir dir;
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.epochs = 1;
    cfg.train_n = 64;
    cfg.test_n = 40;
    cfg.k_sweep = {1, 2};
    cfg.out_dir = dir.sub("sweep");
    const auto summary = run_k_sweep(cfg);
    REQUIRE(summary.size() == 2);
    CHECK(summary[0]["K"] == 1);
    CHECK(summary[1]["K"] == 2);
    CHECK(std::filesystem::exists(dir.sub("sweep") + "/K1/metrics.jsonl"));
    CHECK(std::filesystem::exists(dir.sub("sweep") + "/K2/checkpoint.bin"));
    CHECK(std::filesystem::exists(dir.sub("sweep") + "/ksweep.jsonl"));
}

TEST_CASE("verify suite passes and writes a report") {
    TempDir dir;
    const auto entries = run_verify_files(0, 1e-4, dir.sub("verify"));
    CHECK(entries.size() >= 8);
    for (const auto& e : entries) {
        INFO(e.name << " measured " << e.measured);
        CHECK(e.pass);
    }
    const std::string report = read_file(dir.sub("verify") + "/verify.jsonl");
    CHECK(report.find("sam_reduction_identity") != std::string::npos);
    CHECK(report.find("\"pass\":true") != std::string::npos);
}

TEST_CASE("sharpness probe at a converged run stays above -1e-6") {
    TempDir dir;
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.variant = Variant::sgd;
    cfg.epochs = 30;
    cfg.seed = 1;
    const TrainResult result = run_train(cfg, dir.sub("scratch"));
    CHECK(result.records.back().sharpness >= -1e-6);
}

TEST_CASE("train rejects a non-splittable tail batch for particle variants") {
    RunConfig cfg = parse_config_string(kBaseConfig);
    cfg.train_n = 65;  // 65 % 32 == 1
    TempDir dir;
    CHECK_THROWS_WITH(run_train(cfg, dir.sub("scratch")),
                      Catch::Matchers::ContainsSubstring("cannot be split"));
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "otmdr/landscape.hpp"
#include "otmdr/perturb.hpp"

using namespace otmdr;

namespace {

ParamVector point2(double a, double b) {
    ParamVector p;
    p.add("theta", Tensor({2}, {a, b}));
    return p;
}

}  // namespace

TEST_CASE("random directions are segment-normalized and orthogonal") {
    const ModelSpec model{{2, 8, 2}, Activation::relu};
    ParamVector params = init_params(model, 3);
    for (auto& [name, t] : params.segments)
        if (name[0] == 'b')
            for (double& v : t.data) v = 0.25;  // give biases a nonzero norm

    RngStream stream = RngStream::root(11).lane({.purpose = Rand::directions});
    const auto [d1, d2] = random_directions(params, stream);
    CHECK(std::abs(dot(d1, d2)) <= 1e-10);

    for (std::size_t s = 0; s < params.segments.size(); ++s) {
        double pn = 0.0, dn = 0.0;
        for (double v : params.segments[s].second.data) pn += v * v;
        for (double v : d1.segments[s].second.data) dn += v * v;
        CHECK(std::sqrt(dn) == Catch::Approx(std::sqrt(pn)).margin(1e-12));
    }

    RngStream stream2 = RngStream::root(11).lane({.purpose = Rand::directions});
    const auto [e1, e2] = random_directions(params, stream2);
    CHECK(bitwise_equal(d1, e1));
    CHECK(bitwise_equal(d2, e2));
}

TEST_CASE("zero-norm segments get zero directions") {
    const ModelSpec model{{2, 4, 2}, Activation::relu};
    const ParamVector params = init_params(model, 5);  // biases are exactly zero
    RngStream stream = RngStream::root(7).lane({.purpose = Rand::directions});
    const auto [d1, d2] = random_directions(params, stream);
    for (double v : d1.segment("b0").data) CHECK(v == 0.0);
}

TEST_CASE("loss grid center cell equals the base loss exactly") {
    const ModelSpec model{{2, 5, 2}, Activation::tanh};
    const ParamVector params = init_params(model, 9);
    const Dataset ds = make_two_moons(24, 0.2, 3);
    RngStream stream = RngStream::root(2).lane({.purpose = Rand::directions});
    const auto [d1, d2] = random_directions(params, stream);
    const LandscapeGrid grid = loss_grid(params, model, ds, d1, d2, 1.0, 5);
    const double center = evaluate_loss(params, model, full_batch(ds));
    CHECK(grid.at(2, 2) == center);
    CHECK(grid.alphas[2] == 0.0);
    CHECK(grid.losses.size() == 25);

    CHECK_THROWS_AS(loss_grid(params, model, ds, d1, d2, 1.0, 4), std::invalid_argument);
}

TEST_CASE("quadratic landscape is centrally symmetric around the origin") {
    ParamVector origin = point2(0.0, 0.0);
    ParamVector d1 = point2(0.8, 0.1);
    ParamVector d2 = point2(-0.1, 0.9);
    Batch dummy;
    dummy.inputs = Tensor({1, 1});
    dummy.labels = {0};
    const LandscapeGrid grid =
        loss_grid_fn(origin, d1, d2, 1.0, 9,
                     [&](const ParamVector& p) { return quadratic_head_loss(p); });
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 9; ++j)
            CHECK(grid.at(i, j) == Catch::Approx(grid.at(8 - i, 8 - j)).margin(1e-9));
}

TEST_CASE("landscape csv has header plus one row per cell") {
    ParamVector origin = point2(0.0, 0.0);
    const LandscapeGrid grid =
        loss_grid_fn(origin, point2(1.0, 0.0), point2(0.0, 1.0), 1.0, 41,
                     [&](const ParamVector& p) { return quadratic_head_loss(p); });
    const std::string path =
        (std::filesystem::temp_directory_path() / "otmdr_landscape_test.csv").string();
    write_landscape_csv(grid, path);
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    CHECK(line == "alpha,beta,loss");
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1681);
    std::filesystem::remove(path);
}

TEST_CASE("sharpness probe on the quadratic head") {
    // L = 0.5 ||theta||^2 at (1,0): ascent to (1.5,0) raises the loss by 0.625
    ParamVector theta = point2(1.0, 0.0);
    Batch dummy;
    dummy.inputs = Tensor({1, 1});
    dummy.labels = {0};
    const QuadraticObjective quad;
    const ParamVector g = quad.gradient(theta, dummy);
    const double gnorm = norm2(g);
    const ParamVector shifted = add_scaled(theta, 0.5 / gnorm, g);
    const double probe = quad.loss(shifted, dummy) - quad.loss(theta, dummy);
    CHECK(probe == Catch::Approx(0.625).margin(1e-12));
}

TEST_CASE("sharpness probe approximates rho * gradient norm for small rho") {
    const ModelSpec model{{2, 6, 2}, Activation::tanh};
    const ParamVector params = init_params(model, 12);
    const Dataset ds = make_two_moons(32, 0.2, 8);
    const double rho = 1e-4;
    const double probe = sharpness_probe(params, model, ds, rho);
    const double gnorm = norm2(gradient(params, model, full_batch(ds)));
    CHECK(probe == Catch::Approx(rho * gnorm).epsilon(0.05));

    CHECK_THROWS_AS(sharpness_probe(params, model, ds, 0.0), std::invalid_argument);
}

TEST_CASE("sharpness probe is zero where the gradient vanishes") {
    // zero weights, duplicated input with both labels: the per-class terms
    // cancel exactly, so the full gradient is zero
    const ModelSpec model{{2, 2}, Activation::relu};
    ParamVector p;
    p.add("w0", Tensor({2, 2}));
    p.add("b0", Tensor({2}));
    Dataset ds;
    ds.inputs = Tensor({2, 2}, {1.0, 0.0, 1.0, 0.0});
    ds.labels = {0, 1};
    ds.n_classes = 2;
    CHECK(norm2(gradient(p, model, full_batch(ds))) < 1e-12);
    CHECK(sharpness_probe(p, model, ds, 0.05) == 0.0);
}

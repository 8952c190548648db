#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "otmdr/oracle.hpp"

using namespace otmdr;

TEST_CASE("grid worst case on the quadratic ball") {
    const WorstCase wc = grid_worst_case(ToyLoss::quadratic(), {1.0, 0.0}, 0.5, 201);
    CHECK(wc.value == Catch::Approx(2.25).margin(1e-9));
    CHECK(wc.point[0] == Catch::Approx(1.5).margin(wc.cell));
    CHECK(std::abs(wc.point[1]) <= wc.cell);
}

TEST_CASE("grid worst case on sine") {
    const WorstCase wc = grid_worst_case(ToyLoss::sine(), {0.0}, std::numbers::pi / 2.0, 201);
    CHECK(wc.value == Catch::Approx(1.0).margin(1e-9));
    CHECK(wc.point[0] == Catch::Approx(std::numbers::pi / 2.0).margin(wc.cell));
}

TEST_CASE("grid worst case tie-break picks the lexicographically smallest point") {
    const WorstCase wc = grid_worst_case(ToyLoss::quadratic(), {0.0}, 1.0, 201);
    CHECK(wc.value == Catch::Approx(1.0).margin(1e-12));
    CHECK(wc.point[0] == Catch::Approx(-1.0).margin(1e-12));  // -1 and +1 tie
}

TEST_CASE("rosenbrock grid maximum regression value") {
    const WorstCase wc = grid_worst_case(ToyLoss::rosenbrock(), {0.0, 0.0}, 0.5, 201);
    // Frozen from this oracle itself (resolution 201); guards future changes.
    CHECK(wc.value == Catch::Approx(26.285605624999987).margin(1e-9));
    CHECK(wc.point[0] == Catch::Approx(-0.165).margin(1e-12));
    CHECK(wc.point[1] == Catch::Approx(-0.47).margin(1e-12));
}

TEST_CASE("first-order worst point matches the grid on radially monotone losses") {
    const WorstCase grid = grid_worst_case(ToyLoss::quadratic(), {1.0, 0.0}, 0.5, 201);
    const WorstCase fo = sam_first_order_worst(ToyLoss::quadratic(), {1.0, 0.0}, 0.5);
    CHECK(fo.point[0] == Catch::Approx(1.5).margin(1e-12));
    CHECK(fo.point[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(std::abs(fo.value - grid.value) <= 1e-3);

    const WorstCase grid_s = grid_worst_case(ToyLoss::sine(), {0.0}, std::numbers::pi / 2.0, 201);
    const WorstCase fo_s = sam_first_order_worst(ToyLoss::sine(), {0.0}, std::numbers::pi / 2.0);
    CHECK(std::abs(fo_s.value - grid_s.value) <= 1e-3);
}

TEST_CASE("first-order point is exact for a linear tabulated loss") {
    const double slope = -1.7;
    const ToyLoss lin = ToyLoss::table1d({-10.0, 10.0}, {-10.0 * slope, 10.0 * slope});
    const WorstCase fo = sam_first_order_worst(lin, {0.5}, 0.25);
    CHECK(fo.point[0] == Catch::Approx(0.25).margin(1e-9));  // descends toward negative slope side
    const WorstCase grid = grid_worst_case(lin, {0.5}, 0.25, 801);
    CHECK(fo.value == Catch::Approx(grid.value).margin(1e-9));
}

TEST_CASE("first-order never beats the exhaustive ball max on rosenbrock") {
    const WorstCase grid = grid_worst_case(ToyLoss::rosenbrock(), {0.0, 0.0}, 0.5, 201);
    const WorstCase fo = sam_first_order_worst(ToyLoss::rosenbrock(), {0.0, 0.0}, 0.5);
    CHECK(fo.value <= grid.value);
}

TEST_CASE("zero gradient stays at the center") {
    const WorstCase fo = sam_first_order_worst(ToyLoss::quadratic(), {0.0, 0.0}, 0.5);
    CHECK(fo.point == std::vector<double>{0.0, 0.0});
    CHECK(fo.value == 0.0);
}

TEST_CASE("gibbs density normalizes to unit mass") {
    const GibbsSpec one_d{{0.0}, 1.0, 1.0, 201};
    CHECK(std::abs(gibbs_density_grid(one_d, ToyLoss::quadratic()).mass() - 1.0) <= 1e-6);

    const GibbsSpec two_d{{0.25, -0.1}, 0.7, 3.0, 101};
    CHECK(std::abs(gibbs_density_grid(two_d, ToyLoss::rosenbrock()).mass() - 1.0) <= 1e-6);
}

TEST_CASE("lambda zero gives the uniform density") {
    const GibbsSpec spec{{0.0}, 0.8, 0.0, 101};
    const GibbsDensity d = gibbs_density_grid(spec, ToyLoss::quadratic());
    for (std::size_t i = 0; i < d.density.size(); ++i)
        CHECK(d.density[i] == Catch::Approx(1.0 / 1.6).margin(1e-12));
}

TEST_CASE("gibbs endpoint density matches a high-resolution quadrature") {
    const GibbsSpec spec{{0.0}, 1.0, 1.0, 201};
    const GibbsDensity d = gibbs_density_grid(spec, ToyLoss::quadratic());
    double z_ref = 0.0;
    const std::size_t hi = 100001;
    const double h = 2.0 / static_cast<double>(hi - 1);
    for (std::size_t j = 0; j < hi; ++j) {
        const double t = -1.0 + h * static_cast<double>(j);
        z_ref += ((j == 0 || j + 1 == hi) ? 0.5 : 1.0) * h * std::exp(t * t);
    }
    const double reference = std::exp(1.0) / z_ref;  // ~ e / 2.9253
    CHECK(reference == Catch::Approx(std::exp(1.0) / 2.9253).epsilon(1e-3));
    CHECK(d.density.front() == Catch::Approx(reference).margin(1e-3));
    CHECK(d.density.back() == Catch::Approx(reference).margin(1e-3));
}

TEST_CASE("gibbs argmax coincides with the ball argmax for lambda >= 1") {
    for (double lambda : {1.0, 4.0}) {
        const GibbsSpec spec{{0.0}, std::numbers::pi / 2.0, lambda, 201};
        const GibbsDensity d = gibbs_density_grid(spec, ToyLoss::sine());
        const WorstCase wc =
            grid_worst_case(ToyLoss::sine(), {0.0}, std::numbers::pi / 2.0, 201);
        CHECK(d.point_at(d.argmax_index())[0] == Catch::Approx(wc.point[0]).margin(1e-12));
    }
}

TEST_CASE("argmax concentration is monotone in lambda") {
    double prev = -1.0;
    for (double lambda : {1.0, 10.0, 100.0}) {
        const GibbsSpec spec{{0.0}, 1.0, lambda, 201};
        const GibbsDensity d = gibbs_density_grid(spec, ToyLoss::quadratic());
        const WorstCase ball = grid_worst_case(ToyLoss::quadratic(), {0.0}, 1.0, 201);
        const double mass = d.mass_within_cells(ball.point, 2.0);
        CHECK(mass >= prev);
        prev = mass;
    }
    // asymmetric single-mode loss as well
    prev = -1.0;
    for (double lambda : {1.0, 10.0, 100.0}) {
        const GibbsSpec spec{{0.0}, std::numbers::pi / 2.0, lambda, 201};
        const GibbsDensity d = gibbs_density_grid(spec, ToyLoss::sine());
        const WorstCase ball =
            grid_worst_case(ToyLoss::sine(), {0.0}, std::numbers::pi / 2.0, 201);
        const double mass = d.mass_within_cells(ball.point, 2.0);
        CHECK(mass >= prev);
        prev = mass;
    }
}

TEST_CASE("bilinear table interpolation is exact at nodes and midpoints") {
    const ToyLoss table = ToyLoss::table2d({0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0, 2.0, 3.0});
    const std::array<double, 2> node = {1.0, 0.0};
    CHECK(table(std::span<const double>(node.data(), 2)) == Catch::Approx(2.0).margin(1e-12));
    const std::array<double, 2> mid = {0.5, 0.5};
    CHECK(table(std::span<const double>(mid.data(), 2)) == Catch::Approx(1.5).margin(1e-12));
}

TEST_CASE("sgld chains seek the gibbs mode") {
    const GibbsSpec spec{{1.0}, 1.0, 10.0, 201};
    const SgldReport report =
        sgld_mode_check(spec, ToyLoss::quadratic(), 500, RngStream::root(0), 1e-4);
    CHECK(report.trials == 500);
    CHECK(report.mode_point[0] == Catch::Approx(2.0).margin(1e-12));
    CHECK(report.fraction_within >= 0.95);
    CHECK(report.mean_terminal_loss <= report.ball_max_loss + 1e-12);
}

TEST_CASE("noise-free single-step chain is deterministic") {
    const GibbsSpec spec{{1.0}, 1.0, 10.0, 201};
    const SgldReport report = sgld_mode_check(spec, ToyLoss::quadratic(), 3, RngStream::root(5),
                                              /*noise_std=*/0.0, /*rho1=*/0.5, /*rho2=*/0.0);
    // terminal = center + rho1 * sign(gradient) = 1.5 for every trial
    CHECK(report.mean_terminal_loss == Catch::Approx(2.25).margin(1e-12));
    CHECK(report.fraction_within == 0.0);  // 1.5 is far from the mode at 2.0
}

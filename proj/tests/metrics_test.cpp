#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "otmdr/metrics.hpp"
#include "otmdr/rng.hpp"

using namespace otmdr;

namespace {

Tensor two_class_probs(std::initializer_list<double> p0) {
    Tensor t({p0.size(), 2});
    std::size_t i = 0;
    for (double p : p0) {
        t.data[i * 2] = p;
        t.data[i * 2 + 1] = 1.0 - p;
        ++i;
    }
    return t;
}

/// Fixture with a stationary NLL at T = 1: one confidently-correct sample
/// (a, -a) and one mildly-wrong sample (b, -b), b tuned by bisection on the
/// numeric dNLL/dT. Uses only nll_at_temperature, not the search under test.
Tensor stationary_fixture(std::vector<int>& labels) {
    const double a = 2.0;
    auto derivative_at_one = [&](double b) {
        Tensor logits({2, 2}, {a, -a, b, -b});
        const std::vector<int> y = {0, 1};
        const double h = 1e-6;
        return (nll_at_temperature(logits, y, 1.0 + h) - nll_at_temperature(logits, y, 1.0 - h)) /
               (2.0 * h);
    };
    double lo = 1e-4, hi = 2.0;
    REQUIRE(derivative_at_one(lo) > 0.0);
    REQUIRE(derivative_at_one(hi) < 0.0);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (derivative_at_one(mid) > 0.0 ? lo : hi) = mid;
    }
    const double b = 0.5 * (lo + hi);
    labels = {0, 1};
    return Tensor({2, 2}, {a, -a, b, -b});
}

double grid_search_temperature(const Tensor& logits, const std::vector<int>& labels) {
    double best_t = 0.05, best = nll_at_temperature(logits, labels, 0.05);
    for (double t = 0.05; t <= 10.0; t += 1e-3) {
        const double v = nll_at_temperature(logits, labels, t);
        if (v < best) {
            best = v;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace

TEST_CASE("one-hot correct predictions are perfect") {
    Tensor probs({3, 3});
    probs.at(0, 1) = 1.0;
    probs.at(1, 0) = 1.0;
    probs.at(2, 2) = 1.0;
    const MetricsRecord rec = compute_metrics(probs, {1, 0, 2});
    CHECK(rec.acc == 1.0);
    CHECK(rec.nll == Catch::Approx(0.0).margin(1e-12));
    CHECK(rec.brier == Catch::Approx(0.0).margin(1e-12));
    CHECK(rec.ece == Catch::Approx(0.0).margin(1e-12));
    CHECK(rec.aac == 0.0);
    CHECK_FALSE(rec.temperature.has_value());
}

TEST_CASE("hand-derived two-sample fixture") {
    const Tensor probs = two_class_probs({0.8, 0.6});
    const MetricsRecord rec = compute_metrics(probs, {0, 1});
    CHECK(rec.acc == 0.5);
    const double expected_nll = -(std::log(0.8) + std::log(0.4)) / 2.0;
    CHECK(rec.nll == Catch::Approx(expected_nll).margin(1e-9));
    CHECK(rec.brier == Catch::Approx(0.40).margin(1e-9));
    CHECK(rec.aac == Catch::Approx(0.6).margin(1e-12));  // one miss at confidence 0.6
    CHECK(kDefaultEceBins == 15);
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    Tensor probs({1, 4});
    for (std::size_t j = 0; j < 4; ++j) probs.data[j] = 0.25;
    CHECK(compute_metrics(probs, {0}).acc == 1.0);
    CHECK(compute_metrics(probs, {2}).acc == 0.0);
}

TEST_CASE("non-simplex rows are rejected with a row index") {
    Tensor probs({2, 2}, {0.5, 0.5, 0.9, 0.3});
    CHECK_THROWS_WITH(compute_metrics(probs, {0, 1}),
                      Catch::Matchers::ContainsSubstring("row 1"));
}

TEST_CASE("nll clamps confidently wrong predictions") {
    Tensor probs({1, 2}, {1.0, 0.0});
    const MetricsRecord rec = compute_metrics(probs, {1});
    CHECK(std::isfinite(rec.nll));
    CHECK(rec.nll == Catch::Approx(-std::log(1e-12)).margin(1e-9));
}

TEST_CASE("a calibrated stream has near-zero ECE") {
    const std::size_t n = 10000;
    RngStream rng = RngStream::root(99).lane({.purpose = Rand::calib});
    Tensor probs({n, 2});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = 0.55 + 0.4 * rng.uniform();
        probs.at(i, 0) = c;
        probs.at(i, 1) = 1.0 - c;
        labels[i] = rng.uniform() < c ? 0 : 1;
    }
    const MetricsRecord rec = compute_metrics(probs, labels);
    CHECK(rec.ece < 0.01);
    CHECK(rec.brier >= 0.0);
    CHECK(rec.brier <= 2.0);
    CHECK(rec.nll >= 0.0);

    // order invariance
    RngStream shuffle = RngStream::root(7).lane({.purpose = Rand::shuffle});
    const std::vector<std::size_t> perm = shuffle.permutation(n);
    Tensor shuffled({n, 2});
    std::vector<int> shuffled_labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        shuffled.at(i, 0) = probs.at(perm[i], 0);
        shuffled.at(i, 1) = probs.at(perm[i], 1);
        shuffled_labels[i] = labels[perm[i]];
    }
    const MetricsRecord rec2 = compute_metrics(shuffled, shuffled_labels);
    CHECK(rec2.acc == rec.acc);
    CHECK(rec2.nll == Catch::Approx(rec.nll).margin(1e-12));
    CHECK(rec2.brier == Catch::Approx(rec.brier).margin(1e-12));
    CHECK(rec2.ece == Catch::Approx(rec.ece).margin(1e-12));
}

TEST_CASE("temperature search finds the stationary fixture") {
    std::vector<int> labels;
    const Tensor logits = stationary_fixture(labels);
    const double t_star = temperature_scale(logits, labels);
    CHECK(t_star == Catch::Approx(1.0).margin(1e-3));
    CHECK(grid_search_temperature(logits, labels) == Catch::Approx(1.0).margin(2e-3));

    Tensor doubled = logits;
    for (double& v : doubled.data) v *= 2.0;
    const double t_doubled = temperature_scale(doubled, labels);
    CHECK(t_doubled == Catch::Approx(2.0).margin(1e-2));
    CHECK(grid_search_temperature(doubled, labels) == Catch::Approx(2.0).margin(2e-3));
}

TEST_CASE("temperature scaling never increases NLL") {
    RngStream rng = RngStream::root(31).lane({.purpose = Rand::trial});
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 40;
        Tensor logits({n, 3});
        for (double& v : logits.data) v = 3.0 * rng.normal();
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.below(3));
        const double t_star = temperature_scale(logits, labels);
        CHECK(nll_at_temperature(logits, labels, t_star) <=
              nll_at_temperature(logits, labels, 1.0));

        // argmax (hence accuracy) is invariant under the fitted temperature
        const MetricsRecord raw = compute_metrics(softmax_rows(logits), labels);
        const MetricsRecord cal = compute_metrics(probs_at_temperature(logits, t_star), labels);
        CHECK(raw.acc == cal.acc);
    }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/nn.hpp"
#include "otmdr/tensor.hpp"

namespace otmdr {

struct MetricsRecord {
    double acc = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double ece = 0.0;
    double aac = 0.0;
    std::optional<double> temperature;  // set once calibration ran
};

constexpr int kDefaultEceBins = 15;
constexpr double kNllProbFloor = 1e-12;  // confident wrong predictions stay finite

/// Predicted class of a probability row; ties resolve to the lowest index.
inline int argmax_row(const double* p, std::size_t c) {
    int best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (p[j] > p[best]) best = static_cast<int>(j);
    return best;
}

/// Accuracy, NLL, Brier and ECE over probability rows, plus AAC.
///
/// AAC here is the mean confidence (max probability) assigned to
/// misclassified samples, 0 when there are none — lower is better. This is a
/// local definition; feed post-temperature probabilities to get the
/// calibrated variant.
inline MetricsRecord compute_metrics(const Tensor& probs, const std::vector<int>& labels,
                                     int n_bins = kDefaultEceBins) {
    const std::size_t n = probs.rows(), c = probs.cols();
    if (n == 0) throw std::invalid_argument("metrics: empty input");
    if (labels.size() != n)
        throw std::invalid_argument("metrics: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(n) + " rows");
    if (n_bins < 1) throw std::invalid_argument("metrics: n_bins must be >= 1");

    std::vector<double> nll_terms(n), brier_terms(n);
    std::vector<double> bin_conf(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> bin_acc(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<std::size_t> bin_count(static_cast<std::size_t>(n_bins), 0);
    std::size_t correct = 0;
    double wrong_conf = 0.0;
    std::size_t wrong = 0;

    for (std::size_t i = 0; i < n; ++i) {
        const double* p = probs.data.data() + i * c;
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (p[j] < -1e-9)
                throw std::invalid_argument("metrics: negative probability at row " +
                                            std::to_string(i));
            sum += p[j];
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("metrics: row " + std::to_string(i) +
                                        " is not on the simplex (sum " + std::to_string(sum) + ")");
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw std::invalid_argument("metrics: label out of range at row " + std::to_string(i));

        const int pred = argmax_row(p, c);
        const bool hit = pred == y;
        correct += hit ? 1 : 0;

        nll_terms[i] = -std::log(std::max(p[y], kNllProbFloor));
        double brier = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double target = static_cast<std::size_t>(y) == j ? 1.0 : 0.0;
            brier += (p[j] - target) * (p[j] - target);
        }
        brier_terms[i] = brier;

        const double conf = p[pred];
        const std::size_t bin = std::min<std::size_t>(
            static_cast<std::size_t>(std::max(0.0, conf) * n_bins), static_cast<std::size_t>(n_bins - 1));
        bin_conf[bin] += conf;
        bin_acc[bin] += hit ? 1.0 : 0.0;
        bin_count[bin] += 1;

        if (!hit) {
            wrong_conf += conf;
            wrong += 1;
        }
    }

    MetricsRecord rec;
    rec.acc = static_cast<double>(correct) / static_cast<double>(n);
    rec.nll = pairwise_mean(nll_terms);
    rec.brier = pairwise_mean(brier_terms);
    double ece = 0.0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(n_bins); ++b) {
        if (bin_count[b] == 0) continue;
        const double count = static_cast<double>(bin_count[b]);
        ece += (count / static_cast<double>(n)) * std::abs(bin_acc[b] / count - bin_conf[b] / count);
    }
    rec.ece = ece;
    rec.aac = wrong == 0 ? 0.0 : wrong_conf / static_cast<double>(wrong);
    return rec;
}

/// Mean NLL of softmax(logits / T), evaluated through log-sum-exp.
inline double nll_at_temperature(const Tensor& logits, const std::vector<int>& labels, double t) {
    const std::size_t n = logits.rows(), c = logits.cols();
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data.data() + i * c;
        double zmax = z[0];
        for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp((z[j] - zmax) / t);
        terms[i] = std::log(denom) - (z[labels[i]] - zmax) / t;
    }
    return pairwise_mean(terms);
}

inline Tensor probs_at_temperature(const Tensor& logits, double t) {
    Tensor scaled = logits;
    for (double& v : scaled.data) v /= t;
    return softmax_rows(scaled);
}

/// Optimal softmax temperature on [0.05, 10] by golden-section search to an
/// interval below 1e-4. T = 1 is always feasible, so the result never has a
/// higher NLL than the unscaled logits.
inline double temperature_scale(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rows() < 2) throw std::invalid_argument("temperature_scale: need n >= 2");
    if (labels.size() != logits.rows())
        throw std::invalid_argument("temperature_scale: label count mismatch");
    constexpr double kInvPhi = 0.6180339887498949;
    double a = 0.05, b = 10.0;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = nll_at_temperature(logits, labels, x1);
    double f2 = nll_at_temperature(logits, labels, x2);
    while (b - a > 1e-4) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = nll_at_temperature(logits, labels, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = nll_at_temperature(logits, labels, x2);
        }
    }
    const double t_star = 0.5 * (a + b);
    if (nll_at_temperature(logits, labels, t_star) > nll_at_temperature(logits, labels, 1.0))
        return 1.0;
    return t_star;
}

}  // namespace otmdr

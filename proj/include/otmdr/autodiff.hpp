#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otmdr/tensor.hpp"

namespace otmdr::ad {

/// One node of a reverse-mode graph: a value, its adjoint, and a pull
/// function that scatters the adjoint into the parents. Nodes are owned by a
/// Graph and live exactly as long as it does; the graph is rebuilt per loss
/// evaluation rather than kept as a persistent tape.
struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Node&)> pull;
};

class Graph {
public:
    Node* leaf(Tensor v) { return make(std::move(v), nullptr); }

    /// (n,k) x (k,m) -> (n,m)
    Node* matmul(Node* a, Node* b) {
        const std::size_t n = a->value.rows(), k = a->value.cols();
        const std::size_t k2 = b->value.rows(), m = b->value.cols();
        if (k != k2)
            throw std::invalid_argument("matmul: inner dims " + std::to_string(k) + " vs " +
                                        std::to_string(k2));
        Tensor out({n, m});
        const double* A = a->value.data.data();
        const double* B = b->value.data.data();
        double* C = out.data.data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double av = A[i * k + p];
                const double* Brow = B + p * m;
                double* Crow = C + i * m;
                for (std::size_t j = 0; j < m; ++j) Crow[j] += av * Brow[j];
            }
        }
        return make(std::move(out), [a, b, n, k, m](Node& self) {
            const double* G = self.grad.data.data();
            const double* A = a->value.data.data();
            const double* B = b->value.data.data();
            double* dA = a->grad.data.data();
            double* dB = b->grad.data.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* Grow = G + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* Brow = B + p * m;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += Grow[j] * Brow[j];
                    dA[i * k + p] += acc;
                }
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    double* dBrow = dB + p * m;
                    for (std::size_t j = 0; j < m; ++j) dBrow[j] += av * Grow[j];
                }
            }
        });
    }

    /// Adds a length-m bias row to every row of a (n,m) matrix.
    Node* add_row(Node* x, Node* bias) {
        const std::size_t n = x->value.rows(), m = x->value.cols();
        if (bias->value.size() != m)
            throw std::invalid_argument("add_row: bias length " +
                                        std::to_string(bias->value.size()) + " != cols " +
                                        std::to_string(m));
        Tensor out = x->value;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += bias->value.data[j];
        return make(std::move(out), [x, bias, n, m](Node& self) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const double g = self.grad.data[i * m + j];
                    x->grad.data[i * m + j] += g;
                    bias->grad.data[j] += g;
                }
        });
    }

    Node* relu(Node* x) {
        Tensor out = x->value;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return make(std::move(out), [x](Node& self) {
            for (std::size_t i = 0; i < self.value.size(); ++i)
                if (x->value.data[i] > 0.0) x->grad.data[i] += self.grad.data[i];
        });
    }

    Node* tanh_act(Node* x) {
        Tensor out = x->value;
        for (double& v : out.data) v = std::tanh(v);
        return make(std::move(out), [x](Node& self) {
            for (std::size_t i = 0; i < self.value.size(); ++i) {
                const double t = self.value.data[i];
                x->grad.data[i] += self.grad.data[i] * (1.0 - t * t);
            }
        });
    }

    /// Elementwise a*x + b with scalar coefficients.
    Node* affine(Node* x, double a, double b) {
        Tensor out = x->value;
        for (double& v : out.data) v = a * v + b;
        return make(std::move(out), [x, a](Node& self) {
            for (std::size_t i = 0; i < self.value.size(); ++i)
                x->grad.data[i] += a * self.grad.data[i];
        });
    }

    Node* mul(Node* a, Node* b) {
        if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul: shape mismatch");
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
        return make(std::move(out), [a, b](Node& self) {
            for (std::size_t i = 0; i < self.value.size(); ++i) {
                a->grad.data[i] += self.grad.data[i] * b->value.data[i];
                b->grad.data[i] += self.grad.data[i] * a->value.data[i];
            }
        });
    }

    Node* add(Node* a, Node* b) {
        if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
        return make(std::move(out), [a, b](Node& self) {
            for (std::size_t i = 0; i < self.value.size(); ++i) {
                a->grad.data[i] += self.grad.data[i];
                b->grad.data[i] += self.grad.data[i];
            }
        });
    }

    /// Pairwise-tree sum of all elements, as a scalar node.
    Node* sum_all(Node* x) {
        Tensor out({1});
        out.data[0] = pairwise_sum(x->value.data);
        return make(std::move(out), [x](Node& self) {
            const double g = self.grad.data[0];
            for (double& v : x->grad.data) v += g;
        });
    }

    /// Fused log-softmax + negative log-likelihood, averaged over rows with
    /// the index-ascending pairwise tree. `labels[i]` indexes the target
    /// class of row i.
    Node* mean_nll_from_logits(Node* logits, const std::vector<int>& labels) {
        const std::size_t n = logits->value.rows(), c = logits->value.cols();
        if (labels.size() != n)
            throw std::invalid_argument("mean_nll: " + std::to_string(labels.size()) +
                                        " labels for " + std::to_string(n) + " rows");
        if (n == 0) throw std::invalid_argument("mean_nll: empty batch");
        Tensor probs({n, c});
        std::vector<double> nll(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* z = logits->value.data.data() + i * c;
            double zmax = z[0];
            for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < c; ++j) denom += std::exp(z[j] - zmax);
            const double lse = zmax + std::log(denom);
            const int y = labels[i];
            if (y < 0 || static_cast<std::size_t>(y) >= c)
                throw std::invalid_argument("mean_nll: label " + std::to_string(y) +
                                            " out of range at row " + std::to_string(i));
            nll[i] = lse - z[y];
            for (std::size_t j = 0; j < c; ++j) probs.data[i * c + j] = std::exp(z[j] - lse);
        }
        Tensor out({1});
        out.data[0] = pairwise_sum(nll) / static_cast<double>(n);
        return make(std::move(out),
                    [logits, labels, probs = std::move(probs), n, c](Node& self) {
                        const double g = self.grad.data[0] / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                                const double ind = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                                logits->grad.data[i * c + j] += g * (probs.data[i * c + j] - ind);
                            }
                    });
    }

    /// Reverse sweep from a scalar output. Creation order is topological, so
    /// one backwards pass over the node list suffices.
    void backward(Node* out) {
        if (out->value.size() != 1)
            throw std::invalid_argument("backward: output is not a scalar");
        out->grad.data[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->pull) it->pull(*it);
    }

private:
    Node* make(Tensor v, std::function<void(Node&)> pull) {
        nodes_.emplace_back();
        Node& node = nodes_.back();
        node.grad = Tensor(v.shape);
        node.value = std::move(v);
        node.pull = std::move(pull);
        return &node;
    }

    std::deque<Node> nodes_;
};

}  // namespace otmdr::ad

#pragma once

// Probabilistic prediction contract: p_k(x) = P(y = k | x, L), computed from a
// labeled context passed on every call. Built-in predictors live here; the
// external wire-protocol client is in external.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace tabal {

/// N x K matrix of class probabilities; columns follow Dataset::class_names.
using ProbabilityMatrix = Matrix;

inline constexpr double kSimplexTolerance = 1e-6;

/// Throws ProtocolError describing the first row that leaves the simplex.
inline void validate_probabilities(const ProbabilityMatrix& p, std::size_t expected_rows, std::size_t K) {
    if (p.rows() != expected_rows || p.cols() != K) {
        throw ProtocolError("probability matrix is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                            ", expected " + std::to_string(expected_rows) + "x" + std::to_string(K));
    }
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double sum = 0.0;
        for (double v : p.row(i)) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw ProtocolError("row " + std::to_string(i) + " has an entry outside [0, 1]");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance) {
            throw ProtocolError("row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
}

/// Index of the largest entry, ties to the smaller class index.
inline std::size_t argmax(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

class Predictor {
public:
    virtual ~Predictor() = default;

    virtual std::string name() const = 0;

    /// Class probabilities for `queries` given the labeled context. Implementations
    /// must not keep state between calls that changes results.
    virtual ProbabilityMatrix predict_proba(const Matrix& context_x, std::span<const std::size_t> context_y,
                                            const Matrix& queries, std::size_t K) = 0;
};

inline void check_predict_args(const Matrix& context_x, std::span<const std::size_t> context_y,
                               const Matrix& queries, std::size_t K) {
    if (context_x.rows() == 0) throw InvalidArgument("empty context");
    if (context_x.rows() != context_y.size()) throw InvalidArgument("context features/labels length mismatch");
    if (queries.rows() == 0) throw InvalidArgument("empty query set");
    if (queries.cols() != context_x.cols()) throw InvalidArgument("query/context feature width mismatch");
    if (K < 2) throw InvalidArgument("need at least 2 classes");
    for (auto y : context_y) {
        if (y >= K) throw InvalidArgument("context label out of range");
    }
}

// ---------------------------------------------------------------------------
// Distance-weighted nearest-neighbor predictor
// ---------------------------------------------------------------------------

struct NeighborConfig {
    std::size_t k_max = 15;
    double delta = 1e-9;
    double smoothing = 1e-3;
};

inline ProbabilityMatrix neighbor_predict(const Matrix& context_x, std::span<const std::size_t> context_y,
                                          const Matrix& queries, std::size_t K, const NeighborConfig& cfg = {}) {
    check_predict_args(context_x, context_y, queries, K);
    if (cfg.k_max < 1) throw InvalidArgument("k_max must be >= 1");
    const std::size_t n = context_x.rows();
    const std::size_t k = std::min(n, cfg.k_max);

    ProbabilityMatrix out(queries.rows(), K);
    std::vector<std::pair<double, std::size_t>> dist(n);  // (distance, label)
    std::vector<double> score(K);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        for (std::size_t i = 0; i < n; ++i) dist[i] = {distance(queries.row(q), context_x.row(i)), context_y[i]};
        // (distance, label) ordering makes the result independent of context order.
        std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
        std::fill(score.begin(), score.end(), 0.0);
        for (std::size_t j = 0; j < k; ++j) score[dist[j].second] += 1.0 / (dist[j].first + cfg.delta);
        const double total = std::accumulate(score.begin(), score.end(), 0.0) + static_cast<double>(K) * cfg.smoothing;
        for (std::size_t c = 0; c < K; ++c) out(q, c) = (score[c] + cfg.smoothing) / total;
    }
    return out;
}

class NeighborPredictor : public Predictor {
public:
    explicit NeighborPredictor(NeighborConfig cfg = {}) : cfg_(cfg) {}

    std::string name() const override { return "neighbor"; }

    ProbabilityMatrix predict_proba(const Matrix& context_x, std::span<const std::size_t> context_y,
                                    const Matrix& queries, std::size_t K) override {
        return neighbor_predict(context_x, context_y, queries, K, cfg_);
    }

private:
    NeighborConfig cfg_;
};

// ---------------------------------------------------------------------------
// Class-weighted multinomial logistic regression
// ---------------------------------------------------------------------------

struct LinearConfig {
    double reg = 1.0;
    std::size_t max_iter = 500;
    double tol = 1e-6;
};

/// Balanced class weights n / (K_present * n_c); zero for classes absent from y.
inline std::vector<double> balanced_class_weights(std::span<const std::size_t> y, std::size_t K) {
    std::vector<double> counts(K, 0.0);
    for (auto c : y) counts[c] += 1.0;
    const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](double v) { return v > 0; }));
    std::vector<double> w(K, 0.0);
    for (std::size_t c = 0; c < K; ++c) {
        if (counts[c] > 0) w[c] = static_cast<double>(y.size()) / (present * counts[c]);
    }
    return w;
}

namespace linear_detail {

/// Softmax of W * [x; 1] into `p`.
inline void softmax_row(const Matrix& W, std::span<const double> x, std::span<double> p) {
    const std::size_t d = x.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < W.rows(); ++k) {
        auto w = W.row(k);
        double s = w[d];
        for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
        p[k] = s;
        mx = std::max(mx, s);
    }
    double z = 0.0;
    for (auto& v : p) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : p) v /= z;
}

}  // namespace linear_detail

/// sum_i w_{y_i} * (-log p_{y_i}(x_i)) + reg/2 * ||W without bias||^2.
inline double linear_objective(const Matrix& W, const Matrix& x, std::span<const std::size_t> y,
                               std::span<const double> class_weights, double reg) {
    const std::size_t K = W.rows();
    const std::size_t d = x.cols();
    double f = 0.0;
    std::vector<double> logits(K);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xi = x.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            auto w = W.row(k);
            double s = w[d];
            for (std::size_t j = 0; j < d; ++j) s += w[j] * xi[j];
            logits[k] = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        f += class_weights[y[i]] * (mx + std::log(z) - logits[y[i]]);
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < d; ++j) norm += W(k, j) * W(k, j);
    }
    return f + 0.5 * reg * norm;
}

inline Matrix linear_gradient(const Matrix& W, const Matrix& x, std::span<const std::size_t> y,
                              std::span<const double> class_weights, double reg) {
    const std::size_t K = W.rows();
    const std::size_t d = x.cols();
    Matrix g(K, d + 1);
    std::vector<double> p(K);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xi = x.row(i);
        linear_detail::softmax_row(W, xi, p);
        const double wi = class_weights[y[i]];
        for (std::size_t k = 0; k < K; ++k) {
            const double r = wi * (p[k] - (k == y[i] ? 1.0 : 0.0));
            auto gk = g.row(k);
            for (std::size_t j = 0; j < d; ++j) gk[j] += r * xi[j];
            gk[d] += r;
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < d; ++j) g(k, j) += reg * W(k, j);
    }
    return g;
}

class LinearModel {
public:
    LinearModel() = default;
    LinearModel(Matrix weights, std::vector<double> class_weights, double reg)
        : weights_(std::move(weights)), class_weights_(std::move(class_weights)), reg_(reg) {}

    /// Model that predicts the one-hot of `cls` everywhere.
    static LinearModel constant(std::size_t cls, std::size_t K, std::size_t d, double reg) {
        LinearModel m(Matrix(K, d + 1), std::vector<double>(K, 0.0), reg);
        m.class_weights_[cls] = 1.0;
        m.constant_class_ = cls;
        return m;
    }

    const Matrix& weights() const { return weights_; }
    const std::vector<double>& class_weights() const { return class_weights_; }
    double reg() const { return reg_; }
    std::size_t num_classes() const { return weights_.rows(); }
    bool degenerate() const { return constant_class_ != kNone; }
    std::size_t iterations() const { return iterations_; }

    ProbabilityMatrix predict_proba(const Matrix& queries) const {
        const std::size_t K = num_classes();
        ProbabilityMatrix out(queries.rows(), K);
        for (std::size_t i = 0; i < queries.rows(); ++i) {
            if (degenerate()) {
                out(i, constant_class_) = 1.0;
            } else {
                linear_detail::softmax_row(weights_, queries.row(i), out.row(i));
            }
        }
        return out;
    }

private:
    friend LinearModel fit_linear(const Matrix&, std::span<const std::size_t>, std::size_t, const LinearConfig&);
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    Matrix weights_;
    std::vector<double> class_weights_;
    double reg_ = 1.0;
    std::size_t constant_class_ = kNone;
    std::size_t iterations_ = 0;
};

/// Full-batch gradient descent from zero with Armijo backtracking. The step
/// doubles after each accepted iteration and halves on each rejection.
inline LinearModel fit_linear(const Matrix& x, std::span<const std::size_t> y, std::size_t K,
                              const LinearConfig& cfg = {}) {
    if (x.rows() == 0 || x.rows() != y.size()) throw InvalidArgument("bad linear-model context");
    if (!(cfg.reg > 0.0)) throw InvalidArgument("regularization must be > 0");
    const std::size_t d = x.cols();
    const auto cw = balanced_class_weights(y, K);
    const auto present = std::count_if(cw.begin(), cw.end(), [](double v) { return v > 0; });
    if (present < 2) return LinearModel::constant(y.front(), K, d, cfg.reg);

    LinearModel model(Matrix(K, d + 1), cw, cfg.reg);
    Matrix& W = model.weights_;
    double f = linear_objective(W, x, y, cw, cfg.reg);
    double step = 1.0 / static_cast<double>(x.rows());
    std::size_t it = 0;
    for (; it < cfg.max_iter; ++it) {
        const Matrix g = linear_gradient(W, x, y, cw, cfg.reg);
        double gmax = 0.0;
        double gnorm2 = 0.0;
        for (double v : g.data()) {
            gmax = std::max(gmax, std::abs(v));
            gnorm2 += v * v;
        }
        if (gmax < cfg.tol) break;
        bool accepted = false;
        for (int tries = 0; tries < 60; ++tries) {
            Matrix trial = W;
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t j = 0; j <= d; ++j) trial(k, j) -= step * g(k, j);
            }
            const double ft = linear_objective(trial, x, y, cw, cfg.reg);
            if (ft <= f - 1e-4 * step * gnorm2) {
                W = std::move(trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        step *= 2.0;
    }
    model.iterations_ = it;
    return model;
}

class LinearPredictor : public Predictor {
public:
    explicit LinearPredictor(LinearConfig cfg = {}) : cfg_(cfg) {}

    std::string name() const override { return "linear"; }

    ProbabilityMatrix predict_proba(const Matrix& context_x, std::span<const std::size_t> context_y,
                                    const Matrix& queries, std::size_t K) override {
        check_predict_args(context_x, context_y, queries, K);
        return fit_linear(context_x, context_y, K, cfg_).predict_proba(queries);
    }

private:
    LinearConfig cfg_;
};

// ---------------------------------------------------------------------------

/// Wraps another predictor and counts query rows scored.
class CountingPredictor : public Predictor {
public:
    explicit CountingPredictor(Predictor& inner) : inner_(&inner) {}

    std::string name() const override { return inner_->name(); }

    ProbabilityMatrix predict_proba(const Matrix& context_x, std::span<const std::size_t> context_y,
                                    const Matrix& queries, std::size_t K) override {
        rows_ += queries.rows();
        ++calls_;
        return inner_->predict_proba(context_x, context_y, queries, K);
    }

    std::uint64_t rows_scored() const { return rows_; }
    std::uint64_t calls() const { return calls_; }
    void reset() { rows_ = calls_ = 0; }

private:
    Predictor* inner_;
    std::uint64_t rows_ = 0;
    std::uint64_t calls_ = 0;
};

}  // namespace tabal

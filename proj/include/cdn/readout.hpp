#pragma once

// The single trained layer: Sigma_y = W^out Sigma_x, trained either in closed
// form (ridge regression) or by SoftMax / cross-entropy minimisation.

#include "cdn/error.hpp"
#include "cdn/linalg.hpp"
#include "cdn/random.hpp"
#include "cdn/reservoir.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace cdn {

struct ReadoutModel {
    /// N_y x (1 + N_u + N_x); no separate bias, the leading 1 of Sigma_x supplies it.
    Matrix w_out;
    std::vector<std::string> class_labels;

    [[nodiscard]] std::size_t class_count() const noexcept { return class_labels.size(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w_out.cols()); }
};

inline void validate(const ReadoutModel& model)
{
    require(!model.class_labels.empty(), ErrorCategory::Config, "readout has no classes");
    require(static_cast<std::size_t>(model.w_out.rows()) == model.class_labels.size(), ErrorCategory::Dimension,
            "readout has " + std::to_string(model.w_out.rows()) + " rows for " + std::to_string(model.class_labels.size())
                + " classes");
}

enum class TrainMode {
    SoftmaxAdam,
    /// Plain full-step gradient descent on the same loss (no moments).
    SoftmaxGd,
    Ridge,
};

struct TrainSpec {
    TrainMode mode = TrainMode::SoftmaxAdam;
    std::size_t epochs = 1600;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double ridge_lambda = 1e-2;
    /// 0 selects full-batch training, otherwise the mini-batch size.
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
};

inline void validate(const TrainSpec& spec)
{
    require(spec.epochs >= 1, ErrorCategory::Config, "epochs must be at least 1");
    require(spec.ridge_lambda >= 0.0, ErrorCategory::Config, "ridge_lambda must be non-negative");
    require(spec.learning_rate > 0.0, ErrorCategory::Config, "learning_rate must be positive");
    require(spec.beta1 >= 0.0 && spec.beta1 < 1.0 && spec.beta2 >= 0.0 && spec.beta2 < 1.0, ErrorCategory::Config,
            "Adam betas must lie in [0, 1)");
    require(spec.epsilon > 0.0, ErrorCategory::Config, "Adam epsilon must be positive");
}

struct Prediction {
    Vector scores;
    Vector probabilities;
    std::size_t index = 0;
    std::string label;
};

/// Numerically stable softmax.
inline Vector softmax(const Vector& scores)
{
    const double top = scores.maxCoeff();
    Vector p = (scores.array() - top).exp().matrix();
    return p / p.sum();
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(const Vector& v)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return static_cast<std::size_t>(best);
}

inline Vector score(const ReadoutModel& model, const Vector& sigma_x)
{
    if (sigma_x.size() != model.w_out.cols())
        fail(ErrorCategory::Dimension, "score: pooled length " + std::to_string(sigma_x.size())
                                           + " but readout expects " + std::to_string(model.w_out.cols()));
    return model.w_out * sigma_x;
}

inline Vector score(const ReadoutModel& model, const PooledState& pooled) { return score(model, pooled.sigma_x); }

inline Prediction classify(const ReadoutModel& model, const Vector& sigma_x)
{
    validate(model);
    Prediction p;
    p.scores = score(model, sigma_x);
    p.probabilities = softmax(p.scores);
    p.index = argmax(p.scores);
    p.label = model.class_labels[p.index];
    return p;
}

inline Prediction classify(const ReadoutModel& model, const PooledState& pooled)
{
    return classify(model, pooled.sigma_x);
}

/// Predicted class index for every row of a pooled matrix.
inline std::vector<std::size_t> predict_indices(const Matrix& w_out, const Matrix& pooled_rows)
{
    const Matrix scores = pooled_rows * w_out.transpose();
    std::vector<std::size_t> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(scores.row(i).transpose());
    return out;
}

inline double accuracy(const Matrix& w_out, const Matrix& pooled_rows, const std::vector<std::size_t>& labels)
{
    require(static_cast<std::size_t>(pooled_rows.rows()) == labels.size(), ErrorCategory::Dimension,
            "accuracy: row and label counts differ");
    if (labels.empty()) return 0.0;
    const auto predicted = predict_indices(w_out, pooled_rows);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

struct LossGradient {
    double loss = 0.0;
    Matrix gradient;
};

/// Mean categorical cross-entropy of softmax(P W^T) against `labels` and its
/// gradient (1/M) (softmax(P W^T) - Y)^T P with respect to W.
inline LossGradient cross_entropy_loss_gradient(const Matrix& w_out, const Matrix& pooled_rows,
                                                const std::vector<std::size_t>& labels)
{
    const Eigen::Index m = pooled_rows.rows();
    require(m >= 1 && static_cast<std::size_t>(m) == labels.size(), ErrorCategory::Dimension,
            "cross-entropy: need one label per pooled row");
    require(pooled_rows.cols() == w_out.cols(), ErrorCategory::Dimension, "cross-entropy: width mismatch");
    Matrix residual = pooled_rows * w_out.transpose(); // M x k, becomes softmax - onehot
    double loss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        auto row = residual.row(i);
        const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
        require(y < row.size(), ErrorCategory::Dimension, "cross-entropy: label out of range");
        const double top = row.maxCoeff();
        const double gap = top - row(y);
        row.array() = (row.array() - top).exp();
        const double z = row.sum();
        loss += std::log(z) + gap;
        row /= z;
        row(y) -= 1.0;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    return {loss * inv_m, (residual.transpose() * pooled_rows) * inv_m};
}

/// Called after every epoch with the 1-based epoch number and current weights.
using EpochObserver = std::function<void(std::size_t epoch, const Matrix& w_out)>;

struct TrainResult {
    ReadoutModel model;
    /// Mean training loss of each epoch, measured before that epoch's updates.
    std::vector<double> loss_curve;
};

namespace detail {

inline void check_labels(const std::vector<std::size_t>& labels, std::size_t class_count)
{
    std::vector<std::size_t> counts(class_count, 0);
    for (const auto y : labels) {
        require(y < class_count, ErrorCategory::Dimension,
                "label index " + std::to_string(y) + " outside " + std::to_string(class_count) + " classes");
        ++counts[y];
    }
    for (std::size_t c = 0; c < class_count; ++c)
        require(counts[c] > 0, ErrorCategory::Config, "class " + std::to_string(c) + " has no training samples");
}

inline Matrix gather_rows(const Matrix& rows, const std::vector<std::size_t>& index)
{
    Matrix out(static_cast<Eigen::Index>(index.size()), rows.cols());
    for (std::size_t i = 0; i < index.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(index[i]));
    return out;
}

} // namespace detail

/// Iterative SoftMax readout training from a zero-initialised W^out.
inline TrainResult train_softmax(const Matrix& pooled_rows, const std::vector<std::size_t>& labels,
                                 std::vector<std::string> class_labels, const TrainSpec& spec,
                                 const EpochObserver& observer = {})
{
    validate(spec);
    require(spec.mode != TrainMode::Ridge, ErrorCategory::Config, "train_softmax called with ridge mode");
    require(!class_labels.empty(), ErrorCategory::Config, "no classes");
    require(pooled_rows.rows() >= 1 && static_cast<std::size_t>(pooled_rows.rows()) == labels.size(),
            ErrorCategory::Dimension, "train_softmax: need one label per pooled row");
    detail::check_labels(labels, class_labels.size());

    const auto k = static_cast<Eigen::Index>(class_labels.size());
    const Eigen::Index d = pooled_rows.cols();
    const auto m = static_cast<std::size_t>(pooled_rows.rows());
    TrainResult result;
    Matrix w = Matrix::Zero(k, d);
    Matrix first = Matrix::Zero(k, d);
    Matrix second = Matrix::Zero(k, d);
    double beta1_power = 1.0;
    double beta2_power = 1.0;
    result.loss_curve.reserve(spec.epochs);

    const bool full_batch = spec.batch_size == 0 || spec.batch_size >= m;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(spec.seed);

    auto update = [&](const Matrix& gradient) {
        if (spec.mode == TrainMode::SoftmaxGd) {
            w -= spec.learning_rate * gradient;
            return;
        }
        first = spec.beta1 * first + (1.0 - spec.beta1) * gradient;
        second = spec.beta2 * second + (1.0 - spec.beta2) * gradient.cwiseProduct(gradient);
        beta1_power *= spec.beta1;
        beta2_power *= spec.beta2;
        const double step = spec.learning_rate / (1.0 - beta1_power);
        const double v_scale = 1.0 / (1.0 - beta2_power);
        w.array() -= step * first.array() / ((second.array() * v_scale).sqrt() + spec.epsilon);
    };

    for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
        double epoch_loss = 0.0;
        if (full_batch) {
            auto lg = cross_entropy_loss_gradient(w, pooled_rows, labels);
            epoch_loss = lg.loss;
            if (std::isfinite(epoch_loss)) update(lg.gradient);
        } else {
            rng.shuffle(std::span<std::size_t>(order));
            for (std::size_t begin = 0; begin < m; begin += spec.batch_size) {
                const std::size_t end = std::min(m, begin + spec.batch_size);
                std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
                std::vector<std::size_t> batch_labels;
                batch_labels.reserve(batch.size());
                for (const auto i : batch) batch_labels.push_back(labels[i]);
                auto lg = cross_entropy_loss_gradient(w, detail::gather_rows(pooled_rows, batch), batch_labels);
                epoch_loss += lg.loss * static_cast<double>(end - begin);
                if (!std::isfinite(lg.loss)) break;
                update(lg.gradient);
            }
            epoch_loss /= static_cast<double>(m);
        }
        if (!std::isfinite(epoch_loss))
            fail(ErrorCategory::Numerical, "training loss became non-finite at epoch " + std::to_string(epoch)
                                               + "; lower learning_rate or rescale the pooled features");
        result.loss_curve.push_back(epoch_loss);
        if (observer) observer(epoch, w);
    }
    result.model = {std::move(w), std::move(class_labels)};
    return result;
}

/// One-hot target matrix M x k.
inline Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t class_count)
{
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(class_count));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] < class_count, ErrorCategory::Dimension, "one_hot: label out of range");
        t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
    }
    return t;
}

/// Tikhonov-regularised least squares: W^out = (T^T P)(P^T P + lambda I)^-1.
/// lambda = 0 uses a rank-revealing QR of P; lambda > 0 a Cholesky solve in
/// whichever of the primal (D x D) or dual (M x M) forms is smaller.
inline ReadoutModel ridge_fit(const Matrix& pooled_rows, const Matrix& targets, double lambda,
                              std::vector<std::string> class_labels)
{
    require(pooled_rows.rows() >= 1, ErrorCategory::Dimension, "ridge_fit: no samples");
    require(targets.rows() == pooled_rows.rows(), ErrorCategory::Dimension, "ridge_fit: targets and samples differ");
    require(static_cast<std::size_t>(targets.cols()) == class_labels.size(), ErrorCategory::Dimension,
            "ridge_fit: target width differs from class count");
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorCategory::Config, "ridge_fit: lambda must be >= 0");
    const Eigen::Index m = pooled_rows.rows();
    const Eigen::Index d = pooled_rows.cols();

    Matrix w;
    if (lambda == 0.0) {
        const Eigen::ColPivHouseholderQR<Matrix> qr(pooled_rows);
        if (qr.rank() < d)
            fail(ErrorCategory::Numerical, "ridge_fit: P^T P is singular (rank " + std::to_string(qr.rank()) + " < "
                                               + std::to_string(d) + ") with lambda = 0; use lambda > 0");
        w = qr.solve(targets).transpose();
    } else if (d <= m) {
        Matrix gram = pooled_rows.transpose() * pooled_rows;
        gram.diagonal().array() += lambda;
        const Eigen::LLT<Matrix> llt(gram);
        require(llt.info() == Eigen::Success, ErrorCategory::Numerical, "ridge_fit: Cholesky factorization failed");
        w = llt.solve(pooled_rows.transpose() * targets).transpose();
    } else {
        Matrix gram = pooled_rows * pooled_rows.transpose();
        gram.diagonal().array() += lambda;
        const Eigen::LLT<Matrix> llt(gram);
        require(llt.info() == Eigen::Success, ErrorCategory::Numerical, "ridge_fit: Cholesky factorization failed");
        w = llt.solve(targets).transpose() * pooled_rows;
    }
    require(w.allFinite(), ErrorCategory::Numerical, "ridge_fit: non-finite weights");
    return {std::move(w), std::move(class_labels)};
}

} // namespace cdn

#pragma once

// Fixed random echo state reservoir: construction, state update, and the
// time-averaged pooled representation [1; u(n); x(n)] fed to the readout.

#include "cdn/error.hpp"
#include "cdn/linalg.hpp"
#include "cdn/random.hpp"
#include "cdn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace cdn {

enum class Activation { Tanh, Relu };

struct EsnConfig {
    std::size_t reservoir_size = 600;
    /// Leak blend alpha in (0, 1]; 1 disables leakage.
    double leak_rate = 1.0;
    Activation activation = Activation::Relu;
    /// Fraction of nonzero recurrent weights.
    double connection_density = 0.1;
    double input_scale = 1.0;
    /// When set, W^x is rescaled to this spectral radius. Unset keeps the
    /// radius the random draw happens to have.
    std::optional<double> spectral_target;
    std::uint64_t seed = 0;
};

inline void validate(const EsnConfig& config)
{
    require(config.reservoir_size >= 1, ErrorCategory::Config, "reservoir_size must be at least 1");
    require(config.leak_rate > 0.0 && config.leak_rate <= 1.0, ErrorCategory::Config,
            "leak_rate must lie in (0, 1], got " + std::to_string(config.leak_rate));
    require(config.connection_density > 0.0 && config.connection_density <= 1.0, ErrorCategory::Config,
            "connection_density must lie in (0, 1], got " + std::to_string(config.connection_density));
    require(config.input_scale > 0.0 && std::isfinite(config.input_scale), ErrorCategory::Config,
            "input_scale must be positive");
    if (config.spectral_target)
        require(*config.spectral_target > 0.0 && std::isfinite(*config.spectral_target), ErrorCategory::Config,
                "spectral_target must be positive");
}

/// Input and recurrent weights of a reservoir. Immutable once built, so one
/// instance can be shared by any number of concurrent sequence runs.
class ReservoirWeights {
public:
    /// w_in is N_x x (1 + N_u) with the bias in column 0; w_x is N_x x N_x.
    ReservoirWeights(Matrix w_in, SparseMatrix w_x) : w_in_(std::move(w_in)), w_x_(std::move(w_x))
    {
        require(w_in_.rows() >= 1 && w_in_.cols() >= 2, ErrorCategory::Dimension,
                "w_in needs at least one row and a bias plus one input column");
        require(w_x_.rows() == w_in_.rows() && w_x_.cols() == w_in_.rows(), ErrorCategory::Dimension,
                "w_x must be N_x x N_x with N_x = rows(w_in)");
        w_x_.makeCompressed();
        natural_radius_ = spectral_radius(w_x_);
    }

    [[nodiscard]] const Matrix& w_in() const noexcept { return w_in_; }
    [[nodiscard]] const SparseMatrix& w_x() const noexcept { return w_x_; }
    [[nodiscard]] std::size_t reservoir_size() const noexcept { return static_cast<std::size_t>(w_in_.rows()); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w_in_.cols() - 1); }
    /// Length of the pooled vector [1; u; x].
    [[nodiscard]] std::size_t pooled_dim() const noexcept { return 1 + input_dim() + reservoir_size(); }
    /// rho(w_x) measured after any rescaling.
    [[nodiscard]] double natural_radius() const noexcept { return natural_radius_; }

private:
    Matrix w_in_;
    SparseMatrix w_x_;
    double natural_radius_ = 0.0;
};

struct ReservoirState {
    Vector x;
    /// Number of frames consumed so far; 0 for the initial zero state.
    std::size_t step_index = 0;
};

inline ReservoirState zero_state(std::size_t reservoir_size)
{
    return {Vector::Zero(static_cast<Eigen::Index>(reservoir_size)), 0};
}

struct PooledState {
    /// (1/tau) * sum_n [1; u(n); x(n)]
    Vector sigma_x;
    std::size_t frame_count = 0;
};

/// Half-open frame interval [start, end) used for interval pooling.
struct PoolWindow {
    std::size_t start = 0;
    std::optional<std::size_t> end;
};

namespace detail {

// k distinct values from [0, n) (Floyd's algorithm), returned sorted.
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t k, Rng& rng)
{
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(k) * 2);
    for (std::uint64_t j = n - k; j < n; ++j) {
        const std::uint64_t t = rng.below(j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

inline double nonzero_uniform(Rng& rng)
{
    for (;;) {
        const double v = rng.uniform(-1.0, 1.0);
        if (v != 0.0) return v;
    }
}

inline void apply_activation(Vector& pre, Activation activation)
{
    if (activation == Activation::Tanh)
        pre = pre.array().tanh().matrix();
    else
        pre = pre.cwiseMax(0.0);
}

inline ReservoirState blend(const ReservoirState& prev, Vector activated, double leak_rate)
{
    ReservoirState next{std::move(activated), prev.step_index + 1};
    if (leak_rate != 1.0) next.x = (1.0 - leak_rate) * prev.x + leak_rate * next.x;
    return next;
}

} // namespace detail

/// Number of recurrent connections drawn for a config.
inline std::uint64_t recurrent_connection_count(const EsnConfig& config)
{
    const double cells = static_cast<double>(config.reservoir_size) * static_cast<double>(config.reservoir_size);
    return static_cast<std::uint64_t>(std::llround(config.connection_density * cells));
}

/// Draws W^in uniform on [-input_scale, input_scale] and places
/// round(density * N_x^2) recurrent weights uniform on [-1, 1] at distinct
/// uniformly chosen positions. Deterministic in (config, input_dim).
inline ReservoirWeights init_reservoir(const EsnConfig& config, std::size_t input_dim)
{
    validate(config);
    require(input_dim >= 1, ErrorCategory::Config, "input_dim must be at least 1");
    const auto n = static_cast<Eigen::Index>(config.reservoir_size);
    const auto cols = static_cast<Eigen::Index>(input_dim + 1);
    Rng rng(config.seed);

    Matrix w_in(n, cols);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w_in(i, j) = rng.uniform(-config.input_scale, config.input_scale);

    const auto cells = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
    const std::uint64_t nnz = recurrent_connection_count(config);
    const auto positions = detail::sample_without_replacement(cells, nnz, rng);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(positions.size());
    for (const auto pos : positions) {
        triplets.emplace_back(static_cast<Eigen::Index>(pos / static_cast<std::uint64_t>(n)),
                              static_cast<Eigen::Index>(pos % static_cast<std::uint64_t>(n)),
                              detail::nonzero_uniform(rng));
    }
    SparseMatrix w_x(n, n);
    w_x.setFromTriplets(triplets.begin(), triplets.end());

    if (config.spectral_target) {
        const double rho = spectral_radius(w_x);
        require(rho > 0.0, ErrorCategory::Numerical,
                "cannot rescale W^x to spectral radius " + std::to_string(*config.spectral_target)
                    + ": its radius is zero (" + std::to_string(nnz)
                    + " nonzeros); raise connection_density or unset spectral_target");
        w_x *= *config.spectral_target / rho;
    }
    return ReservoirWeights(std::move(w_in), std::move(w_x));
}

/// One update: x~ = f(W^in [1; u] + W^x x_prev), x = (1 - alpha) x_prev + alpha x~,
/// with f = tanh or element-wise max(0, .). alpha = 1 returns x~ exactly.
inline ReservoirState step(const ReservoirWeights& weights, const ReservoirState& prev, const Vector& u_n,
                           const EsnConfig& config)
{
    const auto n_u = static_cast<Eigen::Index>(weights.input_dim());
    const auto n_x = static_cast<Eigen::Index>(weights.reservoir_size());
    if (u_n.size() != n_u || prev.x.size() != n_x)
        fail(ErrorCategory::Dimension, "step: input length " + std::to_string(u_n.size()) + " (expected "
                                           + std::to_string(n_u) + "), state length " + std::to_string(prev.x.size())
                                           + " (expected " + std::to_string(n_x) + ")");
    Vector pre = weights.w_in().col(0) + weights.w_in().rightCols(n_u) * u_n + weights.w_x() * prev.x;
    detail::apply_activation(pre, config.activation);
    return detail::blend(prev, std::move(pre), config.leak_rate);
}

/// Folds step over the rows of `features` (tau x N_u) from the zero state.
/// The input drive of all frames is computed with one matrix product.
inline std::vector<ReservoirState> run_sequence(const ReservoirWeights& weights, const Matrix& features,
                                                const EsnConfig& config)
{
    require(features.rows() >= 1, ErrorCategory::Dimension, "run_sequence: empty sequence");
    const auto n_u = static_cast<Eigen::Index>(weights.input_dim());
    require(features.cols() == n_u, ErrorCategory::Dimension,
            "run_sequence: feature width " + std::to_string(features.cols()) + " but reservoir expects "
                + std::to_string(n_u));
    Matrix drive = weights.w_in().rightCols(n_u) * features.transpose();
    drive.colwise() += weights.w_in().col(0);

    std::vector<ReservoirState> states;
    states.reserve(static_cast<std::size_t>(features.rows()));
    ReservoirState current = zero_state(weights.reservoir_size());
    for (Eigen::Index t = 0; t < features.rows(); ++t) {
        Vector pre = drive.col(t) + weights.w_x() * current.x;
        detail::apply_activation(pre, config.activation);
        current = detail::blend(current, std::move(pre), config.leak_rate);
        states.push_back(current);
    }
    return states;
}

/// sigma_x = (1/tau) sum_n [1; u(n); x(n)] over the frames in `window`.
inline PooledState pool_states(const Matrix& features, const std::vector<ReservoirState>& states,
                               const PoolWindow& window = {})
{
    const auto tau = static_cast<std::size_t>(features.rows());
    require(tau >= 1, ErrorCategory::Dimension, "pool_states: empty sequence");
    require(states.size() == tau, ErrorCategory::Dimension,
            "pool_states: " + std::to_string(tau) + " frames but " + std::to_string(states.size()) + " states");
    const std::size_t end = window.end.value_or(tau);
    require(window.start < end && end <= tau, ErrorCategory::Config,
            "pool_states: window [" + std::to_string(window.start) + ", " + std::to_string(end)
                + ") is empty or exceeds " + std::to_string(tau) + " frames");
    const Eigen::Index n_u = features.cols();
    const Eigen::Index n_x = states.front().x.size();

    Vector sum = Vector::Zero(1 + n_u + n_x);
    for (std::size_t t = window.start; t < end; ++t) {
        require(states[t].x.size() == n_x, ErrorCategory::Dimension, "pool_states: ragged states");
        sum.segment(1, n_u) += features.row(static_cast<Eigen::Index>(t)).transpose();
        sum.tail(n_x) += states[t].x;
    }
    const auto count = end - window.start;
    PooledState pooled{sum / static_cast<double>(count), count};
    pooled.sigma_x(0) = 1.0;
    return pooled;
}

} // namespace cdn

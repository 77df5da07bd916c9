#pragma once

// Spectral radius by block power iteration.
//
// A single power vector never settles when the dominant eigenvalues of a real
// matrix form a complex-conjugate pair, which is the generic case for random
// non-symmetric reservoirs. The iteration therefore advances a small
// orthonormal block and reads the radius off the Rayleigh-Ritz projection
// H = Q^T A Q of that block.

#include "cdn/detail/dense_eigenvalues.hpp"
#include "cdn/error.hpp"
#include "cdn/linalg.hpp"
#include "cdn/random.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>

namespace cdn {

struct PowerIterationOptions {
    double relative_tolerance = 1e-10;
    std::size_t max_iterations = 10'000;
    /// Number of vectors advanced together (clamped to the matrix order).
    Eigen::Index block_size = 8;
    /// Seed for the random block columns and for restarts.
    std::uint64_t restart_seed = 0x5eedf00dULL;
};

struct SpectralEstimate {
    double radius = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

// Two-pass classical Gram-Schmidt. Columns that collapse to zero are replaced
// by fresh random vectors, which is the restart path of the iteration.
inline void orthonormalize_columns(Matrix& q, Rng& rng)
{
    const Eigen::Index n = q.rows();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        for (int attempt = 0;; ++attempt) {
            const double original = q.col(j).norm();
            for (int pass = 0; pass < 2; ++pass) {
                for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
            }
            const double remaining = q.col(j).norm();
            if (remaining > 1e-12 * original && remaining > 0.0) {
                q.col(j) /= remaining;
                break;
            }
            require(attempt < 16, ErrorCategory::Numerical, "could not build an orthonormal block");
            for (Eigen::Index i = 0; i < n; ++i) q(i, j) = rng.uniform(-1.0, 1.0);
        }
    }
}

inline double max_modulus(const std::vector<std::complex<double>>& values)
{
    double best = 0.0;
    for (const auto& v : values) best = std::max(best, std::abs(v));
    return best;
}

} // namespace detail

/// Estimates max |lambda_i| of a square matrix (dense or sparse Eigen type).
/// The first block column starts at the normalized all-ones vector; the rest
/// are seeded random. An all-zero matrix returns 0.
template <class MatrixType>
SpectralEstimate estimate_spectral_radius(const MatrixType& a, const PowerIterationOptions& options = {})
{
    require(a.rows() == a.cols(), ErrorCategory::Dimension,
            "spectral radius needs a square matrix, got " + std::to_string(a.rows()) + "x"
                + std::to_string(a.cols()));
    const Eigen::Index n = a.rows();
    SpectralEstimate result;
    if (n == 0) {
        result.converged = true;
        return result;
    }
    const bool all_zero = a.cwiseAbs().sum() == 0.0;
    if (all_zero) {
        result.converged = true;
        return result;
    }

    const Eigen::Index p = std::clamp<Eigen::Index>(options.block_size, 1, n);
    if (p == n) {
        // the block would span the whole space; solve A directly, since the
        // rotation Q^T A Q would perturb defective eigenvalues
        result.radius = detail::max_modulus(detail::dense_eigenvalues(Matrix(a)));
        result.iterations = 1;
        result.converged = true;
        return result;
    }
    Rng rng(options.restart_seed);
    Matrix q(n, p);
    q.col(0).setConstant(1.0);
    for (Eigen::Index j = 1; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) q(i, j) = rng.uniform(-1.0, 1.0);
    detail::orthonormalize_columns(q, rng);

    double previous = -1.0;
    int zero_streak = 0;
    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
        Matrix z = a * q;
        Matrix h = q.transpose() * z;
        const double estimate = detail::max_modulus(detail::dense_eigenvalues(h));
        result.radius = estimate;
        result.iterations = it;
        if (estimate == 0.0) {
            // stagnation: zero Rayleigh quotient, restart from random vectors
            if (++zero_streak > 3) {
                result.converged = true;
                return result;
            }
            for (Eigen::Index j = 0; j < p; ++j)
                for (Eigen::Index i = 0; i < n; ++i) q(i, j) = rng.uniform(-1.0, 1.0);
            detail::orthonormalize_columns(q, rng);
            previous = -1.0;
            continue;
        }
        zero_streak = 0;
        if (previous >= 0.0 && std::abs(estimate - previous) < options.relative_tolerance * estimate) {
            result.converged = true;
            return result;
        }
        previous = estimate;
        q = std::move(z);
        detail::orthonormalize_columns(q, rng);
    }
    return result;
}

template <class MatrixType>
double spectral_radius(const MatrixType& a, const PowerIterationOptions& options = {})
{
    return estimate_spectral_radius(a, options).radius;
}

} // namespace cdn

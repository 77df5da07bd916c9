#pragma once

// Eigenvalues of a small dense real matrix: Gaussian-elimination reduction to
// upper Hessenberg form followed by the Francis double-shift QR iteration.
// Used for the Rayleigh-Ritz step of the subspace iteration in spectral.hpp,
// where the matrices are at most a few dozen rows.

#include "cdn/error.hpp"
#include "cdn/linalg.hpp"

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

namespace cdn::detail {

// In-place reduction to upper Hessenberg form (similarity transform).
inline void reduce_to_hessenberg(Matrix& a)
{
    const Eigen::Index n = a.rows();
    for (Eigen::Index m = 1; m + 1 < n; ++m) {
        double pivot = 0.0;
        Eigen::Index row = m;
        for (Eigen::Index j = m; j < n; ++j) {
            if (std::abs(a(j, m - 1)) > std::abs(pivot)) {
                pivot = a(j, m - 1);
                row = j;
            }
        }
        if (row != m) {
            a.row(row).swap(a.row(m));
            a.col(row).swap(a.col(m));
        }
        if (pivot == 0.0) continue;
        for (Eigen::Index i = m + 1; i < n; ++i) {
            const double y = a(i, m - 1) / pivot;
            if (y == 0.0) continue;
            a(i, m - 1) = 0.0;
            for (Eigen::Index j = m; j < n; ++j) a(i, j) -= y * a(m, j);
            for (Eigen::Index j = 0; j < n; ++j) a(j, m) += y * a(j, i);
        }
    }
    for (Eigen::Index i = 2; i < n; ++i)
        for (Eigen::Index j = 0; j + 1 < i; ++j) a(i, j) = 0.0;
}

// Eigenvalues of an upper Hessenberg matrix; the input is destroyed.
inline std::vector<std::complex<double>> hessenberg_qr_eigenvalues(Matrix& h)
{
    const int n = static_cast<int>(h.rows());
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
    if (n == 0) return out;
    // 1-based view keeps the index arithmetic of the classical formulation.
    auto a = [&h](int i, int j) -> double& { return h(i - 1, j - 1); };
    auto put = [&out](int i, double re, double im) {
        out[static_cast<std::size_t>(i - 1)] = {re, im};
    };
    auto sign = [](double mag, double s) { return s >= 0.0 ? std::abs(mag) : -std::abs(mag); };

    double anorm = 0.0;
    for (int i = 1; i <= n; ++i)
        for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a(i, j));

    int nn = n;
    double t = 0.0;
    while (nn >= 1) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 2; --l) {
                double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) + s == s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            if (l < 1) l = 1;
            double x = a(nn, nn);
            if (l == nn) {
                put(nn, x + t, 0.0);
                --nn;
            } else {
                double y = a(nn - 1, nn - 1);
                double w = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    const double p = 0.5 * (y - x);
                    const double q = p * p + w;
                    double z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign(z, p);
                        put(nn - 1, x + z, 0.0);
                        put(nn, z != 0.0 ? x - w / z : x + z, 0.0);
                    } else {
                        put(nn - 1, x + p, -z);
                        put(nn, x + p, z);
                    }
                    nn -= 2;
                } else {
                    if (its == 60)
                        fail(ErrorCategory::Numerical, "Hessenberg QR iteration did not converge");
                    if (its == 10 || its == 20 || its == 40) {
                        // exceptional shift
                        t += x;
                        for (int i = 1; i <= nn; ++i) a(i, i) -= x;
                        const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                        x = y = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m = nn - 2;
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
                    for (; m >= l; --m) {
                        z = a(m, m);
                        r = x - z;
                        double s = y - z;
                        p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - r - s;
                        r = a(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v = std::abs(p)
                            * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
                        if (u + v == v) break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        a(i, i - 2) = 0.0;
                        if (i != m + 2) a(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = 0.0;
                            if (k != nn - 1) r = a(k + 2, k - 1);
                            x = std::abs(p) + std::abs(q) + std::abs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const double s = sign(std::sqrt(p * p + q * q + r * r), p);
                        if (s == 0.0) continue;
                        if (k == m) {
                            if (l != m) a(k, k - 1) = -a(k, k - 1);
                        } else {
                            a(k, k - 1) = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) {
                            p = a(k, j) + q * a(k + 1, j);
                            if (k != nn - 1) {
                                p += r * a(k + 2, j);
                                a(k + 2, j) -= p * z;
                            }
                            a(k + 1, j) -= p * y;
                            a(k, j) -= p * x;
                        }
                        const int mmin = nn < k + 3 ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) {
                            p = x * a(i, k) + y * a(i, k + 1);
                            if (k != nn - 1) {
                                p += z * a(i, k + 2);
                                a(i, k + 2) -= p * r;
                            }
                            a(i, k + 1) -= p * q;
                            a(i, k) -= p;
                        }
                    }
                }
            }
        } while (nn >= 1 && l < nn - 1);
    }
    return out;
}

inline std::vector<std::complex<double>> dense_eigenvalues(Matrix a)
{
    require(a.rows() == a.cols(), ErrorCategory::Dimension, "eigenvalues need a square matrix");
    reduce_to_hessenberg(a);
    return hessenberg_qr_eigenvalues(a);
}

} // namespace cdn::detail

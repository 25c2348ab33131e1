#pragma once

// Just enough dense linear algebra for small (M x M) noise operators.

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spdelab/core.hpp"

namespace spdelab {

// Row-major square matrix helpers; matrices stay tiny (M <= a few dozen).
namespace linalg {

inline void matvec(std::span<const double> a, std::span<const double> x,
                   std::span<double> out) {
    const std::size_t n = x.size();
    if (a.size() != n * n || out.size() != n)
        throw std::invalid_argument("matvec: dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * x[j];
        out[i] = s;
    }
}

inline void matvec_transposed(std::span<const double> a, std::span<const double> x,
                              std::span<double> out) {
    const std::size_t n = x.size();
    if (a.size() != n * n || out.size() != n)
        throw std::invalid_argument("matvec_transposed: dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double xj = x[j];
        for (std::size_t i = 0; i < n; ++i) out[i] += a[j * n + i] * xj;
    }
}

// q q^T for a row-major q; result symmetric positive semidefinite.
inline Vec gram(std::span<const double> q, std::size_t n) {
    Vec g(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += q[i * n + k] * q[j * n + k];
            g[i * n + j] = s;
            g[j * n + i] = s;
        }
    return g;
}

// In-place lower Cholesky of a symmetric positive definite matrix. Throws
// naming the failing pivot when the matrix is (numerically) singular.
inline Vec cholesky(Vec a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) {
            std::ostringstream os;
            os << "cholesky: non-positive pivot " << d << " at mode " << j + 1;
            throw std::domain_error(os.str());
        }
        const double l = std::sqrt(d);
        a[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / l;
        }
        for (std::size_t k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
    }
    return a;
}

inline void cholesky_solve(std::span<const double> l, std::span<double> x) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * x[k];
        x[i] = s / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * x[k];
        x[ii] = s / l[ii * n + ii];
    }
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double symmetric_max_eigenvalue(std::span<const double> a, std::size_t n,
                                       int iters = 200) {
    Vec x(n, 0.0), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 / std::sqrt(static_cast<double>(n) + i);
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        matvec(a, x, y);
        const double nn = norm(y);
        if (nn == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / nn;
        lam = nn;
    }
    return lam;
}

// Smallest eigenvalue of a symmetric PD matrix via inverse power iteration.
inline double symmetric_min_eigenvalue(std::span<const double> a, std::size_t n,
                                       int iters = 200) {
    Vec l = cholesky(Vec(a.begin(), a.end()), n);
    Vec x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 / std::sqrt(static_cast<double>(n) + i);
    double inv_lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        cholesky_solve(l, x);
        const double nn = norm(x);
        if (nn == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) x[i] /= nn;
        inv_lam = nn;
    }
    return 1.0 / inv_lam;
}

}  // namespace linalg
}  // namespace spdelab

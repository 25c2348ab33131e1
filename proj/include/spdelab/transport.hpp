#pragma once

// Empirical Wasserstein-2 distances between equal-size uniform clouds.
//
// Exact values come from the optimal assignment with squared Euclidean costs
// (the infimum over couplings of two equal-size uniform empirical measures is
// attained at a permutation). The sliced estimator is a cheap surrogate for
// large clouds and is never substituted where the exact value is required.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

struct EmpiricalCloud {
    std::size_t dim = 0;
    Vec points;  // size() * dim, row-major, uniform weights 1/size()

    std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }

    std::span<const double> point(std::size_t i) const {
        return {points.data() + i * dim, dim};
    }

    static EmpiricalCloud from_rows(std::size_t dim, Vec flat) {
        if (dim == 0 || flat.size() % dim != 0)
            throw std::invalid_argument("cloud: bad flat size");
        return EmpiricalCloud{dim, std::move(flat)};
    }

    Vec mean() const {
        const std::size_t n = size();
        if (n == 0) throw std::invalid_argument("cloud: empty");
        Vec m(dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = point(i);
            for (std::size_t k = 0; k < dim; ++k) m[k] += p[k];
        }
        for (double& v : m) v /= static_cast<double>(n);
        return m;
    }
};

namespace detail {

// Shortest-augmenting-path assignment (Jonker-Volgenant style potentials),
// O(n^3). cost is n*n row-major; returns the minimal total cost.
inline double solve_assignment(const std::vector<double>& cost, std::size_t n) {
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) total += cost[(p[j] - 1) * n + (j - 1)];
    return total;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

}  // namespace detail

inline double w2_exact(const EmpiricalCloud& a, const EmpiricalCloud& b,
                       std::size_t n_max = 256) {
    if (a.dim != b.dim) throw std::invalid_argument("w2_exact: dimension mismatch");
    if (a.size() != b.size()) throw std::invalid_argument("w2_exact: size mismatch");
    const std::size_t n = a.size();
    if (n == 0) throw std::invalid_argument("w2_exact: empty clouds");
    if (n > n_max) throw std::invalid_argument("w2_exact: cloud size exceeds n_max");
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] = detail::squared_distance(a.point(i), b.point(j));
    const double total = detail::solve_assignment(cost, n);
    return std::sqrt(total / static_cast<double>(n));
}

struct SlicedW2Result {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Mean of 1D squared-W2 (sorted matching) over random unit directions drawn
// from the given seed; deterministic and symmetric under argument swap.
inline SlicedW2Result w2_sliced(const EmpiricalCloud& a, const EmpiricalCloud& b,
                                int n_projections, std::uint64_t seed) {
    if (a.dim != b.dim) throw std::invalid_argument("w2_sliced: dimension mismatch");
    if (a.size() != b.size()) throw std::invalid_argument("w2_sliced: size mismatch");
    if (n_projections < 1) throw std::invalid_argument("w2_sliced: need n_projections >= 1");
    const std::size_t n = a.size(), m = a.dim;
    if (n == 0) throw std::invalid_argument("w2_sliced: empty clouds");
    Vec dir(m), pa(n), pb(n), d2(static_cast<std::size_t>(n_projections));
    for (int k = 0; k < n_projections; ++k) {
        auto st = rng::make_stream(seed, rng::StreamKind::SlicedProjection,
                                   static_cast<std::uint64_t>(k));
        double nrm2 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            dir[j] = st.next_normal();
            nrm2 += dir[j] * dir[j];
        }
        if (nrm2 < 1e-300) dir[0] = 1.0, nrm2 = 1.0;
        const double inv = 1.0 / std::sqrt(nrm2);
        for (std::size_t i = 0; i < n; ++i) {
            pa[i] = dot(a.point(i), dir) * inv;
            pb[i] = dot(b.point(i), dir) * inv;
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = pa[i] - pb[i];
            s += d * d;
        }
        d2[static_cast<std::size_t>(k)] = s / static_cast<double>(n);
    }
    const auto ms = mean_and_se(d2);
    SlicedW2Result r;
    r.estimate = std::sqrt(std::max(0.0, ms.mean));
    r.std_error = r.estimate > 0.0 ? ms.se / (2.0 * r.estimate) : std::sqrt(ms.se);
    return r;
}

// Closed form for diagonal Gaussians:
// W2^2 = |m1-m2|^2 + sum_k (sqrt(c1_k) - sqrt(c2_k))^2.
inline double gaussian_w2(std::span<const double> m1, std::span<const double> c1_diag,
                          std::span<const double> m2, std::span<const double> c2_diag) {
    if (m1.size() != m2.size() || c1_diag.size() != c2_diag.size() ||
        m1.size() != c1_diag.size())
        throw std::invalid_argument("gaussian_w2: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < m1.size(); ++k) {
        if (c1_diag[k] < 0.0 || c2_diag[k] < 0.0)
            throw std::invalid_argument("gaussian_w2: negative variance");
        const double dm = m1[k] - m2[k];
        const double ds = std::sqrt(c1_diag[k]) - std::sqrt(c2_diag[k]);
        s += dm * dm + ds * ds;
    }
    return std::sqrt(s);
}

}  // namespace spdelab

#pragma once

// Truncated spectral decomposition of the negative definite operator -A.
//
// The basis is never materialized: coordinates ARE the eigenbasis
// coefficients, e^{At} acts mode-wise as multiplication by e^{-lambda_k t},
// and the trace condition sum_k lambda_k^(eps-1) < inf is checked over the
// explicit modes plus an integral-test bound for a declared power-law tail.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/quadrature.hpp"

namespace spdelab {

struct OperatorSpectrum {
    Vec eigenvalues;                     // ascending, all positive
    double trace_exponent = 0.25;        // eps in (0,1)
    std::optional<double> tail_exponent; // lambda_k ~ c k^p beyond the truncation
    double tail_fit_tolerance = 0.10;    // relative spread allowed in the last-quartile fit

    std::size_t modes() const { return eigenvalues.size(); }

    static OperatorSpectrum from_eigenvalues(Vec lambda, double eps,
                                             std::optional<double> tail = std::nullopt,
                                             double fit_tol = 0.10) {
        OperatorSpectrum s;
        s.eigenvalues = std::move(lambda);
        s.trace_exponent = eps;
        s.tail_exponent = tail;
        s.tail_fit_tolerance = fit_tol;
        s.validate();
        return s;
    }

    // lambda_k = scale * k^p, k = 1..m; the tail exponent is declared automatically.
    static OperatorSpectrum power_law(std::size_t m, double p, double eps, double scale = 1.0) {
        if (m == 0) throw std::invalid_argument("spectrum: need at least one mode");
        Vec lambda(m);
        for (std::size_t k = 0; k < m; ++k)
            lambda[k] = scale * std::pow(static_cast<double>(k + 1), p);
        return from_eigenvalues(std::move(lambda), eps, p);
    }

    void validate() const {
        if (eigenvalues.empty()) throw std::invalid_argument("spectrum: empty eigenvalue list");
        if (!(eigenvalues.front() > 0.0))
            throw std::invalid_argument("spectrum: smallest eigenvalue must be positive");
        // Ascending with exact comparisons: the list is user-declared, not computed.
        for (std::size_t k = 1; k < eigenvalues.size(); ++k)
            if (eigenvalues[k] < eigenvalues[k - 1])
                throw std::invalid_argument("spectrum: eigenvalues must be ascending");
        check_finite(eigenvalues, "spectrum");
        if (!(trace_exponent > 0.0 && trace_exponent < 1.0))
            throw std::invalid_argument("spectrum: trace_exponent out of (0,1)");
        if (tail_exponent) {
            if (!(*tail_exponent > 0.0))
                throw std::invalid_argument("spectrum: tail exponent must be positive");
            check_tail_fit();
        }
    }

private:
    void check_tail_fit() const {
        const std::size_t m = eigenvalues.size();
        if (m < 4) return;  // too few modes to test the asymptote
        const double p = *tail_exponent;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (std::size_t k = 3 * m / 4; k < m; ++k) {
            const double c = eigenvalues[k] / std::pow(static_cast<double>(k + 1), p);
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        if (hi > lo * (1.0 + tail_fit_tolerance)) {
            std::ostringstream os;
            os << "spectrum: last quartile does not fit k^" << p
               << " within tolerance (coefficient spread " << lo << ".." << hi << ")";
            throw std::invalid_argument(os.str());
        }
    }
};

inline void semigroup_apply_inplace(const OperatorSpectrum& spec, double t, std::span<double> v) {
    if (t < 0.0) throw std::invalid_argument("semigroup_apply: negative time");
    if (v.size() != spec.modes())
        throw std::invalid_argument("semigroup_apply: dimension mismatch");
    for (std::size_t k = 0; k < v.size(); ++k)
        v[k] *= std::exp(-spec.eigenvalues[k] * t);
}

inline Vec semigroup_apply(const OperatorSpectrum& spec, double t, Vec v) {
    semigroup_apply_inplace(spec, t, v);
    return v;
}

struct TraceClassResult {
    double partial_sum = 0.0;    // sum over the explicit modes of lambda_k^(eps-1)
    double tail_bound = 0.0;     // integral-test bound for the modes beyond truncation
    bool convergent = false;     // full-spectrum verdict (meaningful unless truncated_only)
    bool truncated_only = false; // no tail declared: verdict restricted to explicit modes
    double decay_exponent = 0.0; // p*(1-eps); convergence needs this > 1

    double total() const { return partial_sum + tail_bound; }
};

inline TraceClassResult trace_class_sum(const OperatorSpectrum& spec) {
    TraceClassResult r;
    const double eps = spec.trace_exponent;
    for (double lam : spec.eigenvalues) r.partial_sum += std::pow(lam, eps - 1.0);
    if (!spec.tail_exponent) {
        r.truncated_only = true;
        r.convergent = true;  // the finite sum always exists
        return r;
    }
    const double p = *spec.tail_exponent;
    r.decay_exponent = p * (1.0 - eps);
    r.convergent = r.decay_exponent > 1.0;
    if (r.convergent) {
        const double m = static_cast<double>(spec.modes());
        const double c = spec.eigenvalues.back() / std::pow(m, p);
        // sum_{k>M} (c k^p)^(eps-1) <= int_M^inf (c x^p)^(eps-1) dx
        r.tail_bound = std::pow(c, eps - 1.0) * std::pow(m, 1.0 - r.decay_exponent) /
                       (r.decay_exponent - 1.0);
    }
    return r;
}

struct HsConvolutionResult {
    double integral = 0.0;  // int_0^t r^-eps |e^{Ar}|_HS^2 dr over the explicit modes
    double bound = 0.0;     // 2^(eps-1) Gamma(1-eps) sum_k lambda_k^(eps-1)
};

// The integrable endpoint singularity r^-eps is removed exactly by the
// substitution r = u^(1/(1-eps)) before adaptive quadrature.
inline HsConvolutionResult hs_convolution_bound(const OperatorSpectrum& spec, double t) {
    if (t < 0.0) throw std::invalid_argument("hs_convolution_bound: negative time");
    const TraceClassResult tc = trace_class_sum(spec);
    if (!tc.convergent) {
        std::ostringstream os;
        os << "hs_convolution_bound: trace condition violated (tail decay exponent "
           << tc.decay_exponent << " <= 1)";
        throw std::domain_error(os.str());
    }
    const double eps = spec.trace_exponent;
    HsConvolutionResult r;
    r.bound = std::pow(2.0, eps - 1.0) * std::tgamma(1.0 - eps) * tc.total();
    if (t == 0.0) return r;
    const auto hs2 = [&spec](double rr) {
        double s = 0.0;
        for (double lam : spec.eigenvalues) s += std::exp(-2.0 * lam * rr);
        return s;
    };
    const double q = 1.0 / (1.0 - eps);
    const double upper = std::pow(t, 1.0 - eps);
    const auto g = [&](double u) { return hs2(std::pow(u, q)) * q; };
    r.integral = adaptive_simpson(g, 0.0, upper, 1e-12 * (1.0 + r.bound));
    return r;
}

// Per-mode variance of the stochastic convolution over one step of length dt
// for additive diagonal noise: q_k^2 (1 - e^{-2 lambda_k dt}) / (2 lambda_k).
inline Vec stochastic_convolution_variance(const OperatorSpectrum& spec,
                                           std::span<const double> q, double dt) {
    if (dt < 0.0) throw std::invalid_argument("stochastic_convolution_variance: negative dt");
    if (q.size() != spec.modes())
        throw std::invalid_argument("stochastic_convolution_variance: dimension mismatch");
    check_finite(q, "stochastic_convolution_variance");
    Vec out(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double lam = spec.eigenvalues[k];
        out[k] = q[k] * q[k] * (-std::expm1(-2.0 * lam * dt)) / (2.0 * lam);
    }
    return out;
}

}  // namespace spdelab

#pragma once

// Continuity moduli and membership certificates for the class of increasing
// phi with phi(0)=0, phi^2 concave and int_0^1 phi(s)/s ds finite.
//
// Membership is certified numerically on a geometric grid; custom moduli are
// black boxes, so the certificate is a spot check, not a proof.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/quadrature.hpp"

namespace spdelab {

struct DiniModulus {
    enum class Family { Canonical, Linear, Tabulated };

    Family family = Family::Canonical;
    // canonical: phi(s) = K / log^(1+delta)(c + 1/s), phi(0) = 0.
    double K = 1.0;
    double delta = 1.0;
    double c = std::numbers::e;
    // linear: phi(s) = slope * s.
    double slope = 1.0;
    // tabulated: piecewise linear through (0,0) and the given knots; constant
    // beyond the last knot.
    Vec knots_s, knots_phi;
    // certificate controls
    int certificate_levels = 40;       // dyadic grid depth in (0,1]
    double concavity_slack = 1e-2;     // relative slack for the phi^2 midpoint test

    static DiniModulus canonical(double K, double delta, double c = std::numbers::e) {
        if (!(K >= 0.0)) throw std::invalid_argument("modulus: K must be nonnegative");
        if (!(delta >= 0.0)) throw std::invalid_argument("modulus: delta must be nonnegative");
        // c >= e keeps log(c + 1/s) >= 1 on (0,1], so phi stays bounded by K.
        if (!(c >= std::numbers::e)) throw std::invalid_argument("modulus: need c >= e");
        DiniModulus m;
        m.family = Family::Canonical;
        m.K = K;
        m.delta = delta;
        m.c = c;
        return m;
    }

    static DiniModulus linear(double slope) {
        if (!(slope >= 0.0)) throw std::invalid_argument("modulus: slope must be nonnegative");
        DiniModulus m;
        m.family = Family::Linear;
        m.slope = slope;
        return m;
    }

    static DiniModulus zero() { return canonical(0.0, 1.0); }

    static DiniModulus tabulated(Vec s, Vec phi) {
        if (s.size() != phi.size() || s.empty())
            throw std::invalid_argument("modulus: bad table");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!(s[i] > 0.0) || !(phi[i] >= 0.0))
                throw std::invalid_argument("modulus: table entries must be positive/nonnegative");
            if (i > 0 && s[i] <= s[i - 1])
                throw std::invalid_argument("modulus: table abscissae must be ascending");
        }
        DiniModulus m;
        m.family = Family::Tabulated;
        m.knots_s = std::move(s);
        m.knots_phi = std::move(phi);
        return m;
    }

    double operator()(double s) const {
        if (s < 0.0) throw std::invalid_argument("modulus: negative argument");
        if (s == 0.0) return 0.0;
        switch (family) {
            case Family::Canonical: {
                // log(c + 1/s) = -log(s) + log1p(c*s); the second form stays
                // finite when 1/s would overflow.
                const double L = (s > 1e-290) ? std::log(c + 1.0 / s)
                                              : -std::log(s) + std::log1p(c * s);
                return K / std::pow(L, 1.0 + delta);
            }
            case Family::Linear:
                return slope * s;
            case Family::Tabulated: {
                if (s >= knots_s.back()) return knots_phi.back();
                double s0 = 0.0, p0 = 0.0;
                for (std::size_t i = 0; i < knots_s.size(); ++i) {
                    if (s <= knots_s[i]) {
                        const double w = (s - s0) / (knots_s[i] - s0);
                        return p0 + w * (knots_phi[i] - p0);
                    }
                    s0 = knots_s[i];
                    p0 = knots_phi[i];
                }
                return knots_phi.back();
            }
        }
        return 0.0;
    }

    bool is_zero() const { return family == Family::Canonical && K == 0.0; }
};

struct DiniIntegralResult {
    bool convergent = false;
    double value = 0.0;
    double error_estimate = 0.0;
    double fitted_decay = 0.0;     // fitted exponent beta of the dyadic block sums ~ j^-beta
    double divergence_scale = 0.0; // s at which the tail test gave up (divergent case)
};

// int_0^1 phi(s)/s ds by Gauss-Legendre on the dyadic blocks [2^-(j+1), 2^-j].
// Blocks of a Dini modulus decay; the tail beyond the last computed block is
// extrapolated from the fitted power-law decay of the block sums. A fitted
// decay exponent <= 1 (within margin) means the blocks behave like 1/j and
// the integral diverges.
inline DiniIntegralResult dini_integral(const std::function<double(double)>& phi,
                                        double rel_tol = 1e-4,
                                        std::size_t max_blocks = 1000) {
    DiniIntegralResult r;
    std::vector<double> blocks;
    blocks.reserve(max_blocks);
    double partial = 0.0;
    double hi = 1.0;
    for (std::size_t j = 0; j < max_blocks; ++j) {
        const double lo = 0.5 * hi;
        const double bj = gauss_legendre_8([&phi](double s) { return phi(s) / s; }, lo, hi);
        if (!(bj >= 0.0) || !std::isfinite(bj))
            throw std::domain_error("dini_integral: integrand not finite/nonnegative");
        blocks.push_back(bj);
        partial += bj;
        hi = lo;
        // Negligible-tail exit: blocks decaying at least geometrically.
        if (j >= 8 && bj <= rel_tol * 1e-3 * (partial + 1e-300)) {
            r.convergent = true;
            r.value = partial + bj;  // crude cap on a fast-decaying tail
            r.error_estimate = bj;
            r.fitted_decay = std::numeric_limits<double>::infinity();
            return r;
        }
    }
    // Fit log(block_j) ~ const - beta log(j) over the last half of the blocks.
    const std::size_t jlo = max_blocks / 2, jhi = max_blocks;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t j = jlo; j < jhi; ++j) {
        if (blocks[j] <= 0.0) continue;
        const double x = std::log(static_cast<double>(j + 1));
        const double y = std::log(blocks[j]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++n;
    }
    if (n < 8) {  // blocks vanished; nothing left to extrapolate
        r.convergent = true;
        r.value = partial;
        r.error_estimate = 0.0;
        return r;
    }
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    const double beta = -(static_cast<double>(n) * sxy - sx * sy) / denom;
    r.fitted_decay = beta;
    const double last = blocks.back();
    const double jmax = static_cast<double>(max_blocks);
    if (beta <= 1.05) {
        r.convergent = false;
        r.value = partial;
        r.divergence_scale = std::pow(2.0, -static_cast<double>(max_blocks));
        return r;
    }
    // sum_{j>J} C j^-beta ~ block_J * J / (beta - 1)
    const double tail = last * jmax / (beta - 1.0);
    r.convergent = true;
    r.value = partial + tail;
    r.error_estimate = tail * (0.05 * std::log(jmax) + 0.05 / (beta - 1.0)) + 1e-12 * partial;
    return r;
}

inline DiniIntegralResult dini_integral(const DiniModulus& m, double rel_tol = 1e-4) {
    if (m.is_zero()) {
        DiniIntegralResult r;
        r.convergent = true;
        return r;
    }
    return dini_integral([&m](double s) { return m(s); }, rel_tol);
}

struct ModulusCertificate {
    bool zero_at_zero = false;
    bool monotone = false;
    double worst_monotone_gap = 0.0;  // largest observed decrease
    double monotone_witness = 0.0;    // grid point where it happened
    bool square_concave = false;
    double worst_concavity_defect = 0.0;  // largest positive midpoint-convexity excess
    double concavity_witness = 0.0;
    DiniIntegralResult integral;

    bool in_dini_class() const {
        return zero_at_zero && monotone && square_concave && integral.convergent;
    }
};

// Certificate on the geometric grid s_j = 2^-j, j = 0..levels, in (0,1].
//
// The concavity slack is deliberately coarse: the usual log-family phi with
// c = e carries a genuine but tiny convex dip in phi^2 (midpoint defect up to
// ~3e-3 of phi(1)^2 around s ~ 0.1), while a convex phi^2 like (slope*s)^2
// defects by ~6e-2. The default slack 1e-2 separates the two; a strict slack
// can be requested through the modulus fields.
inline ModulusCertificate certify_modulus(const DiniModulus& m) {
    ModulusCertificate cert;
    cert.zero_at_zero = m(0.0) == 0.0;
    const double scale = std::max(m(1.0), 1e-300);
    const double concavity_tol =
        std::max(m.concavity_slack, 1e-10) * scale * scale;
    cert.monotone = true;
    cert.square_concave = true;
    double prev_s = 1.0, prev_phi = m(1.0);
    for (int j = 1; j <= m.certificate_levels; ++j) {
        const double s = std::ldexp(1.0, -j);
        const double phi = m(s);
        // increasing: phi at the smaller point must not exceed phi at the larger
        const double gap = phi - prev_phi;
        if (gap > 1e-12 * scale && gap > cert.worst_monotone_gap) {
            cert.monotone = false;
            cert.worst_monotone_gap = gap;
            cert.monotone_witness = s;
        }
        // midpoint concavity of phi^2
        const double mid = 0.5 * (s + prev_s);
        const double phim = m(mid);
        const double defect = 0.5 * (phi * phi + prev_phi * prev_phi) - phim * phim;
        if (defect > concavity_tol && defect > cert.worst_concavity_defect) {
            cert.square_concave = false;
            cert.worst_concavity_defect = defect;
            cert.concavity_witness = mid;
        }
        prev_s = s;
        prev_phi = phi;
    }
    cert.integral = dini_integral(m);
    return cert;
}

}  // namespace spdelab

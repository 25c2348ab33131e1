#pragma once

// Coefficient fields b and Q with declared regularity metadata, the built-in
// model registry, and numerical spot-validation of the standing assumptions:
// trace-class spectrum, bounded invertible noise, and drift continuity
// modulus phi(|x-y|) + K_b * W2(mu,nu).

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/dini.hpp"
#include "spdelab/linalg.hpp"
#include "spdelab/rng.hpp"
#include "spdelab/spectrum.hpp"
#include "spdelab/transport.hpp"

namespace spdelab {

// Lightweight view of an empirical law. The mean and second moment are exact
// over the full ensemble; the support cloud may be subsampled for transport
// economy. Built-in drifts read only the exact moments.
struct MeasureView {
    Vec mean;
    Vec var;                     // per-mode population variance
    double second_moment = 0.0;  // average of |x|^2
    EmpiricalCloud support;

    static MeasureView from_cloud(const EmpiricalCloud& c) {
        MeasureView v;
        v.mean = c.mean();
        v.var.assign(c.dim, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const auto p = c.point(i);
            v.second_moment += squared_norm(p);
            for (std::size_t k = 0; k < c.dim; ++k) {
                const double d = p[k] - v.mean[k];
                v.var[k] += d * d;
            }
        }
        v.second_moment /= static_cast<double>(c.size());
        for (double& x : v.var) x /= static_cast<double>(c.size());
        v.support = c;
        return v;
    }
};

using DriftEval =
    std::function<void(double t, std::span<const double> x, const MeasureView& law,
                       std::span<double> out)>;
using DiagNoiseEval =
    std::function<void(double t, std::span<const double> x, const MeasureView& law,
                       std::span<double> out_diag)>;
using DenseNoiseEval =
    std::function<void(double t, std::span<const double> x, const MeasureView& law,
                       std::span<double> out_row_major)>;

struct DriftField {
    DriftEval eval;
    DiniModulus modulus;            // declared spatial continuity modulus
    double measure_lipschitz = 0.0; // K_b: |b(x,mu)-b(x,nu)| <= K_b W2(mu,nu)
    double sup_bound = 0.0;         // declared sup |b|, diagnostics only
};

// The finite-mode projection continuity of Q is automatic under truncation
// (coordinates are the projected coefficients), so it carries no check here.
struct NoiseField {
    enum class Kind { Diagonal, Dense };
    Kind kind = Kind::Diagonal;
    DiagNoiseEval eval_diag;
    DenseNoiseEval eval_dense;
    bool x_free = false;
    bool measure_free = false;
    bool additive = false;          // constant in t, x and the measure
    double op_norm_bound = 1.0;     // declared sup |Q|
    double inverse_bound = 1.0;     // declared sup |(QQ*)^{-1}|
    double measure_lipschitz = 0.0; // |Q(x,mu)-Q(x,nu)|_HS^2 <= const * W2(mu,nu)^2

    static NoiseField constant_diagonal(double sigma, std::size_t) {
        if (!(sigma > 0.0)) throw std::invalid_argument("noise: sigma must be positive");
        NoiseField nf;
        nf.kind = Kind::Diagonal;
        nf.eval_diag = [sigma](double, std::span<const double>, const MeasureView&,
                               std::span<double> out) {
            for (double& v : out) v = sigma;
        };
        nf.x_free = nf.measure_free = nf.additive = true;
        nf.op_norm_bound = sigma;
        nf.inverse_bound = 1.0 / (sigma * sigma);
        nf.measure_lipschitz = 0.0;
        return nf;
    }
};

struct ModelSpec {
    std::string name;
    OperatorSpectrum spectrum;
    DriftField drift;
    NoiseField noise;
    double horizon = 1.0;

    std::size_t modes() const { return spectrum.modes(); }

    // Union constant serving both the noise bounds and the drift
    // measure-Lipschitz constant; reports quote this as K(T).
    double k_union() const {
        return std::max({noise.op_norm_bound, noise.inverse_bound, drift.measure_lipschitz});
    }
};

// ---------------------------------------------------------------------------
// Built-in model registry
// ---------------------------------------------------------------------------

struct ModelParams {
    double theta = 0.0;        // optional clipped linear drift -theta * clip_R(x)
    double clip_radius = 8.0;  // R for the clipped linear part
    double a = 0.5;            // mean-field coupling b += a * mean(law)
    double sigma = 1.0;        // additive noise amplitude, Q = sigma * I
    double dini_K = 0.5;       // canonical modulus parameters for the dini drift
    double dini_delta = 1.0;
    double dini_c = std::numbers::e;
};

namespace detail {

// Projection onto the centered ball of radius r (nonexpansive).
inline void clip_to_ball(std::span<const double> x, double r, std::span<double> out) {
    const double nx = norm(x);
    const double f = nx > r ? r / nx : 1.0;
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = f * x[k];
}

}  // namespace detail

inline const std::vector<std::string>& registered_model_names() {
    static const std::vector<std::string> names = {"ou", "meanfield-linear", "dini-drift",
                                                   "sign-drift"};
    return names;
}

// Builds a registered model on the given spectrum.
//
//   ou               b(x)    = -theta * clip_R(x)            (theta = 0: pure
//                    stochastic convolution, the classical linear case)
//   meanfield-linear b(x,mu) = -theta * clip_R(x) + a * mean(mu)
//   dini-drift       b(x,mu) = sign(x_1) phi_c(|x_1|) e_1 + a * mean(mu),
//                    phi_c canonical(dini_K, dini_delta, dini_c)
//   sign-drift       b(x,mu) = sign(x_1) e_1 + a * mean(mu); deliberately
//                    discontinuous, kept as the canonical rejection example
inline ModelSpec build_model(const std::string& name, OperatorSpectrum spectrum,
                             const ModelParams& prm, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("model: horizon must be positive");
    const std::size_t m = spectrum.modes();
    ModelSpec model;
    model.name = name;
    model.spectrum = std::move(spectrum);
    model.horizon = horizon;
    model.noise = NoiseField::constant_diagonal(prm.sigma, m);

    const double theta = prm.theta;
    const double R = prm.clip_radius;
    const double a = prm.a;
    if (!(R > 0.0)) throw std::invalid_argument("model: clip_radius must be positive");

    // Covering modulus for the clipped linear part: on (0,1] the canonical
    // shape with c = e dominates theta*s once K >= 2 theta log^2(e+1), and its
    // floor phi(1) must clear the oscillation cap 2 theta R.
    const auto clip_cover_K = [&] {
        const double l1 = std::log(std::numbers::e + 1.0);
        return std::max(2.0 * theta * l1 * l1, 2.0 * theta * R * l1 * l1);
    };

    if (name == "ou") {
        model.drift.eval = [theta, R](double, std::span<const double> x, const MeasureView&,
                                      std::span<double> out) {
            detail::clip_to_ball(x, R, out);
            for (double& v : out) v *= -theta;
        };
        model.drift.modulus =
            theta == 0.0 ? DiniModulus::zero() : DiniModulus::canonical(clip_cover_K(), 1.0);
        model.drift.measure_lipschitz = 0.0;
        model.drift.sup_bound = theta * R;
    } else if (name == "meanfield-linear") {
        model.drift.eval = [theta, R, a](double, std::span<const double> x,
                                         const MeasureView& law, std::span<double> out) {
            detail::clip_to_ball(x, R, out);
            for (std::size_t k = 0; k < out.size(); ++k)
                out[k] = -theta * out[k] + a * law.mean[k];
        };
        model.drift.modulus =
            theta == 0.0 ? DiniModulus::zero() : DiniModulus::canonical(clip_cover_K(), 1.0);
        model.drift.measure_lipschitz = std::abs(a);
        model.drift.sup_bound = theta * R + std::abs(a) * 10.0;
    } else if (name == "dini-drift") {
        const DiniModulus phi_c = DiniModulus::canonical(prm.dini_K, prm.dini_delta, prm.dini_c);
        model.drift.eval = [phi_c, a](double, std::span<const double> x,
                                      const MeasureView& law, std::span<double> out) {
            const double u = x[0];
            const double g = (u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0)) * phi_c(std::abs(u));
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * law.mean[k];
            out[0] += g;
        };
        // |g(u)-g(v)| <= 2 phi_c(|u-v|): same-sign pairs by subadditivity of a
        // concave modulus, opposite signs by monotonicity. Declared modulus is
        // the doubled canonical family (still in class).
        model.drift.modulus =
            DiniModulus::canonical(2.0 * prm.dini_K, prm.dini_delta, prm.dini_c);
        model.drift.measure_lipschitz = std::abs(a);
        model.drift.sup_bound = prm.dini_K + std::abs(a) * 10.0;
    } else if (name == "sign-drift") {
        model.drift.eval = [a](double, std::span<const double> x, const MeasureView& law,
                               std::span<double> out) {
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * law.mean[k];
            out[0] += (x[0] >= 0.0 ? 1.0 : -1.0);
        };
        model.drift.modulus = DiniModulus::canonical(1.0, 1.0);
        model.drift.measure_lipschitz = std::abs(a);
        model.drift.sup_bound = 1.0 + std::abs(a) * 10.0;
    } else {
        throw std::invalid_argument("model: unknown registry name '" + name + "'");
    }
    return model;
}

// ---------------------------------------------------------------------------
// Assumption spot-validation
// ---------------------------------------------------------------------------

struct ClauseResult {
    std::string clause;
    bool pass = true;
    double statistic = 0.0;  // worst observed value
    double threshold = 0.0;  // declared bound it is compared against
    std::string witness;     // human-readable description of the worst sample
};

struct AssumptionReport {
    TraceClassResult trace;
    std::vector<ClauseResult> clauses;
    bool all_pass = true;
    std::uint64_t seed = 0;
    int samples = 0;

    const ClauseResult* find(const std::string& name) const {
        for (const auto& c : clauses)
            if (c.clause == name) return &c;
        return nullptr;
    }
};

namespace detail {

inline std::string format_vec_short(std::span<const double> x) {
    std::ostringstream os;
    os << "(";
    const std::size_t show = std::min<std::size_t>(x.size(), 4);
    for (std::size_t k = 0; k < show; ++k) {
        if (k) os << ",";
        os << x[k];
    }
    if (x.size() > show) os << ",...";
    os << ")";
    return os.str();
}

inline EmpiricalCloud gaussian_cloud(std::size_t n, std::size_t dim, double mean_shift,
                                     rng::Stream& st) {
    Vec flat(n * dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k)
            flat[i * dim + k] = (k == 0 ? mean_shift : 0.0) + st.next_normal();
    return EmpiricalCloud::from_rows(dim, std::move(flat));
}

}  // namespace detail

// Sampling spot-check of the standing assumptions; a pass is evidence, not a
// proof (the clauses quantify over uncountable sets). Deterministic per seed.
inline AssumptionReport validate_assumptions(const ModelSpec& model, int samples,
                                             std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("validate_assumptions: need samples >= 1");
    AssumptionReport rep;
    rep.seed = seed;
    rep.samples = samples;
    const std::size_t m = model.modes();
    const double T = model.horizon;

    // (a1): trace-class verdict, explicit modes plus declared tail.
    rep.trace = trace_class_sum(model.spectrum);
    {
        ClauseResult c;
        c.clause = "a1-trace";
        c.pass = rep.trace.convergent;
        c.statistic = rep.trace.decay_exponent;
        c.threshold = 1.0;
        if (rep.trace.truncated_only)
            c.witness = "truncated verdict: no tail declared, explicit modes only";
        else if (!c.pass) {
            std::ostringstream os;
            os << "assumption violated: tail decay exponent p(1-eps) = "
               << rep.trace.decay_exponent << " <= 1";
            c.witness = os.str();
        }
        rep.clauses.push_back(std::move(c));
    }

    // Declared-modulus certificate (monotone, square-concave, Dini-integrable).
    const ModulusCertificate cert = certify_modulus(model.drift.modulus);
    {
        ClauseResult c;
        c.clause = "modulus-certificate";
        c.pass = cert.in_dini_class();
        c.statistic = cert.integral.convergent ? cert.integral.value
                                               : std::numeric_limits<double>::infinity();
        c.threshold = std::numeric_limits<double>::infinity();
        if (!cert.monotone) {
            std::ostringstream os;
            os << "not increasing near s = " << cert.monotone_witness;
            c.witness = os.str();
        } else if (!cert.square_concave) {
            std::ostringstream os;
            os << "phi^2 midpoint concavity fails near s = " << cert.concavity_witness;
            c.witness = os.str();
        } else if (!cert.integral.convergent) {
            std::ostringstream os;
            os << "Dini integral diverges; tail test failed at scale "
               << cert.integral.divergence_scale;
            c.witness = os.str();
        }
        rep.clauses.push_back(std::move(c));
    }

    auto st = rng::make_stream(seed, rng::StreamKind::Validation, 0);

    // Sample library: measure pairs (small clouds), state pairs, times.
    const std::size_t cloud_n = 32;
    struct SamplePair {
        double t;
        Vec x, y;
        std::size_t cloud_a, cloud_b;
    };
    std::vector<EmpiricalCloud> clouds;
    const std::size_t n_clouds = 6;
    for (std::size_t i = 0; i < n_clouds; ++i)
        clouds.push_back(detail::gaussian_cloud(cloud_n, m, 0.3 * static_cast<double>(i), st));
    std::vector<double> cloud_w2(n_clouds * n_clouds, 0.0);
    for (std::size_t i = 0; i < n_clouds; ++i)
        for (std::size_t j = 0; j < n_clouds; ++j)
            cloud_w2[i * n_clouds + j] = i == j ? 0.0 : w2_exact(clouds[i], clouds[j]);
    std::vector<MeasureView> views;
    for (const auto& c : clouds) views.push_back(MeasureView::from_cloud(c));

    std::vector<SamplePair> pairs;
    pairs.reserve(static_cast<std::size_t>(samples) + 24);
    for (int i = 0; i < samples; ++i) {
        SamplePair sp;
        sp.t = T * st.next_uniform();
        sp.x.resize(m);
        sp.y.resize(m);
        for (std::size_t k = 0; k < m; ++k) sp.x[k] = st.next_normal();
        // mix of far pairs and tight pairs around x
        const double scale = (i % 3 == 0) ? 1.0 : std::pow(10.0, -(1 + i % 6));
        for (std::size_t k = 0; k < m; ++k) sp.y[k] = sp.x[k] + scale * st.next_normal();
        sp.cloud_a = st.next_u64() % n_clouds;
        sp.cloud_b = st.next_u64() % n_clouds;
        pairs.push_back(std::move(sp));
    }
    // Structured probes straddling a potential discontinuity at the origin of
    // mode 1, with identical measure arguments so the modulus term is isolated.
    for (int j = 1; j <= 8; ++j) {
        SamplePair sp;
        sp.t = 0.0;
        sp.x.assign(m, 0.0);
        sp.y.assign(m, 0.0);
        const double eta = std::pow(10.0, -j);
        sp.x[0] = eta;
        sp.y[0] = -eta;
        sp.cloud_a = sp.cloud_b = 0;
        pairs.push_back(std::move(sp));
    }

    // (a2): operator norm, inverse bound, measure continuity.
    {
        ClauseResult cn, ci, cm;
        cn.clause = "a2-operator-norm";
        cn.threshold = model.noise.op_norm_bound * (1.0 + 1e-9);
        ci.clause = "a2-inverse-bound";
        ci.threshold = model.noise.inverse_bound * (1.0 + 1e-9);
        cm.clause = "a2-measure-continuity";
        cm.threshold = model.noise.measure_lipschitz + 1e-12;
        double worst_norm = 0.0, worst_inv = 0.0, worst_ratio = 0.0;
        std::string wn, wi, wm;
        Vec qd(m), qa(m * m), qb(m * m);
        for (const auto& sp : pairs) {
            const MeasureView& va = views[sp.cloud_a];
            const MeasureView& vb = views[sp.cloud_b];
            double opn = 0.0, invn = 0.0;
            if (model.noise.kind == NoiseField::Kind::Diagonal) {
                model.noise.eval_diag(sp.t, sp.x, va, qd);
                double qmin = std::numeric_limits<double>::infinity();
                for (double v : qd) {
                    opn = std::max(opn, std::abs(v));
                    qmin = std::min(qmin, v * v);
                }
                invn = qmin > 0.0 ? 1.0 / qmin : std::numeric_limits<double>::infinity();
            } else {
                model.noise.eval_dense(sp.t, sp.x, va, qa);
                const Vec g = linalg::gram(qa, m);
                opn = std::sqrt(linalg::symmetric_max_eigenvalue(g, m));
                double smin;
                try {
                    smin = linalg::symmetric_min_eigenvalue(g, m);
                } catch (const std::domain_error&) {
                    smin = 0.0;
                }
                invn = smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity();
            }
            if (opn > worst_norm) {
                worst_norm = opn;
                wn = "t=" + std::to_string(sp.t) + " x=" + detail::format_vec_short(sp.x);
            }
            if (invn > worst_inv) {
                worst_inv = invn;
                wi = "t=" + std::to_string(sp.t) + " x=" + detail::format_vec_short(sp.x);
            }
            if (!model.noise.measure_free && sp.cloud_a != sp.cloud_b) {
                const double w2 = cloud_w2[sp.cloud_a * n_clouds + sp.cloud_b];
                if (w2 > 1e-12) {
                    double hs2 = 0.0;
                    if (model.noise.kind == NoiseField::Kind::Diagonal) {
                        Vec qd2(m);
                        model.noise.eval_diag(sp.t, sp.x, vb, qd2);
                        for (std::size_t k = 0; k < m; ++k) {
                            const double d = qd[k] - qd2[k];
                            hs2 += d * d;
                        }
                    } else {
                        model.noise.eval_dense(sp.t, sp.x, vb, qb);
                        for (std::size_t k = 0; k < m * m; ++k) {
                            const double d = qa[k] - qb[k];
                            hs2 += d * d;
                        }
                    }
                    const double ratio = hs2 / (w2 * w2);
                    if (ratio > worst_ratio) {
                        worst_ratio = ratio;
                        wm = "clouds " + std::to_string(sp.cloud_a) + "," +
                             std::to_string(sp.cloud_b);
                    }
                }
            }
        }
        cn.statistic = worst_norm;
        cn.pass = worst_norm <= cn.threshold;
        cn.witness = cn.pass ? "" : wn;
        ci.statistic = worst_inv;
        ci.pass = worst_inv <= ci.threshold;
        ci.witness = ci.pass ? "" : wi;
        cm.statistic = worst_ratio;
        cm.pass = worst_ratio <= cm.threshold;
        cm.witness = cm.pass ? "" : wm;
        rep.clauses.push_back(std::move(cn));
        rep.clauses.push_back(std::move(ci));
        rep.clauses.push_back(std::move(cm));
    }

    // (a3): |b(x,mu)-b(y,nu)| <= phi(|x-y|) + K_b W2(mu,nu) on sampled pairs.
    {
        ClauseResult c;
        c.clause = "a3-drift-modulus";
        c.threshold = 0.0;
        double worst_margin = std::numeric_limits<double>::infinity();
        std::string witness;
        Vec bx(m), by(m);
        for (const auto& sp : pairs) {
            model.drift.eval(sp.t, sp.x, views[sp.cloud_a], bx);
            model.drift.eval(sp.t, sp.y, views[sp.cloud_b], by);
            double diff2 = 0.0, dist2 = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                const double db = bx[k] - by[k];
                const double dx = sp.x[k] - sp.y[k];
                diff2 += db * db;
                dist2 += dx * dx;
            }
            const double w2 = cloud_w2[sp.cloud_a * n_clouds + sp.cloud_b];
            const double rhs = model.drift.modulus(std::sqrt(dist2)) +
                               model.drift.measure_lipschitz * w2;
            const double margin = rhs - std::sqrt(diff2) + 1e-9 * (1.0 + rhs);
            if (margin < worst_margin) {
                worst_margin = margin;
                std::ostringstream os;
                os << "t=" << sp.t << " x=" << detail::format_vec_short(sp.x)
                   << " y=" << detail::format_vec_short(sp.y) << " |b(x)-b(y)|="
                   << std::sqrt(diff2) << " bound=" << rhs;
                witness = os.str();
            }
        }
        c.statistic = worst_margin;
        c.pass = worst_margin >= 0.0;
        c.witness = c.pass ? "" : witness;
        rep.clauses.push_back(std::move(c));
    }

    for (const auto& c : rep.clauses) rep.all_pass = rep.all_pass && c.pass;
    return rep;
}

}  // namespace spdelab

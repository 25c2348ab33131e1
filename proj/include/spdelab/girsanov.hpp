#pragma once

// Girsanov weight paths and the drift-shift couplings used to verify the
// entropy, Harnack and shift-Harnack inequalities.
//
// Contract: a weight path and the trajectory it reweights share the same
// Brownian increments, so weighted runs use Maruyama stepping (the exact
// convolution option has no explicit increments to share).
//
// Three constructions, all driven by one simulated ensemble X:
//   * drift shift: gamma removes the difference b(.,mu_t) - b(.,nu_t), so X
//     under the tilted measure solves the nu-flow equation;
//   * power coupling: Y_t = X_t + e^{At}(T-t)/T (Y_0 - X_0), a deterministic
//     bridge with Y_T = X_T;
//   * shift coupling: Y_t = X_t + e^{At} t y / T, with Y_T = X_T + e^{AT} y.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/dini.hpp"
#include "spdelab/dynamics.hpp"
#include "spdelab/linalg.hpp"
#include "spdelab/model.hpp"
#include "spdelab/transport.hpp"

namespace spdelab {

// ---------------------------------------------------------------------------
// Weight paths
// ---------------------------------------------------------------------------

struct WeightPath {
    double log_weight = 0.0;  // -int <gamma,dW> - 1/2 int |gamma|^2
    double quad = 0.0;        // int |gamma|^2
    std::size_t steps = 0;
};

inline void accumulate_weight(WeightPath& wp, std::span<const double> gamma,
                              std::span<const double> dw, double dt) {
    if (gamma.size() != dw.size())
        throw std::invalid_argument("accumulate_weight: dimension mismatch");
    const double g2 = squared_norm(gamma);
    wp.log_weight -= dot(gamma, dw) + 0.5 * g2 * dt;
    wp.quad += g2 * dt;
    ++wp.steps;
}

// gamma = Q^*(QQ^*)^{-1} b_diff. Diagonal noise divides mode-wise; a zero
// amplitude is reported with its mode index.
inline void gamma_from_diagonal(std::span<const double> qdiag, std::span<const double> b_diff,
                                std::span<double> out) {
    if (qdiag.size() != b_diff.size() || out.size() != b_diff.size())
        throw std::invalid_argument("gamma: dimension mismatch");
    for (std::size_t k = 0; k < qdiag.size(); ++k) {
        if (qdiag[k] == 0.0) {
            std::ostringstream os;
            os << "gamma: noise not invertible, zero amplitude at mode " << k + 1;
            throw std::domain_error(os.str());
        }
        out[k] = b_diff[k] / qdiag[k];
    }
}

inline void gamma_from_dense(std::span<const double> q, std::size_t m,
                             std::span<const double> b_diff, std::span<double> out) {
    if (q.size() != m * m || b_diff.size() != m || out.size() != m)
        throw std::invalid_argument("gamma: dimension mismatch");
    const Vec g = linalg::gram(q, m);
    const Vec l = linalg::cholesky(g, m);  // throws naming the failing mode
    Vec z(b_diff.begin(), b_diff.end());
    linalg::cholesky_solve(l, z);
    linalg::matvec_transposed(q, z, out);
}

inline Vec drift_shift_gamma(const NoiseField& noise, std::size_t m, double t,
                             std::span<const double> x, const MeasureView& law,
                             std::span<const double> b_diff) {
    Vec out(m);
    if (noise.kind == NoiseField::Kind::Diagonal) {
        Vec qd(m);
        noise.eval_diag(t, x, law, qd);
        gamma_from_diagonal(qd, b_diff, out);
    } else {
        Vec q(m * m);
        noise.eval_dense(t, x, law, q);
        gamma_from_dense(q, m, b_diff, out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Entropy and total-variation estimators
// ---------------------------------------------------------------------------

struct EntropyEstimate {
    double ent = 0.0;      // mean of e^l * l  (relative entropy of tilted vs base)
    double ent_se = 0.0;
    double via_quad = 0.0;  // 1/2 mean of e^l * q  (same quantity via the quadratic term)
    double via_quad_se = 0.0;
};

inline EntropyEstimate entropy_estimate(std::span<const WeightPath> paths) {
    if (paths.empty()) throw std::invalid_argument("entropy_estimate: empty ensemble");
    Vec a(paths.size()), b(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const double w = std::exp(paths[i].log_weight);
        a[i] = w * paths[i].log_weight;
        b[i] = 0.5 * w * paths[i].quad;
    }
    const auto ma = mean_and_se(a);
    const auto mb = mean_and_se(b);
    return EntropyEstimate{ma.mean, ma.se, mb.mean, mb.se};
}

inline MeanAndSe weight_normalization(std::span<const WeightPath> paths) {
    Vec w(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) w[i] = std::exp(paths[i].log_weight);
    return mean_and_se(w);
}

struct HistogramSpec {
    std::size_t dims = 1;   // leading coordinates binned
    std::size_t cells = 32; // per axis; two overflow bins per axis complete the partition
    Vec lo, hi;
};

inline HistogramSpec auto_partition(const EmpiricalCloud& a, const EmpiricalCloud& b,
                                    std::size_t dims, std::size_t cells) {
    dims = std::min(dims, a.dim);
    HistogramSpec spec;
    spec.dims = dims;
    spec.cells = cells;
    spec.lo.assign(dims, std::numeric_limits<double>::infinity());
    spec.hi.assign(dims, -std::numeric_limits<double>::infinity());
    for (const EmpiricalCloud* c : {&a, &b})
        for (std::size_t i = 0; i < c->size(); ++i)
            for (std::size_t k = 0; k < dims; ++k) {
                spec.lo[k] = std::min(spec.lo[k], c->point(i)[k]);
                spec.hi[k] = std::max(spec.hi[k], c->point(i)[k]);
            }
    for (std::size_t k = 0; k < dims; ++k) {
        const double pad = 1e-9 * (1.0 + spec.hi[k] - spec.lo[k]);
        spec.lo[k] -= pad;
        spec.hi[k] += pad;
    }
    return spec;
}

struct TvEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Finite-partition lower bound (1/2) sum_cells |p_i - q_i| on the leading
// coordinates; refining a partition can only increase it.
inline TvEstimate tv_lower_bound(const EmpiricalCloud& a, const EmpiricalCloud& b,
                                 const HistogramSpec& spec) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("tv: empty cloud");
    if (a.dim != b.dim) throw std::invalid_argument("tv: dimension mismatch");
    const std::size_t d = std::min(spec.dims, a.dim);
    if (d == 0 || spec.cells < 1) throw std::invalid_argument("tv: bad partition");
    const std::size_t axis_bins = spec.cells + 2;
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) total *= axis_bins;
    Vec pa(total, 0.0), pb(total, 0.0);
    const auto bin_of = [&](std::span<const double> x) {
        std::size_t idx = 0;
        for (std::size_t k = 0; k < d; ++k) {
            const double w = (spec.hi[k] - spec.lo[k]) / static_cast<double>(spec.cells);
            std::size_t bk;
            if (x[k] < spec.lo[k])
                bk = 0;
            else if (x[k] >= spec.hi[k])
                bk = spec.cells + 1;
            else
                bk = 1 + static_cast<std::size_t>((x[k] - spec.lo[k]) / w);
            if (bk > spec.cells + 1) bk = spec.cells + 1;
            idx = idx * axis_bins + bk;
        }
        return idx;
    };
    const double wa = 1.0 / static_cast<double>(a.size());
    const double wb = 1.0 / static_cast<double>(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) pa[bin_of(a.point(i))] += wa;
    for (std::size_t i = 0; i < b.size(); ++i) pb[bin_of(b.point(i))] += wb;
    double tv = 0.0, var = 0.0;
    for (std::size_t c = 0; c < total; ++c) {
        tv += std::abs(pa[c] - pb[c]);
        var += pa[c] * (1.0 - pa[c]) / static_cast<double>(a.size()) +
               pb[c] * (1.0 - pb[c]) / static_cast<double>(b.size());
    }
    return TvEstimate{0.5 * tv, 0.5 * std::sqrt(var)};
}

// ---------------------------------------------------------------------------
// Test functions and reports
// ---------------------------------------------------------------------------

struct TestFunction {
    std::string id;
    std::function<double(std::span<const double>)> f;
    double lower = 0.0;  // declared bounds
    double upper = 1.0;
    bool strictly_positive = false;
};

inline const std::vector<TestFunction>& test_functions() {
    static const std::vector<TestFunction> fns = [] {
        std::vector<TestFunction> v;
        v.push_back({"f1",
                     [](std::span<const double> x) { return 1.0 + std::tanh(x[0]); }, 0.0,
                     2.0, true});
        v.push_back({"f2",
                     [](std::span<const double> x) {
                         return 1.0 + std::exp(-0.5 * squared_norm(x));
                     },
                     1.0, 2.0, true});
        v.push_back({"f3",
                     [](std::span<const double> x) {
                         const double u = x[0] / 2.0;
                         if (std::abs(u) >= 1.0) return 1.0;
                         return 1.0 + std::exp(1.0 - 1.0 / (1.0 - u * u));
                     },
                     1.0, 2.0, true});
        return v;
    }();
    return fns;
}

inline const TestFunction& test_function(const std::string& id) {
    for (const auto& f : test_functions())
        if (f.id == id) return f;
    throw std::invalid_argument("unknown test function id '" + id + "'");
}

struct CouplingReport {
    std::string inequality;
    double horizon = 0.0;
    double p = 0.0;          // 0 when not applicable
    std::string f_id = "-";
    double lhs = 0.0, lhs_se = 0.0;
    double rhs = 0.0, rhs_se = 0.0;
    double margin = 0.0;     // rhs - lhs
    bool pass = false;       // margin >= -3 * combined se
    double w2_initial = 0.0;
    double phi_t = 0.0;
    std::uint64_t seed = 0;
};

inline CouplingReport make_report(std::string inequality, double T, double p, std::string f_id,
                                  double lhs, double lhs_se, double rhs, double rhs_se,
                                  double w2_initial, double phi_t, std::uint64_t seed) {
    CouplingReport r;
    r.inequality = std::move(inequality);
    r.horizon = T;
    r.p = p;
    r.f_id = std::move(f_id);
    r.lhs = lhs;
    r.lhs_se = lhs_se;
    r.rhs = rhs;
    r.rhs_se = rhs_se;
    r.margin = rhs - lhs;
    r.pass = r.margin >= -3.0 * std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se);
    r.w2_initial = w2_initial;
    r.phi_t = phi_t;
    r.seed = seed;
    return r;
}

// Phi(T) = K (4 T phi^2(d) + cw2sq + 2 d^2 / T); the flow term cw2sq is the
// measured 4 K_b^2 int_0^T W2(mu_t, nu_t)^2 dt from the two fixed-point flows
// (the proof's display), supplied by the caller.
inline double phi_T(double k_const, double T, const DiniModulus& phi, double d, double cw2sq) {
    if (!(T > 0.0)) throw std::invalid_argument("phi_T: horizon must be positive");
    if (k_const < 0.0 || d < 0.0 || cw2sq < 0.0)
        throw std::invalid_argument("phi_T: negative input");
    const double ph = phi(d);
    return k_const * (4.0 * T * ph * ph + cw2sq + 2.0 * d * d / T);
}

// ---------------------------------------------------------------------------
// Shared pieces of the coupled runs
// ---------------------------------------------------------------------------

enum class InitialCoupling { Synchronous, Independent };

// Draws the two initial ensembles; synchronous coupling feeds both samplers
// the same underlying draws.
inline std::pair<Vec, Vec> sample_coupled_initials(const InitialSampler& mu0,
                                                   const InitialSampler& nu0,
                                                   const SchemeConfig& cfg,
                                                   InitialCoupling coupling) {
    if (mu0.dim() != nu0.dim())
        throw std::invalid_argument("coupled initials: dimension mismatch");
    const std::size_t m = mu0.dim(), n = cfg.particles;
    Vec xa(n * m), xb(n * m), normals(m);
    for (std::size_t i = 0; i < n; ++i) {
        auto st = rng::make_stream(cfg.seed, rng::StreamKind::InitialState, i, cfg.replicate);
        st.fill_normal(normals);
        const double u = st.next_uniform();
        mu0.from_draws(normals, u, {xa.data() + i * m, m});
        if (coupling == InitialCoupling::Synchronous) {
            nu0.from_draws(normals, u, {xb.data() + i * m, m});
        } else {
            auto st2 = rng::make_stream(cfg.seed, rng::StreamKind::InitialStateSecondary, i,
                                        cfg.replicate);
            st2.fill_normal(normals);
            const double u2 = st2.next_uniform();
            nu0.from_draws(normals, u2, {xb.data() + i * m, m});
        }
    }
    return {std::move(xa), std::move(xb)};
}

namespace detail {

inline void require_weightable(const SchemeConfig& cfg) {
    if (cfg.exact_convolution)
        throw std::invalid_argument(
            "weighted run: exact convolution has no explicit Brownian increments; "
            "disable exact_convolution");
}

// int_0^T W2(mu_t, nu_t)^2 dt with per-node distance max(subsampled W2,
// |mean difference|); the mean term keeps the value an upper bound for the
// drift's measure contribution, which is what the pathwise guard needs.
inline double measured_w2sq_integral(const MeasureFlow& a, const MeasureFlow& b) {
    double acc = 0.0;
    const double dt = a.horizon / static_cast<double>(a.mesh_n);
    for (std::size_t j = 0; j < a.mesh_n; ++j) {  // left sum, matching the weight sums
        const double w2 = w2_exact(a.node(j).support, b.node(j).support);
        double dm2 = 0.0;
        for (std::size_t k = 0; k < a.node(j).mean.size(); ++k) {
            const double d = a.node(j).mean[k] - b.node(j).mean[k];
            dm2 += d * d;
        }
        const double w = std::max(w2 * w2, dm2);
        acc += w * dt;
    }
    return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Log-Harnack entropy verification (drift shift in the measure argument)
// ---------------------------------------------------------------------------

struct LogHarnackResult {
    std::vector<CouplingReport> rows;  // martingale, ent-vs-quad, pinsker
    EntropyEstimate entropy;
    MeanAndSe mean_weight;
    double quad_bound = 0.0;  // 1/2 E int |gamma|^2 under the base measure
    double quad_bound_se = 0.0;
    TvEstimate tv;
    double w2_initial = 0.0;
    double cw2sq = 0.0;
    PicardResult picard_mu, picard_nu;

    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }
};

inline LogHarnackResult log_harnack_entropy_check(const ModelSpec& model,
                                                  const InitialSampler& mu0,
                                                  const InitialSampler& nu0,
                                                  const SchemeConfig& cfg,
                                                  const PicardParams& picard,
                                                  std::size_t tv_dims = 1,
                                                  std::size_t tv_cells = 32) {
    if (!model.noise.measure_free)
        throw std::invalid_argument(
            "log-harnack: noise must not depend on the measure (theorem hypothesis)");
    detail::require_weightable(cfg);
    const std::size_t m = model.modes();

    LogHarnackResult out;
    out.picard_mu = picard_measure_flow(model, mu0, cfg, picard);
    out.picard_nu = picard_measure_flow(model, nu0, cfg, picard);
    const MeasureFlow& mu_flow = out.picard_mu.flow;
    const MeasureFlow& nu_flow = out.picard_nu.flow;
    out.w2_initial = w2_exact(mu_flow.node(0).support, nu_flow.node(0).support);
    out.cw2sq = 4.0 * model.drift.measure_lipschitz * model.drift.measure_lipschitz *
                detail::measured_w2sq_integral(mu_flow, nu_flow);

    std::vector<WeightPath> weights(cfg.particles);
    const auto observer = [&](const StepRecord& rec) {
        thread_local Vec b_mu, b_nu, gamma;
        b_mu.resize(m);
        b_nu.resize(m);
        gamma.resize(m);
        model.drift.eval(rec.t, rec.x, mu_flow.node(rec.cell), b_mu);
        model.drift.eval(rec.t, rec.x, nu_flow.node(rec.cell), b_nu);
        for (std::size_t k = 0; k < m; ++k) b_mu[k] -= b_nu[k];
        if (model.noise.kind == NoiseField::Kind::Diagonal) {
            thread_local Vec qd;
            qd.resize(m);
            model.noise.eval_diag(rec.t, rec.x, mu_flow.node(rec.cell), qd);
            gamma_from_diagonal(qd, b_mu, gamma);
        } else {
            thread_local Vec q;
            q.resize(m * m);
            model.noise.eval_dense(rec.t, rec.x, mu_flow.node(rec.cell), q);
            gamma_from_dense(q, m, b_mu, gamma);
        }
        accumulate_weight(weights[rec.particle], gamma, rec.dw, rec.dt);
    };
    RunResult xrun = simulate_frozen_flow(model, mu_flow, mu0, cfg, observer);

    // Direct run of the tilted dynamics: same initial law, nu-flow drift.
    RunResult zrun = simulate_frozen_flow(model, nu_flow, mu0, cfg);

    out.entropy = entropy_estimate(weights);
    out.mean_weight = weight_normalization(weights);
    {
        Vec half_q(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) half_q[i] = 0.5 * weights[i].quad;
        const auto mq = mean_and_se(half_q);
        out.quad_bound = mq.mean;
        out.quad_bound_se = mq.se;
    }
    const EmpiricalCloud xc = xrun.ensemble.cloud();
    const EmpiricalCloud zc = zrun.ensemble.cloud();
    out.tv = tv_lower_bound(xc, zc, auto_partition(xc, zc, tv_dims, tv_cells));

    const double T = model.horizon;
    const std::uint64_t seed = cfg.seed;
    out.rows.push_back(make_report("log-harnack-martingale", T, 0.0, "-",
                                   std::abs(out.mean_weight.mean - 1.0), out.mean_weight.se,
                                   0.0, 0.0, out.w2_initial, 0.0, seed));
    out.rows.push_back(make_report("log-harnack-ent-vs-quad", T, 0.0, "-", out.entropy.ent,
                                   out.entropy.ent_se, out.quad_bound, out.quad_bound_se,
                                   out.w2_initial, 0.0, seed));
    out.rows.push_back(make_report("log-harnack-pinsker", T, 0.0, "-",
                                   2.0 * out.tv.value * out.tv.value,
                                   4.0 * out.tv.value * out.tv.std_error, out.entropy.ent,
                                   out.entropy.ent_se, out.w2_initial, 0.0, seed));
    return out;
}

// ---------------------------------------------------------------------------
// Harnack inequality with power (bridge coupling, additive noise)
// ---------------------------------------------------------------------------

struct PowerHarnackRun {
    std::size_t dim = 0;
    Vec terminal;                    // X_T states
    std::vector<WeightPath> weights;
    Vec initial_distance;            // d_i = |X_0 - Y_0| per particle
    double max_distance = 0.0;
    double cw2sq = 0.0;
    double w2_initial = 0.0;
    double max_terminal_dev = 0.0;   // max |Y_T - X_T| from the bridge transform
    double max_quad = 0.0;           // max_i int |gamma|^2
    double horizon = 0.0;
    double k_union = 0.0;
    DiniModulus modulus;
    std::uint64_t seed = 0;
    PicardResult picard_mu, picard_nu;
};

inline PowerHarnackRun harnack_power_run(const ModelSpec& model, const InitialSampler& mu0,
                                         const InitialSampler& nu0, InitialCoupling coupling,
                                         const SchemeConfig& cfg, const PicardParams& picard) {
    if (!model.noise.additive)
        throw std::invalid_argument(
            "power-harnack: noise must not depend on state or measure (theorem hypothesis)");
    detail::require_weightable(cfg);
    const std::size_t m = model.modes();
    const double T = model.horizon;

    PowerHarnackRun out;
    out.dim = m;
    out.horizon = T;
    out.k_union = model.k_union();
    out.modulus = model.drift.modulus;
    out.seed = cfg.seed;
    out.picard_mu = picard_measure_flow(model, mu0, cfg, picard);
    out.picard_nu = picard_measure_flow(model, nu0, cfg, picard);
    const MeasureFlow& mu_flow = out.picard_mu.flow;
    const MeasureFlow& nu_flow = out.picard_nu.flow;
    out.w2_initial = w2_exact(mu_flow.node(0).support, nu_flow.node(0).support);
    out.cw2sq = 4.0 * model.drift.measure_lipschitz * model.drift.measure_lipschitz *
                detail::measured_w2sq_integral(mu_flow, nu_flow);

    auto [x0, y0] = sample_coupled_initials(mu0, nu0, cfg, coupling);
    Vec offset(x0.size());  // Y_0 - X_0
    out.initial_distance.resize(cfg.particles);
    for (std::size_t i = 0; i < cfg.particles; ++i) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double o = y0[i * m + k] - x0[i * m + k];
            offset[i * m + k] = o;
            d2 += o * o;
        }
        out.initial_distance[i] = std::sqrt(d2);
        out.max_distance = std::max(out.max_distance, out.initial_distance[i]);
    }

    out.weights.assign(cfg.particles, WeightPath{});
    const auto& lambda = model.spectrum.eigenvalues;
    const auto observer = [&](const StepRecord& rec) {
        thread_local Vec y, b_x, b_y, phi, gamma;
        y.resize(m);
        b_x.resize(m);
        b_y.resize(m);
        phi.resize(m);
        gamma.resize(m);
        const double* off = offset.data() + rec.particle * m;
        const double bridge = (T - rec.t) / T;
        for (std::size_t k = 0; k < m; ++k) {
            const double e_at = std::exp(-lambda[k] * rec.t);
            y[k] = rec.x[k] + e_at * bridge * off[k];
            phi[k] = -e_at * off[k] / T;  // e^{At} (X_0 - Y_0) / T
        }
        model.drift.eval(rec.t, rec.x, mu_flow.node(rec.cell), b_x);
        model.drift.eval(rec.t, y, nu_flow.node(rec.cell), b_y);
        for (std::size_t k = 0; k < m; ++k) phi[k] += b_x[k] - b_y[k];
        if (model.noise.kind == NoiseField::Kind::Diagonal) {
            thread_local Vec qd;
            qd.resize(m);
            model.noise.eval_diag(rec.t, rec.x, mu_flow.node(rec.cell), qd);
            gamma_from_diagonal(qd, phi, gamma);
        } else {
            thread_local Vec q;
            q.resize(m * m);
            model.noise.eval_dense(rec.t, rec.x, mu_flow.node(rec.cell), q);
            gamma_from_dense(q, m, phi, gamma);
        }
        accumulate_weight(out.weights[rec.particle], gamma, rec.dw, rec.dt);
    };
    ParticleEnsemble ens = make_ensemble_from_states(m, x0, cfg);
    RunResult xrun = simulate_frozen_flow(model, mu_flow, std::move(ens), cfg, observer);
    out.terminal = std::move(xrun.ensemble.state);

    for (const auto& w : out.weights) out.max_quad = std::max(out.max_quad, w.quad);
    // Terminal coupling deviation, evaluated through the same bridge formula.
    for (std::size_t i = 0; i < cfg.particles; ++i) {
        double dev2 = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double e_at = std::exp(-lambda[k] * T);
            const double bridge = (T - T) / T;
            const double d = e_at * bridge * offset[i * m + k];
            dev2 += d * d;
        }
        out.max_terminal_dev = std::max(out.max_terminal_dev, std::sqrt(dev2));
    }
    return out;
}

// (P_T f(nu_0))^p <= P_T f^p(mu_0) * (E exp(p Phi(T) / 2(p-1)^2))^{p-1};
// the left side uses the weighted representation E[R f(X_T)].
inline CouplingReport harnack_power_report(const PowerHarnackRun& run, double p,
                                           const TestFunction& fn) {
    if (!(p > 1.0)) throw std::invalid_argument("power-harnack: need p > 1");
    if (fn.lower < 0.0)
        throw std::invalid_argument("power-harnack: test function must be nonnegative");
    const std::size_t n = run.weights.size(), m = run.dim;
    Vec wf(n), fp(n), ex(n);
    const double cp = p / (2.0 * (p - 1.0) * (p - 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double fx = fn.f({run.terminal.data() + i * m, m});
        wf[i] = std::exp(run.weights[i].log_weight) * fx;
        fp[i] = std::pow(fx, p);
        ex[i] = std::exp(cp * phi_T(run.k_union, run.horizon, run.modulus,
                                    run.initial_distance[i], run.cw2sq));
    }
    const auto mwf = mean_and_se(wf);
    const auto mfp = mean_and_se(fp);
    const auto mex = mean_and_se(ex);
    const double lhs = std::pow(mwf.mean, p);
    const double lhs_se = p * std::pow(std::max(mwf.mean, 0.0), p - 1.0) * mwf.se;
    const double exp_pow = std::pow(mex.mean, p - 1.0);
    const double rhs = mfp.mean * exp_pow;
    const double rhs_se =
        rhs * std::sqrt(std::pow(mfp.se / mfp.mean, 2.0) +
                        std::pow((p - 1.0) * mex.se / mex.mean, 2.0));
    const double phi_worst =
        phi_T(run.k_union, run.horizon, run.modulus, run.max_distance, run.cw2sq);
    return make_report("harnack-power", run.horizon, p, fn.id, lhs, lhs_se, rhs, rhs_se,
                       run.w2_initial, phi_worst, run.seed);
}

inline std::vector<CouplingReport> harnack_power_aux_rows(const PowerHarnackRun& run) {
    std::vector<CouplingReport> rows;
    const auto mw = weight_normalization(run.weights);
    const double phi_worst =
        phi_T(run.k_union, run.horizon, run.modulus, run.max_distance, run.cw2sq);
    rows.push_back(make_report("harnack-power-martingale", run.horizon, 0.0, "-",
                               std::abs(mw.mean - 1.0), mw.se, 0.0, 0.0, run.w2_initial,
                               phi_worst, run.seed));
    rows.push_back(make_report("harnack-power-terminal-identity", run.horizon, 0.0, "-",
                               run.max_terminal_dev, 0.0,
                               1e-12 * (1.0 + run.max_distance), 0.0, run.w2_initial,
                               phi_worst, run.seed));
    rows.push_back(make_report("harnack-power-pathwise-quad", run.horizon, 0.0, "-",
                               run.max_quad, 0.0, phi_worst + 1e-12, 0.0, run.w2_initial,
                               phi_worst, run.seed));
    return rows;
}

inline CouplingReport harnack_power_check(const ModelSpec& model, const InitialSampler& mu0,
                                          const InitialSampler& nu0, InitialCoupling coupling,
                                          double p, const std::string& f_id,
                                          const SchemeConfig& cfg,
                                          const PicardParams& picard) {
    const PowerHarnackRun run = harnack_power_run(model, mu0, nu0, coupling, cfg, picard);
    return harnack_power_report(run, p, test_function(f_id));
}

// ---------------------------------------------------------------------------
// Shift-Harnack inequality (deterministic spatial shift, x-free noise)
// ---------------------------------------------------------------------------

struct ShiftHarnackRun {
    std::size_t dim = 0;
    Vec terminal;                     // X_T states
    std::vector<WeightPath> weights;
    Vec shift_terminal;               // e^{AT} y
    Vec shift_vector;                 // y
    double phi_bar_quad_max = 0.0;    // max_i int |Phi_bar|^2
    double pathwise_bound = 0.0;      // 2 T phi^2(|y|) + 2 |y|^2 / T
    double max_terminal_dev = 0.0;
    double max_quad = 0.0;
    double horizon = 0.0;
    double k_union = 0.0;
    DiniModulus modulus;
    std::uint64_t seed = 0;
    PicardResult picard_mu;
};

inline ShiftHarnackRun shift_harnack_run(const ModelSpec& model, const InitialSampler& mu0,
                                         const Vec& y, const SchemeConfig& cfg,
                                         const PicardParams& picard) {
    if (!model.noise.x_free)
        throw std::invalid_argument(
            "shift-harnack: noise must not depend on the state (theorem hypothesis)");
    detail::require_weightable(cfg);
    const std::size_t m = model.modes();
    if (y.size() != m) throw std::invalid_argument("shift-harnack: shift dimension mismatch");
    const double T = model.horizon;

    ShiftHarnackRun out;
    out.dim = m;
    out.horizon = T;
    out.k_union = model.k_union();
    out.modulus = model.drift.modulus;
    out.seed = cfg.seed;
    out.shift_vector = y;
    out.picard_mu = picard_measure_flow(model, mu0, cfg, picard);
    const MeasureFlow& mu_flow = out.picard_mu.flow;

    const double y_norm = norm(y);
    const double phv = out.modulus(y_norm);
    out.pathwise_bound = 2.0 * T * phv * phv + 2.0 * y_norm * y_norm / T;

    const auto& lambda = model.spectrum.eigenvalues;
    out.shift_terminal.resize(m);
    for (std::size_t k = 0; k < m; ++k)
        out.shift_terminal[k] = std::exp(-lambda[k] * T) * y[k];

    out.weights.assign(cfg.particles, WeightPath{});
    Vec phi_quad(cfg.particles, 0.0);
    const auto observer = [&](const StepRecord& rec) {
        thread_local Vec ypos, b_x, b_y, phi, gamma;
        ypos.resize(m);
        b_x.resize(m);
        b_y.resize(m);
        phi.resize(m);
        gamma.resize(m);
        const double ramp = rec.t / T;
        for (std::size_t k = 0; k < m; ++k) {
            const double e_at = std::exp(-lambda[k] * rec.t);
            ypos[k] = rec.x[k] + e_at * ramp * y[k];
            phi[k] = e_at * y[k] / T;
        }
        model.drift.eval(rec.t, rec.x, mu_flow.node(rec.cell), b_x);
        model.drift.eval(rec.t, ypos, mu_flow.node(rec.cell), b_y);
        for (std::size_t k = 0; k < m; ++k) phi[k] += b_x[k] - b_y[k];
        phi_quad[rec.particle] += squared_norm(phi) * rec.dt;
        if (model.noise.kind == NoiseField::Kind::Diagonal) {
            thread_local Vec qd;
            qd.resize(m);
            model.noise.eval_diag(rec.t, rec.x, mu_flow.node(rec.cell), qd);
            gamma_from_diagonal(qd, phi, gamma);
        } else {
            thread_local Vec q;
            q.resize(m * m);
            model.noise.eval_dense(rec.t, rec.x, mu_flow.node(rec.cell), q);
            gamma_from_dense(q, m, phi, gamma);
        }
        accumulate_weight(out.weights[rec.particle], gamma, rec.dw, rec.dt);
    };
    RunResult xrun = simulate_frozen_flow(model, mu_flow, mu0, cfg, observer);
    out.terminal = std::move(xrun.ensemble.state);

    for (double q : phi_quad) out.phi_bar_quad_max = std::max(out.phi_bar_quad_max, q);
    for (const auto& w : out.weights) out.max_quad = std::max(out.max_quad, w.quad);
    // Y_T - X_T - e^{AT} y through the same transform at t = T.
    double dev2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double d = std::exp(-lambda[k] * T) * (T / T) * y[k] - out.shift_terminal[k];
        dev2 += d * d;
    }
    out.max_terminal_dev = std::sqrt(dev2);
    return out;
}

enum class ShiftHarnackMode { Log, Power };

// log mode:   P_T log f <= log P_T f(e^{AT}y + .) + K(T)(T phi^2(|y|) + |y|^2/T)
// power mode: (P_T f)^p <= P_T f^p(e^{AT}y + .) * exp(p/(p-1) K(T)(T phi^2(|y|)+|y|^2/T))
inline CouplingReport shift_harnack_report(const ShiftHarnackRun& run, ShiftHarnackMode mode,
                                           double p, const TestFunction& fn) {
    if (fn.lower < 0.0)
        throw std::invalid_argument("shift-harnack: test function must be nonnegative");
    const std::size_t n = run.weights.size(), m = run.dim;
    const double T = run.horizon;
    const double y_norm = norm(run.shift_vector);
    const double phv = run.modulus(y_norm);
    const double cost = run.k_union * (T * phv * phv + y_norm * y_norm / T);
    Vec shifted(m);
    if (mode == ShiftHarnackMode::Log) {
        // The entropy argument needs only strict positivity of a bounded f;
        // a registered function with a zero lower bound still qualifies when
        // it never vanishes.
        if (!fn.strictly_positive)
            throw std::invalid_argument("shift-harnack log mode: f must be strictly positive");
        Vec logf(n), fshift(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> x{run.terminal.data() + i * m, m};
            logf[i] = std::log(fn.f(x));
            for (std::size_t k = 0; k < m; ++k) shifted[k] = x[k] + run.shift_terminal[k];
            fshift[i] = fn.f(shifted);
        }
        const auto ml = mean_and_se(logf);
        const auto mf = mean_and_se(fshift);
        const double rhs = std::log(mf.mean) + cost;
        const double rhs_se = mf.se / mf.mean;
        return make_report("shift-harnack-log", T, 0.0, fn.id, ml.mean, ml.se, rhs, rhs_se,
                           0.0, cost, run.seed);
    }
    if (!(p > 1.0)) throw std::invalid_argument("shift-harnack: need p > 1");
    Vec fx(n), fpshift(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> x{run.terminal.data() + i * m, m};
        fx[i] = fn.f(x);
        for (std::size_t k = 0; k < m; ++k) shifted[k] = x[k] + run.shift_terminal[k];
        fpshift[i] = std::pow(fn.f(shifted), p);
    }
    const auto mf = mean_and_se(fx);
    const auto mfp = mean_and_se(fpshift);
    const double lhs = std::pow(mf.mean, p);
    const double lhs_se = p * std::pow(std::max(mf.mean, 0.0), p - 1.0) * mf.se;
    const double rhs = mfp.mean * std::exp(p / (p - 1.0) * cost);
    const double rhs_se = mfp.se * std::exp(p / (p - 1.0) * cost);
    return make_report("shift-harnack-power", T, p, fn.id, lhs, lhs_se, rhs, rhs_se, 0.0,
                       cost, run.seed);
}

inline std::vector<CouplingReport> shift_harnack_aux_rows(const ShiftHarnackRun& run) {
    std::vector<CouplingReport> rows;
    const auto mw = weight_normalization(run.weights);
    const double y_norm = norm(run.shift_vector);
    rows.push_back(make_report("shift-harnack-martingale", run.horizon, 0.0, "-",
                               std::abs(mw.mean - 1.0), mw.se, 0.0, 0.0, 0.0, 0.0, run.seed));
    rows.push_back(make_report("shift-harnack-terminal-identity", run.horizon, 0.0, "-",
                               run.max_terminal_dev, 0.0, 1e-12 * (1.0 + y_norm), 0.0, 0.0,
                               0.0, run.seed));
    rows.push_back(make_report("shift-harnack-pathwise-quad", run.horizon, 0.0, "-",
                               run.phi_bar_quad_max, 0.0, run.pathwise_bound + 1e-12, 0.0,
                               0.0, 0.0, run.seed));
    return rows;
}

inline CouplingReport shift_harnack_check(const ModelSpec& model, const InitialSampler& mu0,
                                          const Vec& y, ShiftHarnackMode mode, double p,
                                          const std::string& f_id, const SchemeConfig& cfg,
                                          const PicardParams& picard) {
    const ShiftHarnackRun run = shift_harnack_run(model, mu0, y, cfg, picard);
    return shift_harnack_report(run, mode, p, test_function(f_id));
}

}  // namespace spdelab

#pragma once

// Mesh-frozen exponential Euler stepping for the truncated equation and the
// Picard iteration over measure flows.
//
// Coefficients are frozen at the left endpoint of each mesh cell: the drift
// and noise are evaluated once per cell at (t*, x*, law*), where t* is the
// cell node, x* the particle state there, and law* the measure snapshot at
// t*. Between nodes the linear part is integrated exactly mode-wise.
//
// Noise increments come in two flavours:
//   * exact convolution (additive diagonal noise only): per-mode Gaussians
//     with the exact one-step variance q_k^2 (1-e^{-2 lambda_k dt})/(2 lambda_k);
//   * Maruyama on the mild form: e^{A dt} Q sqrt(dt) xi, which exposes the
//     underlying Brownian increments to observers (weight accumulation).
//
// Every random draw belongs to one particle's own stream, so the scheme is
// deterministic for any thread count, and permuting particles together with
// their stream indices permutes trajectories exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spdelab/core.hpp"
#include "spdelab/linalg.hpp"
#include "spdelab/model.hpp"
#include "spdelab/parallel.hpp"
#include "spdelab/rng.hpp"
#include "spdelab/transport.hpp"

namespace spdelab {

struct SchemeConfig {
    std::size_t mesh_n = 64;        // coefficient-freeze mesh cells
    std::size_t output_l = 0;       // metric/export grid size L (0: every mesh node)
    std::size_t particles = 1000;   // N
    std::size_t w2_subsample = 128; // N_w support points kept per snapshot
    std::size_t substeps = 1;       // integration steps per mesh cell
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;    // shifts every derived stream (seed studies)
    bool exact_convolution = false;
    unsigned threads = 1;

    void validate() const {
        if (mesh_n < 1) throw std::invalid_argument("scheme: mesh_n >= 1 required");
        if (particles < 1) throw std::invalid_argument("scheme: particles >= 1 required");
        if (w2_subsample < 2) throw std::invalid_argument("scheme: w2_subsample >= 2 required");
        if (substeps < 1) throw std::invalid_argument("scheme: substeps >= 1 required");
        if (output_l != 0 && mesh_n % output_l != 0)
            throw std::invalid_argument("scheme: output_l must divide mesh_n");
    }

    std::size_t metric_stride() const { return output_l == 0 ? 1 : mesh_n / output_l; }
};

// eta_n(s) = floor(s / (T/n)) * (T/n); the terminal node maps to itself.
inline double eta_mesh(double s, double T, std::size_t n) {
    if (!(T > 0.0)) throw std::invalid_argument("eta_mesh: horizon must be positive");
    if (n < 1) throw std::invalid_argument("eta_mesh: n >= 1 required");
    if (s < 0.0 || s > T * (1.0 + 1e-12))
        throw std::invalid_argument("eta_mesh: time outside [0,T]");
    if (s >= T) return T;
    const double delta = T / static_cast<double>(n);
    auto j = static_cast<std::size_t>(std::floor(s / delta));
    if (j >= n) j = n - 1;
    while (static_cast<double>(j + 1) * delta <= s) ++j;
    while (j > 0 && static_cast<double>(j) * delta > s) --j;
    return static_cast<double>(j) * delta;
}

struct InitialSampler {
    enum class Kind { PointMass, DiagonalGaussian, TwoPoint };
    Kind kind = Kind::PointMass;
    Vec center;           // point location / Gaussian mean / mixture center
    Vec spread;           // Gaussian per-mode sd / two-point offset
    double weight_plus = 0.5;

    static InitialSampler point(Vec v) {
        check_finite(v, "sampler point");
        InitialSampler s;
        s.kind = Kind::PointMass;
        s.center = std::move(v);
        s.spread.assign(s.center.size(), 0.0);
        return s;
    }
    static InitialSampler gaussian(Vec mean, Vec sd) {
        if (mean.size() != sd.size())
            throw std::invalid_argument("sampler: mean/sd dimension mismatch");
        check_finite(mean, "sampler mean");
        check_finite(sd, "sampler sd");
        InitialSampler s;
        s.kind = Kind::DiagonalGaussian;
        s.center = std::move(mean);
        s.spread = std::move(sd);
        return s;
    }
    static InitialSampler two_point(Vec center, Vec offset, double w_plus = 0.5) {
        if (center.size() != offset.size())
            throw std::invalid_argument("sampler: center/offset dimension mismatch");
        if (!(w_plus >= 0.0 && w_plus <= 1.0))
            throw std::invalid_argument("sampler: weight outside [0,1]");
        check_finite(center, "sampler center");
        check_finite(offset, "sampler offset");
        InitialSampler s;
        s.kind = Kind::TwoPoint;
        s.center = std::move(center);
        s.spread = std::move(offset);
        s.weight_plus = w_plus;
        return s;
    }

    std::size_t dim() const { return center.size(); }

    // Every sampler consumes dim() normals plus one uniform, so two samplers
    // reading the same stream draw a synchronously coupled pair.
    void from_draws(std::span<const double> normals, double uniform,
                    std::span<double> out) const {
        switch (kind) {
            case Kind::PointMass:
                for (std::size_t k = 0; k < out.size(); ++k) out[k] = center[k];
                break;
            case Kind::DiagonalGaussian:
                for (std::size_t k = 0; k < out.size(); ++k)
                    out[k] = center[k] + spread[k] * normals[k];
                break;
            case Kind::TwoPoint: {
                const double sgn = uniform < weight_plus ? 1.0 : -1.0;
                for (std::size_t k = 0; k < out.size(); ++k)
                    out[k] = center[k] + sgn * spread[k];
                break;
            }
        }
    }

    void draw(rng::Stream& st, std::span<double> out) const {
        Vec normals(out.size());
        st.fill_normal(normals);
        const double u = st.next_uniform();
        from_draws(normals, u, out);
    }
};

struct ParticleEnsemble {
    std::size_t dim = 0;
    double time = 0.0;
    Vec state;                                // N x dim
    std::vector<std::uint64_t> stream_index;  // unique per particle
    std::vector<rng::Stream> noise_streams;

    // mesh-frozen coefficients of the cell currently being integrated
    std::ptrdiff_t frozen_cell = -1;
    Vec frozen_drift;        // N x dim
    Vec frozen_noise_diag;   // N x dim           (diagonal noise)
    Vec frozen_noise_dense;  // N x dim x dim     (dense noise)

    std::size_t size() const { return dim == 0 ? 0 : state.size() / dim; }
    std::span<double> row(std::size_t i) { return {state.data() + i * dim, dim}; }
    std::span<const double> row(std::size_t i) const {
        return {state.data() + i * dim, dim};
    }

    EmpiricalCloud cloud() const { return EmpiricalCloud::from_rows(dim, state); }
};

inline ParticleEnsemble make_ensemble_from_states(std::size_t dim, Vec states,
                                                  const SchemeConfig& cfg) {
    ParticleEnsemble ens;
    ens.dim = dim;
    ens.state = std::move(states);
    const std::size_t n = ens.size();
    if (n != cfg.particles)
        throw std::invalid_argument("ensemble: state count != configured particles");
    ens.stream_index.resize(n);
    std::iota(ens.stream_index.begin(), ens.stream_index.end(), 0);
    ens.noise_streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        ens.noise_streams.push_back(rng::make_stream(cfg.seed, rng::StreamKind::Noise,
                                                     ens.stream_index[i], cfg.replicate));
    return ens;
}

inline ParticleEnsemble make_ensemble(const InitialSampler& sampler, const SchemeConfig& cfg) {
    const std::size_t m = sampler.dim();
    Vec states(cfg.particles * m);
    for (std::size_t i = 0; i < cfg.particles; ++i) {
        auto st = rng::make_stream(cfg.seed, rng::StreamKind::InitialState, i, cfg.replicate);
        sampler.draw(st, {states.data() + i * m, m});
    }
    return make_ensemble_from_states(m, std::move(states), cfg);
}

// Exact snapshot moments plus a sorted-stride support subsample. Sorting makes
// the view a multiset function of the cloud: relabeling particles cannot
// change it, bit for bit.
inline MeasureView snapshot_view(const ParticleEnsemble& ens, std::size_t n_w) {
    const std::size_t n = ens.size(), m = ens.dim;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&ens, m](std::size_t a, std::size_t b) {
        const auto ra = ens.row(a), rb = ens.row(b);
        for (std::size_t k = 0; k < m; ++k) {
            if (ra[k] < rb[k]) return true;
            if (ra[k] > rb[k]) return false;
        }
        return false;
    });
    MeasureView v;
    v.mean.assign(m, 0.0);
    v.var.assign(m, 0.0);
    v.second_moment = 0.0;
    for (std::size_t idx : order) {
        const auto r = ens.row(idx);
        for (std::size_t k = 0; k < m; ++k) v.mean[k] += r[k];
        v.second_moment += squared_norm(r);
    }
    for (double& x : v.mean) x /= static_cast<double>(n);
    v.second_moment /= static_cast<double>(n);
    for (std::size_t idx : order) {
        const auto r = ens.row(idx);
        for (std::size_t k = 0; k < m; ++k) {
            const double d = r[k] - v.mean[k];
            v.var[k] += d * d;
        }
    }
    for (double& x : v.var) x /= static_cast<double>(n);

    const std::size_t keep = std::min(n, n_w);
    Vec flat(keep * m);
    for (std::size_t t = 0; t < keep; ++t) {
        const std::size_t pos = keep == n ? t : (2 * t + 1) * n / (2 * keep);
        const auto r = ens.row(order[pos]);
        std::copy(r.begin(), r.end(), flat.begin() + t * m);
    }
    v.support = EmpiricalCloud::from_rows(m, std::move(flat));
    return v;
}

struct MeasureFlow {
    double horizon = 0.0;
    std::size_t mesh_n = 0;
    std::vector<MeasureView> nodes;  // mesh_n + 1 snapshots at times j*T/mesh_n

    double node_time(std::size_t j) const {
        return horizon * static_cast<double>(j) / static_cast<double>(mesh_n);
    }
    const MeasureView& node(std::size_t j) const { return nodes.at(j); }

    static MeasureFlow constant(MeasureView v, double T, std::size_t n) {
        MeasureFlow f;
        f.horizon = T;
        f.mesh_n = n;
        f.nodes.assign(n + 1, std::move(v));
        return f;
    }
};

// Observer record for one integration substep; x is the state at the left
// endpoint t, dw the Brownian increments that will advance it (empty in
// exact-convolution mode). Observers run on the worker that owns the
// particle and must not touch shared mutable state.
struct StepRecord {
    std::size_t particle = 0;
    std::size_t cell = 0;
    double t = 0.0;
    double dt = 0.0;
    std::span<const double> x;
    std::span<const double> dw;
};

struct NoObserver {
    void operator()(const StepRecord&) const {}
};

struct RunResult {
    ParticleEnsemble ensemble;
    MeasureFlow flow;
    double max_drift_norm = 0.0;  // largest |b| seen at a freeze node (diagnostics)
};

namespace detail {

struct StepTables {
    double dt = 0.0;
    Vec decay;     // e^{-lambda_k dt}
    Vec dcoef;     // (1 - e^{-lambda_k dt}) / lambda_k
    Vec conv_sd;   // exact-convolution per-mode sd (additive diagonal only)
    Vec add_sigma; // constant diagonal amplitudes of an additive noise
    double sqrt_dt = 0.0;
};

inline StepTables make_step_tables(const ModelSpec& model, double dt, bool exact) {
    StepTables tb;
    tb.dt = dt;
    tb.sqrt_dt = std::sqrt(dt);
    const auto& lam = model.spectrum.eigenvalues;
    tb.decay.resize(lam.size());
    tb.dcoef.resize(lam.size());
    for (std::size_t k = 0; k < lam.size(); ++k) {
        tb.decay[k] = std::exp(-lam[k] * dt);
        tb.dcoef[k] = -std::expm1(-lam[k] * dt) / lam[k];
    }
    if (model.noise.additive && model.noise.kind == NoiseField::Kind::Diagonal) {
        static const MeasureView empty_view{};
        tb.add_sigma.resize(lam.size());
        model.noise.eval_diag(0.0, Vec(lam.size(), 0.0), empty_view, tb.add_sigma);
        if (exact) {
            const Vec var = stochastic_convolution_variance(model.spectrum, tb.add_sigma, dt);
            tb.conv_sd.resize(lam.size());
            for (std::size_t k = 0; k < lam.size(); ++k) tb.conv_sd[k] = std::sqrt(var[k]);
        }
    }
    return tb;
}

// Freezes drift (and, unless additive, noise) for every particle at the cell
// node from the current states and the given measure snapshot.
inline void freeze_cell(ParticleEnsemble& ens, const ModelSpec& model, std::size_t cell,
                        double t_star, const MeasureView& law, unsigned threads) {
    const std::size_t n = ens.size(), m = ens.dim;
    ens.frozen_drift.resize(n * m);
    const bool dense = model.noise.kind == NoiseField::Kind::Dense;
    const bool need_noise = dense || !model.noise.additive;
    if (need_noise) {
        if (dense)
            ens.frozen_noise_dense.resize(n * m * m);
        else
            ens.frozen_noise_diag.resize(n * m);
    }
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto x = ens.row(i);
            model.drift.eval(t_star, x, law, {ens.frozen_drift.data() + i * m, m});
            if (need_noise) {
                if (dense)
                    model.noise.eval_dense(t_star, x, law,
                                           {ens.frozen_noise_dense.data() + i * m * m, m * m});
                else
                    model.noise.eval_diag(t_star, x, law,
                                          {ens.frozen_noise_diag.data() + i * m, m});
            }
        }
    });
    ens.frozen_cell = static_cast<std::ptrdiff_t>(cell);
}

}  // namespace detail

// Advances every particle by one substep of size tb.dt starting at time t
// inside cell `cell` (coefficients must already be frozen for that cell).
template <class Obs>
void advance_substep(ParticleEnsemble& ens, const ModelSpec& model,
                     const detail::StepTables& tb, std::size_t cell, double t,
                     const SchemeConfig& cfg, Obs&& obs) {
    const std::size_t n = ens.size(), m = ens.dim;
    const bool exact = cfg.exact_convolution;
    const bool dense = model.noise.kind == NoiseField::Kind::Dense;
    const bool additive = model.noise.additive && !dense;
    parallel_for(n, cfg.threads, [&](std::size_t lo, std::size_t hi) {
        Vec xi(m), dw(m), qdw(m);
        for (std::size_t i = lo; i < hi; ++i) {
            auto x = ens.row(i);
            auto& st = ens.noise_streams[i];
            for (std::size_t k = 0; k < m; ++k) xi[k] = st.next_normal();
            StepRecord rec;
            rec.particle = i;
            rec.cell = cell;
            rec.t = t;
            rec.dt = tb.dt;
            rec.x = x;
            if (exact) {
                rec.dw = {};
                obs(rec);
                const double* b = ens.frozen_drift.data() + i * m;
                for (std::size_t k = 0; k < m; ++k)
                    x[k] = tb.decay[k] * x[k] + tb.dcoef[k] * b[k] + tb.conv_sd[k] * xi[k];
            } else {
                for (std::size_t k = 0; k < m; ++k) dw[k] = tb.sqrt_dt * xi[k];
                rec.dw = dw;
                obs(rec);
                const double* b = ens.frozen_drift.data() + i * m;
                if (dense) {
                    linalg::matvec({ens.frozen_noise_dense.data() + i * m * m, m * m}, dw, qdw);
                    for (std::size_t k = 0; k < m; ++k)
                        x[k] = tb.decay[k] * (x[k] + qdw[k]) + tb.dcoef[k] * b[k];
                } else if (additive) {
                    for (std::size_t k = 0; k < m; ++k)
                        x[k] = tb.decay[k] * (x[k] + tb.add_sigma[k] * dw[k]) +
                               tb.dcoef[k] * b[k];
                } else {
                    const double* q = ens.frozen_noise_diag.data() + i * m;
                    for (std::size_t k = 0; k < m; ++k)
                        x[k] = tb.decay[k] * (x[k] + q[k] * dw[k]) + tb.dcoef[k] * b[k];
                }
            }
        }
    });
}

// One public step of the scheme. The step must stay inside one mesh cell;
// when it starts at a cell node the coefficients are (re)frozen there from
// the current particle states and the frozen flow's snapshot.
inline void exponential_euler_step(ParticleEnsemble& ens, const ModelSpec& model,
                                   const MeasureFlow& frozen, double t, double dt,
                                   const SchemeConfig& cfg) {
    cfg.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
    if (cfg.exact_convolution &&
        !(model.noise.additive && model.noise.kind == NoiseField::Kind::Diagonal))
        throw std::invalid_argument("step: exact convolution needs additive diagonal noise");
    const double T = model.horizon;
    const double delta = T / static_cast<double>(cfg.mesh_n);
    const double t_star = eta_mesh(t, T, cfg.mesh_n);
    const auto cell = static_cast<std::size_t>(std::llround(t_star / delta));
    if (t + dt > static_cast<double>(cell + 1) * delta * (1.0 + 1e-12))
        throw std::invalid_argument("step: step crosses a freeze node; split it");
    if (ens.frozen_cell != static_cast<std::ptrdiff_t>(cell)) {
        if (std::abs(t - t_star) > 1e-12 * std::max(1.0, T))
            throw std::invalid_argument(
                "step: cell not frozen and step does not start at its node");
        detail::freeze_cell(ens, model, cell, t_star, frozen.node(cell), cfg.threads);
    }
    const auto tb = detail::make_step_tables(model, dt, cfg.exact_convolution);
    advance_substep(ens, model, tb, cell, t, cfg, NoObserver{});
    ens.time = t + dt;
}

namespace detail {

template <class ViewAt, class Obs>
RunResult run_scheme(const ModelSpec& model, ParticleEnsemble ens, const SchemeConfig& cfg,
                     ViewAt&& view_at, Obs&& obs) {
    cfg.validate();
    if (cfg.exact_convolution &&
        !(model.noise.additive && model.noise.kind == NoiseField::Kind::Diagonal))
        throw std::invalid_argument("run: exact convolution needs additive diagonal noise");
    if (ens.dim != model.modes())
        throw std::invalid_argument("run: ensemble dimension != model modes");
    const double T = model.horizon;
    const std::size_t n_cells = cfg.mesh_n;
    const double delta = T / static_cast<double>(n_cells);
    const double dt = delta / static_cast<double>(cfg.substeps);
    const auto tb = make_step_tables(model, dt, cfg.exact_convolution);

    MeasureFlow flow;
    flow.horizon = T;
    flow.mesh_n = n_cells;
    flow.nodes.reserve(n_cells + 1);

    double max_drift_sq = 0.0;
    for (std::size_t j = 0; j < n_cells; ++j) {
        const double t_star = static_cast<double>(j) * delta;
        flow.nodes.push_back(snapshot_view(ens, cfg.w2_subsample));
        const MeasureView& law = view_at(j, flow.nodes.back());
        freeze_cell(ens, model, j, t_star, law, cfg.threads);
        for (std::size_t i = 0; i < ens.size(); ++i)
            max_drift_sq = std::max(
                max_drift_sq, squared_norm({ens.frozen_drift.data() + i * ens.dim, ens.dim}));
        for (std::size_t s = 0; s < cfg.substeps; ++s) {
            const double t = t_star + static_cast<double>(s) * dt;
            advance_substep(ens, model, tb, j, t, cfg, obs);
        }
    }
    flow.nodes.push_back(snapshot_view(ens, cfg.w2_subsample));
    ens.time = T;
    ens.frozen_cell = -1;
    return RunResult{std::move(ens), std::move(flow), std::sqrt(max_drift_sq)};
}

}  // namespace detail

// Integrates the equation with the law argument replaced by the given flow.
template <class Obs = NoObserver>
RunResult simulate_frozen_flow(const ModelSpec& model, const MeasureFlow& input,
                               ParticleEnsemble ens, const SchemeConfig& cfg,
                               Obs&& obs = Obs{}) {
    if (input.mesh_n != cfg.mesh_n ||
        std::abs(input.horizon - model.horizon) > 1e-12 * std::max(1.0, model.horizon))
        throw std::invalid_argument("frozen flow grid does not match the scheme mesh");
    return detail::run_scheme(model, std::move(ens), cfg,
                              [&input](std::size_t j, const MeasureView&) -> const MeasureView& {
                                  return input.node(j);
                              },
                              std::forward<Obs>(obs));
}

template <class Obs = NoObserver>
RunResult simulate_frozen_flow(const ModelSpec& model, const MeasureFlow& input,
                               const InitialSampler& sampler, const SchemeConfig& cfg,
                               Obs&& obs = Obs{}) {
    return simulate_frozen_flow(model, input, make_ensemble(sampler, cfg), cfg,
                                std::forward<Obs>(obs));
}

// Self-consistent particle system: the law argument is the ensemble's own
// snapshot at each freeze node.
template <class Obs = NoObserver>
RunResult simulate_mckean_vlasov(const ModelSpec& model, const InitialSampler& sampler,
                                 const SchemeConfig& cfg, Obs&& obs = Obs{}) {
    return detail::run_scheme(model, make_ensemble(sampler, cfg), cfg,
                              [](std::size_t, const MeasureView& own) -> const MeasureView& {
                                  return own;
                              },
                              std::forward<Obs>(obs));
}

// Weighted flow distance rho(a,b) = sqrt(int_0^T e^{-2 lambda t} W2(a_t,b_t)^2 dt),
// trapezoid rule on every `stride`-th mesh node.
inline double flow_rho(const MeasureFlow& a, const MeasureFlow& b, double lambda_weight,
                       std::size_t stride) {
    if (a.mesh_n != b.mesh_n || a.nodes.size() != b.nodes.size())
        throw std::invalid_argument("flow_rho: incompatible flows");
    if (stride == 0 || a.mesh_n % stride != 0)
        throw std::invalid_argument("flow_rho: stride must divide the mesh");
    double acc = 0.0;
    double prev = 0.0;
    bool have_prev = false;
    double prev_t = 0.0;
    for (std::size_t j = 0; j <= a.mesh_n; j += stride) {
        const double t = a.node_time(j);
        const double w2 = w2_exact(a.node(j).support, b.node(j).support);
        const double f = std::exp(-2.0 * lambda_weight * t) * w2 * w2;
        if (have_prev) acc += 0.5 * (prev + f) * (t - prev_t);
        prev = f;
        prev_t = t;
        have_prev = true;
    }
    return std::sqrt(acc);
}

// int_0^T W2(a_t, b_t)^2 dt, trapezoid on every `stride`-th mesh node.
inline double flow_w2sq_integral(const MeasureFlow& a, const MeasureFlow& b,
                                 std::size_t stride) {
    if (a.mesh_n != b.mesh_n) throw std::invalid_argument("flow distance: incompatible flows");
    if (stride == 0 || a.mesh_n % stride != 0)
        throw std::invalid_argument("flow distance: stride must divide the mesh");
    double acc = 0.0, prev = 0.0, prev_t = 0.0;
    bool have_prev = false;
    for (std::size_t j = 0; j <= a.mesh_n; j += stride) {
        const double t = a.node_time(j);
        const double w2 = w2_exact(a.node(j).support, b.node(j).support);
        const double f = w2 * w2;
        if (have_prev) acc += 0.5 * (prev + f) * (t - prev_t);
        prev = f;
        prev_t = t;
        have_prev = true;
    }
    return acc;
}

struct PicardParams {
    double lambda_weight = 1.0;
    double tol = 1e-4;
    std::size_t max_iter = 10;
};

struct PicardResult {
    MeasureFlow flow;
    bool converged = false;
    std::size_t iterations = 0;        // number of flow updates performed
    std::vector<double> rho;           // rho_k = rho(mu^k, mu^{k-1}), k = 1..
    std::vector<double> contraction;   // rho_k / rho_{k-1}, from k = 2
    bool non_contraction_warning = false;
};

// Fixed-point iteration mu^{k+1} = law of the frozen-flow solution driven by
// mu^k, with common random numbers across iterations: each iteration re-uses
// the same initial draws and noise streams, so a measure-free drift is fixed
// after one update and rho drops to exactly zero.
inline PicardResult picard_measure_flow(const ModelSpec& model, const InitialSampler& sampler,
                                        const SchemeConfig& cfg, const PicardParams& prm) {
    cfg.validate();
    if (!(prm.lambda_weight > 0.0))
        throw std::invalid_argument("picard: lambda_weight must be positive");
    if (prm.max_iter < 1) throw std::invalid_argument("picard: max_iter >= 1 required");
    const ParticleEnsemble ens0 = make_ensemble(sampler, cfg);
    const std::size_t stride = cfg.metric_stride();

    PicardResult res;
    MeasureFlow current = MeasureFlow::constant(snapshot_view(ens0, cfg.w2_subsample),
                                                model.horizon, cfg.mesh_n);
    for (std::size_t k = 1; k <= prm.max_iter; ++k) {
        RunResult run = simulate_frozen_flow(model, current, ens0, cfg);
        const double rho = flow_rho(run.flow, current, prm.lambda_weight, stride);
        res.rho.push_back(rho);
        if (res.rho.size() >= 2) {
            const double prev = res.rho[res.rho.size() - 2];
            res.contraction.push_back(prev > 0.0 ? rho / prev
                                                 : (rho > 0.0 ? std::numeric_limits<double>::infinity()
                                                              : 0.0));
        }
        current = std::move(run.flow);
        res.iterations = k;
        if (rho < prm.tol) {
            res.converged = true;
            break;
        }
    }
    // Persistent expansion beyond plain noise is worth flagging.
    if (res.contraction.size() >= 3) {
        bool expanding = true;
        for (std::size_t i = res.contraction.size() - 3; i < res.contraction.size(); ++i)
            expanding = expanding && res.contraction[i] > 1.05;
        res.non_contraction_warning = expanding;
    }
    res.flow = std::move(current);
    return res;
}

}  // namespace spdelab

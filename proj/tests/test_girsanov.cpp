// Weight paths, entropy and TV estimators, and the coupling constructions.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spdelab/girsanov.hpp"

using namespace spdelab;

namespace {

ModelSpec meanfield(std::size_t m, double a, double sigma = 1.0) {
    ModelParams prm;
    prm.a = a;
    prm.sigma = sigma;
    return build_model("meanfield-linear", OperatorSpectrum::power_law(m, 2.0, 0.25), prm, 1.0);
}

SchemeConfig small_cfg(std::size_t n_particles = 2000, std::uint64_t seed = 42) {
    SchemeConfig cfg;
    cfg.mesh_n = 16;
    cfg.output_l = 8;
    cfg.particles = n_particles;
    cfg.w2_subsample = 64;
    cfg.seed = seed;
    return cfg;
}

// Synthetic constant-shift scenario: N Brownian paths over [0,T], all
// reweighted by the same deterministic gamma.
std::vector<WeightPath> constant_gamma_paths(const Vec& gamma, double T, std::size_t steps,
                                             std::size_t n_paths, std::uint64_t seed) {
    std::vector<WeightPath> paths(n_paths);
    const double dt = T / static_cast<double>(steps);
    const double sqdt = std::sqrt(dt);
    Vec dw(gamma.size());
    for (std::size_t i = 0; i < n_paths; ++i) {
        auto st = rng::make_stream(seed, rng::StreamKind::Noise, i);
        for (std::size_t j = 0; j < steps; ++j) {
            for (double& v : dw) v = sqdt * st.next_normal();
            accumulate_weight(paths[i], gamma, dw, dt);
        }
    }
    return paths;
}

}  // namespace

TEST_CASE("drift shift gamma") {
    const Vec bdiff = {1.0, -2.0};
    Vec out(2);

    SECTION("zero difference gives zero shift") {
        gamma_from_diagonal(Vec{1.0, 1.0}, Vec{0.0, 0.0}, out);
        REQUIRE(out == Vec{0.0, 0.0});
    }
    SECTION("identity noise is a pass-through") {
        gamma_from_diagonal(Vec{1.0, 1.0}, bdiff, out);
        REQUIRE(out == bdiff);
    }
    SECTION("scalar noise divides") {
        gamma_from_diagonal(Vec{2.0, 2.0}, bdiff, out);
        REQUIRE(out[0] == Catch::Approx(0.5));
        REQUIRE(out[1] == Catch::Approx(-1.0));
    }
    SECTION("singular diagonal names the offending mode") {
        REQUIRE_THROWS_WITH(gamma_from_diagonal(Vec{1.0, 0.0}, bdiff, out),
                            Catch::Matchers::ContainsSubstring("mode 2"));
    }
    SECTION("dense path agrees with the diagonal shortcut") {
        const Vec q = {2.0, 0.0, 0.0, 4.0};  // diag(2,4) as a dense matrix
        Vec dense_out(2), diag_out(2);
        gamma_from_dense(q, 2, bdiff, dense_out);
        gamma_from_diagonal(Vec{2.0, 4.0}, bdiff, diag_out);
        REQUIRE(dense_out[0] == Catch::Approx(diag_out[0]).margin(1e-14));
        REQUIRE(dense_out[1] == Catch::Approx(diag_out[1]).margin(1e-14));
    }
    SECTION("singular dense matrix is reported") {
        const Vec q = {1.0, 0.0, 0.0, 0.0};
        REQUIRE_THROWS_AS(gamma_from_dense(q, 2, bdiff, out), std::domain_error);
    }
    SECTION("field-level entry evaluates the noise at the given point") {
        const auto model = meanfield(2, 0.5, 2.0);  // Q = 2 I
        MeasureView law;
        law.mean = {0.0, 0.0};
        const Vec g = drift_shift_gamma(model.noise, 2, 0.3, Vec{0.1, 0.2}, law, bdiff);
        REQUIRE(g[0] == Catch::Approx(0.5));
        REQUIRE(g[1] == Catch::Approx(-1.0));
    }
}

TEST_CASE("weight accumulation and entropy estimators") {
    SECTION("zero shift leaves the weight at one") {
        WeightPath wp;
        accumulate_weight(wp, Vec{0.0, 0.0}, Vec{0.3, -0.2}, 0.1);
        REQUIRE(wp.log_weight == 0.0);
        REQUIRE(wp.quad == 0.0);
        const auto ent = entropy_estimate(std::vector<WeightPath>{wp, wp});
        REQUIRE(ent.ent == 0.0);
        REQUIRE(ent.via_quad == 0.0);
    }
    SECTION("constant gamma: quadratic term is deterministic, weight is a martingale") {
        const Vec gamma = {0.5, 0.5};  // |gamma|^2 = 0.5, T = 1 -> Ent = 0.25
        const double T = 1.0;
        const auto paths = constant_gamma_paths(gamma, T, 32, 20000, 7);
        for (const auto& p : paths)
            REQUIRE(p.quad == Catch::Approx(0.5 * T).epsilon(1e-12));

        const auto mw = weight_normalization(paths);
        REQUIRE(std::abs(mw.mean - 1.0) <= 3.0 * mw.se);

        Vec logw(paths.size());
        for (std::size_t i = 0; i < paths.size(); ++i) logw[i] = paths[i].log_weight;
        const auto ml = mean_and_se(logw);
        REQUIRE(std::abs(ml.mean + 0.25) <= 3.0 * ml.se);  // E log R = -|gamma|^2 T / 2

        const auto ent = entropy_estimate(paths);
        REQUIRE(std::abs(ent.ent - 0.25) <= std::max(3.0 * ent.ent_se, 0.05 * 0.25));
        REQUIRE(std::abs(ent.via_quad - 0.25) <=
                std::max(3.0 * ent.via_quad_se, 0.05 * 0.25));
        // the two estimators agree in expectation
        REQUIRE(std::abs(ent.ent - ent.via_quad) <=
                3.0 * std::sqrt(ent.ent_se * ent.ent_se + ent.via_quad_se * ent.via_quad_se));
    }
    SECTION("dimension mismatch rejected") {
        WeightPath wp;
        REQUIRE_THROWS_AS(accumulate_weight(wp, Vec{1.0}, Vec{1.0, 2.0}, 0.1),
                          std::invalid_argument);
    }
}

TEST_CASE("total variation lower bound") {
    SECTION("identical clouds") {
        const auto a = EmpiricalCloud::from_rows(1, {0.0, 1.0, 2.0});
        HistogramSpec spec{1, 8, {-1.0}, {3.0}};
        REQUIRE(tv_lower_bound(a, a, spec).value == 0.0);
    }
    SECTION("disjoint supports under a separating partition") {
        const auto a = EmpiricalCloud::from_rows(1, {0.0, 0.1, 0.2});
        const auto b = EmpiricalCloud::from_rows(1, {5.0, 5.1, 5.2});
        HistogramSpec spec{1, 4, {0.0}, {4.0}};
        REQUIRE(tv_lower_bound(a, b, spec).value == Catch::Approx(1.0));
    }
    SECTION("1d Gaussians vs the closed form") {
        // TV(N(0,1), N(1,1)) = 2 Phi(1/2) - 1 = 0.3829249225480262 under the
        // sup_A |mu - nu| convention.
        const double closed = 0.3829249225480262;
        const std::size_t n = 100000;
        Vec fa(n), fb(n);
        auto st = rng::make_stream(3, rng::StreamKind::Validation, 0);
        for (double& v : fa) v = st.next_normal();
        for (double& v : fb) v = 1.0 + st.next_normal();
        const auto a = EmpiricalCloud::from_rows(1, std::move(fa));
        const auto b = EmpiricalCloud::from_rows(1, std::move(fb));
        HistogramSpec spec{1, 64, {-5.0}, {6.0}};
        const auto tv = tv_lower_bound(a, b, spec);
        REQUIRE(tv.value >= closed - 0.02);
        REQUIRE(tv.value <= closed + 3.0 * tv.std_error);
    }
    SECTION("monotone under refinement of nested partitions") {
        auto st = rng::make_stream(4, rng::StreamKind::Validation, 0);
        Vec fa(4000), fb(4000);
        for (double& v : fa) v = st.next_normal();
        for (double& v : fb) v = 0.4 + 1.3 * st.next_normal();
        const auto a = EmpiricalCloud::from_rows(1, std::move(fa));
        const auto b = EmpiricalCloud::from_rows(1, std::move(fb));
        double prev = -1.0;
        for (std::size_t cells : {4, 8, 16, 32}) {
            HistogramSpec spec{1, cells, {-6.0}, {6.0}};
            const double tv = tv_lower_bound(a, b, spec).value;
            REQUIRE(tv >= prev - 1e-15);
            prev = tv;
        }
    }
}

TEST_CASE("phi_T") {
    // modulus with phi(0.5) = 0.1 by construction
    const auto mod = DiniModulus::tabulated({0.5, 1.0}, {0.1, 0.2});
    REQUIRE(phi_T(1.0, 1.0, mod, 0.5, 0.2) == Catch::Approx(0.74).epsilon(1e-12));
    REQUIRE(phi_T(1.0, 1.0, mod, 0.0, 0.0) == 0.0);
    SECTION("nondecreasing in the initial distance") {
        double prev = -1.0;
        for (double d : {0.0, 0.1, 0.3, 0.5, 0.9}) {
            const double v = phi_T(2.0, 1.0, mod, d, 0.1);
            REQUIRE(v >= prev);
            prev = v;
        }
    }
    REQUIRE_THROWS_AS(phi_T(1.0, 0.0, mod, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("test function registry") {
    REQUIRE(test_functions().size() == 3);
    for (const auto& f : test_functions()) {
        REQUIRE(f.upper <= 2.0);
        REQUIRE(f.lower >= 0.0);
        const Vec x = {0.3, -0.4};
        const double v = f.f(x);
        REQUIRE(v >= f.lower);
        REQUIRE(v <= f.upper);
    }
    REQUIRE_THROWS_AS(test_function("f9"), std::invalid_argument);
}

TEST_CASE("log-harnack entropy check") {
    const auto model = meanfield(2, 0.5);
    const auto cfg = small_cfg();
    const PicardParams picard;

    SECTION("identical initial laws degenerate to zero") {
        const auto mu0 = InitialSampler::point(Vec{0.1, 0.0});
        const auto res = log_harnack_entropy_check(model, mu0, mu0, cfg, picard);
        REQUIRE(res.w2_initial == 0.0);
        // identical flows under common random numbers: gamma vanishes exactly
        REQUIRE(res.entropy.ent == 0.0);
        REQUIRE(res.quad_bound == 0.0);
        REQUIRE(res.tv.value == 0.0);
        REQUIRE(res.all_pass());
    }
    SECTION("displaced initial law: all rows pass, bound saturates") {
        const auto mu0 = InitialSampler::point(Vec{0.0, 0.0});
        const auto nu0 = InitialSampler::point(Vec{0.2, 0.0});
        const auto res = log_harnack_entropy_check(model, mu0, nu0, cfg, picard, 1, 12);
        REQUIRE(res.w2_initial == Catch::Approx(0.2).epsilon(1e-12));
        // nonnegativity up to estimator noise; the identity estimator is sharp
        REQUIRE(res.entropy.ent >= -3.0 * res.entropy.ent_se);
        REQUIRE(res.entropy.via_quad > 0.0);
        for (const auto& row : res.rows) {
            INFO(row.inequality << " lhs=" << row.lhs << " rhs=" << row.rhs);
            REQUIRE(row.pass);
        }
        // mean-field drift difference is deterministic: the quadratic bound is
        // the entropy itself up to MC error
        REQUIRE(std::abs(res.entropy.ent - res.quad_bound) <=
                3.0 * std::sqrt(res.entropy.ent_se * res.entropy.ent_se +
                                res.quad_bound_se * res.quad_bound_se) +
                    1e-6);
    }
    SECTION("halving the displacement scales the entropy by about four") {
        // The identity estimator (1/2) E[e^l q] is nearly deterministic here
        // (gamma is deterministic for mean-field drifts), so the quadratic
        // trend shows through at modest N.
        const auto mu0 = InitialSampler::point(Vec{0.0, 0.0});
        const auto e1 = log_harnack_entropy_check(
            model, mu0, InitialSampler::point(Vec{0.2, 0.0}), cfg, picard);
        const auto e2 = log_harnack_entropy_check(
            model, mu0, InitialSampler::point(Vec{0.1, 0.0}), cfg, picard);
        const double ratio = e1.entropy.via_quad / e2.entropy.via_quad;
        REQUIRE(ratio > 3.0);
        REQUIRE(ratio < 5.0);
    }
    SECTION("measure-dependent noise is refused") {
        auto bad = model;
        bad.noise.measure_free = false;
        REQUIRE_THROWS_AS(log_harnack_entropy_check(bad, InitialSampler::point(Vec{0.0, 0.0}),
                                                    InitialSampler::point(Vec{0.1, 0.0}), cfg,
                                                    picard),
                          std::invalid_argument);
    }
    SECTION("exact convolution cannot carry weights") {
        auto cfg2 = cfg;
        cfg2.exact_convolution = true;
        REQUIRE_THROWS_AS(log_harnack_entropy_check(model, InitialSampler::point(Vec{0.0, 0.0}),
                                                    InitialSampler::point(Vec{0.1, 0.0}), cfg2,
                                                    picard),
                          std::invalid_argument);
    }
}

TEST_CASE("power-Harnack coupling") {
    const auto model = meanfield(2, 0.5);
    const auto cfg = small_cfg();
    const PicardParams picard;
    const auto mu0 = InitialSampler::point(Vec{0.0, 0.0});
    const auto nu0 = InitialSampler::point(Vec{0.2, 0.0});
    const auto run =
        harnack_power_run(model, mu0, nu0, InitialCoupling::Synchronous, cfg, picard);

    SECTION("bridge lands exactly on the driven path at time T") {
        REQUIRE(run.max_terminal_dev == 0.0);
    }
    SECTION("pathwise quadratic term within the closed-form budget") {
        REQUIRE(run.max_quad <=
                phi_T(run.k_union, run.horizon, run.modulus, run.max_distance, run.cw2sq) +
                    1e-12);
    }
    SECTION("auxiliary rows and inequality reports pass") {
        for (const auto& row : harnack_power_aux_rows(run)) {
            INFO(row.inequality << " lhs=" << row.lhs << " rhs=" << row.rhs);
            REQUIRE(row.pass);
        }
        for (double p : {2.0, 4.0})
            for (const auto& f : test_functions()) {
                const auto row = harnack_power_report(run, p, f);
                INFO(row.inequality << " p=" << p << " f=" << f.id << " lhs=" << row.lhs
                                    << " rhs=" << row.rhs);
                REQUIRE(row.pass);
            }
    }
    SECTION("p must exceed one") {
        REQUIRE_THROWS_AS(harnack_power_report(run, 1.0, test_functions()[0]),
                          std::invalid_argument);
    }
    SECTION("f constant one reduces to the exponential-moment inequality") {
        const TestFunction one{"one", [](std::span<const double>) { return 1.0; }, 1.0, 1.0,
                               true};
        const auto row = harnack_power_report(run, 2.0, one);
        // LHS = (mean weight)^p ~ 1, RHS = 1 * (E exp(c Phi))^{p-1} >= 1
        REQUIRE(row.lhs == Catch::Approx(1.0).margin(0.05));
        REQUIRE(row.rhs >= 1.0);
        REQUIRE(row.pass);
    }
    SECTION("identical coupled point masses degenerate to Jensen") {
        const auto same =
            harnack_power_run(model, mu0, mu0, InitialCoupling::Synchronous, cfg, picard);
        REQUIRE(same.max_distance == 0.0);
        REQUIRE(same.w2_initial == 0.0);
        // identical flows under common random numbers: the shift vanishes and
        // every weight is exactly one
        for (const auto& w : same.weights) REQUIRE(w.log_weight == 0.0);
        const auto row = harnack_power_report(same, 2.0, test_function("f1"));
        REQUIRE(row.pass);
        REQUIRE(row.margin >= 0.0);  // E[f]^p <= E[f^p]
    }
    SECTION("state-dependent noise is refused") {
        auto bad = model;
        bad.noise.additive = false;
        REQUIRE_THROWS_AS(
            harnack_power_run(bad, mu0, nu0, InitialCoupling::Synchronous, cfg, picard),
            std::invalid_argument);
    }
}

TEST_CASE("shift-Harnack coupling") {
    const auto model = meanfield(2, 0.5);  // x-free drift: b depends only on the law
    const auto cfg = small_cfg();
    const PicardParams picard;
    const auto mu0 = InitialSampler::point(Vec{0.1, 0.0});
    const Vec y = {0.3, 0.0};
    const auto run = shift_harnack_run(model, mu0, y, cfg, picard);

    SECTION("terminal identity holds exactly") {
        REQUIRE(run.max_terminal_dev == 0.0);
    }
    SECTION("x-free drift: the quadratic term has a closed form") {
        // Phi_bar(t) = e^{At} y / T exactly; the left-endpoint sum is
        // sum_j sum_k e^{-2 lambda_k t_j} (y_k/T)^2 dt.
        const double T = 1.0;
        const std::size_t n = cfg.mesh_n;
        const double dt = T / static_cast<double>(n);
        double expected = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double t = static_cast<double>(j) * dt;
            for (std::size_t k = 0; k < 2; ++k) {
                const double lam = model.spectrum.eigenvalues[k];
                const double v = std::exp(-lam * t) * y[k] / T;
                expected += v * v * dt;
            }
        }
        REQUIRE(run.phi_bar_quad_max == Catch::Approx(expected).epsilon(1e-12));
        // continuum bound |y|^2 / T dominates the exact integral
        REQUIRE(run.phi_bar_quad_max <= squared_norm(y) / T + 1e-12);
        REQUIRE(run.phi_bar_quad_max <= run.pathwise_bound + 1e-12);
    }
    SECTION("reports pass in both modes for every registered f") {
        for (const auto& row : shift_harnack_aux_rows(run)) {
            INFO(row.inequality);
            REQUIRE(row.pass);
        }
        for (const auto& f : test_functions()) {
            const auto lg = shift_harnack_report(run, ShiftHarnackMode::Log, 0.0, f);
            INFO("log " << f.id << " lhs=" << lg.lhs << " rhs=" << lg.rhs);
            REQUIRE(lg.pass);
            const auto pw = shift_harnack_report(run, ShiftHarnackMode::Power, 2.0, f);
            INFO("power " << f.id << " lhs=" << pw.lhs << " rhs=" << pw.rhs);
            REQUIRE(pw.pass);
        }
    }
    SECTION("zero shift gives equal sides") {
        const auto run0 = shift_harnack_run(model, mu0, Vec{0.0, 0.0}, cfg, picard);
        const auto row = shift_harnack_report(run0, ShiftHarnackMode::Log, 0.0,
                                              test_function("f2"));
        // lhs = E log f, rhs = log E f + 0: Jensen gap only, margin >= 0
        REQUIRE(row.pass);
        REQUIRE(row.margin >= 0.0);
        REQUIRE(run0.phi_bar_quad_max == 0.0);
    }
    SECTION("a function that can vanish is refused in log mode") {
        TestFunction raw{"raw", [](std::span<const double> x) { return std::abs(x[0]); }, 0.0,
                         10.0, false};
        REQUIRE_THROWS_AS(shift_harnack_report(run, ShiftHarnackMode::Log, 0.0, raw),
                          std::invalid_argument);
    }
}

TEST_CASE("dini-drift couplings also verify") {
    ModelParams prm;
    prm.a = 0.2;
    prm.dini_K = 0.5;
    const auto model =
        build_model("dini-drift", OperatorSpectrum::power_law(2, 2.0, 0.25), prm, 1.0);
    auto cfg = small_cfg(2000, 5);
    const PicardParams picard;
    const auto mu0 = InitialSampler::point(Vec{0.0, 0.0});
    const auto nu0 = InitialSampler::point(Vec{0.2, 0.0});

    const auto run =
        harnack_power_run(model, mu0, nu0, InitialCoupling::Synchronous, cfg, picard);
    REQUIRE(run.max_quad <=
            phi_T(run.k_union, run.horizon, run.modulus, run.max_distance, run.cw2sq) + 1e-12);
    const auto row = harnack_power_report(run, 2.0, test_function("f1"));
    REQUIRE(row.pass);

    const auto srun = shift_harnack_run(model, mu0, Vec{0.3, 0.0}, cfg, picard);
    REQUIRE(srun.phi_bar_quad_max <= srun.pathwise_bound + 1e-12);
    REQUIRE(shift_harnack_report(srun, ShiftHarnackMode::Log, 0.0, test_function("f2")).pass);
}

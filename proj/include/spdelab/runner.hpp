#pragma once

// Suite orchestration and CSV/manifest emission.
//
// Exit codes: 0 all checks pass, 1 inequality or assumption violation,
// 2 configuration error (including theorem-hypothesis refusals),
// 3 runtime failure. CSVs are byte-stable across reruns and thread counts;
// wall-clock data lives only in the manifest.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "spdelab/config.hpp"
#include "spdelab/dynamics.hpp"
#include "spdelab/girsanov.hpp"
#include "spdelab/model.hpp"
#include "spdelab/transport.hpp"

namespace spdelab {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunOutcome {
    int exit_code = 0;
    std::vector<std::string> files;
    std::vector<std::string> messages;
};

namespace rundetail {

struct CsvWriter {
    std::ofstream out;
    explicit CsvWriter(const std::filesystem::path& p) : out(p, std::ios::binary) {
        if (!out) throw std::runtime_error("cannot open output file " + p.string());
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    }
};

inline void write_reports_csv(const std::filesystem::path& path,
                              const std::vector<CouplingReport>& rows) {
    CsvWriter w(path);
    w.row({"inequality", "T", "p", "f_id", "lhs", "lhs_se", "rhs", "rhs_se", "margin", "pass",
           "w2_initial", "phiT", "seed"});
    for (const auto& r : rows)
        w.row({r.inequality, fmt(r.horizon), fmt(r.p), r.f_id, fmt(r.lhs), fmt(r.lhs_se),
               fmt(r.rhs), fmt(r.rhs_se), fmt(r.margin), r.pass ? "1" : "0",
               fmt(r.w2_initial), fmt(r.phi_t), std::to_string(r.seed)});
}

inline void write_flow_csv(const std::filesystem::path& path, const MeasureFlow& flow,
                           std::size_t stride) {
    CsvWriter w(path);
    std::vector<std::string> header = {"t", "particle_id"};
    const std::size_t m = flow.node(0).mean.size();
    for (std::size_t k = 1; k <= m; ++k) header.push_back("c_" + std::to_string(k));
    w.row(header);
    for (std::size_t j = 0; j <= flow.mesh_n; j += stride) {
        const auto& cloud = flow.node(j).support;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            std::vector<std::string> cells = {fmt(flow.node_time(j)), std::to_string(i)};
            for (std::size_t k = 0; k < m; ++k) cells.push_back(fmt(cloud.point(i)[k]));
            w.row(cells);
        }
    }
}

inline void write_moments_csv(const std::filesystem::path& path, const MeasureFlow& flow,
                              std::size_t stride) {
    CsvWriter w(path);
    w.row({"t", "mode", "mean", "var"});
    const std::size_t m = flow.node(0).mean.size();
    for (std::size_t j = 0; j <= flow.mesh_n; j += stride)
        for (std::size_t k = 0; k < m; ++k)
            w.row({fmt(flow.node_time(j)), std::to_string(k + 1), fmt(flow.node(j).mean[k]),
                   fmt(flow.node(j).var[k])});
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const PicardResult& pr) {
    CsvWriter w(path);
    w.row({"iteration", "rho", "contraction_factor"});
    for (std::size_t k = 0; k < pr.rho.size(); ++k)
        w.row({std::to_string(k + 1), fmt(pr.rho[k]),
               k == 0 ? std::string() : fmt(pr.contraction[k - 1])});
}

// Brute-force assignment by permutation enumeration; reference path for the
// transport self-test, independent of the augmenting-path solver.
inline double w2_bruteforce(const EmpiricalCloud& a, const EmpiricalCloud& b) {
    const std::size_t n = a.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < a.dim; ++k) {
                const double d = a.point(i)[k] - b.point(perm[i])[k];
                d2 += d * d;
            }
            total += d2;
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(n));
}

struct Manifest {
    std::vector<std::pair<std::string, std::string>> kv;
    void add(const std::string& k, const std::string& v) { kv.emplace_back(k, v); }
    void write(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
    }
};

}  // namespace rundetail

inline RunOutcome run_suite(const RunConfig& cfg, const std::string& suite,
                            const std::string& out_dir, unsigned threads) {
    namespace fs = std::filesystem;
    using namespace rundetail;
    RunOutcome outcome;
    Manifest man;
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    RunConfig c = cfg;
    c.scheme.threads = threads == 0 ? 1 : threads;

    man.add("artifact", "spdelab");
    man.add("version", "1.0.0");
    man.add("suite", suite);
    for (const auto& [k, v] : c.echo) man.add("cfg." + k, v);

    const auto emit = [&](const std::string& name) {
        outcome.files.push_back((dir / name).string());
    };

    try {
        if (suite == "validate") {
            const ModelSpec model = build_configured_model(c);
            const AssumptionReport rep =
                validate_assumptions(model, c.validate_samples, c.scheme.seed);
            CsvWriter w(dir / "validate.csv");
            w.row({"clause", "pass", "statistic", "threshold", "witness"});
            for (const auto& cl : rep.clauses) {
                std::string witness = cl.witness;
                for (char& ch : witness)
                    if (ch == ',') ch = ';';
                w.row({cl.clause, cl.pass ? "1" : "0", fmt(cl.statistic), fmt(cl.threshold),
                       witness});
            }
            emit("validate.csv");
            man.add("all_pass", rep.all_pass ? "1" : "0");
            if (!rep.all_pass) {
                outcome.exit_code = 1;
                for (const auto& cl : rep.clauses)
                    if (!cl.pass)
                        outcome.messages.push_back("violated: " + cl.clause +
                                                   (cl.witness.empty() ? "" : " @ " + cl.witness));
            }
        } else if (suite == "simulate") {
            const ModelSpec model = build_configured_model(c);
            const InitialSampler mu0 = parse_initial_sampler(c.mu0_spec, c.modes);
            const RunResult run = simulate_mckean_vlasov(model, mu0, c.scheme);
            const std::size_t stride = c.scheme.metric_stride();
            write_flow_csv(dir / "flow.csv", run.flow, stride);
            write_moments_csv(dir / "moments.csv", run.flow, stride);
            emit("flow.csv");
            emit("moments.csv");
            man.add("max_drift_norm", fmt(run.max_drift_norm));
            if (run.max_drift_norm > model.drift.sup_bound)
                outcome.messages.push_back(
                    "warning: observed |b| exceeds the declared sup bound (" +
                    fmt(run.max_drift_norm) + " > " + fmt(model.drift.sup_bound) + ")");
        } else if (suite == "flow") {
            const ModelSpec model = build_configured_model(c);
            const InitialSampler mu0 = parse_initial_sampler(c.mu0_spec, c.modes);
            const PicardResult pr = picard_measure_flow(model, mu0, c.scheme, c.picard);
            const std::size_t stride = c.scheme.metric_stride();
            write_flow_csv(dir / "flow.csv", pr.flow, stride);
            write_moments_csv(dir / "moments.csv", pr.flow, stride);
            write_diagnostics_csv(dir / "diagnostics.csv", pr);
            emit("flow.csv");
            emit("moments.csv");
            emit("diagnostics.csv");
            man.add("picard_converged", pr.converged ? "1" : "0");
            man.add("picard_iterations", std::to_string(pr.iterations));
            if (pr.non_contraction_warning)
                outcome.messages.push_back("warning: contraction factors persistently above 1");
            if (!pr.converged) {
                outcome.exit_code = 3;
                std::ostringstream os;
                os << "picard did not converge in " << pr.iterations << " iterations; rho =";
                for (double r : pr.rho) os << ' ' << fmt(r);
                outcome.messages.push_back(os.str());
            }
        } else if (suite == "log-harnack") {
            const ModelSpec model = build_configured_model(c);
            const InitialSampler mu0 = parse_initial_sampler(c.mu0_spec, c.modes);
            const InitialSampler nu0 = parse_initial_sampler(c.nu0_spec, c.modes);
            const LogHarnackResult res = log_harnack_entropy_check(
                model, mu0, nu0, c.scheme, c.picard, c.tv_dims, c.tv_cells);
            write_reports_csv(dir / "reports.csv", res.rows);
            emit("reports.csv");
            man.add("entropy", fmt(res.entropy.ent));
            man.add("entropy_via_quad", fmt(res.entropy.via_quad));
            man.add("quad_bound", fmt(res.quad_bound));
            man.add("tv_lower_bound", fmt(res.tv.value));
            man.add("w2_initial", fmt(res.w2_initial));
            if (!res.all_pass()) outcome.exit_code = 1;
        } else if (suite == "harnack-power") {
            const ModelSpec model = build_configured_model(c);
            const InitialSampler mu0 = parse_initial_sampler(c.mu0_spec, c.modes);
            const InitialSampler nu0 = parse_initial_sampler(c.nu0_spec, c.modes);
            const PowerHarnackRun run =
                harnack_power_run(model, mu0, nu0, c.coupling, c.scheme, c.picard);
            std::vector<CouplingReport> rows = harnack_power_aux_rows(run);
            for (const auto& f : test_functions())
                if (c.f_id == "all" || c.f_id == f.id)
                    rows.push_back(harnack_power_report(run, c.power_p, f));
            write_reports_csv(dir / "reports.csv", rows);
            emit("reports.csv");
            for (const auto& r : rows)
                if (!r.pass) outcome.exit_code = 1;
        } else if (suite == "shift-harnack") {
            const ModelSpec model = build_configured_model(c);
            const InitialSampler mu0 = parse_initial_sampler(c.mu0_spec, c.modes);
            const ShiftHarnackRun run =
                shift_harnack_run(model, mu0, shift_vector(c), c.scheme, c.picard);
            std::vector<CouplingReport> rows = shift_harnack_aux_rows(run);
            for (const auto& f : test_functions()) {
                if (!(c.f_id == "all" || c.f_id == f.id)) continue;
                rows.push_back(shift_harnack_report(run, ShiftHarnackMode::Log, 0.0, f));
                rows.push_back(
                    shift_harnack_report(run, ShiftHarnackMode::Power, c.power_p, f));
            }
            write_reports_csv(dir / "reports.csv", rows);
            emit("reports.csv");
            for (const auto& r : rows)
                if (!r.pass) outcome.exit_code = 1;
        } else if (suite == "transport-selftest") {
            CsvWriter w(dir / "selftest.csv");
            w.row({"case", "expected", "computed", "abs_err"});
            double worst = 0.0;
            const auto add = [&](const std::string& name, double expected, double computed,
                                 double tol) {
                const double err = std::abs(expected - computed);
                w.row({name, fmt(expected), fmt(computed), fmt(err)});
                if (err > tol) {
                    outcome.exit_code = 1;
                    outcome.messages.push_back("selftest case failed: " + name);
                }
                worst = std::max(worst, err);
            };
            auto st = rng::make_stream(c.scheme.seed, rng::StreamKind::Validation, 7);
            // identical clouds
            {
                Vec flat(16 * 3);
                for (double& v : flat) v = st.next_normal();
                const auto a = EmpiricalCloud::from_rows(3, flat);
                add("identical-clouds", 0.0, w2_exact(a, a), 1e-12);
            }
            // common shift
            {
                Vec flat(12 * 2), shift = {0.7, -0.4};
                for (double& v : flat) v = st.next_normal();
                const auto a = EmpiricalCloud::from_rows(2, flat);
                Vec flat_b = flat;
                for (std::size_t i = 0; i < 12; ++i)
                    for (std::size_t k = 0; k < 2; ++k) flat_b[i * 2 + k] += shift[k];
                const auto b = EmpiricalCloud::from_rows(2, flat_b);
                add("translation", norm(shift), w2_exact(a, b), 1e-12);
            }
            // worked 1d example
            {
                const auto a = EmpiricalCloud::from_rows(1, {0.0, 1.0});
                const auto b = EmpiricalCloud::from_rows(1, {0.5, 0.5});
                add("two-point-1d", 0.5, w2_exact(a, b), 1e-12);
            }
            // brute-force agreement, N <= 8
            {
                double worst_bf = 0.0;
                for (int rep = 0; rep < 20; ++rep) {
                    const std::size_t n = 2 + st.next_u64() % 7;
                    const std::size_t m = 1 + st.next_u64() % 4;
                    Vec fa(n * m), fb(n * m);
                    for (double& v : fa) v = st.next_normal();
                    for (double& v : fb) v = st.next_normal();
                    const auto a = EmpiricalCloud::from_rows(m, fa);
                    const auto b = EmpiricalCloud::from_rows(m, fb);
                    worst_bf = std::max(worst_bf, std::abs(w2_exact(a, b) - w2_bruteforce(a, b)));
                }
                add("bruteforce-agreement", 0.0, worst_bf, 1e-12);
            }
            // diagonal Gaussian closed form
            {
                const Vec m1 = {0.0}, c1 = {1.0}, m2 = {1.0}, c2 = {4.0};
                add("gaussian-closed-form", std::sqrt(2.0), gaussian_w2(m1, c1, m2, c2), 1e-12);
            }
            // sliced equals exact in 1d
            {
                Vec fa(64), fb(64);
                for (double& v : fa) v = st.next_normal();
                for (double& v : fb) v = 0.5 + st.next_normal();
                const auto a = EmpiricalCloud::from_rows(1, fa);
                const auto b = EmpiricalCloud::from_rows(1, fb);
                add("sliced-1d-exact", w2_exact(a, b), w2_sliced(a, b, 5, c.scheme.seed).estimate,
                    1e-12);
            }
            emit("selftest.csv");
            man.add("worst_abs_err", fmt(worst));
        } else {
            outcome.exit_code = 2;
            outcome.messages.push_back("unknown suite '" + suite + "'");
        }
    } catch (const std::invalid_argument& e) {
        outcome.exit_code = 2;
        outcome.messages.push_back(std::string("configuration error: ") + e.what());
    } catch (const std::exception& e) {
        outcome.exit_code = 3;
        outcome.messages.push_back(std::string("runtime failure: ") + e.what());
    }

    const auto t1 = std::chrono::steady_clock::now();
    man.add("threads", std::to_string(c.scheme.threads));
    man.add("duration_ms",
            std::to_string(
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()));
    man.add("exit_code", std::to_string(outcome.exit_code));
    for (std::size_t i = 0; i < outcome.files.size(); ++i)
        man.add("files." + std::to_string(i), outcome.files[i]);
    for (std::size_t i = 0; i < outcome.messages.size(); ++i)
        man.add("messages." + std::to_string(i), outcome.messages[i]);
    man.write(dir / "manifest.txt");
    return outcome;
}

}  // namespace spdelab

// Registry models and the assumption spot-validator.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spdelab/model.hpp"

using namespace spdelab;

namespace {

ModelSpec make(const std::string& name, ModelParams prm = {}, std::size_t m = 4,
               double eps = 0.25) {
    return build_model(name, OperatorSpectrum::power_law(m, 2.0, eps), prm, 1.0);
}

}  // namespace

TEST_CASE("registry basics") {
    SECTION("all registered names build") {
        for (const auto& name : registered_model_names()) REQUIRE(make(name).name == name);
    }
    SECTION("unknown name rejected") {
        REQUIRE_THROWS_AS(make("heat-bath"), std::invalid_argument);
    }
    SECTION("meanfield drift pulls toward a * mean") {
        ModelParams prm;
        prm.a = 0.5;
        const auto model = make("meanfield-linear", prm);
        MeasureView law;
        law.mean = {2.0, 0.0, 0.0, 0.0};
        law.support = EmpiricalCloud::from_rows(4, {2.0, 0.0, 0.0, 0.0});
        Vec out(4);
        model.drift.eval(0.0, Vec{0.0, 0.0, 0.0, 0.0}, law, out);
        REQUIRE(out[0] == Catch::Approx(1.0));
        REQUIRE(out[1] == 0.0);
    }
    SECTION("clipped linear part saturates at the ball radius") {
        ModelParams prm;
        prm.theta = 1.0;
        prm.clip_radius = 2.0;
        prm.a = 0.0;
        const auto model = make("ou", prm);
        MeasureView law;
        law.mean = Vec(4, 0.0);
        Vec out(4);
        model.drift.eval(0.0, Vec{10.0, 0.0, 0.0, 0.0}, law, out);
        REQUIRE(out[0] == Catch::Approx(-2.0));
    }
}

TEST_CASE("assumption validation") {
    SECTION("clipped linear model with identity noise passes every clause") {
        ModelParams prm;
        prm.theta = 1.0;
        prm.clip_radius = 4.0;
        const auto model = make("ou", prm);
        const auto rep = validate_assumptions(model, 200, 42);
        for (const auto& c : rep.clauses) {
            INFO(c.clause << " stat=" << c.statistic << " witness=" << c.witness);
            REQUIRE(c.pass);
        }
        REQUIRE(rep.all_pass);
    }
    SECTION("sign drift fails the modulus clause with a straddling witness") {
        const auto model = make("sign-drift");
        const auto rep = validate_assumptions(model, 200, 42);
        REQUIRE_FALSE(rep.all_pass);
        const auto* a3 = rep.find("a3-drift-modulus");
        REQUIRE(a3 != nullptr);
        REQUIRE_FALSE(a3->pass);
        REQUIRE(a3->statistic < 0.0);       // violated margin
        REQUIRE_FALSE(a3->witness.empty()); // carries the witness pair
    }
    SECTION("eps = 0.6 on the k^2 spectrum fails the trace clause") {
        const auto model = make("meanfield-linear", {}, 4, 0.6);
        const auto rep = validate_assumptions(model, 50, 1);
        const auto* a1 = rep.find("a1-trace");
        REQUIRE(a1 != nullptr);
        REQUIRE_FALSE(a1->pass);
        REQUIRE(a1->witness.find("p(1-eps)") != std::string::npos);
        REQUIRE_FALSE(rep.all_pass);
    }
    SECTION("dini drift passes, including the probe pairs") {
        const auto model = make("dini-drift");
        const auto rep = validate_assumptions(model, 300, 7);
        const auto* a3 = rep.find("a3-drift-modulus");
        REQUIRE(a3 != nullptr);
        REQUIRE(a3->pass);
    }
    SECTION("measure-free noise has continuity ratio exactly zero") {
        const auto model = make("ou");
        const auto rep = validate_assumptions(model, 100, 3);
        const auto* cm = rep.find("a2-measure-continuity");
        REQUIRE(cm != nullptr);
        REQUIRE(cm->statistic == 0.0);
        REQUIRE(cm->pass);
    }
    SECTION("deterministic given the seed") {
        const auto model = make("dini-drift");
        const auto r1 = validate_assumptions(model, 150, 11);
        const auto r2 = validate_assumptions(model, 150, 11);
        REQUIRE(r1.clauses.size() == r2.clauses.size());
        for (std::size_t i = 0; i < r1.clauses.size(); ++i) {
            REQUIRE(r1.clauses[i].pass == r2.clauses[i].pass);
            REQUIRE(r1.clauses[i].statistic == r2.clauses[i].statistic);
        }
    }
    SECTION("dense noise path: rotated diagonal passes norm and inverse clauses") {
        auto model = make("ou");
        const double c = std::cos(0.3), s = std::sin(0.3);
        model.noise.kind = NoiseField::Kind::Dense;
        model.noise.eval_dense = [c, s](double, std::span<const double>, const MeasureView&,
                                        std::span<double> q) {
            // 4x4: rotation in the first two modes, identity elsewhere
            for (double& v : q) v = 0.0;
            q[0 * 4 + 0] = c;
            q[0 * 4 + 1] = -s;
            q[1 * 4 + 0] = s;
            q[1 * 4 + 1] = c;
            q[2 * 4 + 2] = 1.0;
            q[3 * 4 + 3] = 1.0;
        };
        const auto rep = validate_assumptions(model, 60, 5);
        REQUIRE(rep.find("a2-operator-norm")->pass);
        REQUIRE(rep.find("a2-inverse-bound")->pass);
    }
}

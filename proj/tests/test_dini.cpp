// Continuity moduli: the Dini integral and the class-membership certificate.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "spdelab/dini.hpp"

using namespace spdelab;

// Frozen reference: int_0^1 ds / (s log^2(e + 1/s)) = 1.189883970344350,
// computed beforehand by substituting s = e^{-u} and integrating
// 1/log^2(e + e^u) over [0,inf) with an analytic tail.
static constexpr double kCanonicalIntegral = 1.189883970344350;

TEST_CASE("dini integral") {
    SECTION("linear modulus integrates to 1") {
        const auto r = dini_integral(DiniModulus::linear(1.0));
        REQUIRE(r.convergent);
        REQUIRE(r.value == Catch::Approx(1.0).epsilon(1e-10));
    }
    SECTION("canonical K=1, delta=1, c=e matches the frozen oracle") {
        const auto r = dini_integral(DiniModulus::canonical(1.0, 1.0));
        REQUIRE(r.convergent);
        REQUIRE(r.value == Catch::Approx(kCanonicalIntegral).epsilon(2e-3));
        REQUIRE(std::abs(r.value - kCanonicalIntegral) <=
                std::max(3.0 * r.error_estimate, 1e-3 * kCanonicalIntegral));
    }
    SECTION("delta = 0 diverges like 1/(s log(1/s))") {
        const auto r = dini_integral(DiniModulus::canonical(1.0, 0.0));
        REQUIRE_FALSE(r.convergent);
        REQUIRE(r.divergence_scale > 0.0);
        REQUIRE(r.divergence_scale < 1e-100);
        REQUIRE(r.fitted_decay == Catch::Approx(1.0).margin(0.05));
    }
    SECTION("zero modulus integrates to 0") {
        const auto r = dini_integral(DiniModulus::zero());
        REQUIRE(r.convergent);
        REQUIRE(r.value == 0.0);
    }
    SECTION("scaling is linear in K") {
        const auto r1 = dini_integral(DiniModulus::canonical(1.0, 1.0));
        const auto r2 = dini_integral(DiniModulus::canonical(2.0, 1.0));
        REQUIRE(r2.value == Catch::Approx(2.0 * r1.value).epsilon(1e-12));
    }
}

TEST_CASE("modulus evaluation") {
    const auto m = DiniModulus::canonical(1.0, 1.0);
    REQUIRE(m(0.0) == 0.0);
    REQUIRE(m(1.0) == Catch::Approx(1.0 / std::pow(std::log(std::numbers::e + 1.0), 2.0)));
    REQUIRE_THROWS_AS(m(-1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(DiniModulus::canonical(1.0, 1.0, 1.0), std::invalid_argument);

    const auto tab = DiniModulus::tabulated({0.5, 1.0}, {0.25, 0.5});
    REQUIRE(tab(0.25) == Catch::Approx(0.125));
    REQUIRE(tab(2.0) == 0.5);  // clamped beyond the last knot
}

TEST_CASE("membership certificate") {
    SECTION("canonical family passes across the parameter grid") {
        for (const double K : {0.5, 1.0, 2.0})
            for (const double delta : {0.5, 1.0})
                for (const double c : {std::numbers::e, 10.0}) {
                    const auto cert = certify_modulus(DiniModulus::canonical(K, delta, c));
                    INFO("K=" << K << " delta=" << delta << " c=" << c);
                    REQUIRE(cert.zero_at_zero);
                    REQUIRE(cert.monotone);
                    REQUIRE(cert.square_concave);
                    REQUIRE(cert.integral.convergent);
                    REQUIRE(cert.in_dini_class());
                }
    }
    SECTION("delta = 0 fails only the integral test") {
        const auto cert = certify_modulus(DiniModulus::canonical(1.0, 0.0));
        REQUIRE(cert.monotone);
        REQUIRE(cert.square_concave);
        REQUIRE_FALSE(cert.integral.convergent);
        REQUIRE_FALSE(cert.in_dini_class());
        REQUIRE(cert.integral.divergence_scale > 0.0);
    }
    SECTION("linear modulus fails square concavity") {
        const auto cert = certify_modulus(DiniModulus::linear(1.0));
        REQUIRE(cert.monotone);
        REQUIRE_FALSE(cert.square_concave);
        REQUIRE(cert.concavity_witness > 0.0);
        REQUIRE_FALSE(cert.in_dini_class());
    }
    SECTION("strict slack exposes the known convex dip of the c=e family") {
        // phi^2 for c=e, delta=1 is not quite concave near s ~ 0.1; with c=10
        // it is concave outright. The default slack absorbs the dip.
        auto tight = DiniModulus::canonical(1.0, 1.0, std::numbers::e);
        tight.concavity_slack = 1e-10;
        REQUIRE_FALSE(certify_modulus(tight).square_concave);
        auto wide = DiniModulus::canonical(1.0, 1.0, 10.0);
        wide.concavity_slack = 1e-10;
        REQUIRE(certify_modulus(wide).square_concave);
    }
    SECTION("a decreasing table fails monotonicity") {
        const auto cert = certify_modulus(DiniModulus::tabulated({0.25, 1.0}, {0.5, 0.1}));
        REQUIRE_FALSE(cert.monotone);
        REQUIRE(cert.monotone_witness > 0.0);
    }
}

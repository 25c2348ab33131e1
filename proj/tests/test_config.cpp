// Configuration dialect: typed parsing, exhaustive error collection,
// materialization of spectra, models and initial laws.

#include <catch2/catch_amalgamated.hpp>

#include "spdelab/config.hpp"

using namespace spdelab;

TEST_CASE("minimal config parses with registry defaults") {
    const std::string text = R"(
[model]
name = ou
spectrum = k^2
modes = 8
eps = 0.25
[scheme]
N = 20000
seed = 42
[verify]
T = 1.0
)";
    const auto res = parse_config(text);
    CAPTURE(res.errors);
    REQUIRE(res.ok());
    REQUIRE(res.config.model_name == "ou");
    REQUIRE(res.config.modes == 8);
    REQUIRE(res.config.scheme.particles == 20000);
    REQUIRE(res.config.scheme.seed == 42);
    REQUIRE(res.config.horizon == 1.0);

    const auto spec = build_spectrum(res.config);
    REQUIRE(spec.modes() == 8);
    REQUIRE(spec.eigenvalues[3] == Catch::Approx(16.0));
    REQUIRE(build_configured_model(res.config).name == "ou");
}

TEST_CASE("range violations are reported with line numbers") {
    const auto res = parse_config("[model]\neps = 1.5\n");
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.errors.size() == 1);
    REQUIRE(res.errors[0].find("line 2") != std::string::npos);
    REQUIRE(res.errors[0].find("trace_exponent out of (0,1)") != std::string::npos);
}

TEST_CASE("duplicate keys name both lines") {
    const auto res = parse_config("[scheme]\nN = 100\nN = 200\n");
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.errors[0].find("line 3") != std::string::npos);
    REQUIRE(res.errors[0].find("line 2") != std::string::npos);
    REQUIRE(res.errors[0].find("duplicate") != std::string::npos);
}

TEST_CASE("errors are collected, not fail-fast") {
    const auto res = parse_config(
        "[model]\nname = nosuch\neps = 2\nbogus = 1\n[scheme]\nN = -3\n");
    REQUIRE(res.errors.size() == 4);
}

TEST_CASE("unknown keys and sections") {
    REQUIRE_FALSE(parse_config("[model]\nfoo = 1\n").ok());
    REQUIRE_FALSE(parse_config("[warp]\nx = 1\n").ok());
    REQUIRE_FALSE(parse_config("x = 1\n").ok());  // key outside any section
}

TEST_CASE("type mismatches carry the offending value") {
    const auto res = parse_config("[scheme]\nN = many\n");
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.errors[0].find("many") != std::string::npos);
}

TEST_CASE("spectrum variants") {
    SECTION("explicit list") {
        const auto res = parse_config("[model]\nspectrum = list:1,4,9\nmodes = 3\n");
        REQUIRE(res.ok());
        const auto spec = build_spectrum(res.config);
        REQUIRE(spec.eigenvalues == Vec{1.0, 4.0, 9.0});
    }
    SECTION("list length must match modes") {
        const auto res = parse_config("[model]\nspectrum = list:1,4\nmodes = 3\n");
        REQUIRE(res.ok());
        REQUIRE_THROWS_AS(build_spectrum(res.config), std::invalid_argument);
    }
    SECTION("scaled power rule") {
        const auto res =
            parse_config("[model]\nspectrum = k^1.5\nspectrum_scale = 2\nmodes = 4\n");
        REQUIRE(res.ok());
        const auto spec = build_spectrum(res.config);
        REQUIRE(spec.eigenvalues[3] == Catch::Approx(2.0 * std::pow(4.0, 1.5)));
    }
    SECTION("malformed rule") {
        REQUIRE_FALSE(parse_config("[model]\nspectrum = cubic\n").ok());
    }
}

TEST_CASE("mesh and output grid consistency") {
    REQUIRE_FALSE(parse_config("[scheme]\nn = 10\nL = 3\n").ok());
    REQUIRE(parse_config("[scheme]\nn = 12\nL = 3\n").ok());
}

TEST_CASE("shift vector syntax") {
    const auto res = parse_config("[model]\nmodes = 4\n[verify]\ny = e1:0.3 e3:-0.1\n");
    REQUIRE(res.ok());
    const Vec y = shift_vector(res.config);
    REQUIRE(y == Vec{0.3, 0.0, -0.1, 0.0});
    REQUIRE_FALSE(parse_config("[model]\nmodes = 2\n[verify]\ny = e5:1.0\n").ok());
    REQUIRE_FALSE(parse_config("[verify]\ny = 0.3\n").ok());
}

TEST_CASE("initial law specs") {
    SECTION("point mass") {
        const auto s = parse_initial_sampler("point e1:0.2", 3);
        REQUIRE(s.kind == InitialSampler::Kind::PointMass);
        REQUIRE(s.center == Vec{0.2, 0.0, 0.0});
    }
    SECTION("diagonal gaussian") {
        const auto s = parse_initial_sampler("gauss e2:0.5 sd:0.3", 2);
        REQUIRE(s.kind == InitialSampler::Kind::DiagonalGaussian);
        REQUIRE(s.center == Vec{0.0, 0.5});
        REQUIRE(s.spread == Vec{0.3, 0.3});
    }
    SECTION("two-point mixture") {
        const auto s = parse_initial_sampler("twopoint e1:0.4 w:0.25", 2);
        REQUIRE(s.kind == InitialSampler::Kind::TwoPoint);
        REQUIRE(s.spread == Vec{0.4, 0.0});
        REQUIRE(s.weight_plus == 0.25);
    }
    SECTION("rejects junk") {
        REQUIRE_THROWS_AS(parse_initial_sampler("ring e1:1", 2), std::invalid_argument);
        REQUIRE_THROWS_AS(parse_initial_sampler("point e9:1", 2), std::invalid_argument);
    }
}

TEST_CASE("unknown f_id is rejected") {
    REQUIRE_FALSE(parse_config("[verify]\nf_id = f7\n").ok());
    REQUIRE(parse_config("[verify]\nf_id = all\n").ok());
}

TEST_CASE("comments and blank lines are ignored") {
    const auto res = parse_config("# header\n\n[model]\nmodes = 4  # inline\n");
    REQUIRE(res.ok());
    REQUIRE(res.config.modes == 4);
}

#pragma once

// Flat `key = value` configuration dialect with [section] headers.
// Parsing is not fail-fast: every error is collected with its line number.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spdelab/dynamics.hpp"
#include "spdelab/girsanov.hpp"
#include "spdelab/model.hpp"

namespace spdelab {

struct RunConfig {
    // [model]
    std::string model_name = "ou";
    bool spectrum_is_list = false;
    Vec spectrum_list;
    double spectrum_p = 2.0;
    double spectrum_scale = 1.0;
    std::size_t modes = 8;
    double eps = 0.25;
    ModelParams params;

    // [scheme]
    SchemeConfig scheme;

    // [verify]
    double horizon = 1.0;
    double power_p = 2.0;
    std::string f_id = "f1";
    PicardParams picard;
    std::map<std::size_t, double> shift_entries;  // sparse y (1-based mode -> value)
    std::string mu0_spec = "point";
    std::string nu0_spec = "point";
    InitialCoupling coupling = InitialCoupling::Synchronous;
    std::size_t tv_cells = 32;
    std::size_t tv_dims = 1;
    int validate_samples = 200;

    // echo of all effective keys for the manifest
    std::vector<std::pair<std::string, std::string>> echo;
};

struct ParseResult {
    RunConfig config;
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
};

namespace cfgdetail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct RawEntry {
    std::string value;
    int line = 0;
};

struct Parser {
    std::map<std::string, RawEntry> entries;  // "section.key" -> value
    std::vector<std::string> errors;

    void error(int line, const std::string& msg) {
        std::ostringstream os;
        os << "line " << line << ": " << msg;
        errors.push_back(os.str());
    }

    std::optional<std::string> take(const std::string& key) {
        auto it = entries.find(key);
        if (it == entries.end()) return std::nullopt;
        std::string v = it->second.value;
        entries.erase(it);
        return v;
    }

    template <class F>
    void with(const std::string& key, F&& f) {
        auto it = entries.find(key);
        if (it == entries.end()) return;
        const int line = it->second.line;
        const std::string v = it->second.value;
        entries.erase(it);
        f(v, line);
    }

    bool parse_double(const std::string& v, int line, const std::string& key, double& out) {
        try {
            std::size_t pos = 0;
            out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return true;
        } catch (...) {
            error(line, "key '" + key + "': expected a real number, got '" + v + "'");
            return false;
        }
    }

    bool parse_size(const std::string& v, int line, const std::string& key, std::size_t& out) {
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(v, &pos);
            if (pos != v.size() || x < 0) throw std::invalid_argument("bad");
            out = static_cast<std::size_t>(x);
            return true;
        } catch (...) {
            error(line, "key '" + key + "': expected a nonnegative integer, got '" + v + "'");
            return false;
        }
    }

    bool parse_u64(const std::string& v, int line, const std::string& key, std::uint64_t& out) {
        try {
            std::size_t pos = 0;
            out = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("bad");
            return true;
        } catch (...) {
            error(line, "key '" + key + "': expected an unsigned integer, got '" + v + "'");
            return false;
        }
    }

    bool parse_bool(const std::string& v, int line, const std::string& key, bool& out) {
        if (v == "true" || v == "1") {
            out = true;
            return true;
        }
        if (v == "false" || v == "0") {
            out = false;
            return true;
        }
        error(line, "key '" + key + "': expected true/false, got '" + v + "'");
        return false;
    }
};

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "model.name", "model.spectrum", "model.spectrum_scale", "model.modes", "model.eps",
        "model.theta", "model.clip_radius", "model.a", "model.sigma", "model.dini_K",
        "model.dini_delta", "model.dini_c",
        "scheme.n", "scheme.L", "scheme.N", "scheme.N_w", "scheme.substeps", "scheme.seed",
        "scheme.exact_convolution",
        "verify.T", "verify.p", "verify.f_id", "verify.lambda_weight", "verify.tol",
        "verify.max_iter", "verify.y", "verify.mu0", "verify.nu0", "verify.coupling",
        "verify.tv_cells", "verify.tv_dims", "verify.samples",
    };
    return keys;
}

}  // namespace cfgdetail

inline ParseResult parse_config(const std::string& text) {
    using namespace cfgdetail;
    ParseResult res;
    Parser p;
    std::map<std::string, int> first_line;

    // Pass 1: raw entries with duplicate/unknown detection.
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                p.error(lineno, "malformed section header '" + line + "'");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "scheme" && section != "verify")
                p.error(lineno, "unknown section '" + section + "'");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            p.error(lineno, "expected 'key = value', got '" + line + "'");
            continue;
        }
        if (section.empty()) {
            p.error(lineno, "key outside any [section]");
            continue;
        }
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (known_keys().count(key) == 0) {
            p.error(lineno, "unknown key '" + key + "'");
            continue;
        }
        auto it = first_line.find(key);
        if (it != first_line.end()) {
            std::ostringstream os;
            os << "duplicate key '" << key << "' (previously set at line " << it->second << ")";
            p.error(lineno, os.str());
            continue;
        }
        first_line[key] = lineno;
        p.entries[key] = RawEntry{value, lineno};
        res.config.echo.emplace_back(key, value);
    }

    RunConfig& c = res.config;

    // Pass 2: typed extraction.
    p.with("model.name", [&](const std::string& v, int ln) {
        const auto& names = registered_model_names();
        if (std::find(names.begin(), names.end(), v) == names.end()) {
            p.error(ln, "unknown model '" + v + "'");
            return;
        }
        c.model_name = v;
    });
    p.with("model.spectrum", [&](const std::string& v, int ln) {
        if (v.rfind("list:", 0) == 0) {
            c.spectrum_is_list = true;
            for (const auto& tok : tokens(v.substr(5))) {
                double x;
                if (!p.parse_double(tok, ln, "model.spectrum", x)) return;
                c.spectrum_list.push_back(x);
            }
            if (c.spectrum_list.empty()) p.error(ln, "model.spectrum: empty list");
        } else if (v.rfind("k^", 0) == 0) {
            double e;
            if (p.parse_double(v.substr(2), ln, "model.spectrum", e)) c.spectrum_p = e;
        } else {
            p.error(ln, "model.spectrum: expected 'k^<p>' or 'list:v1,v2,...', got '" + v + "'");
        }
    });
    p.with("model.spectrum_scale", [&](const std::string& v, int ln) {
        p.parse_double(v, ln, "model.spectrum_scale", c.spectrum_scale);
    });
    p.with("model.modes", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "model.modes", c.modes) && c.modes == 0)
            p.error(ln, "model.modes must be positive");
    });
    p.with("model.eps", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "model.eps", c.eps) && !(c.eps > 0.0 && c.eps < 1.0))
            p.error(ln, "trace_exponent out of (0,1)");
    });
    p.with("model.theta",
           [&](const std::string& v, int ln) { p.parse_double(v, ln, "model.theta", c.params.theta); });
    p.with("model.clip_radius", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "model.clip_radius", c.params.clip_radius) &&
            !(c.params.clip_radius > 0.0))
            p.error(ln, "model.clip_radius must be positive");
    });
    p.with("model.a",
           [&](const std::string& v, int ln) { p.parse_double(v, ln, "model.a", c.params.a); });
    p.with("model.sigma", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "model.sigma", c.params.sigma) && !(c.params.sigma > 0.0))
            p.error(ln, "model.sigma must be positive");
    });
    p.with("model.dini_K", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "model.dini_K", c.params.dini_K) && c.params.dini_K < 0.0)
            p.error(ln, "model.dini_K must be nonnegative");
    });
    p.with("model.dini_delta", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "model.dini_delta", c.params.dini_delta) &&
            c.params.dini_delta < 0.0)
            p.error(ln, "model.dini_delta must be nonnegative");
    });
    p.with("model.dini_c", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "model.dini_c", c.params.dini_c) &&
            !(c.params.dini_c >= std::numbers::e))
            p.error(ln, "model.dini_c must be >= e");
    });

    p.with("scheme.n", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "scheme.n", c.scheme.mesh_n) && c.scheme.mesh_n == 0)
            p.error(ln, "scheme.n must be positive");
    });
    p.with("scheme.L", [&](const std::string& v, int ln) {
        p.parse_size(v, ln, "scheme.L", c.scheme.output_l);
    });
    p.with("scheme.N", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "scheme.N", c.scheme.particles) && c.scheme.particles == 0)
            p.error(ln, "scheme.N must be positive");
    });
    p.with("scheme.N_w", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "scheme.N_w", c.scheme.w2_subsample) &&
            c.scheme.w2_subsample < 2)
            p.error(ln, "scheme.N_w must be at least 2");
    });
    p.with("scheme.substeps", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "scheme.substeps", c.scheme.substeps) && c.scheme.substeps == 0)
            p.error(ln, "scheme.substeps must be positive");
    });
    p.with("scheme.seed",
           [&](const std::string& v, int ln) { p.parse_u64(v, ln, "scheme.seed", c.scheme.seed); });
    p.with("scheme.exact_convolution", [&](const std::string& v, int ln) {
        p.parse_bool(v, ln, "scheme.exact_convolution", c.scheme.exact_convolution);
    });

    p.with("verify.T", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "verify.T", c.horizon) && !(c.horizon > 0.0))
            p.error(ln, "verify.T must be positive");
    });
    p.with("verify.p", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "verify.p", c.power_p) && !(c.power_p > 1.0))
            p.error(ln, "verify.p must exceed 1");
    });
    p.with("verify.f_id", [&](const std::string& v, int ln) {
        if (v != "all") {
            try {
                test_function(v);
            } catch (const std::exception&) {
                p.error(ln, "verify.f_id: unknown test function '" + v + "'");
                return;
            }
        }
        c.f_id = v;
    });
    p.with("verify.lambda_weight", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "verify.lambda_weight", c.picard.lambda_weight) &&
            !(c.picard.lambda_weight > 0.0))
            p.error(ln, "verify.lambda_weight must be positive");
    });
    p.with("verify.tol", [&](const std::string& v, int ln) {
        if (p.parse_double(v, ln, "verify.tol", c.picard.tol) && !(c.picard.tol > 0.0))
            p.error(ln, "verify.tol must be positive");
    });
    p.with("verify.max_iter", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "verify.max_iter", c.picard.max_iter) && c.picard.max_iter == 0)
            p.error(ln, "verify.max_iter must be positive");
    });
    p.with("verify.y", [&](const std::string& v, int ln) {
        for (const auto& tok : tokens(v)) {
            if (tok.size() < 3 || tok[0] != 'e') {
                p.error(ln, "verify.y: expected entries like e1:0.3, got '" + tok + "'");
                return;
            }
            const std::size_t colon = tok.find(':');
            if (colon == std::string::npos) {
                p.error(ln, "verify.y: expected entries like e1:0.3, got '" + tok + "'");
                return;
            }
            std::size_t mode;
            double val;
            if (!p.parse_size(tok.substr(1, colon - 1), ln, "verify.y", mode) ||
                !p.parse_double(tok.substr(colon + 1), ln, "verify.y", val))
                return;
            if (mode == 0) {
                p.error(ln, "verify.y: mode indices are 1-based");
                return;
            }
            c.shift_entries[mode] = val;
        }
    });
    p.with("verify.mu0", [&](const std::string& v, int) { c.mu0_spec = v; });
    p.with("verify.nu0", [&](const std::string& v, int) { c.nu0_spec = v; });
    p.with("verify.coupling", [&](const std::string& v, int ln) {
        if (v == "synchronous")
            c.coupling = InitialCoupling::Synchronous;
        else if (v == "independent")
            c.coupling = InitialCoupling::Independent;
        else
            p.error(ln, "verify.coupling: expected synchronous|independent");
    });
    p.with("verify.tv_cells", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "verify.tv_cells", c.tv_cells) && c.tv_cells == 0)
            p.error(ln, "verify.tv_cells must be positive");
    });
    p.with("verify.tv_dims", [&](const std::string& v, int ln) {
        if (p.parse_size(v, ln, "verify.tv_dims", c.tv_dims) && c.tv_dims == 0)
            p.error(ln, "verify.tv_dims must be positive");
    });
    p.with("verify.samples", [&](const std::string& v, int ln) {
        std::size_t s;
        if (p.parse_size(v, ln, "verify.samples", s)) {
            if (s == 0)
                p.error(ln, "verify.samples must be positive");
            else
                c.validate_samples = static_cast<int>(s);
        }
    });

    // Cross-field checks.
    if (c.scheme.output_l != 0 && c.scheme.mesh_n % c.scheme.output_l != 0)
        p.errors.push_back("scheme.L must divide scheme.n");
    if (c.scheme.w2_subsample > c.scheme.particles)
        c.scheme.w2_subsample = c.scheme.particles >= 2 ? c.scheme.particles : 2;
    for (const auto& [mode, val] : c.shift_entries) {
        (void)val;
        if (mode > c.modes) {
            std::ostringstream os;
            os << "verify.y: mode e" << mode << " exceeds model.modes = " << c.modes;
            p.errors.push_back(os.str());
        }
    }

    res.errors = std::move(p.errors);
    return res;
}

// ---------------------------------------------------------------------------
// Materialization
// ---------------------------------------------------------------------------

inline OperatorSpectrum build_spectrum(const RunConfig& c) {
    if (c.spectrum_is_list) {
        Vec lam = c.spectrum_list;
        if (lam.size() != c.modes)
            throw std::invalid_argument("spectrum list length != modes");
        return OperatorSpectrum::from_eigenvalues(std::move(lam), c.eps);
    }
    return OperatorSpectrum::power_law(c.modes, c.spectrum_p, c.eps, c.spectrum_scale);
}

inline ModelSpec build_configured_model(const RunConfig& c) {
    return build_model(c.model_name, build_spectrum(c), c.params, c.horizon);
}

inline Vec shift_vector(const RunConfig& c) {
    Vec y(c.modes, 0.0);
    for (const auto& [mode, val] : c.shift_entries)
        if (mode >= 1 && mode <= c.modes) y[mode - 1] = val;
    return y;
}

// Initial-law syntax:  point [eK:V ...] | gauss [eK:V ...] sd:S | twopoint [eK:V ...] w:W
// eK:V entries set the point location / Gaussian mean / two-point offset.
inline InitialSampler parse_initial_sampler(const std::string& spec, std::size_t modes) {
    const auto toks = cfgdetail::tokens(spec);
    if (toks.empty()) throw std::invalid_argument("initial law: empty spec");
    const std::string kind = toks[0];
    Vec entries(modes, 0.0);
    double sd = 1.0, w = 0.5;
    bool saw_sd = false;
    for (std::size_t i = 1; i < toks.size(); ++i) {
        const std::string& tok = toks[i];
        const std::size_t colon = tok.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("initial law: bad token '" + tok + "'");
        const std::string head = tok.substr(0, colon);
        const double val = std::stod(tok.substr(colon + 1));
        if (head == "sd") {
            sd = val;
            saw_sd = true;
        } else if (head == "w") {
            w = val;
        } else if (!head.empty() && head[0] == 'e') {
            const std::size_t mode = std::stoull(head.substr(1));
            if (mode < 1 || mode > modes)
                throw std::invalid_argument("initial law: mode out of range in '" + tok + "'");
            entries[mode - 1] = val;
        } else {
            throw std::invalid_argument("initial law: bad token '" + tok + "'");
        }
    }
    if (kind == "point") return InitialSampler::point(std::move(entries));
    if (kind == "gauss") {
        if (!(sd >= 0.0)) throw std::invalid_argument("initial law: sd must be nonnegative");
        (void)saw_sd;
        return InitialSampler::gaussian(std::move(entries), Vec(modes, sd));
    }
    if (kind == "twopoint")
        return InitialSampler::two_point(Vec(modes, 0.0), std::move(entries), w);
    throw std::invalid_argument("initial law: unknown kind '" + kind + "'");
}

}  // namespace spdelab

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spdelab {

// All Hilbert-space state lives in coefficient space: a vector holds the
// first M coordinates against the eigenbasis of -A.
using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

inline void check_finite(std::span<const double> a, const char* what) {
    for (double v : a)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

struct MeanAndSe {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
};

inline MeanAndSe mean_and_se(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean_and_se: empty sample");
    double m = 0.0;
    for (double v : xs) m += v;
    m /= static_cast<double>(xs.size());
    if (xs.size() == 1) return {m, 0.0};
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    double var = ss / static_cast<double>(xs.size() - 1);
    return {m, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace spdelab

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace cpl::test {

inline std::vector<double> random_vector(std::mt19937_64& rng, size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        x = lo + (hi - lo) * u;
    }
    return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Central finite difference of t -> f(x + t v) at t = 0.
inline double directional_fd(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> x, std::span<const double> v, double h) {
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    for (size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * v[i];
        xm[i] -= h * v[i];
    }
    return (f(xp) - f(xm)) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-9) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace cpl::test

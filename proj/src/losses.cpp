#include "cpl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cpl {

double loss_fv(std::span<const double> residual) {
    double s = 0.0;
    for (double r : residual) s += r * r;
    return residual.empty() ? 0.0 : s / static_cast<double>(residual.size());
}

double loss_entropy(std::span<const double> residual) {
    double s = 0.0;
    for (double r : residual) s += std::max(0.0, r);
    return residual.empty() ? 0.0 : s / static_cast<double>(residual.size());
}

double loss_rh(std::span<const double> rh_residual) {
    double s = 0.0;
    for (double r : rh_residual) s += r * r;
    return rh_residual.empty() ? 0.0 : s / static_cast<double>(rh_residual.size());
}

// TV over faces not touching a masked cell; face i sits between cells i, i+1.
static double masked_tv(std::span<const double> u, const std::vector<std::uint8_t>* mask) {
    const int n = static_cast<int>(u.size());
    double tv = 0.0;
    for (int i = 0; i < n; ++i) {
        const int ip = (i + 1) % n;
        if (mask && ((*mask)[i] || (*mask)[ip])) continue;
        tv += std::abs(u[ip] - u[i]);
    }
    return tv;
}

double loss_tvd(const GridState& prev, const GridState& next,
                const std::vector<std::uint8_t>* shock_mask) {
    return std::max(0.0, masked_tv(next.values, shock_mask) - masked_tv(prev.values, shock_mask));
}

static double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

TvdGrad loss_tvd_grad(const GridState& prev, const GridState& next,
                      const std::vector<std::uint8_t>* shock_mask) {
    const int n = static_cast<int>(prev.values.size());
    TvdGrad g;
    g.d_prev.assign(n, 0.0);
    g.d_next.assign(n, 0.0);
    if (loss_tvd(prev, next, shock_mask) <= 0.0) return g; // hinge inactive
    for (int i = 0; i < n; ++i) {
        const int ip = (i + 1) % n;
        if (shock_mask && ((*shock_mask)[i] || (*shock_mask)[ip])) continue;
        const double sn = sgn(next.values[ip] - next.values[i]);
        g.d_next[ip] += sn;
        g.d_next[i] -= sn;
        const double sp = sgn(prev.values[ip] - prev.values[i]);
        g.d_prev[ip] -= sp;
        g.d_prev[i] += sp;
    }
    return g;
}

double loss_bounds(const GridState& state, double u_min, double u_max) {
    double s = 0.0;
    for (double u : state.values) {
        const double over = std::max(0.0, u - u_max);
        const double under = std::max(0.0, u_min - u);
        s += over * over + under * under;
    }
    return state.values.empty() ? 0.0 : s / static_cast<double>(state.values.size());
}

std::vector<double> loss_bounds_grad(const GridState& state, double u_min, double u_max) {
    const int n = static_cast<int>(state.values.size());
    std::vector<double> g(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double u = state.values[i];
        if (u > u_max) g[i] = 2.0 * (u - u_max) / n;
        else if (u < u_min) g[i] = -2.0 * (u_min - u) / n;
    }
    return g;
}

WeightState update_weights(const WeightState& w, std::span<const double> losses,
                           std::span<const double> grad_norms,
                           std::span<const double> curvatures) {
    WeightState out = w;
    const size_t m = w.lambdas.size();
    double mean_g = 0.0;
    for (size_t j = 0; j < m; ++j) mean_g += grad_norms[j] * (1.0 + w.beta * curvatures[j]);
    mean_g /= static_cast<double>(m);

    for (size_t i = 0; i < m; ++i) {
        double lam = w.lambdas[i];
        if (mean_g > 0.0) {
            const double ratio = std::pow(losses[i] / w.l0, w.alpha);
            lam *= ratio * grad_norms[i] * (1.0 + w.beta * curvatures[i]) / mean_g;
        }
        out.lambdas[i] = std::clamp(lam, w.lambda_min, w.lambda_max);
    }
    return out;
}

double hutchinson_curvature(const std::function<std::vector<double>(std::span<const double>)>& loss_grad_fn,
                            std::span<const double> params, int n_probes, std::uint64_t seed) {
    const size_t dim = params.size();
    const double h = 1e-4;
    std::mt19937_64 rng(seed);
    const std::vector<double> g0 = loss_grad_fn(params);

    double acc = 0.0;
    std::vector<double> probe(dim), shifted(dim);
    for (int p = 0; p < n_probes; ++p) {
        for (size_t i = 0; i < dim; ++i) {
            probe[i] = (rng() >> 63) ? 1.0 : -1.0;
            shifted[i] = params[i] + h * probe[i];
        }
        const std::vector<double> g1 = loss_grad_fn(shifted);
        double dot = 0.0;
        for (size_t i = 0; i < dim; ++i) dot += (g1[i] - g0[i]) * probe[i];
        acc += std::abs(dot) / (h * static_cast<double>(dim));
    }
    return acc / static_cast<double>(n_probes);
}

double pvs(double fv_residual_norm, double ent_viol, double tvd_viol, double bound_viol,
           const PvsCoefficients& coeffs) {
    return coeffs.a * fv_residual_norm + coeffs.b * ent_viol + coeffs.c * tvd_viol +
           coeffs.d * bound_viol;
}

double tvd_cosine_weight(double w0, double t) {
    const double pi = std::acos(-1.0);
    return std::max(0.1 * w0, w0 * 0.5 * (1.0 + std::cos(pi * std::clamp(t, 0.0, 1.0))));
}

} // namespace cpl

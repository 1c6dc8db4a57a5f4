#pragma once

#include "cpl/grid.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cpl {

/// One training step's penalty terms. total = data_mse + sum of weighted terms.
struct LossBreakdown {
    double data_mse = 0.0;
    double l_fv = 0.0;
    double l_rh = 0.0;
    double l_ent = 0.0;
    double l_tvd = 0.0;
    double l_bnd = 0.0;
    double total = 0.0;
};

/// Adaptive constraint-weight state: lambda_i rescaled online from loss
/// ratios, gradient norms and curvature proxies.
struct WeightState {
    std::vector<double> lambdas;
    double alpha = 0.5;
    double beta = 0.0;
    double l0 = 1.0;
    double lambda_min = 1e-3;
    double lambda_max = 1e3;
};

struct PvsCoefficients {
    double a = 1.0, b = 1.0, c = 1.0, d = 1.0;
};

/// Mean of squared finite-volume residuals.
double loss_fv(std::span<const double> residual);

/// Mean of max(0, r): only entropy production is penalized.
/// Subgradient at r = 0 is 0.
double loss_entropy(std::span<const double> residual);

/// Mean of squared Rankine-Hugoniot interface residuals.
double loss_rh(std::span<const double> rh_residual);

/// max(0, TV(next) - TV(prev)); when a shock mask is given, every face
/// touching a masked cell is excluded from both TV sums.
double loss_tvd(const GridState& prev, const GridState& next,
                const std::vector<std::uint8_t>* shock_mask = nullptr);

struct TvdGrad {
    std::vector<double> d_prev;
    std::vector<double> d_next;
};
TvdGrad loss_tvd_grad(const GridState& prev, const GridState& next,
                      const std::vector<std::uint8_t>* shock_mask = nullptr);

/// Mean of squared hinge excesses outside [u_min, u_max].
double loss_bounds(const GridState& state, double u_min, double u_max);
std::vector<double> loss_bounds_grad(const GridState& state, double u_min, double u_max);

/// Multiplicative weight update
///   lambda_i <- lambda_i (L_i/L0)^alpha g_i (1 + beta H_i) / mean_j g_j (1 + beta H_j),
/// clipped into [lambda_min, lambda_max]. If every g_j (1 + beta H_j) is zero
/// the lambdas are left unchanged (then clipped).
WeightState update_weights(const WeightState& w, std::span<const double> losses,
                           std::span<const double> grad_norms, std::span<const double> curvatures);

/// Hutchinson curvature proxy: mean over Rademacher probes v of
///   |(grad(theta + h v) - grad(theta)) . v| / (h dim),
/// h = 1e-4; equals the mean diagonal of the Hessian in expectation
/// (exactly 1 for the quadratic loss |theta|^2/2). Deterministic per seed.
double hutchinson_curvature(const std::function<std::vector<double>(std::span<const double>)>& loss_grad_fn,
                            std::span<const double> params, int n_probes, std::uint64_t seed);

/// Physics Violation Score from its four components.
double pvs(double fv_residual_norm, double ent_viol, double tvd_viol, double bound_viol,
           const PvsCoefficients& coeffs);

/// Cosine-annealed TVD weight with a floor of w0/10:
///   w(t) = max(w0/10, w0 (1 + cos(pi t)) / 2), t in [0, 1].
double tvd_cosine_weight(double w0, double t);

} // namespace cpl

#pragma once

#include "cpl/data.hpp"
#include "cpl/grid.hpp"
#include "cpl/losses.hpp"
#include "cpl/net.hpp"
#include "cpl/projectors.hpp"

#include <vector>

namespace cpl {

struct DegenerateFieldError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-step reliability diagnostics. mass_drift is stored as |M(t) - M(0)|.
/// Entropy positive-part statistics are reported both for the projected state
/// (ent_pos_*) and for the raw network candidate before projection
/// (ent_pos_*_raw). step == -1 marks the aggregate (mean over steps) row.
struct MetricsRecord {
    int step = 0;
    double mse_cpl = 0.0;
    double mae_cpl = 0.0;
    double mass_drift = 0.0;
    double rh_mean = 0.0;
    double ent_pos_mean = 0.0;
    double ent_pos_frac = 0.0;
    double ent_pos_mean_raw = 0.0;
    double ent_pos_frac_raw = 0.0;
    double dtv_plus = 0.0;
    double bound_viol = 0.0;
    double fv_resid_norm = 0.0;
    double pvs = 0.0;
    double shock_align_cells = 0.0;
    double lawful_distance = 0.0;
};

/// PVS of one record: a |R|_2 + b EntViol + c TVDViol + d BoundViol.
double pvs(const MetricsRecord& m, const PvsCoefficients& coeffs);

/// Circular distance between the argmax of |central-difference gradient| in
/// each field; ties break to the lowest index. Throws DegenerateFieldError on
/// a constant field.
int shock_alignment(const GridState& pred, const GridState& ref);

/// Index of the steepest gradient (periodic central differences).
int steepest_gradient_index(const GridState& state);

struct WilsonInterval {
    double lo = 0.0, hi = 0.0;
};

/// Wilson score interval for a Bernoulli proportion.
WilsonInterval wilson_interval(double p_hat, std::int64_t n_eff, double z);

/// L2 distance from a candidate to its projection onto the lawful set.
double lawful_distance(const GridState& candidate, const GridState& prev, const Mesh1D& mesh,
                       const ProjectionChainConfig& chain);

struct ConformalQuantiles {
    double q_global = 0.0;
    std::vector<double> q_roll; // one entry per rollout step, empty if unknown
    double coverage_target = 0.9;
};

/// Split-conformal quantile: the ceil((m+1) target)-th smallest of m
/// residuals (clipped to the largest). Throws InsufficientDataError if m < 20.
double conformal_quantile(std::vector<double> residuals, double target);

/// Global quantile from a flat calibration set.
ConformalQuantiles conformal_calibrate(const std::vector<double>& residuals, double target);

/// Global plus per-rollout-step quantiles; per_step[t] holds the calibration
/// residuals of step t.
ConformalQuantiles conformal_calibrate(const std::vector<std::vector<double>>& per_step,
                                       double target);

struct EvalConfig {
    ProjectionChainConfig chain;
    PvsCoefficients pvs_coeffs;
    double conformal_target = 0.9;
    double ent_pos_floor = 1e-12; // round-off floor for the positive-fraction count
};

/// Autoregressive rollout with per-step projection against every dataset
/// sequence; returns one record per step (mean over sequences) plus the
/// aggregate row (step = -1) appended.
std::vector<MetricsRecord> evaluate_rollout(const PredictorParams& params, const Dataset& dataset,
                                            int horizon, const EvalConfig& cfg);

/// One-step absolute prediction errors |proj - truth| per (pair, cell);
/// feeds the conformal calibration.
std::vector<double> one_step_abs_errors(const PredictorParams& params, const Dataset& dataset,
                                        const EvalConfig& cfg);

/// Per-rollout-step max-norm errors for rollout-aware conformal quantiles:
/// result[t][s] = max_i |proj^{t+1}_i - truth^{t+1}_i| for sequence s.
std::vector<std::vector<double>> rollout_abs_errors(const PredictorParams& params,
                                                    const Dataset& dataset, int horizon,
                                                    const EvalConfig& cfg);

} // namespace cpl

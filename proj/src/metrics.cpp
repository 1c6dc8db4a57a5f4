#include "cpl/metrics.hpp"

#include "cpl/fv.hpp"

#include <algorithm>
#include <cmath>

namespace cpl {

double pvs(const MetricsRecord& m, const PvsCoefficients& coeffs) {
    return pvs(m.fv_resid_norm, m.ent_pos_mean, m.dtv_plus, m.bound_viol, coeffs);
}

int steepest_gradient_index(const GridState& state) {
    const auto& u = state.values;
    const int n = static_cast<int>(u.size());
    int best = 0;
    double best_g = -1.0;
    for (int i = 0; i < n; ++i) {
        const double g =
            std::abs(u[periodic_index(i + 1, n)] - u[periodic_index(i - 1, n)]);
        if (g > best_g) {
            best_g = g;
            best = i;
        }
    }
    if (best_g == 0.0)
        throw DegenerateFieldError("steepest_gradient_index: constant field has no gradient maximum");
    return best;
}

int shock_alignment(const GridState& pred, const GridState& ref) {
    if (pred.values.size() != ref.values.size())
        throw ShapeMismatchError("shock_alignment: field sizes differ");
    const int n = static_cast<int>(pred.values.size());
    const int ih = steepest_gradient_index(pred);
    const int is = steepest_gradient_index(ref);
    const int d = std::abs(ih - is);
    return std::min(d, n - d);
}

WilsonInterval wilson_interval(double p_hat, std::int64_t n_eff, double z) {
    if (p_hat < 0.0 || p_hat > 1.0)
        throw std::invalid_argument("wilson_interval: p_hat must be in [0, 1]");
    if (n_eff < 1) throw std::invalid_argument("wilson_interval: n_eff must be >= 1");
    const double n = static_cast<double>(n_eff);
    const double z2n = z * z / n;
    const double center = p_hat + 0.5 * z2n;
    const double half = z * std::sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n));
    const double denom = 1.0 + z2n;
    WilsonInterval w;
    w.lo = std::clamp((center - half) / denom, 0.0, 1.0);
    w.hi = std::clamp((center + half) / denom, 0.0, 1.0);
    return w;
}

double lawful_distance(const GridState& candidate, const GridState& prev, const Mesh1D& mesh,
                       const ProjectionChainConfig& chain) {
    const GridState proj = cpl_project_output(candidate, prev, mesh, chain);
    double d2 = 0.0;
    for (size_t i = 0; i < candidate.values.size(); ++i) {
        const double d = candidate.values[i] - proj.values[i];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

double conformal_quantile(std::vector<double> residuals, double target) {
    if (residuals.size() < 20)
        throw InsufficientDataError("conformal_quantile: need at least 20 residuals, got " +
                                    std::to_string(residuals.size()));
    if (!(target > 0.0 && target <= 1.0))
        throw std::invalid_argument("conformal_quantile: target must be in (0, 1]");
    std::sort(residuals.begin(), residuals.end());
    const auto m = residuals.size();
    size_t rank = static_cast<size_t>(std::ceil((static_cast<double>(m) + 1.0) * target));
    rank = std::min(rank, m); // target near 1 clips to the max residual
    return residuals[rank - 1];
}

ConformalQuantiles conformal_calibrate(const std::vector<double>& residuals, double target) {
    ConformalQuantiles q;
    q.coverage_target = target;
    q.q_global = conformal_quantile(residuals, target);
    return q;
}

ConformalQuantiles conformal_calibrate(const std::vector<std::vector<double>>& per_step,
                                       double target) {
    ConformalQuantiles q;
    q.coverage_target = target;
    std::vector<double> all;
    for (const auto& step : per_step) all.insert(all.end(), step.begin(), step.end());
    q.q_global = conformal_quantile(all, target);
    q.q_roll.reserve(per_step.size());
    for (const auto& step : per_step) q.q_roll.push_back(conformal_quantile(step, target));
    return q;
}

namespace {

struct StepAccumulator {
    double mse = 0, mae = 0, mass = 0, rh = 0;
    double ent_mean = 0, ent_frac = 0, ent_mean_raw = 0, ent_frac_raw = 0;
    double dtv = 0, bound = 0, rnorm = 0, align = 0, dlaw = 0;
    int count = 0;
};

} // namespace

std::vector<MetricsRecord> evaluate_rollout(const PredictorParams& params, const Dataset& dataset,
                                            int horizon, const EvalConfig& cfg) {
    if (horizon > dataset.seq_len - 1)
        throw std::invalid_argument("evaluate_rollout: horizon exceeds stored sequence length");
    const Mesh1D& mesh = dataset.mesh;
    const int n = mesh.n_cells;

    std::vector<StepAccumulator> acc(static_cast<size_t>(horizon));

    for (size_t s = 0; s < dataset.n_sequences(); ++s) {
        const auto ic = dataset.snapshot(s, 0);
        GridState z{std::vector<double>(ic.begin(), ic.end()), 0};
        const double mass0 = total_mass(z, mesh);

        for (int t = 1; t <= horizon; ++t) {
            const GridState cand = forward(params, z, mesh);
            const GridState proj = cpl_project_output(cand, z, mesh, cfg.chain);
            const auto truth = dataset.snapshot(s, t);

            const FaceStates faces = cfg.chain.use_berger ? berger_reconstruct(z)
                                                          : piecewise_constant_faces(z);
            auto& a = acc[static_cast<size_t>(t) - 1];

            double mse = 0, mae = 0;
            for (int i = 0; i < n; ++i) {
                const double e = proj.values[i] - truth[i];
                mse += e * e;
                mae += std::abs(e);
            }
            a.mse += mse / n;
            a.mae += mae / n;
            a.mass += std::abs(total_mass(proj, mesh) - mass0);

            const auto rh = rh_residual(faces);
            double rh_sum = 0;
            for (double v : rh) rh_sum += v;
            a.rh += rh_sum / n;

            auto pos_stats = [&](const GridState& next, double& mean_out, double& frac_out) {
                const auto r = entropy_residual(z, next, faces, mesh);
                double sum = 0;
                int cnt = 0;
                for (double v : r) {
                    sum += std::max(0.0, v);
                    if (v > cfg.ent_pos_floor) ++cnt;
                }
                mean_out += sum / n;
                frac_out += static_cast<double>(cnt) / n;
            };
            pos_stats(proj, a.ent_mean, a.ent_frac);
            pos_stats(cand, a.ent_mean_raw, a.ent_frac_raw);

            a.dtv += std::max(0.0, total_variation(proj) - total_variation(z));

            if (cfg.chain.bounds) {
                int viol = 0;
                for (double v : proj.values)
                    if (v < cfg.chain.u_min || v > cfg.chain.u_max) ++viol;
                a.bound += static_cast<double>(viol) / n;
            }

            const auto resid = fv_residual(z, proj, mesh, faces);
            double r2 = 0;
            for (double v : resid) r2 += v * v;
            a.rnorm += std::sqrt(r2);

            {
                GridState truth_state{std::vector<double>(truth.begin(), truth.end()), proj.time_index};
                try {
                    a.align += shock_alignment(proj, truth_state);
                } catch (const DegenerateFieldError&) {
                    // constant fields carry no shock position; skip
                }
            }

            double d2 = 0;
            for (int i = 0; i < n; ++i) {
                const double d = cand.values[i] - proj.values[i];
                d2 += d * d;
            }
            a.dlaw += std::sqrt(d2);

            a.count += 1;
            z = proj;
        }
    }

    std::vector<MetricsRecord> records;
    records.reserve(static_cast<size_t>(horizon) + 1);
    MetricsRecord agg;
    agg.step = -1;
    for (int t = 1; t <= horizon; ++t) {
        const auto& a = acc[static_cast<size_t>(t) - 1];
        const double c = a.count > 0 ? static_cast<double>(a.count) : 1.0;
        MetricsRecord m;
        m.step = t;
        m.mse_cpl = a.mse / c;
        m.mae_cpl = a.mae / c;
        m.mass_drift = a.mass / c;
        m.rh_mean = a.rh / c;
        m.ent_pos_mean = a.ent_mean / c;
        m.ent_pos_frac = a.ent_frac / c;
        m.ent_pos_mean_raw = a.ent_mean_raw / c;
        m.ent_pos_frac_raw = a.ent_frac_raw / c;
        m.dtv_plus = a.dtv / c;
        m.bound_viol = a.bound / c;
        m.fv_resid_norm = a.rnorm / c;
        m.shock_align_cells = a.align / c;
        m.lawful_distance = a.dlaw / c;
        m.pvs = pvs(m, cfg.pvs_coeffs);
        records.push_back(m);

        agg.mse_cpl += m.mse_cpl;
        agg.mae_cpl += m.mae_cpl;
        agg.mass_drift += m.mass_drift;
        agg.rh_mean += m.rh_mean;
        agg.ent_pos_mean += m.ent_pos_mean;
        agg.ent_pos_frac += m.ent_pos_frac;
        agg.ent_pos_mean_raw += m.ent_pos_mean_raw;
        agg.ent_pos_frac_raw += m.ent_pos_frac_raw;
        agg.dtv_plus += m.dtv_plus;
        agg.bound_viol += m.bound_viol;
        agg.fv_resid_norm += m.fv_resid_norm;
        agg.pvs += m.pvs;
        agg.shock_align_cells += m.shock_align_cells;
        agg.lawful_distance += m.lawful_distance;
    }
    const double h = static_cast<double>(horizon);
    agg.mse_cpl /= h;
    agg.mae_cpl /= h;
    agg.mass_drift /= h;
    agg.rh_mean /= h;
    agg.ent_pos_mean /= h;
    agg.ent_pos_frac /= h;
    agg.ent_pos_mean_raw /= h;
    agg.ent_pos_frac_raw /= h;
    agg.dtv_plus /= h;
    agg.bound_viol /= h;
    agg.fv_resid_norm /= h;
    agg.pvs /= h;
    agg.shock_align_cells /= h;
    agg.lawful_distance /= h;
    records.push_back(agg);
    return records;
}

std::vector<double> one_step_abs_errors(const PredictorParams& params, const Dataset& dataset,
                                        const EvalConfig& cfg) {
    const Mesh1D& mesh = dataset.mesh;
    const int n = mesh.n_cells;
    std::vector<double> errors;
    for (size_t s = 0; s < dataset.n_sequences(); ++s) {
        for (int t = 0; t + 1 < dataset.seq_len; ++t) {
            const auto u0 = dataset.snapshot(s, t);
            GridState z{std::vector<double>(u0.begin(), u0.end()), t};
            const GridState cand = forward(params, z, mesh);
            const GridState proj = cpl_project_output(cand, z, mesh, cfg.chain);
            const auto truth = dataset.snapshot(s, t + 1);
            for (int i = 0; i < n; ++i) errors.push_back(std::abs(proj.values[i] - truth[i]));
        }
    }
    return errors;
}

std::vector<std::vector<double>> rollout_abs_errors(const PredictorParams& params,
                                                    const Dataset& dataset, int horizon,
                                                    const EvalConfig& cfg) {
    if (horizon > dataset.seq_len - 1)
        throw std::invalid_argument("rollout_abs_errors: horizon exceeds stored sequence length");
    const Mesh1D& mesh = dataset.mesh;
    const int n = mesh.n_cells;
    std::vector<std::vector<double>> per_step(static_cast<size_t>(horizon));
    for (size_t s = 0; s < dataset.n_sequences(); ++s) {
        const auto ic = dataset.snapshot(s, 0);
        GridState z{std::vector<double>(ic.begin(), ic.end()), 0};
        for (int t = 1; t <= horizon; ++t) {
            const GridState cand = forward(params, z, mesh);
            const GridState proj = cpl_project_output(cand, z, mesh, cfg.chain);
            const auto truth = dataset.snapshot(s, t);
            double worst = 0.0;
            for (int i = 0; i < n; ++i)
                worst = std::max(worst, std::abs(proj.values[i] - truth[i]));
            per_step[static_cast<size_t>(t) - 1].push_back(worst);
            z = proj;
        }
    }
    return per_step;
}

} // namespace cpl

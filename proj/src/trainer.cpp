#include "cpl/trainer.hpp"

#include "cpl/fv.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <limits>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>

namespace cpl {

int curriculum_rollout(int epoch, int epochs, int r_max, Curriculum mode) {
    if (mode == Curriculum::Off || r_max <= 1) return 1;
    const double t = epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 1.0;
    const int r = 1 + static_cast<int>(std::floor(t * (r_max - 1)));
    return std::clamp(r, 1, r_max);
}

bool deterministic_mode() {
    const char* v = std::getenv("CPL_DETERMINISTIC");
    if (!v) return false;
    const std::string s(v);
    return s == "1" || s == "true" || s == "on";
}

Trainer::Trainer(PredictorParams params, TrainConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)), eta_(cfg_.eta) {
    velocity_.assign(params_.theta.size(), 0.0);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

GridState snapshot_state(const Dataset& ds, const WindowRef& w, int t) {
    const auto s = ds.snapshot(w.seq, w.offset + t);
    return GridState{std::vector<double>(s.begin(), s.end()), w.offset + t};
}

} // namespace

Trainer::BatchGrad Trainer::batch_gradient(const Dataset& ds, std::span<const WindowRef> batch,
                                           int R, const FixedWeights& w,
                                           const LossSelect& select) {
    const Mesh1D& mesh = ds.mesh;
    const int n = mesh.n_cells;
    const bool use_berger = cfg_.chain.use_berger;

    BatchGrad out;
    out.grad.assign(params_.theta.size(), 0.0);

    const double inv_r = 1.0 / R;
    const double inv_samples = batch.empty() ? 1.0 : 1.0 / static_cast<double>(batch.size());

    for (const WindowRef& wref : batch) {
        // forward rollout, caching states and candidates
        std::vector<GridState> z(static_cast<size_t>(R) + 1);
        std::vector<GridState> cand(static_cast<size_t>(R) + 1);
        z[0] = snapshot_state(ds, wref, 0);
        for (int r = 1; r <= R; ++r) {
            cand[r] = forward(params_, z[r - 1], mesh);
            const auto t0 = Clock::now();
            z[r] = cpl_project_output(cand[r], z[r - 1], mesh, cfg_.chain);
            out.proj_seconds += seconds_since(t0);
        }

        // losses (unweighted values for reporting)
        for (int r = 1; r <= R; ++r) {
            const GridState& prev = z[r - 1];
            const FaceStates faces =
                use_berger ? berger_reconstruct(prev) : piecewise_constant_faces(prev);
            const auto truth = ds.snapshot(wref.seq, wref.offset + r);

            double mse = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e = z[r].values[i] - truth[i];
                mse += e * e;
            }
            out.losses.data_mse += mse / n * inv_r * inv_samples;

            out.losses.l_fv +=
                loss_fv(fv_residual(prev, cand[r], mesh, faces)) * inv_r * inv_samples;
            out.losses.l_rh += loss_rh(rh_residual(faces)) * inv_r * inv_samples;
            out.losses.l_ent +=
                loss_entropy(entropy_residual(prev, cand[r], faces, mesh)) * inv_r * inv_samples;

            std::vector<std::uint8_t> mask;
            const std::vector<std::uint8_t>* mask_ptr = nullptr;
            if (cfg_.tvd_shock_mask) {
                const auto chi = shock_sensor(prev);
                mask.resize(n);
                for (int i = 0; i < n; ++i) mask[i] = chi[i] > cfg_.tvd_mask_chi ? 1 : 0;
                mask_ptr = &mask;
            }
            out.losses.l_tvd += loss_tvd(prev, cand[r], mask_ptr) * inv_r * inv_samples;
            out.losses.l_bnd +=
                loss_bounds(cand[r], cfg_.chain.u_min, cfg_.chain.u_max) * inv_r * inv_samples;

            // post-projection lawfulness diagnostics
            out.mass_drift +=
                std::abs(total_mass(z[r], mesh) - total_mass(prev, mesh)) * inv_r * inv_samples;
            const auto r_proj = entropy_residual(prev, z[r], faces, mesh);
            double pos = 0.0;
            int cnt = 0;
            for (double v : r_proj) {
                pos += std::max(0.0, v);
                if (v > 1e-12) ++cnt;
            }
            out.ent_pos_mean += pos / n * inv_r * inv_samples;
            out.ent_pos_frac += static_cast<double>(cnt) / n * inv_r * inv_samples;
            out.dtv_plus += std::max(0.0, total_variation(z[r]) - total_variation(prev)) * inv_r *
                            inv_samples;
        }

        // reverse pass through the unrolled chain
        std::vector<std::vector<double>> dz(static_cast<size_t>(R) + 1,
                                            std::vector<double>(n, 0.0));
        for (int r = R; r >= 1; --r) {
            const GridState& prev = z[r - 1];
            const GridState& proj = z[r];
            const auto truth = ds.snapshot(wref.seq, wref.offset + r);

            // data term on the projected state
            if (select.data) {
                const double c = 2.0 * inv_r * inv_samples / n;
                for (int i = 0; i < n; ++i)
                    dz[r][i] += c * (proj.values[i] - truth[i]);
            }

            std::vector<double> d_cand(n, 0.0);
            std::vector<double> d_prev_direct(n, 0.0);

            // FV residual penalty on the raw candidate
            if (select.fv && w.fv != 0.0) {
                const FaceStates faces =
                    use_berger ? berger_reconstruct(prev) : piecewise_constant_faces(prev);
                const auto resid = fv_residual(prev, cand[r], mesh, faces);
                const double c = w.fv * 2.0 * inv_r * inv_samples / n;
                for (int i = 0; i < n; ++i) d_cand[i] += c * resid[i] / mesh.dt;
                // flux part: dL/dF_j = c (resid_j - resid_{j+1}) / dx; identity part -1/dt
                std::vector<double> dflux(n);
                for (int j = 0; j < n; ++j)
                    dflux[j] = c * (resid[j] - resid[periodic_index(j + 1, n)]) / mesh.dx;
                const auto dp = total_face_flux_vjp(prev, mesh, use_berger, dflux);
                for (int i = 0; i < n; ++i)
                    d_prev_direct[i] += dp[i] - c * resid[i] / mesh.dt;
            }

            // entropy production hinge on the raw candidate
            if (select.ent && w.ent != 0.0) {
                const FaceStates faces =
                    use_berger ? berger_reconstruct(prev) : piecewise_constant_faces(prev);
                const auto resid = entropy_residual(prev, cand[r], faces, mesh);
                std::vector<double> upstream(n, 0.0);
                const double c = w.ent * inv_r * inv_samples / n;
                for (int i = 0; i < n; ++i) upstream[i] = resid[i] > 0.0 ? c : 0.0;
                const auto vjp = entropy_residual_vjp(prev, cand[r], mesh, use_berger,
                                                      kChiThresholdDefault, kLimiterEps, upstream);
                for (int i = 0; i < n; ++i) {
                    d_cand[i] += vjp.d_next[i];
                    d_prev_direct[i] += vjp.d_prev[i];
                }
            }

            // TVD hinge on the raw candidate
            if (select.tvd && w.tvd != 0.0) {
                std::vector<std::uint8_t> mask;
                const std::vector<std::uint8_t>* mask_ptr = nullptr;
                if (cfg_.tvd_shock_mask) {
                    const auto chi = shock_sensor(prev);
                    mask.resize(n);
                    for (int i = 0; i < n; ++i) mask[i] = chi[i] > cfg_.tvd_mask_chi ? 1 : 0;
                    mask_ptr = &mask;
                }
                const TvdGrad g = loss_tvd_grad(prev, cand[r], mask_ptr);
                const double c = w.tvd * inv_r * inv_samples;
                for (int i = 0; i < n; ++i) {
                    d_cand[i] += c * g.d_next[i];
                    d_prev_direct[i] += c * g.d_prev[i];
                }
            }

            // bounds hinge on the raw candidate
            if (select.bnd && w.bnd != 0.0) {
                const auto g = loss_bounds_grad(cand[r], cfg_.chain.u_min, cfg_.chain.u_max);
                const double c = w.bnd * inv_r * inv_samples;
                for (int i = 0; i < n; ++i) d_cand[i] += c * g[i];
            }

            // (RH residual is identically zero for the Burgers flux with the
            // Godunov speed, so it contributes no gradient.)

            // through the projection chain
            const ChainVjp chain_vjp =
                cpl_project_output_vjp(cand[r], prev, mesh, cfg_.chain, dz[r]);
            for (int i = 0; i < n; ++i) d_cand[i] += chain_vjp.d_candidate[i];

            // through the network
            const BackwardResult back = backward(params_, prev, mesh, d_cand);
            for (size_t p = 0; p < out.grad.size(); ++p) out.grad[p] += back.grad_theta[p];
            if (r >= 2) {
                for (int i = 0; i < n; ++i)
                    dz[r - 1][i] += back.grad_state[i] + chain_vjp.d_prev[i] + d_prev_direct[i];
            }
        }
        out.steps += R;
    }

    out.losses.total = out.losses.data_mse + w.fv * out.losses.l_fv + w.ent * out.losses.l_ent +
                       w.rh * out.losses.l_rh + w.tvd * out.losses.l_tvd + w.bnd * out.losses.l_bnd;
    return out;
}

LossBreakdown Trainer::apply_update(const Dataset& ds, std::span<const WindowRef> batch, int R,
                                    const FixedWeights& w) {
    BatchGrad bg;
    try {
        bg = batch_gradient(ds, batch, R, w, LossSelect{});
    } catch (const NonFiniteError&) {
        ++nonfinite_events_;
        eta_ *= 0.5;
        bg.losses.total = std::numeric_limits<double>::quiet_NaN();
        return bg.losses;
    }
    proj_seconds_accum_ += bg.proj_seconds;

    if (!all_finite(bg.grad) || !std::isfinite(bg.losses.total)) {
        ++nonfinite_events_;
        eta_ *= 0.5;
        return bg.losses;
    }
    if (eta_ > 0.0) {
        clip_gradient(bg.grad);
        for (size_t p = 0; p < params_.theta.size(); ++p) {
            velocity_[p] = cfg_.momentum * velocity_[p] - eta_ * bg.grad[p];
            params_.theta[p] += velocity_[p];
        }
    }
    params_.train_steps += 1;
    return bg.losses;
}

void Trainer::clip_gradient(std::vector<double>& grad) const {
    if (cfg_.clip_norm <= 0.0) return;
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > cfg_.clip_norm) {
        const double s = cfg_.clip_norm / norm;
        for (double& g : grad) g *= s;
    }
}

LossBreakdown Trainer::train_step(const Dataset& ds, std::span<const WindowRef> batch) {
    return apply_update(ds, batch, 1, cfg_.weights);
}

LossBreakdown Trainer::loss_and_gradient(const Dataset& ds, std::span<const WindowRef> batch,
                                         int R, std::vector<double>* grad_out) {
    BatchGrad bg = batch_gradient(ds, batch, R, cfg_.weights, LossSelect{});
    if (grad_out) *grad_out = std::move(bg.grad);
    return bg.losses;
}

LossBreakdown Trainer::rollout_train_step(const Dataset& ds, std::span<const WindowRef> batch,
                                          int R) {
    return apply_update(ds, batch, R, cfg_.weights);
}

double Trainer::validation_mse(const Dataset& ds, std::span<const std::uint32_t> val_seqs,
                               int horizon) {
    const Mesh1D& mesh = ds.mesh;
    const int n = mesh.n_cells;
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::uint32_t s : val_seqs) {
        const auto ic = ds.snapshot(s, 0);
        GridState z{std::vector<double>(ic.begin(), ic.end()), 0};
        for (int t = 1; t <= horizon && t < ds.seq_len; ++t) {
            const GridState cand = forward(params_, z, mesh);
            const GridState proj = cpl_project_output(cand, z, mesh, cfg_.chain);
            const auto truth = ds.snapshot(s, t);
            double mse = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e = proj.values[i] - truth[i];
                mse += e * e;
            }
            acc += mse / n;
            ++count;
            z = proj;
        }
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

namespace {

// deterministic Fisher-Yates; std::shuffle is implementation-defined
template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace

TrainReport Trainer::run_training(const Dataset& ds) {
    TrainReport report;
    if (ds.sequences.empty()) throw EmptyDatasetError("run_training: empty dataset");
    const auto t_start = Clock::now();

    // input standardization constants, frozen at first training
    if (params_.train_steps == 0) {
        double umax = 0.0;
        for (const auto& seq : ds.sequences)
            for (double v : seq) umax = std::max(umax, std::abs(v));
        params_.norm.mean = 0.0;
        params_.norm.scale = umax > 0.0 ? umax : 1.0;
    }

    // sequence-level validation split
    std::mt19937_64 rng(cfg_.seed);
    std::vector<std::uint32_t> order(ds.n_sequences());
    std::iota(order.begin(), order.end(), 0u);
    shuffle_vec(order, rng);
    size_t n_val = static_cast<size_t>(std::floor(cfg_.validation_fraction * order.size()));
    if (cfg_.validation_fraction > 0.0 && n_val == 0 && order.size() >= 2) n_val = 1;
    std::vector<std::uint32_t> val_seqs(order.begin(), order.begin() + n_val);
    std::vector<std::uint32_t> train_seqs(order.begin() + n_val, order.end());
    if (train_seqs.empty()) {
        train_seqs = val_seqs; // degenerate split: train on everything
    }

    WeightState wstate;
    wstate.lambdas = {cfg_.weights.fv, cfg_.weights.ent, cfg_.weights.rh, cfg_.weights.tvd,
                      cfg_.weights.bnd};
    wstate.alpha = cfg_.adapt_alpha;
    wstate.beta = cfg_.adapt_beta;
    wstate.lambda_min = cfg_.lambda_min;
    wstate.lambda_max = cfg_.lambda_max;

    double best_val = std::numeric_limits<double>::infinity();
    PredictorParams best_params = params_;
    int steps_since_adapt = 0;
    int consecutive_nonfinite = 0;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        const auto t_epoch = Clock::now();
        const double proj_before = proj_seconds_accum_;
        const int R = curriculum_rollout(epoch, cfg_.epochs, cfg_.rollout_max, cfg_.curriculum);

        FixedWeights w = cfg_.weights;
        if (cfg_.adaptive_weights) {
            w.fv = wstate.lambdas[0];
            w.ent = wstate.lambdas[1];
            w.rh = wstate.lambdas[2];
            w.tvd = wstate.lambdas[3];
            w.bnd = wstate.lambdas[4];
        }
        const double t_frac = cfg_.epochs > 1 ? static_cast<double>(epoch) / (cfg_.epochs - 1) : 1.0;
        if (cfg_.tvd_schedule == TvdSchedule::Cosine)
            w.tvd = tvd_cosine_weight(cfg_.adaptive_weights ? wstate.lambdas[3] : cfg_.weights.tvd,
                                      t_frac);

        // windows of length R+1 over the training split
        std::vector<WindowRef> windows;
        for (std::uint32_t s : train_seqs)
            for (int off = 0; off + R < ds.seq_len; ++off)
                windows.push_back(WindowRef{s, off});
        shuffle_vec(windows, rng);

        if (cfg_.adaptive_weights) {
            // L0 = data MSE at the start of the current epoch
            const double l0 = validation_mse(ds, val_seqs.empty() ? train_seqs : val_seqs, 1);
            wstate.l0 = std::max(l0, 1e-12);
        }

        EpochRow row;
        row.epoch = epoch;
        row.rollout_R = R;
        row.w_tvd = w.tvd;

        int batches = 0;
        for (size_t b = 0; b < windows.size(); b += static_cast<size_t>(cfg_.batch_size)) {
            const size_t e = std::min(windows.size(), b + static_cast<size_t>(cfg_.batch_size));
            const std::span<const WindowRef> batch(windows.data() + b, e - b);

            const int nf_before = nonfinite_events_;
            BatchGrad bg;
            bool finite = true;
            try {
                bg = batch_gradient(ds, batch, R, w, LossSelect{});
            } catch (const NonFiniteError&) {
                finite = false;
            }
            proj_seconds_accum_ += bg.proj_seconds;
            if (!finite || !all_finite(bg.grad) || !std::isfinite(bg.losses.total)) {
                ++nonfinite_events_;
                eta_ *= 0.5;
            } else if (eta_ > 0.0) {
                clip_gradient(bg.grad);
                for (size_t p = 0; p < params_.theta.size(); ++p) {
                    velocity_[p] = cfg_.momentum * velocity_[p] - eta_ * bg.grad[p];
                    params_.theta[p] += velocity_[p];
                }
                params_.train_steps += 1;
            } else {
                params_.train_steps += 1;
            }
            consecutive_nonfinite = nonfinite_events_ > nf_before ? consecutive_nonfinite + 1 : 0;
            if (consecutive_nonfinite >= 5) {
                report.aborted = true;
                break;
            }

            row.losses.data_mse += bg.losses.data_mse;
            row.losses.l_fv += bg.losses.l_fv;
            row.losses.l_rh += bg.losses.l_rh;
            row.losses.l_ent += bg.losses.l_ent;
            row.losses.l_tvd += bg.losses.l_tvd;
            row.losses.l_bnd += bg.losses.l_bnd;
            row.losses.total += bg.losses.total;
            row.mass_drift += bg.mass_drift;
            row.ent_pos_mean += bg.ent_pos_mean;
            row.ent_pos_frac += bg.ent_pos_frac;
            row.dtv_plus += bg.dtv_plus;
            ++batches;

            ++steps_since_adapt;
            if (cfg_.adaptive_weights && steps_since_adapt >= cfg_.adapt_cadence) {
                steps_since_adapt = 0;
                // per-constraint gradient norms on this batch
                std::vector<double> gnorm(5, 0.0), lvals(5, 0.0), curv(5, 0.0);
                const std::array<LossSelect, 5> sel = {
                    LossSelect{false, true, false, false, false, false},
                    LossSelect{false, false, true, false, false, false},
                    LossSelect{false, false, false, true, false, false},
                    LossSelect{false, false, false, false, true, false},
                    LossSelect{false, false, false, false, false, true}};
                FixedWeights unit{1.0, 1.0, 1.0, 1.0, 1.0};
                for (int k = 0; k < 5; ++k) {
                    BatchGrad g = batch_gradient(ds, batch, R, unit, sel[k]);
                    double norm = 0.0;
                    for (double v : g.grad) norm += v * v;
                    gnorm[k] = std::sqrt(norm);
                }
                lvals = {bg.losses.l_fv, bg.losses.l_ent, bg.losses.l_rh, bg.losses.l_tvd,
                         bg.losses.l_bnd};
                if (cfg_.adapt_beta > 0.0) {
                    // curvature proxy of the total loss reused for every term
                    auto grad_fn = [&](std::span<const double> theta) {
                        PredictorParams probe = params_;
                        probe.theta.assign(theta.begin(), theta.end());
                        Trainer tmp(probe, cfg_);
                        BatchGrad g = tmp.batch_gradient(ds, batch, R, w, LossSelect{});
                        return g.grad;
                    };
                    const double h = hutchinson_curvature(grad_fn, params_.theta,
                                                          cfg_.hutchinson_probes, cfg_.seed);
                    std::fill(curv.begin(), curv.end(), h);
                }
                wstate = update_weights(wstate, lvals, gnorm, curv);
                w.fv = wstate.lambdas[0];
                w.ent = wstate.lambdas[1];
                w.rh = wstate.lambdas[2];
                w.tvd = cfg_.tvd_schedule == TvdSchedule::Cosine
                            ? tvd_cosine_weight(wstate.lambdas[3], t_frac)
                            : wstate.lambdas[3];
                w.bnd = wstate.lambdas[4];
            }
        }

        if (batches > 0) {
            const double inv = 1.0 / batches;
            row.losses.data_mse *= inv;
            row.losses.l_fv *= inv;
            row.losses.l_rh *= inv;
            row.losses.l_ent *= inv;
            row.losses.l_tvd *= inv;
            row.losses.l_bnd *= inv;
            row.losses.total *= inv;
            row.mass_drift *= inv;
            row.ent_pos_mean *= inv;
            row.ent_pos_frac *= inv;
            row.dtv_plus *= inv;
        }

        row.val_mse = validation_mse(ds, val_seqs.empty() ? train_seqs : val_seqs,
                                     std::max(1, cfg_.rollout_max));
        if (row.val_mse < best_val) {
            best_val = row.val_mse;
            best_params = params_;
        }
        row.wall_ms = seconds_since(t_epoch) * 1e3;
        const double epoch_proj = proj_seconds_accum_ - proj_before;
        row.proj_overhead = row.wall_ms > 0.0 ? epoch_proj * 1e3 / row.wall_ms : 0.0;
        report.rows.push_back(row);

        if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_every > 0 &&
            (epoch + 1) % cfg_.checkpoint_every == 0)
            save_checkpoint(params_, cfg_.checkpoint_path);

        if (report.aborted) break;
    }

    params_ = best_params;
    if (!cfg_.checkpoint_path.empty()) save_checkpoint(params_, cfg_.checkpoint_path);

    // final one-step metrics on the validation split
    Dataset val_ds;
    val_ds.mesh = ds.mesh;
    val_ds.seq_len = ds.seq_len;
    val_ds.provenance = "validation split";
    for (std::uint32_t s : (val_seqs.empty() ? train_seqs : val_seqs))
        val_ds.sequences.push_back(ds.sequences[s]);
    EvalConfig ecfg;
    ecfg.chain = cfg_.chain;
    const auto recs = evaluate_rollout(params_, val_ds, 1, ecfg);
    report.final_metrics = recs.back();

    report.total_wall_ms = seconds_since(t_start) * 1e3;
    report.proj_overhead =
        report.total_wall_ms > 0.0 ? proj_seconds_accum_ * 1e3 / report.total_wall_ms : 0.0;
    report.nonfinite_events = nonfinite_events_;
    return report;
}

void write_train_csv(const TrainReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open training CSV for writing: " + path.string());
    const bool det = deterministic_mode();
    os << "epoch,data_mse,l_fv,l_rh,l_ent,l_tvd,l_bnd,w_tvd,R,mass_drift,ent_pos_mean,"
          "ent_pos_frac,dtv_plus,wall_ms,proj_overhead\n";
    os.precision(17);
    for (const auto& r : report.rows) {
        os << r.epoch << ',' << r.losses.data_mse << ',' << r.losses.l_fv << ',' << r.losses.l_rh
           << ',' << r.losses.l_ent << ',' << r.losses.l_tvd << ',' << r.losses.l_bnd << ','
           << r.w_tvd << ',' << r.rollout_R << ',' << r.mass_drift << ',' << r.ent_pos_mean << ','
           << r.ent_pos_frac << ',' << r.dtv_plus << ',' << (det ? 0.0 : r.wall_ms) << ','
           << (det ? 0.0 : r.proj_overhead) << '\n';
    }
}

} // namespace cpl

#pragma once

#include "cpl/data.hpp"
#include "cpl/grid.hpp"
#include "cpl/losses.hpp"
#include "cpl/metrics.hpp"
#include "cpl/net.hpp"
#include "cpl/projectors.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpl {

enum class TvdSchedule : std::uint8_t { Constant = 0, Cosine = 1 };
enum class Curriculum : std::uint8_t { Off = 0, LinearRamp = 1 };

struct FixedWeights {
    double fv = 0.0;
    double ent = 0.8;
    double rh = 0.0;
    double tvd = 0.10;
    double bnd = 0.0;
};

struct TrainConfig {
    double eta = 0.02;
    double momentum = 0.9;
    double clip_norm = 1.0; // global gradient-norm clip; 0 disables
    int epochs = 40;
    int batch_size = 32;
    FixedWeights weights;

    bool adaptive_weights = false;
    double adapt_alpha = 0.5;
    double adapt_beta = 0.0; // curvature gain; Hutchinson probing only when > 0
    int adapt_cadence = 50;  // optimizer steps between weight updates
    double lambda_min = 1e-3;
    double lambda_max = 1e3;
    int hutchinson_probes = 2;

    TvdSchedule tvd_schedule = TvdSchedule::Constant;
    bool tvd_shock_mask = true;
    double tvd_mask_chi = 0.2;

    int rollout_max = 1;
    Curriculum curriculum = Curriculum::Off;

    ProjectionChainConfig chain;

    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
    int checkpoint_every = 10;
    std::filesystem::path checkpoint_path; // empty: run_training keeps results in memory
};

/// Rollout length for an epoch. Off pins R = 1; LinearRamp walks
/// 1 + floor(t (R_max - 1)) with t the epoch fraction, reaching R_max at the
/// final epoch.
int curriculum_rollout(int epoch, int epochs, int r_max, Curriculum mode);

struct EpochRow {
    int epoch = 0;
    LossBreakdown losses; // batch means, unweighted terms
    double w_tvd = 0.0;   // scheduled TVD weight in effect
    int rollout_R = 1;
    double mass_drift = 0.0;   // post-projection |M(proj) - M(prev)|, batch mean
    double ent_pos_mean = 0.0; // post-projection
    double ent_pos_frac = 0.0;
    double dtv_plus = 0.0;
    double val_mse = 0.0; // validation rollout data MSE (not part of the CSV contract)
    double wall_ms = 0.0;
    double proj_overhead = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    MetricsRecord final_metrics; // one-step aggregate on the validation split
    double total_wall_ms = 0.0;
    double proj_overhead = 0.0;
    int nonfinite_events = 0;
    bool aborted = false;
};

/// A training window: snapshots [offset, offset + R] of one dataset sequence.
struct WindowRef {
    std::uint32_t seq = 0;
    std::int32_t offset = 0;
};

/// Returns true when CPL_DETERMINISTIC requests byte-stable outputs (wall
/// clock columns zeroed). The implementation is single-threaded either way.
bool deterministic_mode();

/// Writes the per-epoch CSV with the documented column order:
/// epoch, data_mse, l_fv, l_rh, l_ent, l_tvd, l_bnd, w_tvd, R, mass_drift,
/// ent_pos_mean, ent_pos_frac, dtv_plus, wall_ms, proj_overhead.
void write_train_csv(const TrainReport& report, const std::filesystem::path& path);

class Trainer {
public:
    Trainer(PredictorParams params, TrainConfig cfg);

    /// One momentum-SGD update from (U^n, U^{n+1}) pairs (windows of length 2).
    LossBreakdown train_step(const Dataset& ds, std::span<const WindowRef> batch);

    /// One update from R-step autoregressive rollouts with per-step projection;
    /// losses averaged over the R steps, gradients through the unrolled chain.
    LossBreakdown rollout_train_step(const Dataset& ds, std::span<const WindowRef> batch, int R);

    /// Full loop: curriculum, TVD schedule, optional adaptive weights,
    /// validation tracking and checkpointing. Deterministic for a fixed seed.
    TrainReport run_training(const Dataset& ds);

    /// Loss terms of the R-step objective at the current parameters and,
    /// when grad_out is non-null, the exact gradient of the weighted total.
    LossBreakdown loss_and_gradient(const Dataset& ds, std::span<const WindowRef> batch, int R,
                                    std::vector<double>* grad_out);

    const PredictorParams& params() const { return params_; }
    PredictorParams& params() { return params_; }
    double learning_rate() const { return eta_; }

private:
    struct BatchGrad {
        std::vector<double> grad;
        LossBreakdown losses;
        double mass_drift = 0.0, ent_pos_mean = 0.0, ent_pos_frac = 0.0, dtv_plus = 0.0;
        double proj_seconds = 0.0;
        int steps = 0;
    };

    // select: which loss terms contribute to the gradient (all weighted when null)
    struct LossSelect {
        bool data = true, fv = true, ent = true, rh = true, tvd = true, bnd = true;
    };

    BatchGrad batch_gradient(const Dataset& ds, std::span<const WindowRef> batch, int R,
                             const FixedWeights& w, const LossSelect& select);
    void clip_gradient(std::vector<double>& grad) const;
    LossBreakdown apply_update(const Dataset& ds, std::span<const WindowRef> batch, int R,
                               const FixedWeights& w);
    double validation_mse(const Dataset& ds, std::span<const std::uint32_t> val_seqs, int horizon);

    PredictorParams params_;
    TrainConfig cfg_;
    std::vector<double> velocity_;
    double eta_;
    int nonfinite_events_ = 0;
    double proj_seconds_accum_ = 0.0;
};

} // namespace cpl

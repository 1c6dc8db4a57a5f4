#pragma once

#include "cpl/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cpl {

struct EmptyDatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class InitialConditionKind : std::uint8_t { SineBump = 0, RandomFourier = 1, StepShock = 2 };

/// One ground-truth scenario. t_end > 0 overrides coarse_steps; otherwise the
/// trajectory spans coarse_steps coarse time steps.
struct ScenarioSpec {
    InitialConditionKind kind = InitialConditionKind::RandomFourier;
    double nu = 0.01;
    int n_coarse = 128;
    int refine_factor = 8;
    double domain_length = 1.0;
    double cfl_target = 0.4;
    int coarse_steps = 40;
    double t_end = 0.0;

    // RandomFourier
    int modes = 4;
    std::uint64_t seed = 0;
    double amplitude = 1.0;

    // StepShock
    double step_left = 1.0;
    double step_right = 0.0;
    double step_position = 0.5;

    // Reconstruction used by the reference stepper. The piecewise-constant
    // scheme is TV-diminishing at every resolution, which keeps the restricted
    // ground truth unconditionally lawful; the limited scheme sharpens
    // subgrid jumps and can leak total variation through restriction.
    bool use_berger = false;

    void validate() const;
};

/// Initial condition sampled at cell centers x_i = (i + 1/2) dx.
/// SineBump and RandomFourier are rescaled to max|U| == amplitude.
std::vector<double> initial_condition(const ScenarioSpec& spec, int n_cells);

/// Stable explicit step for the combined advective + diffusive update:
///   dt = cfl / (umax/dx + 2 nu/dx^2).
double stable_dt(double umax, double dx, double nu, double cfl);

struct FineTrajectory {
    Mesh1D mesh;                    // fine mesh, dt = coarse dt / subcycle
    int subcycle = 1;               // fine steps per coarse step
    std::vector<GridState> snapshots; // every fine step, snapshots[0] = IC
    ScenarioSpec spec;
};

struct CoarseTrajectory {
    Mesh1D mesh;
    std::vector<GridState> snapshots; // one per coarse step
};

/// Runs the Berger-limited classical solver on the refined grid until t_end
/// (or coarse_steps coarse steps), subcycled so both grids respect the CFL
/// target. `umax_override` > 0 pins the dt-setting amplitude, letting several
/// scenarios share one coarse dt. Throws NonFiniteError with the offending
/// step index on blow-up.
FineTrajectory solve_reference(const ScenarioSpec& spec, double umax_override = 0.0);

/// Block-averages groups of refine_factor cells and keeps every subcycle-th
/// snapshot, so the result lives on the coarse mesh at coarse times.
CoarseTrajectory restrict_trajectory(const FineTrajectory& fine, int refine_factor);

/// Training sequences of seq_len consecutive coarse snapshots.
struct Dataset {
    Mesh1D mesh;
    int seq_len = 0;
    std::vector<std::vector<double>> sequences; // each seq_len * n_cells, row-major
    std::string provenance;

    std::span<const double> snapshot(size_t seq, int t) const {
        return {sequences[seq].data() + static_cast<size_t>(t) * mesh.n_cells,
                static_cast<size_t>(mesh.n_cells)};
    }
    size_t n_sequences() const { return sequences.size(); }
};

/// Sliding windows of seq_len snapshots from every scenario's restricted
/// trajectory, deterministic order. Throws EmptyDatasetError if nothing fits.
Dataset build_dataset(const std::vector<ScenarioSpec>& specs, int seq_len);

/// Repackages every adjacent snapshot pair as its own 2-snapshot sequence
/// (one-step evaluation over the full dataset).
Dataset explode_pairs(const Dataset& ds);

// ---- dataset file -------------------------------------------------------------
// Little-endian binary: magic "CPLDATA\0", u32 version, u32 n_cells,
// f64 dx/dt/nu, u32 sequence count, u32 seq_len, u64 provenance byte count +
// provenance text, then the packed f64 snapshots.

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Human-readable dump: one CSV row per snapshot (seq, step, v0, v1, ...).
void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

} // namespace cpl

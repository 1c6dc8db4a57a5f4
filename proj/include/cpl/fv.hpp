#pragma once

#include "cpl/grid.hpp"

#include <span>
#include <vector>

namespace cpl {

inline constexpr double kLimiterEps = 1e-12;
inline constexpr double kChiThresholdDefault = 0.2;

/// Interface fluxes F_{i+1/2}, one per face.
struct FluxVector {
    std::vector<double> face_flux;
};

/// Per-cell diagnostics of one discrete step.
struct ResidualReport {
    std::vector<double> fv_residual;      // R_i
    std::vector<double> rh_residual;      // |[[f]] - s [[U]]| per face
    std::vector<double> entropy_residual; // r_i^eta
    std::vector<double> sensor;           // chi_i
};

/// f(u) = u^2/2.
inline double burgers_flux(double u) { return 0.5 * u * u; }

/// Exact-Riemann (Godunov) interface flux for the Burgers flux.
/// Rarefaction branch (ul <= ur): min of u^2/2 over [ul, ur].
/// Shock branch (ul > ur): upwind by the shock speed s = (ul + ur)/2.
double godunov_flux(double u_left, double u_right);

struct FluxGrad {
    double d_left = 0.0;
    double d_right = 0.0;
};

/// Almost-everywhere derivative of godunov_flux at the evaluation point
/// (branch held fixed; kinks use the zero subgradient).
FluxGrad godunov_flux_grad(double u_left, double u_right);

/// Slope limiter phi(r) = max(0, min(2r, 1)).
double berger_phi(double r);

/// Normalized curvature sensor chi_i in [0, 1], periodic neighbors.
std::vector<double> shock_sensor(const GridState& state, double eps = kLimiterEps);

/// First-order faces: both sides of face i+1/2 take the adjacent cell average.
FaceStates piecewise_constant_faces(const GridState& state);

/// Limited linear reconstruction on sensor-flagged cells (chi_i > chi_threshold),
/// piecewise-constant elsewhere. limiter_active records the per-cell gate.
FaceStates berger_reconstruct(const GridState& state,
                              double chi_threshold = kChiThresholdDefault,
                              double eps = kLimiterEps);

/// Diffusive face flux -nu (U_{i+1} - U_i)/dx from cell averages.
FluxVector viscous_flux(const GridState& state, const Mesh1D& mesh);

/// Godunov flux on the given faces plus the viscous face flux.
FluxVector total_face_flux(const GridState& state, const Mesh1D& mesh, const FaceStates& faces);

/// One forward-Euler conservative update:
///   U_i^{n+1} = U_i^n - (dt/dx)(F_{i+1/2} - F_{i-1/2}).
/// Warns (once per process) if the advective CFL exceeds 1; `cfl_exceeded`,
/// when non-null, receives the per-call flag. Throws NonFiniteError if the
/// output is not finite.
GridState fv_step(const GridState& state, const Mesh1D& mesh, bool use_berger,
                  bool* cfl_exceeded = nullptr);

/// R_i = (next_i - prev_i)/dt + (F_{i+1/2} - F_{i-1/2})/dx with fluxes
/// evaluated from `faces` (and viscous terms from `prev`). Zero to round-off
/// when next == fv_step(prev) on the same faces.
std::vector<double> fv_residual(const GridState& prev, const GridState& next,
                                const Mesh1D& mesh, const FaceStates& faces);

/// |f(U+) - f(U-) - s (U+ - U-)| per face with s = (U- + U+)/2. Identically
/// zero (round-off) for the Burgers flux: u^2/2 jumps factor exactly.
std::vector<double> rh_residual(const FaceStates& faces);

/// Same residual with caller-supplied interface speeds (for alternative speed
/// estimates and non-scalar systems).
std::vector<double> rh_residual(const FaceStates& faces, std::span<const double> speeds);

/// r_i^eta = (eta(next_i) - eta(prev_i))/dt + (q_{i+1/2} - q_{i-1/2})/dx with
/// eta = u^2/2 and q = (U^face)^3/3, U^face the upwind face state selected by
/// the sign of s = (U- + U+)/2. Only max(0, r) is penalized downstream.
std::vector<double> entropy_residual(const GridState& prev, const GridState& next,
                                     const FaceStates& faces, const Mesh1D& mesh);

/// All four per-step diagnostics in one pass.
ResidualReport residual_report(const GridState& prev, const GridState& next,
                               const Mesh1D& mesh, const FaceStates& faces);

// ---- reverse-mode companions -------------------------------------------
// Derivatives are taken almost everywhere: limiter gates, flux branches and
// upwind selections are held fixed at the evaluation point, and hinge-style
// kinks use the zero subgradient.

/// Accumulates d(faces)/d(state)^T applied to (d_left, d_right).
std::vector<double> faces_vjp(const GridState& state, bool use_berger,
                              double chi_threshold, double eps,
                              std::span<const double> d_left,
                              std::span<const double> d_right);

/// d(total_face_flux)/d(state)^T applied to per-face upstream d_flux, with
/// faces recomputed from `state` in the given reconstruction mode.
std::vector<double> total_face_flux_vjp(const GridState& state, const Mesh1D& mesh,
                                        bool use_berger, std::span<const double> d_flux);

/// d(fv_step)/d(state)^T applied to `upstream`.
std::vector<double> fv_step_vjp(const GridState& state, const Mesh1D& mesh,
                                bool use_berger, std::span<const double> upstream);

struct EntropyVjp {
    std::vector<double> d_prev;
    std::vector<double> d_next;
};

/// d(entropy_residual)/d(prev, next)^T applied to `upstream`, with faces
/// recomputed from `prev` in the given reconstruction mode.
EntropyVjp entropy_residual_vjp(const GridState& prev, const GridState& next,
                                const Mesh1D& mesh, bool use_berger,
                                double chi_threshold, double eps,
                                std::span<const double> upstream);

} // namespace cpl

#pragma once

#include "cpl/grid.hpp"

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cpl {

struct InvalidBoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateConstraintError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- elementary projectors ------------------------------------------------

/// Elementwise clamp into [lower, upper]. Idempotent and non-expansive.
std::vector<double> project_box(std::span<const double> x, double lower, double upper);
std::vector<double> project_box(std::span<const double> x, std::span<const double> lower,
                                std::span<const double> upper);

/// Diagonal Jacobian of project_box applied to `upstream`: passes components
/// strictly inside the bounds, zeroes clamped ones.
std::vector<double> project_box_vjp(std::span<const double> x, double lower, double upper,
                                    std::span<const double> upstream);

/// Euclidean projection onto the hyperplane {x : a.x = b}:
///   x = z - a (a.z - b) / (a.a).
/// Minimal-norm correction; exact feasibility to round-off.
std::vector<double> project_affine(std::span<const double> z, std::span<const double> a, double b);

/// (I - a a^T / a.a) applied to `upstream` (the Jacobian is symmetric).
std::vector<double> project_affine_vjp(std::span<const double> a, std::span<const double> upstream);

// ---- entropy clamp ---------------------------------------------------------

struct EntropyClampResult {
    GridState state;
    double achieved_residual = 0.0; // max_i max(0, r_i) after the last sweep
    int iterations = 0;
    bool converged = true;
};

/// Damps entropy production of a candidate next-state: every cell is clamped
/// into |U_i| <= sqrt(2 max(0, eta*_i)) where eta*_i zeroes the cell's
/// eta-rate given the face entropy fluxes of `prev`, then total mass is
/// restored with project_affine; sweeps repeat until max_i max(0, r_i) <= tol
/// or max_iters is reached (shortfall reported in-band, not thrown).
/// A candidate with no violation above tol is returned unchanged.
EntropyClampResult project_entropy_clamp(const GridState& prev, const GridState& candidate,
                                         const Mesh1D& mesh, const FaceStates& faces,
                                         int max_iters = 50, double tol = 1e-8);

// ---- Helmholtz projection --------------------------------------------------

/// Periodic vector field sampled on an (ny, nx) grid, row-major in y.
struct VectorField2D {
    int ny = 0, nx = 0;
    double hx = 0.0, hy = 0.0;
    std::vector<double> u; // x-component, size ny*nx
    std::vector<double> v; // y-component, size ny*nx

    double& at_u(int iy, int ix) { return u[static_cast<size_t>(iy) * nx + ix]; }
    double& at_v(int iy, int ix) { return v[static_cast<size_t>(iy) * nx + ix]; }
    double at_u(int iy, int ix) const { return u[static_cast<size_t>(iy) * nx + ix]; }
    double at_v(int iy, int ix) const { return v[static_cast<size_t>(iy) * nx + ix]; }
};

/// Discrete divergence by periodic central differences, size ny*nx.
std::vector<double> divergence(const VectorField2D& f);

/// Discrete vorticity dv/dx - du/dy by periodic central differences.
std::vector<double> vorticity(const VectorField2D& f);

/// Removes the (central-difference) gradient component: solves the Poisson
/// problem spectrally with the central-difference operator symbols and
/// subtracts grad(phi). Output has machine-zero discrete divergence, the
/// operator is idempotent, 1-Lipschitz in L2, and preserves vorticity.
VectorField2D project_helmholtz(const VectorField2D& field);

// ---- descriptor-driven composition ----------------------------------------

struct BoxParams {
    double lower = 0.0, upper = 1.0;
};
struct AffineBalanceParams {
    std::vector<double> weights;
    double target = 0.0;
};
struct EntropyClampParams {
    int max_iters = 50;
    double tol = 1e-8;
};
struct Helmholtz2DParams {
    int ny = 0, nx = 0;
    double hx = 0.0, hy = 0.0;
};

/// One factor of the constraint intersection. The Rankine-Hugoniot factor has
/// no descriptor: for the Burgers flux with s = (U- + U+)/2 the interface
/// residual vanishes identically, so there is nothing to project onto.
struct ProjectorDescriptor {
    using Params = std::variant<BoxParams, AffineBalanceParams, EntropyClampParams, Helmholtz2DParams>;
    Params params;

    static ProjectorDescriptor box(double lower, double upper);
    static ProjectorDescriptor affine_balance(std::vector<double> weights, double target);
    static ProjectorDescriptor helmholtz(int ny, int nx, double hx, double hy);
};

/// Applies one descriptor to a flat vector. Helmholtz2D expects the vector to
/// be [u; v] of size 2*ny*nx. EntropyClamp needs step context and is rejected
/// here; it participates only in the cpl_project_output chain.
std::vector<double> apply_projector(const ProjectorDescriptor& desc, std::span<const double> x);

struct DykstraResult {
    std::vector<double> x;
    double max_infeasibility = 0.0; // largest per-constraint displacement norm
    int passes_used = 0;
    bool converged = false;
};

/// Dykstra's corrected alternating projections onto the intersection of the
/// descriptor sets. Exact for pairs of box/affine constraints.
DykstraResult compose_dykstra(std::span<const double> x0,
                              const std::vector<ProjectorDescriptor>& projectors,
                              int passes = 10, double tol = 1e-10);

// ---- output-space projection chain ------------------------------------------

/// Configuration of the lawful-output chain applied after each predicted step.
struct ProjectionChainConfig {
    bool mass = true;              // restore total mass to the previous state's
    bool berger_blend = false;     // fold toward the limited classical step on flagged cells
    double gamma = 0.5;            // convex blend factor on sensor-flagged cells
    double chi_threshold = 0.2;    // sensor gate for the blend mask
    bool entropy = true;           // entropy production clamp
    double entropy_tol = 1e-8;
    int entropy_max_iters = 50;
    bool bounds = false;           // box clamp, off unless bounds are physical
    double u_min = -2.0, u_max = 2.0;
    bool use_berger = false;       // reconstruction mode for faces and the blend target
};

/// Applies, in order: mass restoration (affine), Berger/RH blend toward the
/// limited classical step on sensor-flagged cells (with mass re-restored),
/// the entropy clamp, and the box clamp when bounds are configured.
GridState cpl_project_output(const GridState& candidate, const GridState& prev,
                             const Mesh1D& mesh, const ProjectionChainConfig& chain);

struct ChainVjp {
    std::vector<double> d_candidate;
    std::vector<double> d_prev;
};

/// Reverse-mode transpose of cpl_project_output at the evaluation point.
/// The entropy clamp is treated as the identity (straight-through); all other
/// members use their exact local Jacobians.
ChainVjp cpl_project_output_vjp(const GridState& candidate, const GridState& prev,
                                const Mesh1D& mesh, const ProjectionChainConfig& chain,
                                std::span<const double> upstream);

} // namespace cpl

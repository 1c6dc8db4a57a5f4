#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace cpl {

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Uniform periodic 1-D mesh. Cell i covers [i*dx, (i+1)*dx); face i+1/2
/// sits between cell i and cell (i+1) mod n_cells.
struct Mesh1D {
    int n_cells = 0;
    double dx = 0.0;
    double dt = 0.0;
    double nu = 0.0;

    static Mesh1D make(int n_cells, double dx, double dt, double nu);

    double domain_length() const { return n_cells * dx; }

    /// Advective CFL number max|U|*dt/dx for a given field.
    double cfl_number(std::span<const double> values) const;
};

/// Cell-averaged field on a Mesh1D.
struct GridState {
    std::vector<double> values;
    std::int64_t time_index = 0;
};

/// Left/right reconstructed states at each face i+1/2, plus the per-cell
/// limiter gate. left[i] = U^-_{i+1/2} (from cell i), right[i] = U^+_{i+1/2}
/// (from cell i+1).
struct FaceStates {
    std::vector<double> left;
    std::vector<double> right;
    std::vector<std::uint8_t> limiter_active;
};

/// i mod n with a nonnegative result for any i.
inline int periodic_index(std::int64_t i, int n) {
    std::int64_t m = i % n;
    return static_cast<int>(m < 0 ? m + n : m);
}

bool all_finite(std::span<const double> values);

/// Throws NonFiniteError naming `what` if any entry is NaN/Inf.
void require_finite(std::span<const double> values, const char* what);

/// Validates length and finiteness of a state against a mesh.
void validate_state(const GridState& state, const Mesh1D& mesh);

/// M = dx * sum_i values[i].
double total_mass(const GridState& state, const Mesh1D& mesh);

/// TV(U) = sum_i |U_{(i+1) mod N} - U_i|, wrap-around face included.
double total_variation(const GridState& state);
double total_variation(std::span<const double> values);

} // namespace cpl

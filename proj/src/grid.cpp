#include "cpl/grid.hpp"

#include <cmath>
#include <string>

namespace cpl {

Mesh1D Mesh1D::make(int n_cells, double dx, double dt, double nu) {
    if (n_cells < 4)
        throw std::invalid_argument("Mesh1D: n_cells must be >= 4, got " + std::to_string(n_cells));
    if (!(dx > 0.0))
        throw std::invalid_argument("Mesh1D: dx must be > 0");
    if (!(dt > 0.0))
        throw std::invalid_argument("Mesh1D: dt must be > 0");
    if (!(nu >= 0.0))
        throw std::invalid_argument("Mesh1D: nu must be >= 0");
    return Mesh1D{n_cells, dx, dt, nu};
}

double Mesh1D::cfl_number(std::span<const double> values) const {
    double umax = 0.0;
    for (double v : values) umax = std::max(umax, std::abs(v));
    return umax * dt / dx;
}

bool all_finite(std::span<const double> values) {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_finite(std::span<const double> values, const char* what) {
    if (!all_finite(values))
        throw NonFiniteError(std::string("NonFinite: ") + what);
}

void validate_state(const GridState& state, const Mesh1D& mesh) {
    if (static_cast<int>(state.values.size()) != mesh.n_cells)
        throw ShapeMismatchError("GridState length " + std::to_string(state.values.size()) +
                                 " != mesh n_cells " + std::to_string(mesh.n_cells));
    require_finite(state.values, "GridState values");
}

double total_mass(const GridState& state, const Mesh1D& mesh) {
    double sum = 0.0;
    for (double v : state.values) sum += v;
    return mesh.dx * sum;
}

double total_variation(std::span<const double> values) {
    const int n = static_cast<int>(values.size());
    double tv = 0.0;
    for (int i = 0; i < n; ++i) tv += std::abs(values[(i + 1) % n] - values[i]);
    return tv;
}

double total_variation(const GridState& state) {
    return total_variation(std::span<const double>(state.values));
}

} // namespace cpl

#include "cpl/fv.hpp"

#include <cmath>
#include <cstdio>

namespace cpl {

double godunov_flux(double u_left, double u_right) {
    if (u_left <= u_right) {
        if (u_left >= 0.0) return 0.5 * u_left * u_left;
        if (u_right <= 0.0) return 0.5 * u_right * u_right;
        return 0.0; // interval straddles the sonic point
    }
    const double s = 0.5 * (u_left + u_right);
    return s > 0.0 ? 0.5 * u_left * u_left : 0.5 * u_right * u_right;
}

FluxGrad godunov_flux_grad(double u_left, double u_right) {
    if (u_left <= u_right) {
        if (u_left > 0.0) return {u_left, 0.0};
        if (u_right < 0.0) return {0.0, u_right};
        return {0.0, 0.0};
    }
    const double s = 0.5 * (u_left + u_right);
    if (s > 0.0) return {u_left, 0.0};
    return {0.0, u_right};
}

double berger_phi(double r) {
    return std::max(0.0, std::min(2.0 * r, 1.0));
}

// phi'(r) a.e.; zero subgradient at the kinks r = 0 and r = 1/2.
static double berger_phi_grad(double r) {
    return (r > 0.0 && 2.0 * r < 1.0) ? 2.0 : 0.0;
}

std::vector<double> shock_sensor(const GridState& state, double eps) {
    const auto& u = state.values;
    const int n = static_cast<int>(u.size());
    std::vector<double> chi(n);
    for (int i = 0; i < n; ++i) {
        const double up = u[periodic_index(i + 1, n)];
        const double um = u[periodic_index(i - 1, n)];
        const double num = std::abs(up - 2.0 * u[i] + um);
        const double den = std::abs(up - u[i]) + std::abs(u[i] - um) + eps;
        chi[i] = num / den;
    }
    return chi;
}

FaceStates piecewise_constant_faces(const GridState& state) {
    const int n = static_cast<int>(state.values.size());
    FaceStates f;
    f.left = state.values;
    f.right.resize(n);
    for (int i = 0; i < n; ++i) f.right[i] = state.values[periodic_index(i + 1, n)];
    f.limiter_active.assign(n, 0);
    return f;
}

FaceStates berger_reconstruct(const GridState& state, double chi_threshold, double eps) {
    const auto& u = state.values;
    const int n = static_cast<int>(u.size());
    const auto chi = shock_sensor(state, eps);

    FaceStates f;
    f.left.resize(n);
    f.right.resize(n);
    f.limiter_active.resize(n);
    for (int i = 0; i < n; ++i) {
        const double dm = u[i] - u[periodic_index(i - 1, n)];
        const double dp = u[periodic_index(i + 1, n)] - u[i];
        const bool gate = chi[i] > chi_threshold;
        f.limiter_active[i] = gate ? 1 : 0;
        double lo = u[i]; // U^-_{i+1/2}
        double ro = u[i]; // U^+_{i-1/2}
        if (gate) {
            const double phi = berger_phi(dm / (eps + dp));
            lo += 0.5 * phi * dm;
            ro -= 0.5 * phi * dp;
        }
        f.left[i] = lo;
        f.right[periodic_index(i - 1, n)] = ro;
    }
    return f;
}

FluxVector viscous_flux(const GridState& state, const Mesh1D& mesh) {
    const auto& u = state.values;
    const int n = static_cast<int>(u.size());
    FluxVector fv;
    fv.face_flux.resize(n);
    for (int i = 0; i < n; ++i)
        fv.face_flux[i] = -mesh.nu * (u[periodic_index(i + 1, n)] - u[i]) / mesh.dx;
    return fv;
}

FluxVector total_face_flux(const GridState& state, const Mesh1D& mesh, const FaceStates& faces) {
    const int n = static_cast<int>(state.values.size());
    FluxVector total = viscous_flux(state, mesh);
    for (int i = 0; i < n; ++i)
        total.face_flux[i] += godunov_flux(faces.left[i], faces.right[i]);
    return total;
}

GridState fv_step(const GridState& state, const Mesh1D& mesh, bool use_berger, bool* cfl_exceeded) {
    validate_state(state, mesh);
    const double cfl = mesh.cfl_number(state.values);
    if (cfl_exceeded) *cfl_exceeded = cfl > 1.0;
    if (cfl > 1.0) {
        static bool warned = false;
        if (!warned) {
            std::fprintf(stderr, "cpl: warning: advective CFL %.3f exceeds 1\n", cfl);
            warned = true;
        }
    }

    const FaceStates faces = use_berger ? berger_reconstruct(state) : piecewise_constant_faces(state);
    const FluxVector flux = total_face_flux(state, mesh, faces);
    const int n = mesh.n_cells;
    const double lam = mesh.dt / mesh.dx;

    GridState next;
    next.values.resize(n);
    next.time_index = state.time_index + 1;
    for (int i = 0; i < n; ++i)
        next.values[i] = state.values[i] - lam * (flux.face_flux[i] - flux.face_flux[periodic_index(i - 1, n)]);
    require_finite(next.values, "fv_step output");
    return next;
}

std::vector<double> fv_residual(const GridState& prev, const GridState& next,
                                const Mesh1D& mesh, const FaceStates& faces) {
    const int n = mesh.n_cells;
    const FluxVector flux = total_face_flux(prev, mesh, faces);
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i) {
        r[i] = (next.values[i] - prev.values[i]) / mesh.dt +
               (flux.face_flux[i] - flux.face_flux[periodic_index(i - 1, n)]) / mesh.dx;
    }
    return r;
}

std::vector<double> rh_residual(const FaceStates& faces) {
    const int n = static_cast<int>(faces.left.size());
    std::vector<double> e(n);
    for (int i = 0; i < n; ++i) {
        const double ul = faces.left[i], ur = faces.right[i];
        const double s = 0.5 * (ul + ur);
        e[i] = std::abs(burgers_flux(ur) - burgers_flux(ul) - s * (ur - ul));
    }
    return e;
}

std::vector<double> rh_residual(const FaceStates& faces, std::span<const double> speeds) {
    const int n = static_cast<int>(faces.left.size());
    std::vector<double> e(n);
    for (int i = 0; i < n; ++i) {
        const double ul = faces.left[i], ur = faces.right[i];
        e[i] = std::abs(burgers_flux(ur) - burgers_flux(ul) - speeds[i] * (ur - ul));
    }
    return e;
}

// Face value for the entropy flux: the state the Godunov flux actually
// evaluates (the Riemann fan sampled at the interface). Upwind by the shock
// speed across a shock, sonic value at transonic rarefactions. With this
// choice the classical step satisfies the discrete entropy inequality to
// round-off, which the sign-of-s shortcut does not.
static double entropy_face_value(double ul, double ur) {
    if (ul <= ur) {
        if (ul >= 0.0) return ul;
        if (ur <= 0.0) return ur;
        return 0.0;
    }
    return 0.5 * (ul + ur) > 0.0 ? ul : ur;
}

static FluxGrad entropy_face_value_grad(double ul, double ur) {
    if (ul <= ur) {
        if (ul > 0.0) return {1.0, 0.0};
        if (ur < 0.0) return {0.0, 1.0};
        return {0.0, 0.0};
    }
    if (0.5 * (ul + ur) > 0.0) return {1.0, 0.0};
    return {0.0, 1.0};
}

// Entropy face flux q_{i+1/2} = (U^face)^3/3 plus the viscous entropy flux
// -nu ubar (U_{i+1} - U_i)/dx that matches the diffusive momentum flux.
static std::vector<double> entropy_face_flux(const GridState& prev, const FaceStates& faces,
                                             const Mesh1D& mesh) {
    const int n = mesh.n_cells;
    std::vector<double> q(n);
    for (int i = 0; i < n; ++i) {
        const double uf = entropy_face_value(faces.left[i], faces.right[i]);
        const double up = prev.values[periodic_index(i + 1, n)];
        const double ubar = 0.5 * (prev.values[i] + up);
        q[i] = uf * uf * uf / 3.0 - mesh.nu * ubar * (up - prev.values[i]) / mesh.dx;
    }
    return q;
}

std::vector<double> entropy_residual(const GridState& prev, const GridState& next,
                                     const FaceStates& faces, const Mesh1D& mesh) {
    const int n = mesh.n_cells;
    const std::vector<double> q = entropy_face_flux(prev, faces, mesh);
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i) {
        const double deta = 0.5 * (next.values[i] * next.values[i] - prev.values[i] * prev.values[i]);
        r[i] = deta / mesh.dt + (q[i] - q[periodic_index(i - 1, n)]) / mesh.dx;
    }
    return r;
}

ResidualReport residual_report(const GridState& prev, const GridState& next,
                               const Mesh1D& mesh, const FaceStates& faces) {
    ResidualReport rep;
    rep.fv_residual = fv_residual(prev, next, mesh, faces);
    rep.rh_residual = rh_residual(faces);
    rep.entropy_residual = entropy_residual(prev, next, faces, mesh);
    rep.sensor = shock_sensor(prev);
    return rep;
}

std::vector<double> faces_vjp(const GridState& state, bool use_berger,
                              double chi_threshold, double eps,
                              std::span<const double> d_left,
                              std::span<const double> d_right) {
    const auto& u = state.values;
    const int n = static_cast<int>(u.size());
    std::vector<double> dstate(n, 0.0);

    if (!use_berger) {
        for (int i = 0; i < n; ++i) {
            dstate[i] += d_left[i];                          // left[i] = U_i
            dstate[periodic_index(i + 1, n)] += d_right[i];  // right[i] = U_{i+1}
        }
        return dstate;
    }

    const auto chi = shock_sensor(state, eps);
    for (int i = 0; i < n; ++i) {
        const int im = periodic_index(i - 1, n);
        const int ip = periodic_index(i + 1, n);
        const double gl = d_left[i];   // upstream on U^-_{i+1/2}
        const double gr = d_right[im]; // upstream on U^+_{i-1/2}
        if (!(chi[i] > chi_threshold)) {
            dstate[i] += gl + gr;
            continue;
        }
        const double dm = u[i] - u[im];
        const double dp = u[ip] - u[i];
        const double denom = eps + dp;
        const double r = dm / denom;
        const double phi = berger_phi(r);
        const double dphi = berger_phi_grad(r);
        const double dr_ddm = 1.0 / denom;
        const double dr_ddp = -dm / (denom * denom);

        // left = U_i + phi(r) dm / 2
        const double dl_ddm = 0.5 * (dphi * dr_ddm * dm + phi);
        const double dl_ddp = 0.5 * dphi * dr_ddp * dm;
        // rightface = U_i - phi(r) dp / 2
        const double drf_ddm = -0.5 * dphi * dr_ddm * dp;
        const double drf_ddp = -0.5 * (dphi * dr_ddp * dp + phi);

        dstate[i] += gl * (1.0 + dl_ddm - dl_ddp) + gr * (1.0 + drf_ddm - drf_ddp);
        dstate[im] += gl * (-dl_ddm) + gr * (-drf_ddm);
        dstate[ip] += gl * dl_ddp + gr * drf_ddp;
    }
    return dstate;
}

std::vector<double> total_face_flux_vjp(const GridState& state, const Mesh1D& mesh,
                                        bool use_berger, std::span<const double> d_flux) {
    const int n = mesh.n_cells;
    const FaceStates faces =
        use_berger ? berger_reconstruct(state) : piecewise_constant_faces(state);

    std::vector<double> d_left(n), d_right(n);
    std::vector<double> dstate(n, 0.0);
    for (int j = 0; j < n; ++j) {
        const FluxGrad g = godunov_flux_grad(faces.left[j], faces.right[j]);
        d_left[j] = d_flux[j] * g.d_left;
        d_right[j] = d_flux[j] * g.d_right;
        // viscous part: F_j += -nu (U_{j+1} - U_j)/dx
        const double c = mesh.nu / mesh.dx;
        dstate[periodic_index(j + 1, n)] += d_flux[j] * (-c);
        dstate[j] += d_flux[j] * c;
    }
    const auto dfaces = faces_vjp(state, use_berger, kChiThresholdDefault, kLimiterEps, d_left, d_right);
    for (int i = 0; i < n; ++i) dstate[i] += dfaces[i];
    return dstate;
}

std::vector<double> fv_step_vjp(const GridState& state, const Mesh1D& mesh,
                                bool use_berger, std::span<const double> upstream) {
    const int n = mesh.n_cells;
    const double lam = mesh.dt / mesh.dx;

    // out_i = U_i - lam (F_i - F_{i-1})  =>  dL/dF_j = lam (w_{j+1} - w_j)
    std::vector<double> dflux(n);
    for (int j = 0; j < n; ++j)
        dflux[j] = lam * (upstream[periodic_index(j + 1, n)] - upstream[j]);

    std::vector<double> dstate = total_face_flux_vjp(state, mesh, use_berger, dflux);
    for (int i = 0; i < n; ++i) dstate[i] += upstream[i];
    return dstate;
}

EntropyVjp entropy_residual_vjp(const GridState& prev, const GridState& next,
                                const Mesh1D& mesh, bool use_berger,
                                double chi_threshold, double eps,
                                std::span<const double> upstream) {
    const int n = mesh.n_cells;
    const FaceStates faces =
        use_berger ? berger_reconstruct(prev, chi_threshold, eps) : piecewise_constant_faces(prev);

    EntropyVjp out;
    out.d_prev.assign(n, 0.0);
    out.d_next.assign(n, 0.0);

    std::vector<double> d_left(n, 0.0), d_right(n, 0.0);
    for (int i = 0; i < n; ++i) {
        out.d_next[i] += upstream[i] * next.values[i] / mesh.dt;
        out.d_prev[i] -= upstream[i] * prev.values[i] / mesh.dt;
    }
    // q_j feeds r_j with +1/dx and r_{j+1} with -1/dx.
    for (int j = 0; j < n; ++j) {
        const int jp = periodic_index(j + 1, n);
        const double dq = (upstream[j] - upstream[jp]) / mesh.dx;
        const double ul = faces.left[j], ur = faces.right[j];
        const double uf = entropy_face_value(ul, ur);
        const FluxGrad g = entropy_face_value_grad(ul, ur);
        d_left[j] += dq * uf * uf * g.d_left;
        d_right[j] += dq * uf * uf * g.d_right;
        // viscous part uses cell averages: q_v = -(nu/dx) ubar (u_{j+1} - u_j)
        const double c = mesh.nu / mesh.dx;
        const double ubar = 0.5 * (prev.values[j] + prev.values[jp]);
        const double delta = prev.values[jp] - prev.values[j];
        out.d_prev[j] += dq * (-c) * (0.5 * delta - ubar);
        out.d_prev[jp] += dq * (-c) * (0.5 * delta + ubar);
    }
    const auto dfaces = faces_vjp(prev, use_berger, chi_threshold, eps, d_left, d_right);
    for (int i = 0; i < n; ++i) out.d_prev[i] += dfaces[i];
    return out;
}

} // namespace cpl

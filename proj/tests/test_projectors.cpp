#include "cpl/projectors.hpp"

#include "cpl/fv.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace cpl;

namespace {

Mesh1D burgers_mesh(int n, double nu, double cfl, double umax = 1.0) {
    const double dx = 1.0 / n;
    const double dt = cfl / (umax / dx + 2.0 * nu / (dx * dx));
    return Mesh1D::make(n, dx, dt, nu);
}

GridState sine_state(int n, double amplitude = 1.0) {
    GridState s{std::vector<double>(n), 0};
    for (int i = 0; i < n; ++i) s.values[i] = amplitude * std::sin(2.0 * M_PI * (i + 0.5) / n);
    return s;
}

VectorField2D random_field(std::mt19937_64& rng, int ny, int nx) {
    VectorField2D f;
    f.ny = ny;
    f.nx = nx;
    f.hx = 1.0 / nx;
    f.hy = 1.0 / ny;
    f.u = cpl::test::random_vector(rng, static_cast<size_t>(ny) * nx, -1.0, 1.0);
    f.v = cpl::test::random_vector(rng, static_cast<size_t>(ny) * nx, -1.0, 1.0);
    return f;
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

TEST_CASE("project_box clamps and is idempotent") {
    const std::vector<double> x = {-1.0, 0.5, 2.0};
    const auto p = project_box(x, 0.0, 1.0);
    CHECK(p == std::vector<double>{0.0, 0.5, 1.0});

    const auto p2 = project_box(p, 0.0, 1.0);
    CHECK(p2 == p);

    const std::vector<double> feasible = {0.1, 0.9, 0.4};
    CHECK(project_box(feasible, 0.0, 1.0) == feasible);

    CHECK_THROWS_AS(project_box(x, 1.0, 0.0), InvalidBoundsError);
}

TEST_CASE("project_box is non-expansive on random pairs") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto x = cpl::test::random_vector(rng, 16, -3.0, 3.0);
        const auto y = cpl::test::random_vector(rng, 16, -3.0, 3.0);
        const auto px = project_box(x, -1.0, 1.0);
        const auto py = project_box(y, -1.0, 1.0);
        double dp = 0.0, d = 0.0;
        for (int i = 0; i < 16; ++i) {
            dp += (px[i] - py[i]) * (px[i] - py[i]);
            d += (x[i] - y[i]) * (x[i] - y[i]);
        }
        CHECK(std::sqrt(dp) <= std::sqrt(d) + 1e-12);
    }
}

TEST_CASE("project_affine closed form") {
    const std::vector<double> z = {1.0, 2.0, 3.0};
    const std::vector<double> a = {1.0, 1.0, 1.0};
    const auto x = project_affine(z, a, 3.0);
    CHECK(x[0] == doctest::Approx(0.0));
    CHECK(x[1] == doctest::Approx(1.0));
    CHECK(x[2] == doctest::Approx(2.0));

    // feasible input unchanged
    const auto x2 = project_affine(x, a, 3.0);
    for (int i = 0; i < 3; ++i) CHECK(x2[i] == doctest::Approx(x[i]).epsilon(1e-14));

    CHECK_THROWS_AS(project_affine(z, std::vector<double>(3, 0.0), 1.0), DegenerateConstraintError);
}

TEST_CASE("project_affine is exact, minimal-norm, and orthogonal") {
    std::mt19937_64 rng(7);
    const int n = 128;
    const auto a = cpl::test::random_vector(rng, n, 0.5, 1.5);
    const double b = 2.7;
    const auto z = cpl::test::random_vector(rng, n, -2.0, 2.0);
    const auto x = project_affine(z, a, b);

    double az = 0.0;
    for (int i = 0; i < n; ++i) az += a[i] * x[i];
    CHECK(std::abs(az - b) <= 1e-12 * std::max(1.0, std::abs(b)));

    // correction is parallel to a
    std::vector<double> corr(n);
    for (int i = 0; i < n; ++i) corr[i] = x[i] - z[i];
    const double ca = cpl::test::dot(corr, a) / cpl::test::dot(a, a);
    double ortho2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = corr[i] - ca * a[i];
        ortho2 += t * t;
    }
    CHECK(std::sqrt(ortho2) <= 1e-12 * (1.0 + cpl::test::norm2(corr)));

    // minimal among 100 sampled feasible points
    const double dx2 = cpl::test::dot(corr, corr);
    for (int trial = 0; trial < 100; ++trial) {
        auto y = cpl::test::random_vector(rng, n, -2.0, 2.0);
        y = project_affine(y, a, b); // a feasible point
        double dy2 = 0.0;
        for (int i = 0; i < n; ++i) dy2 += (y[i] - z[i]) * (y[i] - z[i]);
        CHECK(dy2 >= dx2 - 1e-10);
    }
}

TEST_CASE("box and affine vector-Jacobian products match finite differences") {
    std::mt19937_64 rng(31);
    const int n = 24;
    const auto a = cpl::test::random_vector(rng, n, 0.5, 1.5);
    auto x = cpl::test::random_vector(rng, n, -2.0, 2.0);
    // keep components away from the box kinks
    for (auto& v : x)
        if (std::abs(std::abs(v) - 1.0) < 0.05) v += 0.1;
    const auto w = cpl::test::random_vector(rng, n, -1.0, 1.0);
    const auto dir = cpl::test::random_vector(rng, n, -1.0, 1.0);
    const double h = 1e-6;

    SUBCASE("affine") {
        const auto vjp = project_affine_vjp(a, w);
        auto f = [&](std::span<const double> y) {
            return cpl::test::dot(w, project_affine(y, a, 0.9));
        };
        const double fd = cpl::test::directional_fd(f, x, dir, h);
        CHECK(cpl::test::rel_err(cpl::test::dot(vjp, dir), fd, 1e-6) <= 1e-5);
    }
    SUBCASE("box") {
        const auto vjp = project_box_vjp(x, -1.0, 1.0, w);
        auto f = [&](std::span<const double> y) {
            return cpl::test::dot(w, project_box(y, -1.0, 1.0));
        };
        const double fd = cpl::test::directional_fd(f, x, dir, h);
        CHECK(cpl::test::rel_err(cpl::test::dot(vjp, dir), fd, 1e-6) <= 1e-5);
    }
}

TEST_CASE("entropy clamp") {
    const Mesh1D mesh = burgers_mesh(64, 0.01, 0.4);
    const GridState prev = sine_state(64, 0.9);
    const FaceStates faces = berger_reconstruct(prev);

    SUBCASE("classical step is already admissible") {
        const GridState cand = fv_step(prev, mesh, true);
        const auto res = project_entropy_clamp(prev, cand, mesh, faces);
        CHECK(res.converged);
        CHECK(res.iterations == 0);
        for (int i = 0; i < 64; ++i)
            CHECK(res.state.values[i] == cand.values[i]); // returned unchanged, exactly
    }

    SUBCASE("hand-built violator is repaired, mass preserved") {
        GridState cand = fv_step(prev, mesh, true);
        // inflate the energy of a few cells: eta rises with no flux to pay for it
        for (int i = 20; i < 24; ++i) cand.values[i] *= 3.0;
        const double mass = total_mass(cand, mesh);

        const auto res = project_entropy_clamp(prev, cand, mesh, faces, 100, 1e-8);
        CHECK(res.converged);
        CHECK(res.achieved_residual <= 1e-8);
        CHECK(std::abs(total_mass(res.state, mesh) - mass) <= 1e-12 * std::max(1.0, std::abs(mass)));

        const auto r = entropy_residual(prev, res.state, faces, mesh);
        for (double v : r) CHECK(v <= 1e-8);
    }

    SUBCASE("non-expansive and idempotent for a fixed context") {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 200; ++trial) {
            GridState x{cpl::test::random_vector(rng, 64, -1.2, 1.2), 1};
            GridState y{cpl::test::random_vector(rng, 64, -1.2, 1.2), 1};
            const auto px = project_entropy_clamp(prev, x, mesh, faces, 100, 1e-8);
            const auto py = project_entropy_clamp(prev, y, mesh, faces, 100, 1e-8);
            // clamp sweeps are compositions of box and affine projections, but
            // the early return on feasibility breaks strict non-expansiveness
            // only at the tolerance boundary; allow that slack
            double dp = 0.0, d = 0.0;
            for (int i = 0; i < 64; ++i) {
                dp += (px.state.values[i] - py.state.values[i]) * (px.state.values[i] - py.state.values[i]);
                d += (x.values[i] - y.values[i]) * (x.values[i] - y.values[i]);
            }
            CHECK(std::sqrt(dp) <= std::sqrt(d) + 1e-6);

            const auto pxx = project_entropy_clamp(prev, px.state, mesh, faces, 100, 1e-8);
            for (int i = 0; i < 64; ++i)
                CHECK(pxx.state.values[i] == doctest::Approx(px.state.values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("helmholtz projection") {
    const int n = 64;

    SUBCASE("constant field is divergence-free already") {
        VectorField2D f;
        f.ny = f.nx = n;
        f.hx = f.hy = 1.0 / n;
        f.u.assign(static_cast<size_t>(n) * n, 1.0);
        f.v.assign(static_cast<size_t>(n) * n, 0.0);
        const auto p = project_helmholtz(f);
        for (size_t i = 0; i < f.u.size(); ++i) {
            CHECK(p.u[i] == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(p.v[i] == doctest::Approx(0.0));
        }
    }

    SUBCASE("gradient fields are annihilated") {
        VectorField2D f;
        f.ny = f.nx = n;
        f.hx = f.hy = 1.0 / n;
        f.u.resize(static_cast<size_t>(n) * n);
        f.v.resize(static_cast<size_t>(n) * n);
        const double tp = 2.0 * M_PI;
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                const double x = ix * f.hx, y = iy * f.hy;
                // grad of phi = sin(2 pi x) sin(2 pi y)
                f.at_u(iy, ix) = tp * std::cos(tp * x) * std::sin(tp * y);
                f.at_v(iy, ix) = tp * std::sin(tp * x) * std::cos(tp * y);
            }
        }
        const auto p = project_helmholtz(f);
        CHECK(max_abs(p.u) <= 1e-10);
        CHECK(max_abs(p.v) <= 1e-10);
    }

    SUBCASE("divergence removal, idempotence, vorticity and norm preservation") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 5; ++trial) {
            const auto f = random_field(rng, n, n);
            const auto p = project_helmholtz(f);

            CHECK(max_abs(divergence(p)) <= 1e-10);

            const auto pp = project_helmholtz(p);
            for (size_t i = 0; i < p.u.size(); ++i) {
                CHECK(std::abs(pp.u[i] - p.u[i]) <= 1e-12);
                CHECK(std::abs(pp.v[i] - p.v[i]) <= 1e-12);
            }

            const auto w0 = vorticity(f);
            const auto w1 = vorticity(p);
            double dmax = 0.0;
            for (size_t i = 0; i < w0.size(); ++i) dmax = std::max(dmax, std::abs(w0[i] - w1[i]));
            CHECK(dmax <= 1e-10);

            // orthogonal projection: 1-Lipschitz in L2
            double np = 0.0, nf = 0.0;
            for (size_t i = 0; i < p.u.size(); ++i) {
                np += p.u[i] * p.u[i] + p.v[i] * p.v[i];
                nf += f.u[i] * f.u[i] + f.v[i] * f.v[i];
            }
            CHECK(std::sqrt(np) <= std::sqrt(nf) + 1e-12);
        }
    }
}

TEST_CASE("dykstra composition") {
    SUBCASE("a single projector acts once") {
        const std::vector<double> x0 = {-0.5, 2.0, 0.7};
        const auto res = compose_dykstra(x0, {ProjectorDescriptor::box(0.0, 1.0)});
        CHECK(res.converged);
        CHECK(res.x == project_box(x0, 0.0, 1.0));
    }

    SUBCASE("box [0,1]^2 intersect {x0+x1=1} from (2,-1)") {
        // brute-force oracle: the intersection is the segment {(t, 1-t)},
        // nearest point to (2,-1) found by dense sampling is (1, 0)
        double best_t = 0.0, best_d = 1e30;
        for (int k = 0; k <= 100000; ++k) {
            const double t = k / 100000.0;
            const double d = (t - 2.0) * (t - 2.0) + (1.0 - t + 1.0) * (1.0 - t + 1.0);
            if (d < best_d) {
                best_d = d;
                best_t = t;
            }
        }
        CHECK(best_t == doctest::Approx(1.0));

        const std::vector<double> x0 = {2.0, -1.0};
        const auto res = compose_dykstra(
            x0,
            {ProjectorDescriptor::box(0.0, 1.0), ProjectorDescriptor::affine_balance({1.0, 1.0}, 1.0)},
            200, 1e-10);
        CHECK(res.converged);
        CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(res.x[1] == doctest::Approx(0.0).epsilon(1e-8));
    }

    SUBCASE("points already in the intersection are fixed") {
        const std::vector<double> x0 = {0.3, 0.7};
        const auto res = compose_dykstra(
            x0,
            {ProjectorDescriptor::box(0.0, 1.0), ProjectorDescriptor::affine_balance({1.0, 1.0}, 1.0)},
            10, 1e-10);
        CHECK(res.converged);
        CHECK(res.x[0] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(res.x[1] == doctest::Approx(0.7).epsilon(1e-12));
    }

    SUBCASE("entropy clamp descriptors are rejected in vector context") {
        ProjectorDescriptor d{EntropyClampParams{}};
        CHECK_THROWS_AS(apply_projector(d, std::vector<double>{1.0}), std::invalid_argument);
    }

    SUBCASE("helmholtz descriptor applies to a flattened [u; v] field") {
        std::mt19937_64 rng(9);
        const int m = 16;
        auto x = cpl::test::random_vector(rng, 2 * m * m, -1.0, 1.0);
        const auto res = compose_dykstra(
            x, {ProjectorDescriptor::helmholtz(m, m, 1.0 / m, 1.0 / m)}, 3, 1e-9);
        CHECK(res.converged);
    }
}

TEST_CASE("every projector is idempotent on random inputs") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = cpl::test::random_vector(rng, 32, -2.0, 2.0);
        const auto bx = project_box(x, -1.0, 1.0);
        const auto bxx = project_box(bx, -1.0, 1.0);
        for (int i = 0; i < 32; ++i)
            CHECK(std::abs(bxx[i] - bx[i]) <= 1e-12 * (1.0 + cpl::test::norm2(x)));

        const auto a = cpl::test::random_vector(rng, 32, 0.5, 1.5);
        const auto ax = project_affine(x, a, 1.1);
        const auto axx = project_affine(ax, a, 1.1);
        for (int i = 0; i < 32; ++i)
            CHECK(std::abs(axx[i] - ax[i]) <= 1e-12 * (1.0 + cpl::test::norm2(x)));
    }
}

TEST_CASE("affine projection is non-expansive on random pairs") {
    std::mt19937_64 rng(66);
    const auto a = cpl::test::random_vector(rng, 16, 0.5, 1.5);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto x = cpl::test::random_vector(rng, 16, -3.0, 3.0);
        const auto y = cpl::test::random_vector(rng, 16, -3.0, 3.0);
        const auto px = project_affine(x, a, 0.4);
        const auto py = project_affine(y, a, 0.4);
        double dp = 0.0, d = 0.0;
        for (int i = 0; i < 16; ++i) {
            dp += (px[i] - py[i]) * (px[i] - py[i]);
            d += (x[i] - y[i]) * (x[i] - y[i]);
        }
        CHECK(std::sqrt(dp) <= std::sqrt(d) + 1e-12);
    }
}

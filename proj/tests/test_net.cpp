#include "cpl/net.hpp"

#include "cpl/fv.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace cpl;

namespace {

Mesh1D burgers_mesh(int n, double nu, double cfl, double umax = 1.0) {
    const double dx = 1.0 / n;
    const double dt = cfl / (umax / dx + 2.0 * nu / (dx * dx));
    return Mesh1D::make(n, dx, dt, nu);
}

GridState smooth_state(int n) {
    GridState s{std::vector<double>(n), 0};
    for (int i = 0; i < n; ++i) {
        const double x = (i + 0.5) / n;
        s.values[i] = 0.8 * std::sin(2.0 * M_PI * x) + 0.15 * std::cos(6.0 * M_PI * x);
    }
    return s;
}

GridState rotate(const GridState& s, int j) {
    const int n = static_cast<int>(s.values.size());
    GridState out = s;
    for (int i = 0; i < n; ++i) out.values[i] = s.values[periodic_index(i + j, n)];
    return out;
}

} // namespace

TEST_CASE("parameter counting and deterministic init") {
    ArchSpec arch;
    arch.stencil_radius = 2; // input width 5
    arch.hidden_widths = {8};
    CHECK(arch.param_count() == 57); // (5*8+8) + (8*1+1)

    ArchSpec deflt;
    CHECK(deflt.input_width() == 7);

    const auto p1 = init_params(arch, 42);
    const auto p2 = init_params(arch, 42);
    CHECK(p1.theta == p2.theta);
    const auto p3 = init_params(arch, 43);
    CHECK(p1.theta != p3.theta);

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto p = init_params(arch, seed);
        for (double t : p.theta) CHECK(std::abs(t) <= 1.0);
    }
}

TEST_CASE("forward at zero weights") {
    const int n = 32;
    const Mesh1D mesh = burgers_mesh(n, 0.01, 0.4);
    const GridState state = smooth_state(n);

    ArchSpec arch;
    arch.stencil_radius = 2;
    arch.hidden_widths = {8};

    SUBCASE("residual mode reduces to the classical step") {
        for (bool berger : {false, true}) {
            arch.residual_mode = true;
            arch.residual_use_berger = berger;
            PredictorParams p = init_params(arch, 0);
            std::fill(p.theta.begin(), p.theta.end(), 0.0);
            const GridState out = forward(p, state, mesh);
            const GridState ref = fv_step(state, mesh, berger);
            for (int i = 0; i < n; ++i) CHECK(out.values[i] == ref.values[i]);
            CHECK(out.time_index == state.time_index + 1);
        }
    }
    SUBCASE("direct mode gives the zero field") {
        arch.residual_mode = false;
        PredictorParams p = init_params(arch, 0);
        std::fill(p.theta.begin(), p.theta.end(), 0.0);
        const GridState out = forward(p, state, mesh);
        for (int i = 0; i < n; ++i) CHECK(out.values[i] == 0.0);
    }
}

TEST_CASE("exact shift equivariance") {
    const int n = 32;
    const Mesh1D mesh = burgers_mesh(n, 0.01, 0.4);
    const GridState state = smooth_state(n);

    ArchSpec arch;
    arch.stencil_radius = 3;
    arch.hidden_widths = {16};
    arch.residual_mode = false; // pure convolutional MLP
    PredictorParams p = init_params(arch, 7);
    p.norm.scale = 1.0;

    for (int j : {1, 5, 13}) {
        const GridState a = forward(p, rotate(state, j), mesh);
        const GridState b = rotate(forward(p, state, mesh), j);
        for (int i = 0; i < n; ++i) CHECK(a.values[i] == b.values[i]);
    }
}

TEST_CASE("backward matches finite differences") {
    const int n = 16;
    const Mesh1D mesh = burgers_mesh(n, 0.01, 0.4);
    const GridState state = smooth_state(n);
    std::mt19937_64 rng(21);
    const auto upstream = cpl::test::random_vector(rng, n, -1.0, 1.0);
    const double h = 1e-6;

    for (Activation act : {Activation::Tanh, Activation::Softplus}) {
        for (bool residual : {false, true}) {
            CAPTURE(static_cast<int>(act));
            CAPTURE(residual);
            ArchSpec arch;
            arch.stencil_radius = 2;
            arch.hidden_widths = {8};
            arch.activation = act;
            arch.residual_mode = residual;
            PredictorParams p = init_params(arch, 3);
            p.norm.scale = 1.2;

            const BackwardResult back = backward(p, state, mesh, upstream);

            // gradient w.r.t. parameters, one random direction plus a few coordinates
            auto f_theta = [&](std::span<const double> th) {
                PredictorParams q = p;
                q.theta.assign(th.begin(), th.end());
                return cpl::test::dot(upstream, forward(q, state, mesh).values);
            };
            const auto dir_t = cpl::test::random_vector(rng, p.theta.size(), -1.0, 1.0);
            const double fd_t = cpl::test::directional_fd(f_theta, p.theta, dir_t, h);
            CHECK(cpl::test::rel_err(cpl::test::dot(back.grad_theta, dir_t), fd_t, 1e-6) <= 1e-5);

            for (size_t k = 0; k < p.theta.size(); k += 17) {
                std::vector<double> e(p.theta.size(), 0.0);
                e[k] = 1.0;
                const double fd_k = cpl::test::directional_fd(f_theta, p.theta, e, h);
                CHECK(cpl::test::rel_err(back.grad_theta[k], fd_k, 1e-6) <= 1e-5);
            }

            // gradient w.r.t. the input state
            auto f_state = [&](std::span<const double> values) {
                GridState s{std::vector<double>(values.begin(), values.end()), 0};
                return cpl::test::dot(upstream, forward(p, s, mesh).values);
            };
            const auto dir_s = cpl::test::random_vector(rng, n, -1.0, 1.0);
            const double fd_s = cpl::test::directional_fd(f_state, state.values, dir_s, h);
            CHECK(cpl::test::rel_err(cpl::test::dot(back.grad_state, dir_s), fd_s, 1e-6) <= 1e-5);
        }
    }
}

TEST_CASE("backward is linear in the upstream signal") {
    const int n = 16;
    const Mesh1D mesh = burgers_mesh(n, 0.01, 0.4);
    const GridState state = smooth_state(n);
    ArchSpec arch;
    arch.stencil_radius = 2;
    arch.hidden_widths = {8};
    const PredictorParams p = init_params(arch, 5);

    const std::vector<double> zero(n, 0.0);
    const BackwardResult bz = backward(p, state, mesh, zero);
    for (double g : bz.grad_theta) CHECK(g == 0.0);
    for (double g : bz.grad_state) CHECK(g == 0.0);

    std::mt19937_64 rng(6);
    const auto u = cpl::test::random_vector(rng, n, -1.0, 1.0);
    std::vector<double> u2(u);
    for (auto& v : u2) v *= 2.0;
    const BackwardResult b1 = backward(p, state, mesh, u);
    const BackwardResult b2 = backward(p, state, mesh, u2);
    for (size_t k = 0; k < b1.grad_theta.size(); ++k)
        CHECK(b2.grad_theta[k] == doctest::Approx(2.0 * b1.grad_theta[k]).epsilon(1e-13));
    for (int i = 0; i < n; ++i)
        CHECK(b2.grad_state[i] == doctest::Approx(2.0 * b1.grad_state[i]).epsilon(1e-13));
}

TEST_CASE("forward and backward are bit-reproducible") {
    const int n = 24;
    const Mesh1D mesh = burgers_mesh(n, 0.01, 0.4);
    const GridState state = smooth_state(n);
    ArchSpec arch;
    const PredictorParams p = init_params(arch, 11);
    std::mt19937_64 rng(2);
    const auto u = cpl::test::random_vector(rng, n, -1.0, 1.0);

    const GridState f1 = forward(p, state, mesh);
    const GridState f2 = forward(p, state, mesh);
    CHECK(f1.values == f2.values);
    const BackwardResult b1 = backward(p, state, mesh, u);
    const BackwardResult b2 = backward(p, state, mesh, u);
    CHECK(b1.grad_theta == b2.grad_theta);
    CHECK(b1.grad_state == b2.grad_state);
}

TEST_CASE("checkpoint round-trip is exact") {
    ArchSpec arch;
    arch.stencil_radius = 2;
    arch.hidden_widths = {8, 4};
    arch.activation = Activation::Softplus;
    arch.residual_mode = false;
    PredictorParams p = init_params(arch, 123);
    p.norm.mean = 0.0;
    p.norm.scale = 1.7;
    p.train_steps = 999;

    const auto path = std::filesystem::temp_directory_path() / "cpl_test_ckpt.bin";
    save_checkpoint(p, path);
    const PredictorParams q = load_checkpoint(path);
    CHECK(q.theta == p.theta);
    CHECK(q.arch.stencil_radius == 2);
    CHECK(q.arch.hidden_widths == std::vector<int>{8, 4});
    CHECK(q.arch.activation == Activation::Softplus);
    CHECK(q.arch.residual_mode == false);
    CHECK(q.arch.residual_use_berger == p.arch.residual_use_berger);
    CHECK(q.norm.scale == 1.7);
    CHECK(q.train_steps == 999);
    CHECK(q.rng_seed == 123);
    std::filesystem::remove(path);
}

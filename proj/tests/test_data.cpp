#include "cpl/data.hpp"

#include "cpl/fv.hpp"
#include "cpl/metrics.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace cpl;

namespace {

ScenarioSpec small_fourier(std::uint64_t seed) {
    ScenarioSpec s;
    s.kind = InitialConditionKind::RandomFourier;
    s.n_coarse = 64;
    s.refine_factor = 4;
    s.coarse_steps = 10;
    s.seed = seed;
    return s;
}

double l1_diff(const CoarseTrajectory& a, const CoarseTrajectory& b) {
    double acc = 0.0;
    const size_t T = std::min(a.snapshots.size(), b.snapshots.size());
    for (size_t t = 0; t < T; ++t)
        for (size_t i = 0; i < a.snapshots[t].values.size(); ++i)
            acc += std::abs(a.snapshots[t].values[i] - b.snapshots[t].values[i]);
    return acc * a.mesh.dx / static_cast<double>(T);
}

} // namespace

TEST_CASE("initial conditions") {
    ScenarioSpec s = small_fourier(3);
    const auto u = initial_condition(s, 256);
    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    CHECK(umax == doctest::Approx(1.0).epsilon(1e-12)); // rescaled to amplitude

    s.kind = InitialConditionKind::SineBump;
    const auto sine = initial_condition(s, 128);
    CHECK(sine[0] > 0.0);
    CHECK(std::abs(sine[64]) < std::abs(sine[32]));

    s.kind = InitialConditionKind::StepShock;
    s.step_left = 1.0;
    s.step_right = 0.0;
    s.step_position = 0.5;
    const auto step = initial_condition(s, 128);
    CHECK(step[0] == 1.0);
    CHECK(step[127] == 0.0);

    // determinism
    s.kind = InitialConditionKind::RandomFourier;
    CHECK(initial_condition(s, 64) == initial_condition(s, 64));
}

TEST_CASE("stable_dt respects both stability limits") {
    const double dx = 1.0 / 128;
    const double dt = stable_dt(1.0, dx, 0.01, 0.4);
    CHECK(dt * (1.0 / dx + 2.0 * 0.01 / (dx * dx)) == doctest::Approx(0.4));
    CHECK(stable_dt(0.0, dx, 0.0, 0.4) == doctest::Approx(dx)); // degenerate fallback
}

TEST_CASE("solve_reference") {
    SUBCASE("constant initial condition stays constant") {
        ScenarioSpec s = small_fourier(0);
        s.kind = InitialConditionKind::StepShock;
        s.step_left = 0.7;
        s.step_right = 0.7; // a constant field
        const auto traj = solve_reference(s);
        for (const auto& snap : traj.snapshots)
            for (double v : snap.values) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
    }
    SUBCASE("mass is conserved over the full run") {
        const auto traj = solve_reference(small_fourier(5));
        const double m0 = total_mass(traj.snapshots.front(), traj.mesh);
        const double m1 = total_mass(traj.snapshots.back(), traj.mesh);
        CHECK(std::abs(m1 - m0) <= 1e-11 * std::max(1.0, std::abs(m0)));
    }
    SUBCASE("inviscid step shock travels at the jump speed") {
        ScenarioSpec s;
        s.kind = InitialConditionKind::StepShock;
        s.nu = 0.0;
        s.n_coarse = 64;
        s.refine_factor = 8;
        s.coarse_steps = 30;
        const auto traj = solve_reference(s);
        const double dxf = traj.mesh.dx;
        for (size_t k = 0; k < traj.snapshots.size(); k += 50) {
            const double t = static_cast<double>(k) * traj.mesh.dt;
            // skip the transient while the initial rarefaction corner is
            // still as steep as the shock
            if (t < 0.05) continue;
            const int ih = steepest_gradient_index(traj.snapshots[k]);
            const double x_hat = (ih + 0.5) * dxf;
            double expected = 0.5 + 0.5 * t;
            // circular distance in physical units
            double d = std::abs(x_hat - expected);
            d = std::min(d, 1.0 - d);
            CHECK(d <= dxf + 1e-12);
        }
    }
}

TEST_CASE("restrict_trajectory") {
    SUBCASE("refine factor 1 is the identity") {
        ScenarioSpec s = small_fourier(9);
        s.refine_factor = 1;
        const auto traj = solve_reference(s);
        const auto coarse = restrict_trajectory(traj, 1);
        CHECK(coarse.snapshots.size() == traj.snapshots.size());
        for (size_t t = 0; t < coarse.snapshots.size(); ++t)
            CHECK(coarse.snapshots[t].values == traj.snapshots[t].values);
    }
    SUBCASE("block averaging preserves mass exactly") {
        const auto traj = solve_reference(small_fourier(13));
        const auto coarse = restrict_trajectory(traj, 4);
        for (size_t t = 0; t < coarse.snapshots.size(); ++t) {
            const auto& fine = traj.snapshots[t * traj.subcycle];
            const double mf = total_mass(fine, traj.mesh);
            const double mc = total_mass(coarse.snapshots[t], coarse.mesh);
            CHECK(std::abs(mf - mc) <= 1e-13 * std::max(1.0, std::abs(mf)));
        }
    }
    SUBCASE("restricted trajectories are TVD") {
        ScenarioSpec s = small_fourier(17);
        s.kind = InitialConditionKind::StepShock;
        const auto coarse = restrict_trajectory(solve_reference(s), s.refine_factor);
        for (size_t t = 0; t + 1 < coarse.snapshots.size(); ++t) {
            const double dtv =
                total_variation(coarse.snapshots[t + 1]) - total_variation(coarse.snapshots[t]);
            CHECK(dtv <= 1e-13);
        }
    }
    SUBCASE("shape mismatch is rejected") {
        const auto traj = solve_reference(small_fourier(1));
        CHECK_THROWS_AS(restrict_trajectory(traj, 7), ShapeMismatchError);
    }
}

TEST_CASE("fine reference steps satisfy the entropy inequality") {
    ScenarioSpec s = small_fourier(21);
    s.kind = InitialConditionKind::StepShock;
    const auto traj = solve_reference(s);
    double worst = -1e30;
    for (size_t t = 0; t + 1 < traj.snapshots.size(); ++t) {
        const FaceStates faces = piecewise_constant_faces(traj.snapshots[t]);
        const auto r =
            entropy_residual(traj.snapshots[t], traj.snapshots[t + 1], faces, traj.mesh);
        for (double v : r) worst = std::max(worst, v);
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("self-convergence of the restricted reference") {
    // first-order scheme: halving the fine grid roughly halves the restriction gap
    ScenarioSpec s;
    s.kind = InitialConditionKind::SineBump;
    s.n_coarse = 64;
    s.coarse_steps = 10;

    auto restricted = [&](int refine) {
        ScenarioSpec r = s;
        r.refine_factor = refine;
        return restrict_trajectory(solve_reference(r, 1.0), refine);
    };
    const auto c2 = restricted(2);
    const auto c4 = restricted(4);
    const auto c8 = restricted(8);
    const double d24 = l1_diff(c2, c4);
    const double d48 = l1_diff(c4, c8);
    CHECK(d48 > 0.0);
    const double ratio = d24 / d48;
    CHECK(ratio >= 1.2);
    CHECK(ratio <= 3.5);
    MESSAGE("self-convergence L1 ratio (2->4)/(4->8) = ", ratio);
}

TEST_CASE("build_dataset windows and determinism") {
    ScenarioSpec s = small_fourier(2); // 10 coarse steps -> 11 snapshots
    SUBCASE("window counting") {
        const Dataset ds2 = build_dataset({s}, 2);
        CHECK(ds2.n_sequences() == 10);
        const Dataset ds11 = build_dataset({s}, 11);
        CHECK(ds11.n_sequences() == 1);
        CHECK_THROWS_AS(build_dataset({s}, 12), EmptyDatasetError);
    }
    SUBCASE("deterministic construction") {
        const Dataset a = build_dataset({s}, 5);
        const Dataset b = build_dataset({s}, 5);
        CHECK(a.sequences == b.sequences);
        CHECK(a.provenance == b.provenance);
    }
    SUBCASE("scenarios share one dt") {
        ScenarioSpec shock = s;
        shock.kind = InitialConditionKind::StepShock;
        const Dataset ds = build_dataset({s, shock}, 5);
        CHECK(ds.mesh.n_cells == 64);
        CHECK(ds.n_sequences() > 0);
    }
}

TEST_CASE("dataset file round-trip and exports") {
    const Dataset ds = build_dataset({small_fourier(33)}, 4);
    const auto dir = std::filesystem::temp_directory_path();
    const auto bin = dir / "cpl_test_dataset.bin";
    const auto csv = dir / "cpl_test_dataset.csv";

    save_dataset(ds, bin);
    const Dataset rt = load_dataset(bin);
    CHECK(rt.mesh.n_cells == ds.mesh.n_cells);
    CHECK(rt.mesh.dt == ds.mesh.dt);
    CHECK(rt.mesh.dx == ds.mesh.dx);
    CHECK(rt.mesh.nu == ds.mesh.nu);
    CHECK(rt.seq_len == ds.seq_len);
    CHECK(rt.sequences == ds.sequences);
    CHECK(rt.provenance == ds.provenance);

    export_dataset_csv(ds, csv);
    CHECK(std::filesystem::file_size(csv) > 0);

    const Dataset pairs = explode_pairs(ds);
    CHECK(pairs.seq_len == 2);
    CHECK(pairs.n_sequences() == ds.n_sequences() * 3); // 4-snapshot windows -> 3 pairs

    std::filesystem::remove(bin);
    std::filesystem::remove(csv);
}

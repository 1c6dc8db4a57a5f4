#include "cpl/metrics.hpp"

#include "cpl/fv.hpp"
#include "cpl/report.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace cpl;

namespace {

GridState field_with_jump_at(int n, int cell) {
    // smooth background plus one sharp jump so the argmax is unambiguous
    GridState s{std::vector<double>(n), 0};
    for (int i = 0; i < n; ++i) s.values[i] = 0.05 * std::sin(2.0 * M_PI * (i + 0.5) / n);
    s.values[periodic_index(cell, n)] += 2.0;
    return s;
}

Dataset classical_dataset(int n = 64, int steps = 8, int n_seq = 2) {
    std::vector<ScenarioSpec> specs;
    for (int k = 0; k < n_seq; ++k) {
        ScenarioSpec s;
        s.kind = InitialConditionKind::RandomFourier;
        s.n_coarse = n;
        s.refine_factor = 2;
        s.coarse_steps = steps;
        s.seed = 40 + static_cast<std::uint64_t>(k);
        specs.push_back(s);
    }
    return build_dataset(specs, steps + 1);
}

} // namespace

TEST_CASE("shock_alignment circular distance") {
    const int n = 128;
    const GridState a = field_with_jump_at(n, 5);
    CHECK(shock_alignment(a, a) == 0);

    const GridState b = field_with_jump_at(n, 125);
    CHECK(shock_alignment(a, b) == 8); // wrap-around distance

    const GridState c = field_with_jump_at(n, 60);
    const GridState d = field_with_jump_at(n, 70);
    CHECK(shock_alignment(c, d) == 10);
    CHECK(shock_alignment(d, c) == 10); // symmetric

    // invariant under simultaneous rotation
    GridState c_rot{std::vector<double>(n), 0}, d_rot{std::vector<double>(n), 0};
    for (int i = 0; i < n; ++i) {
        c_rot.values[i] = c.values[periodic_index(i + 17, n)];
        d_rot.values[i] = d.values[periodic_index(i + 17, n)];
    }
    CHECK(shock_alignment(c_rot, d_rot) == 10);

    GridState constant{std::vector<double>(n, 1.0), 0};
    CHECK_THROWS_AS(shock_alignment(constant, a), DegenerateFieldError);
}

TEST_CASE("wilson interval") {
    // closed-form oracle at p = 0.5, n = 100, z = 1.96:
    // denom = 1 + z^2/n, center = p + z^2/2n, half = z sqrt(p(1-p)/n + z^2/4n^2)
    const WilsonInterval w = wilson_interval(0.5, 100, 1.96);
    CHECK(w.lo == doctest::Approx(0.40383).epsilon(1e-3));
    CHECK(w.hi == doctest::Approx(0.59617).epsilon(1e-3));
    CHECK(w.lo <= 0.5);
    CHECK(w.hi >= 0.5);

    const WilsonInterval zero = wilson_interval(0.0, 100, 1.96);
    CHECK(zero.lo == 0.0);

    const WilsonInterval degenerate = wilson_interval(0.37, 50, 0.0);
    CHECK(degenerate.lo == doctest::Approx(0.37));
    CHECK(degenerate.hi == doctest::Approx(0.37));

    // widening z widens, larger n narrows
    const WilsonInterval w2 = wilson_interval(0.5, 100, 2.5);
    CHECK(w2.hi - w2.lo > w.hi - w.lo);
    const WilsonInterval w3 = wilson_interval(0.5, 1000, 1.96);
    CHECK(w3.hi - w3.lo < w.hi - w.lo);
}

TEST_CASE("conformal quantiles") {
    SUBCASE("order-statistic oracle") {
        std::vector<double> r(100);
        for (int i = 0; i < 100; ++i) r[i] = (i + 1) / 100.0;
        // ceil((m+1) * 0.9) = ceil(90.9) = 91st smallest = 0.91
        CHECK(conformal_quantile(r, 0.9) == doctest::Approx(0.91));
        CHECK(conformal_quantile(r, 1.0) == doctest::Approx(1.0)); // clipped to max
    }
    SUBCASE("constant residuals") {
        std::vector<double> r(50, 0.37);
        CHECK(conformal_quantile(r, 0.9) == doctest::Approx(0.37));
    }
    SUBCASE("insufficient data") {
        std::vector<double> r(19, 0.1);
        CHECK_THROWS_AS(conformal_quantile(r, 0.9), InsufficientDataError);
    }
    SUBCASE("held-out coverage on iid residuals") {
        std::mt19937_64 rng(314);
        const auto cal = cpl::test::random_vector(rng, 1000, 0.0, 1.0);
        const auto q = conformal_calibrate(cal, 0.9);
        const auto held = cpl::test::random_vector(rng, 4000, 0.0, 1.0);
        int covered = 0;
        for (double v : held)
            if (v <= q.q_global) ++covered;
        const double coverage = static_cast<double>(covered) / held.size();
        CHECK(coverage >= 0.85);
        CHECK(coverage <= 0.95);
    }
    SUBCASE("per-step quantiles") {
        std::mt19937_64 rng(15);
        std::vector<std::vector<double>> per_step;
        for (int t = 0; t < 5; ++t)
            per_step.push_back(cpl::test::random_vector(rng, 200, 0.0, 1.0 + t));
        const auto q = conformal_calibrate(per_step, 0.9);
        REQUIRE(q.q_roll.size() == 5);
        CHECK(q.q_roll.front() < q.q_roll.back()); // growing residual scale
        CHECK(q.q_global > 0.0);
    }
}

TEST_CASE("lawful_distance") {
    const Dataset ds = classical_dataset();
    const Mesh1D mesh = ds.mesh;
    const int n = mesh.n_cells;
    const auto ic = ds.snapshot(0, 0);
    const GridState prev{std::vector<double>(ic.begin(), ic.end()), 0};
    ProjectionChainConfig chain;

    SUBCASE("lawful candidates have zero distance") {
        const GridState cand = fv_step(prev, mesh, false);
        CHECK(lawful_distance(cand, prev, mesh, chain) <= 1e-12);
    }
    SUBCASE("a uniform offset is measured in full") {
        GridState cand = fv_step(prev, mesh, false);
        const double c = 0.23;
        for (auto& v : cand.values) v += c;
        const double d = lawful_distance(cand, prev, mesh, chain);
        CHECK(d >= 0.9 * c * std::sqrt(static_cast<double>(n)));
        CHECK(d <= 1.1 * c * std::sqrt(static_cast<double>(n)));
    }
    SUBCASE("triangle-style bound on random pairs") {
        std::mt19937_64 rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            GridState x{cpl::test::random_vector(rng, n, -1.0, 1.0), 1};
            GridState y{cpl::test::random_vector(rng, n, -1.0, 1.0), 1};
            double dxy = 0.0;
            for (int i = 0; i < n; ++i)
                dxy += (x.values[i] - y.values[i]) * (x.values[i] - y.values[i]);
            dxy = std::sqrt(dxy);
            const double dx_law = lawful_distance(x, prev, mesh, chain);
            const double dy_law = lawful_distance(y, prev, mesh, chain);
            CHECK(dx_law <= dy_law + 2.0 * dxy + 1e-9);
        }
    }
}

TEST_CASE("evaluate_rollout with the classical predictor") {
    // a zero-weight residual-mode net IS the classical stepper
    const Dataset ds = classical_dataset(64, 8, 2);
    ArchSpec arch;
    arch.stencil_radius = 2;
    arch.hidden_widths = {4};
    PredictorParams p = init_params(arch, 0);
    std::fill(p.theta.begin(), p.theta.end(), 0.0);
    p.norm.scale = 1.0;

    EvalConfig cfg;
    const auto records = evaluate_rollout(p, ds, 8, cfg);
    REQUIRE(records.size() == 9); // 8 steps + aggregate
    const MetricsRecord& agg = records.back();
    CHECK(agg.step == -1);

    for (size_t t = 0; t + 1 < records.size(); ++t) {
        CHECK(records[t].mass_drift <= 1e-11);
        CHECK(records[t].dtv_plus <= 1e-13);
        CHECK(records[t].rh_mean <= 1e-12);
        CHECK(std::isfinite(records[t].mse_cpl));
        CHECK(records[t].lawful_distance <= 1e-10);
    }

    // aggregation matches recomputation from the per-step rows
    double mse = 0.0;
    for (size_t t = 0; t + 1 < records.size(); ++t) mse += records[t].mse_cpl;
    mse /= 8.0;
    CHECK(agg.mse_cpl == doctest::Approx(mse).epsilon(1e-12));

    // horizon 1 equals the one-step MSE of the first pair
    const auto one = evaluate_rollout(p, ds, 1, cfg);
    CHECK(one.size() == 2);
    CHECK(one.front().mse_cpl == doctest::Approx(one.back().mse_cpl));
}

TEST_CASE("one_step_abs_errors and rollout_abs_errors shapes") {
    const Dataset ds = classical_dataset(64, 6, 2);
    ArchSpec arch;
    arch.stencil_radius = 1;
    arch.hidden_widths = {4};
    PredictorParams p = init_params(arch, 1);
    std::fill(p.theta.begin(), p.theta.end(), 0.0);
    p.norm.scale = 1.0;
    EvalConfig cfg;

    const auto errs = one_step_abs_errors(p, ds, cfg);
    CHECK(errs.size() == ds.n_sequences() * 6 * 64);
    for (double e : errs) CHECK(e >= 0.0);

    const auto per_step = rollout_abs_errors(p, ds, 6, cfg);
    REQUIRE(per_step.size() == 6);
    for (const auto& step : per_step) CHECK(step.size() == ds.n_sequences());
}

TEST_CASE("pvs from a metrics record") {
    MetricsRecord m;
    m.fv_resid_norm = 0.1;
    m.ent_pos_mean = 0.2;
    m.dtv_plus = 0.0;
    m.bound_viol = 0.0;
    CHECK(pvs(m, PvsCoefficients{1, 1, 1, 1}) == doctest::Approx(0.3));
    CHECK(pvs(m, PvsCoefficients{2, 0, 0, 0}) == doctest::Approx(0.2));
}

TEST_CASE("metrics CSV round-trip and normalized PVS") {
    std::vector<MetricsRecord> recs;
    for (int t = 1; t <= 4; ++t) {
        MetricsRecord m;
        m.step = t;
        m.mse_cpl = 1e-4 * t;
        m.fv_resid_norm = 0.1 * t;
        m.ent_pos_mean = 0.01 * (5 - t);
        m.pvs = pvs(m, PvsCoefficients{});
        recs.push_back(m);
    }
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = dir / "cpl_metrics_test.csv";
    write_metrics_csv(recs, path);
    const auto rt = read_metrics_csv(path);
    REQUIRE(rt.size() == recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(rt[i].step == recs[i].step);
        CHECK(rt[i].mse_cpl == recs[i].mse_cpl);
        CHECK(rt[i].fv_resid_norm == recs[i].fv_resid_norm);
    }
    CHECK(normalized_pvs(recs, PvsCoefficients{}) > 0.0);
    std::filesystem::remove(path);
}

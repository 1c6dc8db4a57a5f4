#include "cpl/data.hpp"

#include "cpl/fv.hpp"
#include "cpl/io.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace cpl {

void ScenarioSpec::validate() const {
    if (n_coarse < 4) throw std::invalid_argument("ScenarioSpec: n_coarse must be >= 4");
    if (refine_factor < 1) throw std::invalid_argument("ScenarioSpec: refine_factor must be >= 1");
    if (!(cfl_target > 0.0 && cfl_target <= 1.0))
        throw std::invalid_argument("ScenarioSpec: cfl_target must be in (0, 1]");
    if (!(nu >= 0.0)) throw std::invalid_argument("ScenarioSpec: nu must be >= 0");
    if (coarse_steps < 1 && t_end <= 0.0)
        throw std::invalid_argument("ScenarioSpec: need coarse_steps >= 1 or t_end > 0");
}

std::vector<double> initial_condition(const ScenarioSpec& spec, int n_cells) {
    const double L = spec.domain_length;
    const double dx = L / n_cells;
    const double two_pi = 2.0 * std::acos(-1.0);
    std::vector<double> u(n_cells);

    switch (spec.kind) {
        case InitialConditionKind::SineBump:
            for (int i = 0; i < n_cells; ++i)
                u[i] = std::sin(two_pi * ((i + 0.5) * dx) / L);
            break;
        case InitialConditionKind::RandomFourier: {
            std::mt19937_64 rng(spec.seed);
            auto unit = [&rng] { return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0; };
            std::vector<double> ca(spec.modes), cb(spec.modes);
            for (int m = 0; m < spec.modes; ++m) {
                ca[m] = unit();
                cb[m] = unit();
            }
            for (int i = 0; i < n_cells; ++i) {
                const double x = (i + 0.5) * dx;
                double s = 0.0;
                for (int m = 0; m < spec.modes; ++m) {
                    const double arg = two_pi * (m + 1) * x / L;
                    s += ca[m] * std::cos(arg) + cb[m] * std::sin(arg);
                }
                u[i] = s;
            }
            break;
        }
        case InitialConditionKind::StepShock:
            for (int i = 0; i < n_cells; ++i)
                u[i] = ((i + 0.5) * dx < spec.step_position) ? spec.step_left : spec.step_right;
            return u; // step amplitudes are taken literally, no rescale
    }

    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    if (umax > 0.0)
        for (double& v : u) v *= spec.amplitude / umax;
    return u;
}

double stable_dt(double umax, double dx, double nu, double cfl) {
    const double denom = umax / dx + 2.0 * nu / (dx * dx);
    if (denom <= 0.0) return dx; // constant inviscid field: any dt works
    return cfl / denom;
}

FineTrajectory solve_reference(const ScenarioSpec& spec, double umax_override) {
    spec.validate();
    const int n_fine = spec.n_coarse * spec.refine_factor;
    const double dx_c = spec.domain_length / spec.n_coarse;
    const double dx_f = spec.domain_length / n_fine;

    std::vector<double> ic = initial_condition(spec, n_fine);
    double umax = umax_override;
    if (umax <= 0.0)
        for (double v : ic) umax = std::max(umax, std::abs(v));

    const double dt_c = stable_dt(umax, dx_c, spec.nu, spec.cfl_target);
    const double dt_f_limit = stable_dt(umax, dx_f, spec.nu, spec.cfl_target);
    const int subcycle = std::max(1, static_cast<int>(std::ceil(dt_c / dt_f_limit - 1e-12)));
    const double dt_f = dt_c / subcycle;

    int coarse_steps = spec.coarse_steps;
    if (spec.t_end > 0.0)
        coarse_steps = std::max(1, static_cast<int>(std::ceil(spec.t_end / dt_c - 1e-9)));

    FineTrajectory traj;
    traj.mesh = Mesh1D::make(n_fine, dx_f, dt_f, spec.nu);
    traj.subcycle = subcycle;
    traj.spec = spec;
    traj.snapshots.reserve(static_cast<size_t>(coarse_steps) * subcycle + 1);
    traj.snapshots.push_back(GridState{std::move(ic), 0});

    for (int step = 0; step < coarse_steps * subcycle; ++step) {
        try {
            traj.snapshots.push_back(fv_step(traj.snapshots.back(), traj.mesh, spec.use_berger));
        } catch (const NonFiniteError&) {
            throw NonFiniteError("solve_reference: non-finite state at fine step " +
                                 std::to_string(step + 1));
        }
    }
    return traj;
}

CoarseTrajectory restrict_trajectory(const FineTrajectory& fine, int refine_factor) {
    const int n_fine = fine.mesh.n_cells;
    if (refine_factor < 1 || n_fine % refine_factor != 0)
        throw ShapeMismatchError("restrict_trajectory: fine cell count " + std::to_string(n_fine) +
                                 " not divisible by refine factor " + std::to_string(refine_factor));
    const int n_coarse = n_fine / refine_factor;

    CoarseTrajectory coarse;
    coarse.mesh = Mesh1D::make(n_coarse, fine.mesh.dx * refine_factor,
                               fine.mesh.dt * fine.subcycle, fine.mesh.nu);
    const size_t n_snaps = (fine.snapshots.size() - 1) / fine.subcycle + 1;
    coarse.snapshots.reserve(n_snaps);
    for (size_t s = 0; s < fine.snapshots.size(); s += fine.subcycle) {
        GridState g;
        g.time_index = static_cast<std::int64_t>(s / fine.subcycle);
        g.values.resize(n_coarse);
        const auto& fv = fine.snapshots[s].values;
        for (int j = 0; j < n_coarse; ++j) {
            double acc = 0.0;
            for (int k = 0; k < refine_factor; ++k) acc += fv[static_cast<size_t>(j) * refine_factor + k];
            g.values[j] = acc / refine_factor;
        }
        coarse.snapshots.push_back(std::move(g));
    }
    return coarse;
}

static const char* kind_name(InitialConditionKind k) {
    switch (k) {
        case InitialConditionKind::SineBump: return "sine_bump";
        case InitialConditionKind::RandomFourier: return "random_fourier";
        case InitialConditionKind::StepShock: return "step_shock";
    }
    return "unknown";
}

Dataset build_dataset(const std::vector<ScenarioSpec>& specs, int seq_len) {
    if (seq_len < 2) throw std::invalid_argument("build_dataset: seq_len must be >= 2");
    if (specs.empty()) throw EmptyDatasetError("build_dataset: no scenarios");

    // one shared dt: pin the dt-setting amplitude to the largest IC amplitude
    double umax = 0.0;
    for (const auto& s : specs) {
        const auto ic = initial_condition(s, s.n_coarse * s.refine_factor);
        for (double v : ic) umax = std::max(umax, std::abs(v));
    }

    Dataset ds;
    ds.seq_len = seq_len;
    std::ostringstream prov;
    prov << "scenarios = " << specs.size() << "\n";

    bool first = true;
    for (size_t si = 0; si < specs.size(); ++si) {
        const auto& spec = specs[si];
        const FineTrajectory fine = solve_reference(spec, umax);
        const CoarseTrajectory coarse = restrict_trajectory(fine, spec.refine_factor);
        if (first) {
            ds.mesh = coarse.mesh;
            first = false;
        } else if (coarse.mesh.n_cells != ds.mesh.n_cells || coarse.mesh.dt != ds.mesh.dt) {
            throw ShapeMismatchError("build_dataset: scenarios disagree on N or dt");
        }

        prov << "scenario." << si << " = " << kind_name(spec.kind) << " nu=" << spec.nu
             << " n_coarse=" << spec.n_coarse << " refine=" << spec.refine_factor
             << " cfl=" << spec.cfl_target << " steps=" << spec.coarse_steps
             << " seed=" << spec.seed << " modes=" << spec.modes
             << " amplitude=" << spec.amplitude << " limiter=" << (spec.use_berger ? 1 : 0)
             << " subcycle=" << fine.subcycle << "\n";

        const int n = ds.mesh.n_cells;
        const int snaps = static_cast<int>(coarse.snapshots.size());
        for (int t0 = 0; t0 + seq_len <= snaps; ++t0) {
            std::vector<double> seq(static_cast<size_t>(seq_len) * n);
            for (int t = 0; t < seq_len; ++t)
                std::copy(coarse.snapshots[t0 + t].values.begin(),
                          coarse.snapshots[t0 + t].values.end(),
                          seq.begin() + static_cast<size_t>(t) * n);
            ds.sequences.push_back(std::move(seq));
        }
    }
    if (ds.sequences.empty())
        throw EmptyDatasetError("build_dataset: no windows of length " + std::to_string(seq_len));
    prov << "dt = " << ds.mesh.dt << "\ndx = " << ds.mesh.dx << "\numax = " << umax << "\n";
    ds.provenance = prov.str();
    return ds;
}

Dataset explode_pairs(const Dataset& ds) {
    Dataset out;
    out.mesh = ds.mesh;
    out.seq_len = 2;
    out.provenance = ds.provenance;
    const int n = ds.mesh.n_cells;
    for (size_t s = 0; s < ds.sequences.size(); ++s) {
        for (int t = 0; t + 1 < ds.seq_len; ++t) {
            std::vector<double> pair(static_cast<size_t>(2) * n);
            const auto a = ds.snapshot(s, t);
            const auto b = ds.snapshot(s, t + 1);
            std::copy(a.begin(), a.end(), pair.begin());
            std::copy(b.begin(), b.end(), pair.begin() + n);
            out.sequences.push_back(std::move(pair));
        }
    }
    if (out.sequences.empty()) throw EmptyDatasetError("explode_pairs: no pairs");
    return out;
}

// ---- dataset file -----------------------------------------------------------

static constexpr char kDataMagic[9] = "CPLDATA\0";
static constexpr std::uint32_t kDataVersion = 1;

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io::FileFormatError("cannot open dataset for writing: " + path.string());
    io::write_bytes(os, kDataMagic, 8);
    io::write_u32(os, kDataVersion);
    io::write_u32(os, static_cast<std::uint32_t>(ds.mesh.n_cells));
    io::write_f64(os, ds.mesh.dx);
    io::write_f64(os, ds.mesh.dt);
    io::write_f64(os, ds.mesh.nu);
    io::write_u32(os, static_cast<std::uint32_t>(ds.sequences.size()));
    io::write_u32(os, static_cast<std::uint32_t>(ds.seq_len));
    io::write_u64(os, ds.provenance.size());
    io::write_bytes(os, ds.provenance.data(), ds.provenance.size());
    for (const auto& seq : ds.sequences) io::write_f64_array(os, seq);
    if (!os) throw io::FileFormatError("dataset write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io::FileFormatError("cannot open dataset: " + path.string());
    io::expect_magic(is, kDataMagic, "dataset");
    const auto version = io::read_u32(is, "dataset version");
    if (version != kDataVersion)
        throw io::FileFormatError("unsupported dataset version " + std::to_string(version));

    Dataset ds;
    const int n = static_cast<int>(io::read_u32(is, "n_cells"));
    const double dx = io::read_f64(is, "dx");
    const double dt = io::read_f64(is, "dt");
    const double nu = io::read_f64(is, "nu");
    ds.mesh = Mesh1D::make(n, dx, dt, nu);
    const auto n_seq = io::read_u32(is, "sequence count");
    ds.seq_len = static_cast<int>(io::read_u32(is, "seq_len"));
    const auto prov_len = io::read_u64(is, "provenance length");
    ds.provenance.resize(prov_len);
    io::read_bytes(is, ds.provenance.data(), prov_len, "provenance");
    ds.sequences.assign(n_seq, std::vector<double>(static_cast<size_t>(ds.seq_len) * n));
    for (auto& seq : ds.sequences) io::read_f64_array(is, seq, "snapshots");
    return ds;
}

void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw io::FileFormatError("cannot open CSV for writing: " + path.string());
    os << "seq,step";
    for (int i = 0; i < ds.mesh.n_cells; ++i) os << ",u" << i;
    os << "\n";
    os.precision(17);
    for (size_t s = 0; s < ds.sequences.size(); ++s) {
        for (int t = 0; t < ds.seq_len; ++t) {
            os << s << "," << t;
            const auto snap = ds.snapshot(s, t);
            for (double v : snap) os << "," << v;
            os << "\n";
        }
    }
}

} // namespace cpl

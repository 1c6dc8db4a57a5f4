#include "cpl/net.hpp"

#include "cpl/fv.hpp"
#include "cpl/io.hpp"

#include <cmath>
#include <random>

namespace cpl {

std::vector<int> ArchSpec::layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(input_width());
    for (int w : hidden_widths) sizes.push_back(w);
    sizes.push_back(1);
    return sizes;
}

std::int64_t ArchSpec::param_count() const {
    const auto sizes = layer_sizes();
    std::int64_t count = 0;
    for (size_t l = 0; l + 1 < sizes.size(); ++l)
        count += static_cast<std::int64_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    return count;
}

void ArchSpec::validate() const {
    if (stencil_radius < 1) throw std::invalid_argument("ArchSpec: stencil_radius must be >= 1");
    for (int w : hidden_widths)
        if (w < 1) throw std::invalid_argument("ArchSpec: hidden widths must be >= 1");
}

// uniform in [-s, s] from the top 53 bits of the generator
static double uniform_pm(std::mt19937_64& rng, double s) {
    const double u01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return s * (2.0 * u01 - 1.0);
}

PredictorParams init_params(const ArchSpec& arch, std::uint64_t seed) {
    arch.validate();
    PredictorParams p;
    p.arch = arch;
    p.rng_seed = seed;
    p.theta.resize(static_cast<size_t>(arch.param_count()));

    std::mt19937_64 rng(seed);
    const auto sizes = arch.layer_sizes();
    size_t pos = 0;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l], fan_out = sizes[l + 1];
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < fan_out * fan_in; ++i) p.theta[pos++] = uniform_pm(rng, s);
        for (int i = 0; i < fan_out; ++i) p.theta[pos++] = 0.0;
    }
    return p;
}

static double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Softplus:
            return x > 30.0 ? x : std::log1p(std::exp(x));
    }
    return x;
}

static double activate_grad(Activation a, double x, double fx) {
    switch (a) {
        case Activation::Tanh: return 1.0 - fx * fx;
        case Activation::Softplus: return 1.0 / (1.0 + std::exp(-x));
    }
    return 1.0;
}

namespace {

// Per-cell MLP evaluation workspace; layers are small so everything lives in
// flat vectors reused across cells.
struct MlpWork {
    std::vector<int> sizes;
    std::vector<std::vector<double>> pre;  // pre-activations per layer (1..L)
    std::vector<std::vector<double>> act;  // activations per layer (0..L)
    std::vector<std::vector<double>> delta;

    explicit MlpWork(const ArchSpec& arch) : sizes(arch.layer_sizes()) {
        const size_t L = sizes.size();
        act.resize(L);
        pre.resize(L);
        delta.resize(L);
        for (size_t l = 0; l < L; ++l) {
            act[l].resize(sizes[l]);
            pre[l].resize(sizes[l]);
            delta[l].resize(sizes[l]);
        }
    }
};

double mlp_forward(const PredictorParams& p, MlpWork& w) {
    const auto& sizes = w.sizes;
    const size_t L = sizes.size();
    size_t pos = 0;
    for (size_t l = 0; l + 1 < L; ++l) {
        const int nin = sizes[l], nout = sizes[l + 1];
        const bool last = (l + 2 == L);
        for (int o = 0; o < nout; ++o) {
            double s = 0.0;
            const double* row = &p.theta[pos + static_cast<size_t>(o) * nin];
            for (int i = 0; i < nin; ++i) s += row[i] * w.act[l][i];
            s += p.theta[pos + static_cast<size_t>(nout) * nin + o];
            w.pre[l + 1][o] = s;
            w.act[l + 1][o] = last ? s : activate(p.arch.activation, s);
        }
        pos += static_cast<size_t>(nout) * nin + nout;
    }
    return w.act[L - 1][0];
}

// Backprop of one cell's scalar output; accumulates into grad_theta and
// returns the input-layer gradient in w.delta[0].
void mlp_backward(const PredictorParams& p, MlpWork& w, double upstream,
                  std::vector<double>& grad_theta) {
    const auto& sizes = w.sizes;
    const size_t L = sizes.size();
    w.delta[L - 1][0] = upstream; // output layer is linear

    // parameter offsets per layer
    size_t pos_end = p.theta.size();
    for (size_t lrev = L - 1; lrev >= 1; --lrev) {
        const size_t l = lrev - 1;
        const int nin = sizes[l], nout = sizes[l + 1];
        const size_t pos = pos_end - (static_cast<size_t>(nout) * nin + nout);
        const bool last = (l + 2 == L);

        if (!last) {
            for (int o = 0; o < nout; ++o)
                w.delta[l + 1][o] *= activate_grad(p.arch.activation, w.pre[l + 1][o], w.act[l + 1][o]);
        }
        for (int i = 0; i < nin; ++i) w.delta[l][i] = 0.0;
        for (int o = 0; o < nout; ++o) {
            const double d = w.delta[l + 1][o];
            double* grow = &grad_theta[pos + static_cast<size_t>(o) * nin];
            const double* row = &p.theta[pos + static_cast<size_t>(o) * nin];
            for (int i = 0; i < nin; ++i) {
                grow[i] += d * w.act[l][i];
                w.delta[l][i] += d * row[i];
            }
            grad_theta[pos + static_cast<size_t>(nout) * nin + o] += d;
        }
        pos_end = pos;
    }
}

// Stencil features: the centered cell value plus its differences to the
// neighbors. Differences carry most of the one-step correction signal and are
// far better conditioned than raw neighbor values on smooth fields; the
// fixed 1/4 scale brings them to unit order.
constexpr double kDiffScale = 0.25;

void fill_stencil(const std::vector<double>& u, int cell, int radius, const Normalization& norm,
                  std::vector<double>& out) {
    const int n = static_cast<int>(u.size());
    const double uc = (u[periodic_index(cell, n)] - norm.mean) / norm.scale;
    int idx = 0;
    for (int j = -radius; j <= radius; ++j) {
        const double uj = (u[periodic_index(cell + j, n)] - norm.mean) / norm.scale;
        out[idx++] = j == 0 ? uc : (uj - uc) / kDiffScale;
    }
}

} // namespace

GridState forward(const PredictorParams& params, const GridState& state, const Mesh1D& mesh) {
    validate_state(state, mesh);
    const int n = mesh.n_cells;
    const int k = params.arch.stencil_radius;

    GridState out;
    out.time_index = state.time_index + 1;
    // In residual mode the head is scaled by dt: the correction to a one-step
    // operator is O(dt), so a freshly initialized network already sits at the
    // right output scale.
    double head_scale = 1.0;
    if (params.arch.residual_mode) {
        out.values = fv_step(state, mesh, params.arch.residual_use_berger).values;
        head_scale = mesh.dt;
    } else {
        out.values.assign(n, 0.0);
    }

    MlpWork work(params.arch);
    for (int i = 0; i < n; ++i) {
        fill_stencil(state.values, i, k, params.norm, work.act[0]);
        out.values[i] += head_scale * mlp_forward(params, work);
    }
    require_finite(out.values, "predictor output");
    return out;
}

BackwardResult backward(const PredictorParams& params, const GridState& state,
                        const Mesh1D& mesh, std::span<const double> upstream) {
    const int n = mesh.n_cells;
    const int k = params.arch.stencil_radius;

    BackwardResult res;
    res.grad_theta.assign(params.theta.size(), 0.0);
    res.grad_state.assign(n, 0.0);

    const double head_scale = params.arch.residual_mode ? mesh.dt : 1.0;
    MlpWork work(params.arch);
    for (int i = 0; i < n; ++i) {
        fill_stencil(state.values, i, k, params.norm, work.act[0]);
        mlp_forward(params, work);
        mlp_backward(params, work, head_scale * upstream[i], res.grad_theta);
        for (int j = -k; j <= k; ++j) {
            const double d0 = work.delta[0][j + k];
            if (j == 0) {
                res.grad_state[i] += d0 / params.norm.scale;
            } else {
                res.grad_state[periodic_index(i + j, n)] += d0 / (kDiffScale * params.norm.scale);
                res.grad_state[i] -= d0 / (kDiffScale * params.norm.scale);
            }
        }
    }

    if (params.arch.residual_mode) {
        const auto base = fv_step_vjp(state, mesh, params.arch.residual_use_berger, upstream);
        for (int i = 0; i < n; ++i) res.grad_state[i] += base[i];
    }
    return res;
}

// ---- checkpoint -------------------------------------------------------------

static constexpr char kCkptMagic[9] = "CPLCKPT\0";
static constexpr std::uint32_t kCkptVersion = 1;

void save_checkpoint(const PredictorParams& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io::FileFormatError("cannot open checkpoint for writing: " + path.string());
    io::write_bytes(os, kCkptMagic, 8);
    io::write_u32(os, kCkptVersion);
    io::write_u32(os, static_cast<std::uint32_t>(params.arch.stencil_radius));
    io::write_u32(os, static_cast<std::uint32_t>(params.arch.hidden_widths.size()));
    for (int w : params.arch.hidden_widths) io::write_u32(os, static_cast<std::uint32_t>(w));
    io::write_u8(os, static_cast<std::uint8_t>(params.arch.activation));
    io::write_u8(os, params.arch.residual_mode ? 1 : 0);
    io::write_u8(os, params.arch.residual_use_berger ? 1 : 0);
    io::write_f64(os, params.norm.mean);
    io::write_f64(os, params.norm.scale);
    io::write_u64(os, params.rng_seed);
    io::write_u64(os, params.train_steps);
    io::write_u64(os, static_cast<std::uint64_t>(params.theta.size()));
    io::write_f64_array(os, params.theta);
    if (!os) throw io::FileFormatError("checkpoint write failed: " + path.string());
}

PredictorParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io::FileFormatError("cannot open checkpoint: " + path.string());
    io::expect_magic(is, kCkptMagic, "checkpoint");
    const auto version = io::read_u32(is, "checkpoint version");
    if (version != kCkptVersion)
        throw io::FileFormatError("unsupported checkpoint version " + std::to_string(version));

    PredictorParams p;
    p.arch.stencil_radius = static_cast<int>(io::read_u32(is, "stencil radius"));
    const auto n_hidden = io::read_u32(is, "hidden layer count");
    p.arch.hidden_widths.resize(n_hidden);
    for (auto& w : p.arch.hidden_widths) w = static_cast<int>(io::read_u32(is, "hidden width"));
    p.arch.activation = static_cast<Activation>(io::read_u8(is, "activation"));
    p.arch.residual_mode = io::read_u8(is, "residual mode") != 0;
    p.arch.residual_use_berger = io::read_u8(is, "residual reconstruction") != 0;
    p.norm.mean = io::read_f64(is, "norm mean");
    p.norm.scale = io::read_f64(is, "norm scale");
    p.rng_seed = io::read_u64(is, "rng seed");
    p.train_steps = io::read_u64(is, "train steps");
    const auto count = io::read_u64(is, "param count");
    if (count != static_cast<std::uint64_t>(p.arch.param_count()))
        throw io::FileFormatError("checkpoint parameter count does not match architecture");
    p.theta.resize(count);
    io::read_f64_array(is, p.theta, "theta");
    return p;
}

} // namespace cpl

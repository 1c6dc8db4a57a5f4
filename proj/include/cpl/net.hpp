#pragma once

#include "cpl/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpl {

enum class Activation : std::uint8_t { Tanh = 0, Softplus = 1 };

/// Local-stencil MLP applied convolutionally over the periodic grid: each
/// cell's next value is predicted from its 2k+1 neighborhood with shared
/// weights, so the operator is exactly shift-equivariant.
struct ArchSpec {
    int stencil_radius = 3;
    std::vector<int> hidden_widths = {32, 32};
    Activation activation = Activation::Tanh;
    bool residual_mode = true; // predict a correction on top of the classical step
    // Reconstruction of the baseline step in residual mode. The
    // piecewise-constant baseline is TV-diminishing on all data, matching the
    // reference solver; the limited baseline is available for the
    // shock-sharpening composition.
    bool residual_use_berger = false;

    int input_width() const { return 2 * stencil_radius + 1; }
    std::vector<int> layer_sizes() const;
    std::int64_t param_count() const;
    void validate() const;
};

/// Input standardization constants, frozen into the checkpoint so inference
/// never needs the training set.
struct Normalization {
    double mean = 0.0;
    double scale = 1.0;
};

struct PredictorParams {
    std::vector<double> theta;
    ArchSpec arch;
    std::uint64_t rng_seed = 0;
    Normalization norm;
    std::uint64_t train_steps = 0;
};

/// Zero-mean uniform init scaled by 1/sqrt(fan_in); biases zero.
/// Bit-reproducible for a fixed (arch, seed).
PredictorParams init_params(const ArchSpec& arch, std::uint64_t seed);

/// One-step prediction U^n -> U^{n+1}. In residual mode the output is
/// fv_step(state) plus the per-cell network output; otherwise the network
/// output alone. Throws NonFiniteError on a non-finite result.
GridState forward(const PredictorParams& params, const GridState& state, const Mesh1D& mesh);

struct BackwardResult {
    std::vector<double> grad_theta;
    std::vector<double> grad_state;
};

/// Exact reverse-mode gradients of forward: upstream is dL/d(output).
BackwardResult backward(const PredictorParams& params, const GridState& state,
                        const Mesh1D& mesh, std::span<const double> upstream);

// ---- checkpoint file --------------------------------------------------------
// Little-endian binary: magic "CPLCKPT\0", u32 version, u32 stencil_radius,
// u32 hidden-layer count + widths, u8 activation, u8 residual_mode,
// f64 norm mean/scale, u64 rng_seed, u64 train_steps, u64 param count,
// then the flat f64 parameter vector.

void save_checkpoint(const PredictorParams& params, const std::filesystem::path& path);
PredictorParams load_checkpoint(const std::filesystem::path& path);

} // namespace cpl

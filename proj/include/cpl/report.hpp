#pragma once

#include "cpl/metrics.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cpl {

/// Writes per-step records (aggregate row step = -1 last) with the column
/// order: step, mse_cpl, mae_cpl, mass_drift, rh_mean, ent_pos_mean,
/// ent_pos_frac, ent_pos_mean_raw, ent_pos_frac_raw, dtv_plus, bound_viol,
/// fv_resid_norm, pvs, shock_align_cells, lawful_distance.
void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::filesystem::path& path);

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

/// `key = value` lines; aggregate metrics, conformal quantiles, normalized
/// PVS, provenance.
void write_summary(const std::map<std::string, std::string>& entries,
                   const std::filesystem::path& path);

std::map<std::string, std::string> read_summary(const std::filesystem::path& path);

/// Mean over per-step rows of the PVS recomputed on std-normalized components
/// (components with zero spread are skipped).
double normalized_pvs(const std::vector<MetricsRecord>& per_step, const PvsCoefficients& coeffs);

/// Renders a report directory (metrics.csv + summary.txt) as csv or json text.
std::string render_report(const std::filesystem::path& dir, const std::string& format);

} // namespace cpl

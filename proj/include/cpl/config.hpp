#pragma once

#include "cpl/data.hpp"
#include "cpl/metrics.hpp"
#include "cpl/net.hpp"
#include "cpl/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cpl {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` text; '#' starts a comment. Every key must be known to
/// the application schema; unknown keys are errors.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

    /// Throws ConfigError naming every key outside `allowed`.
    void require_known_keys(const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::string> values_;
};

/// Scenario family selector for dataset generation: `mixed` is count-2 random
/// Fourier draws plus one sine and one step-shock trajectory.
enum class ScenarioFamily : std::uint8_t { RandomFourier, Sine, StepShock, Mixed };

/// Everything the CLI needs, resolved from one config file with the defaults
/// used throughout this project.
struct AppConfig {
    // grid / scenario
    int n_coarse = 128;
    double domain_length = 1.0;
    double nu = 0.01;
    double cfl_target = 0.4;
    int refine_factor = 8;
    ScenarioFamily family = ScenarioFamily::Mixed;
    int scenario_count = 50;
    int modes = 4;
    double amplitude = 1.0;
    std::uint64_t scenario_seed = 1234;
    int coarse_steps = 40;
    double t_end = 0.0;
    double step_left = 1.0;
    double step_right = 0.0;
    double step_position = 0.5;
    int seq_len = 41;

    ArchSpec arch;
    TrainConfig train;
    EvalConfig eval;
    int eval_horizon = 40;

    static AppConfig from_file(const std::filesystem::path& path);
    static AppConfig from_config(const KeyValueConfig& kv);

    std::vector<ScenarioSpec> make_scenarios() const;
};

} // namespace cpl

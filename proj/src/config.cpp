#include "cpl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cpl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (cfg.values_.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        cfg.values_[key] = val;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_string(ss.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
    }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
    }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" +
                          it->second + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key,
                                              const std::vector<int>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected integers, got '" + it->second +
                              "'");
        }
    }
    if (out.empty())
        throw ConfigError("config key '" + key + "': empty list");
    return out;
}

void KeyValueConfig::require_known_keys(const std::vector<std::string>& allowed) const {
    std::string unknown;
    for (const auto& [key, value] : values_) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
    }
    if (!unknown.empty()) throw ConfigError("config: unknown keys: " + unknown);
}

namespace {

const std::vector<std::string>& allowed_keys() {
    static const std::vector<std::string> keys = {
        "grid.n_coarse", "grid.domain_length", "grid.nu", "grid.cfl_target", "grid.refine_factor",
        "scenario.kind", "scenario.count", "scenario.modes", "scenario.amplitude", "scenario.seed",
        "scenario.steps", "scenario.t_end", "scenario.step_left", "scenario.step_right",
        "scenario.step_position", "dataset.seq_len",
        "arch.stencil_radius", "arch.hidden_widths", "arch.activation", "arch.residual_mode",
        "arch.residual_use_berger",
        "train.eta", "train.momentum", "train.clip_norm", "train.epochs", "train.batch_size", "train.seed",
        "train.validation_fraction", "train.checkpoint_every",
        "train.w_fv", "train.w_ent", "train.w_rh", "train.w_tvd", "train.w_bnd",
        "train.tvd_schedule", "train.tvd_shock_mask", "train.tvd_mask_chi", "train.rollout_max",
        "train.curriculum",
        "train.adaptive_weights", "train.adapt_alpha", "train.adapt_beta", "train.adapt_cadence",
        "train.lambda_min", "train.lambda_max", "train.hutchinson_probes",
        "proj.mass", "proj.berger_blend", "proj.gamma", "proj.chi_threshold",
        "proj.entropy", "proj.entropy_tol", "proj.entropy_max_iters",
        "proj.bounds", "proj.u_min", "proj.u_max", "proj.use_berger",
        "eval.horizon", "eval.conformal_target",
        "pvs.a", "pvs.b", "pvs.c", "pvs.d",
    };
    return keys;
}

} // namespace

AppConfig AppConfig::from_config(const KeyValueConfig& kv) {
    kv.require_known_keys(allowed_keys());
    AppConfig c;

    c.n_coarse = kv.get_int("grid.n_coarse", c.n_coarse);
    c.domain_length = kv.get_double("grid.domain_length", c.domain_length);
    c.nu = kv.get_double("grid.nu", c.nu);
    c.cfl_target = kv.get_double("grid.cfl_target", c.cfl_target);
    c.refine_factor = kv.get_int("grid.refine_factor", c.refine_factor);

    const std::string kind = kv.get_string("scenario.kind", "mixed");
    if (kind == "mixed") c.family = ScenarioFamily::Mixed;
    else if (kind == "random_fourier") c.family = ScenarioFamily::RandomFourier;
    else if (kind == "sine" || kind == "sine_bump") c.family = ScenarioFamily::Sine;
    else if (kind == "step_shock") c.family = ScenarioFamily::StepShock;
    else throw ConfigError("scenario.kind: unknown value '" + kind + "'");
    c.scenario_count = kv.get_int("scenario.count", c.scenario_count);
    c.modes = kv.get_int("scenario.modes", c.modes);
    c.amplitude = kv.get_double("scenario.amplitude", c.amplitude);
    c.scenario_seed = kv.get_u64("scenario.seed", c.scenario_seed);
    c.coarse_steps = kv.get_int("scenario.steps", c.coarse_steps);
    c.t_end = kv.get_double("scenario.t_end", c.t_end);
    c.step_left = kv.get_double("scenario.step_left", c.step_left);
    c.step_right = kv.get_double("scenario.step_right", c.step_right);
    c.step_position = kv.get_double("scenario.step_position", c.step_position);
    c.seq_len = kv.get_int("dataset.seq_len", c.seq_len);

    c.arch.stencil_radius = kv.get_int("arch.stencil_radius", c.arch.stencil_radius);
    c.arch.hidden_widths = kv.get_int_list("arch.hidden_widths", c.arch.hidden_widths);
    const std::string act = kv.get_string("arch.activation", "tanh");
    if (act == "tanh") c.arch.activation = Activation::Tanh;
    else if (act == "softplus") c.arch.activation = Activation::Softplus;
    else throw ConfigError("arch.activation: unknown value '" + act + "'");
    c.arch.residual_mode = kv.get_bool("arch.residual_mode", c.arch.residual_mode);
    c.arch.residual_use_berger =
        kv.get_bool("arch.residual_use_berger", c.arch.residual_use_berger);

    c.train.eta = kv.get_double("train.eta", c.train.eta);
    c.train.momentum = kv.get_double("train.momentum", c.train.momentum);
    c.train.clip_norm = kv.get_double("train.clip_norm", c.train.clip_norm);
    c.train.epochs = kv.get_int("train.epochs", c.train.epochs);
    c.train.batch_size = kv.get_int("train.batch_size", c.train.batch_size);
    c.train.seed = kv.get_u64("train.seed", c.train.seed);
    c.train.validation_fraction =
        kv.get_double("train.validation_fraction", c.train.validation_fraction);
    c.train.checkpoint_every = kv.get_int("train.checkpoint_every", c.train.checkpoint_every);
    c.train.weights.fv = kv.get_double("train.w_fv", c.train.weights.fv);
    c.train.weights.ent = kv.get_double("train.w_ent", c.train.weights.ent);
    c.train.weights.rh = kv.get_double("train.w_rh", c.train.weights.rh);
    c.train.weights.tvd = kv.get_double("train.w_tvd", c.train.weights.tvd);
    c.train.weights.bnd = kv.get_double("train.w_bnd", c.train.weights.bnd);
    const std::string sched = kv.get_string("train.tvd_schedule", "constant");
    if (sched == "constant") c.train.tvd_schedule = TvdSchedule::Constant;
    else if (sched == "cosine") c.train.tvd_schedule = TvdSchedule::Cosine;
    else throw ConfigError("train.tvd_schedule: unknown value '" + sched + "'");
    c.train.tvd_shock_mask = kv.get_bool("train.tvd_shock_mask", c.train.tvd_shock_mask);
    c.train.tvd_mask_chi = kv.get_double("train.tvd_mask_chi", c.train.tvd_mask_chi);
    c.train.rollout_max = kv.get_int("train.rollout_max", c.train.rollout_max);
    const std::string curr = kv.get_string("train.curriculum", "off");
    if (curr == "off") c.train.curriculum = Curriculum::Off;
    else if (curr == "linear_ramp") c.train.curriculum = Curriculum::LinearRamp;
    else throw ConfigError("train.curriculum: unknown value '" + curr + "'");
    c.train.adaptive_weights = kv.get_bool("train.adaptive_weights", c.train.adaptive_weights);
    c.train.adapt_alpha = kv.get_double("train.adapt_alpha", c.train.adapt_alpha);
    c.train.adapt_beta = kv.get_double("train.adapt_beta", c.train.adapt_beta);
    c.train.adapt_cadence = kv.get_int("train.adapt_cadence", c.train.adapt_cadence);
    c.train.lambda_min = kv.get_double("train.lambda_min", c.train.lambda_min);
    c.train.lambda_max = kv.get_double("train.lambda_max", c.train.lambda_max);
    c.train.hutchinson_probes = kv.get_int("train.hutchinson_probes", c.train.hutchinson_probes);

    ProjectionChainConfig& chain = c.train.chain;
    chain.mass = kv.get_bool("proj.mass", chain.mass);
    chain.berger_blend = kv.get_bool("proj.berger_blend", chain.berger_blend);
    chain.gamma = kv.get_double("proj.gamma", chain.gamma);
    chain.chi_threshold = kv.get_double("proj.chi_threshold", chain.chi_threshold);
    chain.entropy = kv.get_bool("proj.entropy", chain.entropy);
    chain.entropy_tol = kv.get_double("proj.entropy_tol", chain.entropy_tol);
    chain.entropy_max_iters = kv.get_int("proj.entropy_max_iters", chain.entropy_max_iters);
    chain.bounds = kv.get_bool("proj.bounds", chain.bounds);
    chain.u_min = kv.get_double("proj.u_min", chain.u_min);
    chain.u_max = kv.get_double("proj.u_max", chain.u_max);
    chain.use_berger = kv.get_bool("proj.use_berger", chain.use_berger);

    c.eval.chain = chain;
    c.eval_horizon = kv.get_int("eval.horizon", c.eval_horizon);
    c.eval.conformal_target = kv.get_double("eval.conformal_target", c.eval.conformal_target);
    c.eval.pvs_coeffs.a = kv.get_double("pvs.a", c.eval.pvs_coeffs.a);
    c.eval.pvs_coeffs.b = kv.get_double("pvs.b", c.eval.pvs_coeffs.b);
    c.eval.pvs_coeffs.c = kv.get_double("pvs.c", c.eval.pvs_coeffs.c);
    c.eval.pvs_coeffs.d = kv.get_double("pvs.d", c.eval.pvs_coeffs.d);
    return c;
}

AppConfig AppConfig::from_file(const std::filesystem::path& path) {
    return from_config(KeyValueConfig::parse_file(path));
}

std::vector<ScenarioSpec> AppConfig::make_scenarios() const {
    ScenarioSpec base;
    base.nu = nu;
    base.n_coarse = n_coarse;
    base.refine_factor = refine_factor;
    base.domain_length = domain_length;
    base.cfl_target = cfl_target;
    base.coarse_steps = coarse_steps;
    base.t_end = t_end;
    base.modes = modes;
    base.amplitude = amplitude;
    base.step_left = step_left;
    base.step_right = step_right;
    base.step_position = step_position;

    std::vector<ScenarioSpec> specs;
    auto push_fourier = [&](int count, std::uint64_t seed0) {
        for (int k = 0; k < count; ++k) {
            ScenarioSpec s = base;
            s.kind = InitialConditionKind::RandomFourier;
            s.seed = seed0 + static_cast<std::uint64_t>(k);
            specs.push_back(s);
        }
    };
    switch (family) {
        case ScenarioFamily::RandomFourier:
            push_fourier(scenario_count, scenario_seed);
            break;
        case ScenarioFamily::Sine: {
            ScenarioSpec s = base;
            s.kind = InitialConditionKind::SineBump;
            specs.push_back(s);
            break;
        }
        case ScenarioFamily::StepShock: {
            ScenarioSpec s = base;
            s.kind = InitialConditionKind::StepShock;
            specs.push_back(s);
            break;
        }
        case ScenarioFamily::Mixed: {
            push_fourier(std::max(0, scenario_count - 2), scenario_seed);
            ScenarioSpec sine = base;
            sine.kind = InitialConditionKind::SineBump;
            specs.push_back(sine);
            ScenarioSpec shock = base;
            shock.kind = InitialConditionKind::StepShock;
            specs.push_back(shock);
            break;
        }
    }
    return specs;
}

} // namespace cpl

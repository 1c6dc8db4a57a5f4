#include "cpl/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cpl {

namespace {

constexpr const char* kHeader =
    "step,mse_cpl,mae_cpl,mass_drift,rh_mean,ent_pos_mean,ent_pos_frac,ent_pos_mean_raw,"
    "ent_pos_frac_raw,dtv_plus,bound_viol,fv_resid_norm,pvs,shock_align_cells,lawful_distance";

} // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open metrics CSV for writing: " + path.string());
    os << kHeader << "\n";
    os.precision(17);
    for (const auto& m : records) {
        os << m.step << ',' << m.mse_cpl << ',' << m.mae_cpl << ',' << m.mass_drift << ','
           << m.rh_mean << ',' << m.ent_pos_mean << ',' << m.ent_pos_frac << ','
           << m.ent_pos_mean_raw << ',' << m.ent_pos_frac_raw << ',' << m.dtv_plus << ','
           << m.bound_viol << ',' << m.fv_resid_norm << ',' << m.pvs << ','
           << m.shock_align_cells << ',' << m.lawful_distance << '\n';
    }
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open metrics CSV: " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
        throw std::runtime_error("metrics CSV header mismatch in " + path.string());

    std::vector<MetricsRecord> records;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        if (vals.size() != 15)
            throw std::runtime_error("metrics CSV row has " + std::to_string(vals.size()) +
                                     " fields, expected 15");
        MetricsRecord m;
        m.step = static_cast<int>(vals[0]);
        m.mse_cpl = vals[1];
        m.mae_cpl = vals[2];
        m.mass_drift = vals[3];
        m.rh_mean = vals[4];
        m.ent_pos_mean = vals[5];
        m.ent_pos_frac = vals[6];
        m.ent_pos_mean_raw = vals[7];
        m.ent_pos_frac_raw = vals[8];
        m.dtv_plus = vals[9];
        m.bound_viol = vals[10];
        m.fv_resid_norm = vals[11];
        m.pvs = vals[12];
        m.shock_align_cells = vals[13];
        m.lawful_distance = vals[14];
        records.push_back(m);
    }
    return records;
}

void write_summary(const std::map<std::string, std::string>& entries,
                   const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open summary for writing: " + path.string());
    for (const auto& [key, value] : entries) os << key << " = " << value << "\n";
}

std::map<std::string, std::string> read_summary(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open summary: " + path.string());
    std::map<std::string, std::string> entries;
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return entries;
}

double normalized_pvs(const std::vector<MetricsRecord>& per_step, const PvsCoefficients& coeffs) {
    std::vector<const MetricsRecord*> steps;
    for (const auto& m : per_step)
        if (m.step >= 0) steps.push_back(&m);
    if (steps.empty()) return 0.0;

    auto stddev = [&](auto getter) {
        double mean = 0.0;
        for (const auto* m : steps) mean += getter(*m);
        mean /= static_cast<double>(steps.size());
        double var = 0.0;
        for (const auto* m : steps) {
            const double d = getter(*m) - mean;
            var += d * d;
        }
        return std::sqrt(var / static_cast<double>(steps.size()));
    };
    const double s_r = stddev([](const MetricsRecord& m) { return m.fv_resid_norm; });
    const double s_e = stddev([](const MetricsRecord& m) { return m.ent_pos_mean; });
    const double s_t = stddev([](const MetricsRecord& m) { return m.dtv_plus; });
    const double s_b = stddev([](const MetricsRecord& m) { return m.bound_viol; });

    double acc = 0.0;
    for (const auto* m : steps) {
        double v = 0.0;
        if (s_r > 0.0) v += coeffs.a * m->fv_resid_norm / s_r;
        if (s_e > 0.0) v += coeffs.b * m->ent_pos_mean / s_e;
        if (s_t > 0.0) v += coeffs.c * m->dtv_plus / s_t;
        if (s_b > 0.0) v += coeffs.d * m->bound_viol / s_b;
        acc += v;
    }
    return acc / static_cast<double>(steps.size());
}

std::string render_report(const std::filesystem::path& dir, const std::string& format) {
    const auto metrics_path = dir / "metrics.csv";
    const auto summary_path = dir / "summary.txt";

    if (format == "csv") {
        std::ifstream is(metrics_path);
        if (!is) throw std::runtime_error("cannot open " + metrics_path.string());
        std::ostringstream out;
        out << is.rdbuf();
        if (std::filesystem::exists(summary_path)) {
            for (const auto& [key, value] : read_summary(summary_path))
                out << "# " << key << " = " << value << "\n";
        }
        return out.str();
    }
    if (format == "json") {
        nlohmann::json j;
        j["metrics"] = nlohmann::json::array();
        for (const auto& m : read_metrics_csv(metrics_path)) {
            j["metrics"].push_back({{"step", m.step},
                                    {"mse_cpl", m.mse_cpl},
                                    {"mae_cpl", m.mae_cpl},
                                    {"mass_drift", m.mass_drift},
                                    {"rh_mean", m.rh_mean},
                                    {"ent_pos_mean", m.ent_pos_mean},
                                    {"ent_pos_frac", m.ent_pos_frac},
                                    {"ent_pos_mean_raw", m.ent_pos_mean_raw},
                                    {"ent_pos_frac_raw", m.ent_pos_frac_raw},
                                    {"dtv_plus", m.dtv_plus},
                                    {"bound_viol", m.bound_viol},
                                    {"fv_resid_norm", m.fv_resid_norm},
                                    {"pvs", m.pvs},
                                    {"shock_align_cells", m.shock_align_cells},
                                    {"lawful_distance", m.lawful_distance}});
        }
        j["summary"] = nlohmann::json::object();
        if (std::filesystem::exists(summary_path))
            for (const auto& [key, value] : read_summary(summary_path)) j["summary"][key] = value;
        return j.dump(2);
    }
    throw std::invalid_argument("render_report: format must be csv or json");
}

} // namespace cpl

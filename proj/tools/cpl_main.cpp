#include "cpl/config.hpp"
#include "cpl/data.hpp"
#include "cpl/metrics.hpp"
#include "cpl/net.hpp"
#include "cpl/report.hpp"
#include "cpl/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void add_aggregate_to_summary(std::map<std::string, std::string>& summary,
                              const cpl::MetricsRecord& agg, const std::string& prefix) {
    summary[prefix + "mse_cpl"] = fmt(agg.mse_cpl);
    summary[prefix + "mae_cpl"] = fmt(agg.mae_cpl);
    summary[prefix + "mass_drift"] = fmt(agg.mass_drift);
    summary[prefix + "rh_mean"] = fmt(agg.rh_mean);
    summary[prefix + "ent_pos_mean"] = fmt(agg.ent_pos_mean);
    summary[prefix + "ent_pos_frac"] = fmt(agg.ent_pos_frac);
    summary[prefix + "ent_pos_mean_raw"] = fmt(agg.ent_pos_mean_raw);
    summary[prefix + "ent_pos_frac_raw"] = fmt(agg.ent_pos_frac_raw);
    summary[prefix + "dtv_plus"] = fmt(agg.dtv_plus);
    summary[prefix + "bound_viol"] = fmt(agg.bound_viol);
    summary[prefix + "fv_resid_norm"] = fmt(agg.fv_resid_norm);
    summary[prefix + "pvs"] = fmt(agg.pvs);
    summary[prefix + "shock_align_cells"] = fmt(agg.shock_align_cells);
    summary[prefix + "lawful_distance"] = fmt(agg.lawful_distance);
}

int cmd_generate_data(const std::string& config_path, const std::string& out_path,
                      const std::string& csv_path) {
    const cpl::AppConfig cfg = cpl::AppConfig::from_file(config_path);
    const auto specs = cfg.make_scenarios();
    const cpl::Dataset ds = cpl::build_dataset(specs, cfg.seq_len);
    cpl::save_dataset(ds, out_path);
    if (!csv_path.empty()) cpl::export_dataset_csv(ds, csv_path);
    std::cout << "wrote " << ds.n_sequences() << " sequences of " << ds.seq_len << " snapshots ("
              << ds.mesh.n_cells << " cells, dt " << ds.mesh.dt << ") to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, const std::string& resume_path) {
    const cpl::AppConfig cfg = cpl::AppConfig::from_file(config_path);
    const cpl::Dataset ds = cpl::load_dataset(data_path);

    cpl::PredictorParams params = resume_path.empty()
                                      ? cpl::init_params(cfg.arch, cfg.train.seed)
                                      : cpl::load_checkpoint(resume_path);
    cpl::TrainConfig tc = cfg.train;
    tc.checkpoint_path = out_path;

    cpl::Trainer trainer(std::move(params), tc);
    const cpl::TrainReport report = trainer.run_training(ds);

    cpl::save_checkpoint(trainer.params(), out_path);
    cpl::write_train_csv(report, out_path + ".train.csv");

    const auto& fm = report.final_metrics;
    std::cout << "trained " << trainer.params().train_steps << " steps; validation one-step MSE "
              << fm.mse_cpl << ", MAE " << fm.mae_cpl << "\n";
    std::cout << "projection overhead fraction " << report.proj_overhead << ", non-finite events "
              << report.nonfinite_events << (report.aborted ? " (aborted)" : "") << "\n";
    std::cout << "checkpoint: " << out_path << "; per-epoch CSV: " << out_path << ".train.csv\n";
    return report.aborted ? 1 : 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& report_dir, const std::string& config_path) {
    cpl::AppConfig cfg;
    if (!config_path.empty()) cfg = cpl::AppConfig::from_file(config_path);
    const cpl::PredictorParams params = cpl::load_checkpoint(ckpt_path);
    const cpl::Dataset ds = cpl::load_dataset(data_path);
    fs::create_directories(report_dir);

    const cpl::Dataset pairs = cpl::explode_pairs(ds);
    const auto records = cpl::evaluate_rollout(params, pairs, 1, cfg.eval);
    cpl::write_metrics_csv(records, fs::path(report_dir) / "metrics.csv");

    std::map<std::string, std::string> summary;
    add_aggregate_to_summary(summary, records.back(), "one_step.");
    summary["normalized_pvs"] = fmt(cpl::normalized_pvs(records, cfg.eval.pvs_coeffs));
    summary["pairs"] = std::to_string(pairs.n_sequences());
    try {
        const auto errors = cpl::one_step_abs_errors(params, ds, cfg.eval);
        const auto q = cpl::conformal_calibrate(errors, cfg.eval.conformal_target);
        summary["conformal.q_global"] = fmt(q.q_global);
        summary["conformal.target"] = fmt(q.coverage_target);
    } catch (const cpl::InsufficientDataError& e) {
        summary["conformal.error"] = e.what();
    }
    cpl::write_summary(summary, fs::path(report_dir) / "summary.txt");
    std::cout << "one-step MSE " << records.back().mse_cpl << ", MAE " << records.back().mae_cpl
              << "; report in " << report_dir << "\n";
    return 0;
}

int cmd_rollout(const std::string& ckpt_path, const std::string& data_path, int horizon,
                const std::string& report_dir, const std::string& config_path, bool dump_fields) {
    cpl::AppConfig cfg;
    if (!config_path.empty()) cfg = cpl::AppConfig::from_file(config_path);
    const cpl::PredictorParams params = cpl::load_checkpoint(ckpt_path);
    const cpl::Dataset ds = cpl::load_dataset(data_path);
    fs::create_directories(report_dir);

    const auto records = cpl::evaluate_rollout(params, ds, horizon, cfg.eval);
    cpl::write_metrics_csv(records, fs::path(report_dir) / "metrics.csv");

    std::map<std::string, std::string> summary;
    add_aggregate_to_summary(summary, records.back(), "rollout.");
    summary["normalized_pvs"] = fmt(cpl::normalized_pvs(records, cfg.eval.pvs_coeffs));
    summary["horizon"] = std::to_string(horizon);
    summary["sequences"] = std::to_string(ds.n_sequences());
    try {
        const auto per_step = cpl::rollout_abs_errors(params, ds, horizon, cfg.eval);
        const auto q = cpl::conformal_calibrate(per_step, cfg.eval.conformal_target);
        summary["conformal.q_global"] = fmt(q.q_global);
        double q_roll_max = 0.0;
        for (double v : q.q_roll) q_roll_max = std::max(q_roll_max, v);
        summary["conformal.q_roll_max"] = fmt(q_roll_max);
        summary["conformal.q_roll_final"] = fmt(q.q_roll.empty() ? 0.0 : q.q_roll.back());
        summary["conformal.target"] = fmt(q.coverage_target);
    } catch (const cpl::InsufficientDataError& e) {
        summary["conformal.error"] = e.what();
    }
    cpl::write_summary(summary, fs::path(report_dir) / "summary.txt");

    if (dump_fields) {
        // per-step predicted fields of the first sequence, for external plots
        std::ofstream os(fs::path(report_dir) / "fields_seq0.csv");
        os.precision(17);
        const cpl::Mesh1D& mesh = ds.mesh;
        const auto ic = ds.snapshot(0, 0);
        cpl::GridState z{std::vector<double>(ic.begin(), ic.end()), 0};
        auto dump = [&](int t, const cpl::GridState& s) {
            os << t;
            for (double v : s.values) os << ',' << v;
            os << '\n';
        };
        dump(0, z);
        for (int t = 1; t <= horizon; ++t) {
            const cpl::GridState cand = cpl::forward(params, z, mesh);
            z = cpl::cpl_project_output(cand, z, mesh, cfg.eval.chain);
            dump(t, z);
        }
    }

    std::cout << "rollout horizon " << horizon << ": MSE " << records.back().mse_cpl << ", MAE "
              << records.back().mae_cpl << ", mass drift " << records.back().mass_drift
              << "; report in " << report_dir << "\n";
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
    std::cout << cpl::render_report(in_dir, format);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constraint-projected learning for 1-D conservation laws"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, resume_path, csv_path;
    std::string ckpt_path, report_dir, in_dir, format = "csv";
    int horizon = 40;
    bool dump_fields = false;

    auto* gen = app.add_subcommand("generate-data", "generate a reference dataset");
    gen->add_option("--config", config_path, "config file")->required();
    gen->add_option("--out", out_path, "output dataset path")->required();
    gen->add_option("--export-csv", csv_path, "also dump snapshots as CSV");

    auto* train = app.add_subcommand("train", "train a predictor");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--data", data_path, "dataset path")->required();
    train->add_option("--out", out_path, "output checkpoint path")->required();
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* eval = app.add_subcommand("evaluate", "one-step evaluation over a dataset");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    eval->add_option("--data", data_path, "dataset path")->required();
    eval->add_option("--report", report_dir, "report output directory")->required();
    eval->add_option("--config", config_path, "config file (projection/eval settings)");

    auto* roll = app.add_subcommand("rollout", "autoregressive rollout evaluation");
    roll->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    roll->add_option("--data", data_path, "dataset path")->required();
    roll->add_option("--horizon", horizon, "rollout steps")->required();
    roll->add_option("--report", report_dir, "report output directory")->required();
    roll->add_option("--config", config_path, "config file (projection/eval settings)");
    roll->add_flag("--dump-fields", dump_fields, "dump per-step fields of the first sequence");

    auto* rep = app.add_subcommand("report", "render a report directory");
    rep->add_option("--in", in_dir, "report directory")->required();
    rep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate_data(config_path, out_path, csv_path);
        if (train->parsed()) return cmd_train(config_path, data_path, out_path, resume_path);
        if (eval->parsed()) return cmd_evaluate(ckpt_path, data_path, report_dir, config_path);
        if (roll->parsed())
            return cmd_rollout(ckpt_path, data_path, horizon, report_dir, config_path, dump_fields);
        if (rep->parsed()) return cmd_report(in_dir, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#include "cli.hpp"

#include "fedssp/errors.hpp"
#include "fedssp/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>

namespace fedssp::cli {

namespace {

// Registers every ExperimentConfig key. Long option names double as config-file keys.
void add_experiment_options(CLI::App& app, ExperimentConfig& c) {
    auto& hp = c.hp;
    app.add_option("--source", c.source, "Data source")->check(CLI::IsMember({"csv", "synth"}));
    app.add_option("--train_csv", c.train_csv, "Training CSV (csv source)");
    app.add_option("--test_csv", c.test_csv, "Labeled test CSV (csv source)");
    app.add_option("--columns", c.columns, "Feature column allowlist")->delimiter(',');
    app.add_option("--exclude", c.exclude, "Columns never used as features")->delimiter(',');
    app.add_option("--label_column", c.label_column, "Label column name");
    app.add_option("--normal_label", c.normal_label, "Label value of normal records");
    app.add_option("--category_column", c.category_column, "Optional attack category column");
    app.add_option("--partition_key", c.partition_key,
                   "Feature whose raw value orders the non-iid split");
    app.add_option("--gateways", c.gateways, "Number of gateways");
    app.add_flag("--per_gateway_standardize", c.per_gateway_standardize,
                 "Standardize each gateway with its own statistics");

    app.add_option("--lambda1", hp.lambda1, "Row-wise sparsity weight");
    app.add_option("--lambda2", hp.lambda2, "Element-wise sparsity weight");
    app.add_option("--p", hp.p, "Row-wise exponent in [0,1)");
    app.add_option("--q", hp.q, "Element-wise exponent in [0,1)");
    app.add_option("--beta1", hp.beta1);
    app.add_option("--beta2", hp.beta2);
    app.add_option("--beta3", hp.beta3, "Consensus penalty");
    app.add_option("--tau1", hp.tau1);
    app.add_option("--tau2", hp.tau2);
    app.add_option("--tau3", hp.tau3);
    app.add_option("--tau4", hp.tau4);
    app.add_option("--m", hp.m, "Subspace dimension");
    app.add_option("--rounds", hp.rounds, "Maximum communication rounds");
    app.add_option("--outer_tol", hp.outer_tol, "Relative Z change that stops the rounds");
    app.add_option("--inner_max_iters", hp.inner.max_iters, "CG iterations per W update");
    app.add_option("--grad_tol", hp.inner.grad_tol, "Riemannian gradient tolerance");

    app.add_option("--quantile", c.quantile, "Training-score quantile used as threshold");
    app.add_option("--seed", c.seed, "Seed (env FEDSSP_SEED overrides the config file)");
    app.add_option("--out_dir", c.out_dir, "Output directory");

    app.add_option("--synth_d", c.synth.d);
    app.add_option("--synth_m", c.synth.m);
    app.add_option("--synth_n_normal", c.synth.n_normal);
    app.add_option("--synth_n_anomaly", c.synth.n_anomaly);
    app.add_option("--synth_n_test_normal", c.synth.n_test_normal);
    app.add_option("--synth_noise_sigma", c.synth.noise_sigma);
    app.add_option("--synth_anomaly_scale", c.synth.anomaly_scale);
}

// Command line > FEDSSP_SEED > config file > default.
void apply_seed_env(const std::vector<std::string>& args, ExperimentConfig& cfg) {
    const char* env = std::getenv("FEDSSP_SEED");
    if (env == nullptr) return;
    for (const auto& a : args) {
        if (a == "--seed" || a.rfind("--seed=", 0) == 0) return;
    }
    try {
        std::size_t used = 0;
        const auto value = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        cfg.seed = value;
    } catch (const std::exception&) {
        throw ConfigError(std::string("FEDSSP_SEED is not an unsigned integer: '") + env + "'");
    }
}

void print_warnings(const PreparedData& data, std::ostream& err) {
    for (const auto& w : data.warnings) err << "warning: " << w << '\n';
}

int cmd_fit(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto data = prepare_data(cfg);
    print_warnings(data, err);
    const auto fit = fit_model(data, cfg.hp, cfg.seed);
    write_fit_artifacts(cfg.out_dir, cfg, data, fit);
    out << "fit: " << fit.history.size() << " round(s)"
        << (fit.converged ? " (converged)" : "") << ", model written to "
        << (std::filesystem::path(cfg.out_dir) / "model.fssp").string() << '\n';
    if (!fit.history.empty()) {
        const auto& last = fit.history.back();
        out << "  global objective " << last.global_objective << ", consensus residual "
            << last.consensus_residual << '\n';
    }
    return kOk;
}

int cmd_detect(const ExperimentConfig& cfg, const std::string& model_path, std::ostream& out,
               std::ostream& err) {
    const auto data = prepare_data(cfg);
    print_warnings(data, err);
    const Matrix z = read_matrix(model_path);
    if (z.rows() != static_cast<Eigen::Index>(data.features.size())) {
        throw DataError("model has " + std::to_string(z.rows()) + " rows but data has " +
                        std::to_string(data.features.size()) + " features");
    }
    const auto report = detect(data, z, cfg.quantile);
    write_detect_artifacts(cfg.out_dir, cfg, data, report);
    out << "detect: acc " << report.acc << " pre " << report.pre << " recall " << report.recall
        << " fnr " << report.fnr << " f1 " << report.f1 << " (threshold " << report.threshold
        << ")\n";
    return kOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::vector<double>& p_list,
              const std::vector<double>& q_list, std::ostream& out, std::ostream& err) {
    const auto data = prepare_data(cfg);
    print_warnings(data, err);
    const auto rows = run_sweep(cfg, data, p_list, q_list);
    const auto path = std::filesystem::path(cfg.out_dir) / "sweep.csv";
    write_sweep_csv(path, cfg, rows);
    for (const auto& r : rows) {
        out << r.kind << " p=" << r.p << " q=" << r.q << " lambda1=" << r.lambda1
            << " lambda2=" << r.lambda2 << ": ";
        if (r.error.empty()) {
            out << "f1 " << r.report.f1 << '\n';
        } else {
            out << "error: " << r.error << '\n';
        }
    }
    out << "sweep table written to " << path.string() << '\n';
    return kOk;
}

int cmd_synth(const ExperimentConfig& cfg, std::ostream& out) {
    SynthSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    write_synth_dataset(cfg.out_dir, spec);
    out << "synth: wrote train.csv, test.csv, true_basis.fssp to " << cfg.out_dir << '\n';
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Federated structured sparse PCA for reconstruction-based anomaly detection",
                 args.empty() ? "fedssp" : args.front()};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; every key is also a flag");
    app.allow_config_extras(CLI::config_extras_mode::error);

    ExperimentConfig cfg;
    add_experiment_options(app, cfg);

    auto* fit = app.add_subcommand("fit", "Run the federated rounds and write the model");
    auto* detect_cmd = app.add_subcommand("detect", "Score a test split with a fitted model");
    auto* sweep = app.add_subcommand("sweep", "Fit and detect over a (p, q) grid");
    auto* synth = app.add_subcommand("synth", "Write a planted-subspace dataset as CSV");
    for (auto* sub : {fit, detect_cmd, sweep, synth}) sub->fallthrough();

    std::string model_path;
    detect_cmd->add_option("--model", model_path, "Model file written by fit")->required();
    detect_cmd->add_option("--test", cfg.test_csv, "Test CSV (overrides test_csv)");

    std::vector<double> p_list{0.0, 0.5, 2.0 / 3.0};
    std::vector<double> q_list{0.0, 0.5, 2.0 / 3.0};
    sweep->add_option("--p_list", p_list, "Comma-separated p values")->delimiter(',');
    sweep->add_option("--q_list", q_list, "Comma-separated q values")->delimiter(',');

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();
        app.parse(rev);
        apply_seed_env(args, cfg);
        if (!synth->parsed()) cfg.validate();

        if (fit->parsed()) return cmd_fit(cfg, out, err);
        if (detect_cmd->parsed()) return cmd_detect(cfg, model_path, out, err);
        if (sweep->parsed()) return cmd_sweep(cfg, p_list, q_list, out, err);
        return cmd_synth(cfg, out);
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::Success&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const DimensionError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const Error& e) {
        err << "solver error: " << e.what() << '\n';
        return kSolverError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }
}

}  // namespace fedssp::cli

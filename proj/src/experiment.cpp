#include "fedssp/experiment.hpp"

#include "fedssp/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

namespace fedssp {

namespace {

std::string fmt_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    return out;
}

Matrix select_features(const Table& table, const std::vector<std::string>& features) {
    Matrix x(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(table.rows()));
    for (std::size_t f = 0; f < features.size(); ++f) {
        const auto& col = table.column(features[f]);
        for (std::size_t r = 0; r < col.size(); ++r) {
            x(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(r)) = col[r];
        }
    }
    return x;
}

std::vector<std::size_t> rows_where(const std::vector<std::string>& labels,
                                    const std::string& value, bool equal) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((labels[i] == value) == equal) rows.push_back(i);
    }
    return rows;
}

std::vector<GatewayDatasetPtr> partition_per_gateway_standardized(const Matrix& raw,
                                                                  std::span<const double> key,
                                                                  std::size_t n) {
    const auto blocks = partition_indices(key, n);
    std::vector<GatewayDatasetPtr> out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Matrix part(raw.rows(), static_cast<Eigen::Index>(blocks[b].size()));
        for (std::size_t j = 0; j < blocks[b].size(); ++j) {
            part.col(static_cast<Eigen::Index>(j)) = raw.col(static_cast<Eigen::Index>(blocks[b][j]));
        }
        const auto local = fit_standardizer(part);
        out.push_back(std::make_shared<const GatewayDataset>(
            GatewayDataset::from_matrix(static_cast<int>(b), apply_standardizer(local, part))));
    }
    return out;
}

}  // namespace

std::string ExperimentConfig::resolved_partition_key() const {
    if (!partition_key.empty()) return partition_key;
    return source == "synth" ? "f0" : "dst_bytes";
}

void ExperimentConfig::validate() const {
    if (source != "csv" && source != "synth") {
        throw ConfigError("source must be 'csv' or 'synth', got '" + source + "'");
    }
    if (source == "csv" && train_csv.empty()) throw ConfigError("csv source needs train_csv");
    if (gateways < 1) throw ConfigError("gateways must be at least 1");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw ConfigError("quantile must lie in (0, 1]");
    hp.validate(source == "synth" ? synth.d : 0);
    if (source == "synth") {
        if (synth.d <= 0 || synth.m <= 0 || synth.m >= synth.d) {
            throw ConfigError("synth_m must satisfy 0 < synth_m < synth_d");
        }
        if (synth.n_normal < gateways) throw ConfigError("synth_n_normal is below the gateway count");
        if (synth.n_anomaly < 0) throw ConfigError("synth_n_anomaly must be nonnegative");
        if (!(synth.noise_sigma >= 0.0) || !(synth.anomaly_scale >= 0.0)) {
            throw ConfigError("synth noise and anomaly scale must be nonnegative");
        }
    }
}

nlohmann::json config_json(const ExperimentConfig& c) {
    const auto& hp = c.hp;
    return {
        {"source", c.source},
        {"train_csv", c.train_csv},
        {"test_csv", c.test_csv},
        {"columns", c.columns},
        {"exclude", c.exclude},
        {"label_column", c.label_column},
        {"normal_label", c.normal_label},
        {"category_column", c.category_column},
        {"partition_key", c.resolved_partition_key()},
        {"gateways", c.gateways},
        {"per_gateway_standardize", c.per_gateway_standardize},
        {"lambda1", hp.lambda1},
        {"lambda2", hp.lambda2},
        {"p", hp.p},
        {"q", hp.q},
        {"beta1", hp.beta1},
        {"beta2", hp.beta2},
        {"beta3", hp.beta3},
        {"tau1", hp.tau1},
        {"tau2", hp.tau2},
        {"tau3", hp.tau3},
        {"tau4", hp.tau4},
        {"m", hp.m},
        {"rounds", hp.rounds},
        {"outer_tol", hp.outer_tol},
        {"inner_max_iters", hp.inner.max_iters},
        {"grad_tol", hp.inner.grad_tol},
        {"quantile", c.quantile},
        {"seed", c.seed},
        {"synth_d", c.synth.d},
        {"synth_m", c.synth.m},
        {"synth_n_normal", c.synth.n_normal},
        {"synth_n_anomaly", c.synth.n_anomaly},
        {"synth_n_test_normal", c.synth.n_test_normal},
        {"synth_noise_sigma", c.synth.noise_sigma},
        {"synth_anomaly_scale", c.synth.anomaly_scale},
    };
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedData out;
    Matrix raw_train;
    Eigen::VectorXd key;
    Matrix raw_test;

    if (cfg.source == "synth") {
        SynthSpec spec = cfg.synth;
        spec.seed = cfg.seed;
        auto synth = synth_planted(spec);
        for (int i = 0; i < spec.d; ++i) out.features.push_back("f" + std::to_string(i));
        const auto key_name = cfg.resolved_partition_key();
        const auto it = std::find(out.features.begin(), out.features.end(), key_name);
        if (it == out.features.end()) throw DataError("partition key '" + key_name + "' not found");
        key = synth.train.row(it - out.features.begin()).transpose();
        raw_train = std::move(synth.train);
        raw_test = std::move(synth.test.x);
        out.test.attack = std::move(synth.test.attack);
        out.test.categories = std::move(synth.test.categories);
    } else {
        CsvSchema schema;
        schema.exclude = cfg.exclude;
        schema.allowlist = cfg.columns;

        // Train on normal records only; a training file without labels is taken as all-normal.
        const auto header = read_csv_header(cfg.train_csv);
        const bool labeled =
            std::find(header.begin(), header.end(), cfg.label_column) != header.end();
        CsvSchema train_schema = schema;
        if (labeled) train_schema.label_column = cfg.label_column;
        if (!cfg.category_column.empty() &&
            std::find(header.begin(), header.end(), cfg.category_column) != header.end()) {
            train_schema.category_column = cfg.category_column;
        }
        const auto key_name = cfg.resolved_partition_key();
        const bool key_is_feature =
            cfg.columns.empty() ||
            std::find(cfg.columns.begin(), cfg.columns.end(), key_name) != cfg.columns.end();
        if (!key_is_feature) train_schema.allowlist.push_back(key_name);

        Table train = load_csv(cfg.train_csv, train_schema);
        if (labeled) train = train.select_rows(rows_where(train.labels, cfg.normal_label, true));
        out.warnings = train.warnings;

        out.features = train.columns;
        if (!key_is_feature) {
            out.features.erase(std::find(out.features.begin(), out.features.end(), key_name));
        }
        if (out.features.empty()) throw DataError("no numeric feature columns in training data");
        raw_train = select_features(train, out.features);
        const auto& key_col = train.column(key_name);
        key = Eigen::Map<const Eigen::VectorXd>(key_col.data(),
                                                 static_cast<Eigen::Index>(key_col.size()));

        if (!cfg.test_csv.empty()) {
            CsvSchema test_schema;
            test_schema.allowlist = out.features;
            test_schema.label_column = cfg.label_column;
            test_schema.category_column = cfg.category_column;
            Table test = load_csv(cfg.test_csv, test_schema);
            if (test.columns != out.features) {
                throw DataError("test CSV does not provide every training feature as a number");
            }
            for (const auto& w : test.warnings) out.warnings.push_back("test: " + w);
            raw_test = select_features(test, out.features);
            for (const auto& label : test.labels) out.test.attack.push_back(label != cfg.normal_label);
            out.test.categories = std::move(test.categories);
        }
    }

    if (raw_train.cols() < cfg.gateways) {
        throw DataError("only " + std::to_string(raw_train.cols()) + " training samples for " +
                        std::to_string(cfg.gateways) + " gateways");
    }
    if (cfg.hp.m > raw_train.rows()) {
        throw ConfigError("m = " + std::to_string(cfg.hp.m) + " exceeds the " +
                          std::to_string(raw_train.rows()) + " features");
    }

    out.standardizer = fit_standardizer(raw_train, out.features);
    out.train = apply_standardizer(out.standardizer, raw_train);
    const std::span<const double> key_span(key.data(), static_cast<std::size_t>(key.size()));
    out.gateways = cfg.per_gateway_standardize
                       ? partition_per_gateway_standardized(raw_train, key_span, cfg.gateways)
                       : partition_noniid(out.train, key_span, static_cast<std::size_t>(cfg.gateways));
    if (raw_test.size() > 0) out.test.x = apply_standardizer(out.standardizer, raw_test);
    return out;
}

FederationResult fit_model(const PreparedData& data, const HyperParams& hp, std::uint64_t seed,
                           const TransportOptions& transport) {
    if (data.gateways.empty()) throw DataError("fit_model: no gateway data");
    const Eigen::Index d = data.gateways.front()->dim();
    hp.validate(d);
    const Matrix init = initial_projection(d, hp.m, seed);
    std::vector<GatewayState> states;
    states.reserve(data.gateways.size());
    for (const auto& g : data.gateways) states.push_back(make_gateway_state(g, init));
    return run_rounds(std::move(states), hp, transport, init);
}

DetectionReport detect(const PreparedData& data, const Matrix& z, double quantile) {
    if (data.test.x.cols() == 0) throw DataError("detect: no test samples");
    const auto train_scores = score(z, data.train);
    const double threshold = fit_threshold(train_scores, quantile);
    auto test_scores = score(z, data.test.x);
    auto report = compute_metrics(classify(test_scores, threshold), data.test.attack);
    report.threshold = threshold;
    report.scores = std::move(test_scores);
    return report;
}

void write_fit_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                         const PreparedData& data, const FederationResult& fit) {
    std::filesystem::create_directories(dir);
    const auto config = config_json(cfg);
    write_matrix(dir / "model.fssp", fit.z);
    write_history(dir / "history.jsonl", fit.history, config);

    {
        auto out = open_out(dir / "config.json");
        out << config.dump(2) << '\n';
    }
    {
        nlohmann::json s = {{"config", config},
                            {"features", data.standardizer.features},
                            {"mean", std::vector<double>(data.standardizer.mean.data(),
                                                         data.standardizer.mean.data() +
                                                             data.standardizer.mean.size())},
                            {"stddev", std::vector<double>(data.standardizer.stddev.data(),
                                                           data.standardizer.stddev.data() +
                                                               data.standardizer.stddev.size())},
                            {"constant", data.standardizer.constant}};
        auto out = open_out(dir / "standardizer.json");
        out << s.dump(2) << '\n';
    }
    {
        auto out = open_out(dir / "history.csv");
        out << "# config: " << config.dump() << '\n';
        out << "round,global_objective,consensus_residual,max_orthonormality_error,z_change\n";
        for (const auto& r : fit.history) {
            out << r.round << ',' << fmt_double(r.global_objective) << ','
                << fmt_double(r.consensus_residual) << ','
                << fmt_double(r.max_orthonormality_error) << ',' << fmt_double(r.z_change) << '\n';
        }
    }
}

void write_detect_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                            const PreparedData& data, const DetectionReport& report) {
    std::filesystem::create_directories(dir);
    const auto config = config_json(cfg);
    {
        auto j = report_json(report);
        j["config"] = config;
        j["seed"] = cfg.seed;
        auto out = open_out(dir / "report.json");
        out << j.dump(2) << '\n';
    }
    {
        auto out = open_out(dir / "scores.csv");
        out << "# config: " << config.dump() << '\n';
        out << "index,score,attack,predicted,category\n";
        for (std::size_t i = 0; i < report.scores.size(); ++i) {
            out << i << ',' << fmt_double(report.scores[i]) << ','
                << (data.test.attack[i] ? 1 : 0) << ','
                << (report.scores[i] > report.threshold ? 1 : 0) << ','
                << (i < data.test.categories.size() ? data.test.categories[i] : std::string()) << '\n';
        }
    }
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const PreparedData& data,
                                const std::vector<double>& p_list,
                                const std::vector<double>& q_list) {
    for (double v : p_list) {
        if (!(v >= 0.0 && v < 1.0)) throw ConfigError("sweep: p values must lie in [0, 1)");
    }
    for (double v : q_list) {
        if (!(v >= 0.0 && v < 1.0)) throw ConfigError("sweep: q values must lie in [0, 1)");
    }

    auto run_cell = [&](SweepRow row) {
        HyperParams hp = cfg.hp;
        hp.p = row.p;
        hp.q = row.q;
        hp.lambda1 = row.lambda1;
        hp.lambda2 = row.lambda2;
        try {
            const auto fit = fit_model(data, hp, cfg.seed);
            row.report = detect(data, fit.z, cfg.quantile);
            row.report.scores.clear();
        } catch (const Error& e) {
            row.error = e.what();
        }
        return row;
    };

    std::vector<SweepRow> rows;
    rows.push_back(run_cell({"baseline", cfg.hp.p, cfg.hp.q, 0.0, 0.0, {}, {}}));
    for (double p : p_list) {
        for (double q : q_list) {
            rows.push_back(run_cell({"grid", p, q, cfg.hp.lambda1, cfg.hp.lambda2, {}, {}}));
        }
    }
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const ExperimentConfig& cfg,
                     const std::vector<SweepRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto out = open_out(path);
    out << "# config: " << config_json(cfg).dump() << '\n';
    out << "kind,p,q,lambda1,lambda2,acc,pre,recall,fnr,f1,threshold,tp,fp,tn,fn,error\n";
    for (const auto& r : rows) {
        const auto& m = r.report;
        std::string error = r.error;
        std::replace(error.begin(), error.end(), ',', ';');
        std::replace(error.begin(), error.end(), '\n', ' ');
        out << r.kind << ',' << fmt_double(r.p) << ',' << fmt_double(r.q) << ','
            << fmt_double(r.lambda1) << ',' << fmt_double(r.lambda2) << ',' << fmt_double(m.acc)
            << ',' << fmt_double(m.pre) << ',' << fmt_double(m.recall) << ',' << fmt_double(m.fnr)
            << ',' << fmt_double(m.f1) << ',' << fmt_double(m.threshold) << ',' << m.tp << ','
            << m.fp << ',' << m.tn << ',' << m.fn << ',' << error << '\n';
    }
}

void write_synth_dataset(const std::filesystem::path& dir, const SynthSpec& spec) {
    std::filesystem::create_directories(dir);
    const auto data = synth_planted(spec);
    auto write_split = [&](const std::filesystem::path& path, const Matrix& x,
                           const std::vector<bool>* attack,
                           const std::vector<std::string>* categories) {
        auto out = open_out(path);
        for (Eigen::Index i = 0; i < x.rows(); ++i) out << 'f' << i << ',';
        out << "label,category\n";
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) out << fmt_double(x(i, j)) << ',';
            const auto k = static_cast<std::size_t>(j);
            const bool is_attack = attack ? (*attack)[k] : false;
            out << (is_attack ? 1 : 0) << ','
                << (categories ? (*categories)[k] : std::string("normal")) << '\n';
        }
    };
    write_split(dir / "train.csv", data.train, nullptr, nullptr);
    write_split(dir / "test.csv", data.test.x, &data.test.attack, &data.test.categories);
    write_matrix(dir / "true_basis.fssp", data.true_basis);
}

}  // namespace fedssp

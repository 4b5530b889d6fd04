#pragma once

#include "fedssp/data.hpp"
#include "fedssp/detector.hpp"
#include "fedssp/federation.hpp"
#include "fedssp/local_solver.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedssp {

struct ExperimentConfig {
    std::string source = "synth";  // "csv" or "synth"
    std::string train_csv;
    std::string test_csv;
    std::vector<std::string> columns;  // feature allowlist; empty = all numeric columns
    std::vector<std::string> exclude;
    std::string label_column = "label";
    std::string normal_label = "0";
    std::string category_column;
    std::string partition_key;  // empty: "dst_bytes" for csv, "f0" for synth
    int gateways = 20;
    bool per_gateway_standardize = false;
    HyperParams hp;
    double quantile = 0.95;
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    SynthSpec synth;

    std::string resolved_partition_key() const;
    // Throws ConfigError before any work is done.
    void validate() const;
};

nlohmann::json config_json(const ExperimentConfig& cfg);

// Standardized, partitioned training data plus the standardized test split.
struct PreparedData {
    std::vector<std::string> features;
    Standardizer standardizer;
    Matrix train;  // pooled standardized training normals
    std::vector<GatewayDatasetPtr> gateways;
    LabeledTestSet test;
    std::vector<std::string> warnings;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// Gateway initializer and Z0 all use the same seeded orthonormal matrix.
FederationResult fit_model(const PreparedData& data, const HyperParams& hp, std::uint64_t seed,
                           const TransportOptions& transport = {});

// Threshold from the training scores, then scores and classifies the test split.
DetectionReport detect(const PreparedData& data, const Matrix& z, double quantile);

// Artifact writers. Each text artifact embeds the resolved config.
void write_fit_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                         const PreparedData& data, const FederationResult& fit);
void write_detect_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                            const PreparedData& data, const DetectionReport& report);

struct SweepRow {
    std::string kind;  // "baseline" or "grid"
    double p = 0.0;
    double q = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    DetectionReport report;
    std::string error;
};

// Baseline (lambda1 = lambda2 = 0) first, then every (p, q) pair. One data preparation is shared.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const PreparedData& data,
                                const std::vector<double>& p_list,
                                const std::vector<double>& q_list);
void write_sweep_csv(const std::filesystem::path& path, const ExperimentConfig& cfg,
                     const std::vector<SweepRow>& rows);

// Writes train.csv / test.csv (feature columns f0.., label, category) and true_basis.fssp.
void write_synth_dataset(const std::filesystem::path& dir, const SynthSpec& spec);

}  // namespace fedssp

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedssp {

using Matrix = Eigen::MatrixXd;

// One gateway's local data. Columns of `x` are samples.
struct GatewayDataset {
    int gateway_id = 0;
    Matrix x;            // d x n, standardized
    Matrix gram;         // x x^T
    double data_const;   // Tr(x^T x)

    static GatewayDataset from_matrix(int gateway_id, Matrix x);
    Eigen::Index dim() const { return x.rows(); }
    Eigen::Index samples() const { return x.cols(); }
};

using GatewayDatasetPtr = std::shared_ptr<const GatewayDataset>;

struct LabeledTestSet {
    Matrix x;                             // d x n_test
    std::vector<bool> attack;             // true = attack
    std::vector<std::string> categories;  // optional, empty or n_test long
};

// Numeric table loaded from CSV. Values are stored per column.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> values;  // values[col][row]
    std::vector<std::string> labels;          // raw label column, if requested
    std::vector<std::string> categories;      // raw category column, if requested
    std::vector<std::string> warnings;
    std::size_t rejected_rows = 0;

    std::size_t rows() const;
    std::optional<std::size_t> column_index(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const;  // throws DataError
    // Samples as columns: d x rows, feature order as in `columns`.
    Matrix to_matrix() const;
    Table select_rows(std::span<const std::size_t> rows) const;
};

struct CsvSchema {
    // Keep only these columns (in this order). Empty = every numeric column.
    std::vector<std::string> allowlist;
    // Read as a raw string column and excluded from the numeric features.
    std::string label_column;
    // Optional second string column (e.g. attack type), excluded from the features.
    std::string category_column;
    // Columns excluded from the numeric features (e.g. ids, timestamps).
    std::vector<std::string> exclude;
};

// Comma-delimited, header row, UTF-8. A column is numeric when every nonempty cell parses as a
// finite double; other columns are dropped with a warning. Rows with empty or unparseable cells in
// a kept numeric column, or with the wrong number of fields, are rejected and counted.
Table load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

// Z-score parameters; fit on training data only.
struct Standardizer {
    std::vector<std::string> features;
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;       // population standard deviation
    std::vector<bool> constant;   // feature had zero spread; maps to 0

    Eigen::Index dim() const { return mean.size(); }
};

// `x` is d x n with samples as columns.
Standardizer fit_standardizer(const Matrix& x, std::vector<std::string> features = {});
Matrix apply_standardizer(const Standardizer& standardizer, const Matrix& x);
Matrix invert_standardizer(const Standardizer& standardizer, const Matrix& z);

// Samples are sorted by `key` (ties by original index) and split into n contiguous blocks, the
// first (size mod n) blocks getting one extra sample. Returns original column indices per block.
std::vector<std::vector<std::size_t>> partition_indices(std::span<const double> key,
                                                        std::size_t n_blocks);

// `x` columns are samples (already standardized); `key` holds the raw partition feature.
std::vector<GatewayDatasetPtr> partition_noniid(const Matrix& x, std::span<const double> key,
                                                std::size_t n_blocks);

struct SynthSpec {
    std::uint64_t seed = 7;
    int d = 30;
    int m = 5;
    int n_normal = 2000;
    int n_anomaly = 500;
    int n_test_normal = -1;  // < 0: same as n_anomaly
    double noise_sigma = 0.1;
    double anomaly_scale = 3.0;
};

// Planted-subspace data: normals = Q* g + sigma e, anomalies = normal + scale * u with u a unit
// vector in the orthogonal complement of Q*. Nothing is standardized.
struct SynthData {
    Matrix train;          // d x n_normal, normal samples only
    LabeledTestSet test;   // fresh normals followed by anomalies
    Matrix true_basis;     // d x m orthonormal
};

SynthData synth_planted(const SynthSpec& spec);

// Convenience used by tests: synth_planted, then partition the training normals on feature 0.
std::vector<GatewayDatasetPtr> synth_gateways(const SynthData& data, std::size_t n_gateways);

// "FSSP1" container: magic, u64 rows, u64 cols, rows*cols f64 column-major, little endian.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(std::string_view bytes);

}  // namespace fedssp

#include "fedssp/data.hpp"

#include "fedssp/errors.hpp"
#include "fedssp/manifold.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace fedssp {

GatewayDataset GatewayDataset::from_matrix(int gateway_id, Matrix x) {
    GatewayDataset ds;
    ds.gateway_id = gateway_id;
    ds.gram = x * x.transpose();
    ds.data_const = x.squaredNorm();
    ds.x = std::move(x);
    return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::size_t Table::rows() const { return values.empty() ? labels.size() : values.front().size(); }

std::optional<std::size_t> Table::column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
}

const std::vector<double>& Table::column(const std::string& name) const {
    const auto idx = column_index(name);
    if (!idx) throw DataError("table has no numeric column '" + name + "'");
    return values[*idx];
}

Matrix Table::to_matrix() const {
    const auto n = static_cast<Eigen::Index>(rows());
    Matrix x(static_cast<Eigen::Index>(columns.size()), n);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        for (Eigen::Index r = 0; r < n; ++r) x(static_cast<Eigen::Index>(c), r) = values[c][r];
    }
    return x;
}

Table Table::select_rows(std::span<const std::size_t> rows_idx) const {
    Table out;
    out.columns = columns;
    out.warnings = warnings;
    out.values.resize(values.size());
    for (std::size_t c = 0; c < values.size(); ++c) {
        out.values[c].reserve(rows_idx.size());
        for (auto r : rows_idx) out.values[c].push_back(values[c].at(r));
    }
    if (!labels.empty()) {
        for (auto r : rows_idx) out.labels.push_back(labels.at(r));
    }
    if (!categories.empty()) {
        for (auto r : rows_idx) out.categories.push_back(categories.at(r));
    }
    return out;
}

namespace {

std::vector<std::string> read_header(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV file '" + path.string() + "' is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> header;
    for (auto& f : split_csv_line(line)) header.push_back(trim(f));
    return header;
}

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       const std::string& name) {
    if (name.empty()) return std::nullopt;
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
    return read_header(in, path);
}

Table load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");

    const std::vector<std::string> header = read_header(in, path);
    const std::size_t width = header.size();
    std::string line;

    std::vector<std::vector<std::string>> cells;
    std::size_t rejected = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != width) {
            ++rejected;
            continue;
        }
        for (auto& f : fields) f = trim(f);
        cells.push_back(std::move(fields));
    }

    Table table;
    const auto label_idx = find_column(header, schema.label_column);
    const auto category_idx = find_column(header, schema.category_column);

    const std::unordered_set<std::string> excluded(schema.exclude.begin(), schema.exclude.end());
    std::vector<std::size_t> candidates;
    if (schema.allowlist.empty()) {
        for (std::size_t c = 0; c < width; ++c) {
            if ((label_idx && c == *label_idx) || (category_idx && c == *category_idx)) continue;
            if (excluded.count(header[c])) continue;
            candidates.push_back(c);
        }
    } else {
        for (const auto& name : schema.allowlist) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw DataError("allowlisted column '" + name + "' not found");
            candidates.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    }

    // A column is numeric if every nonempty cell parses.
    std::vector<std::size_t> numeric;
    for (auto c : candidates) {
        bool ok = true;
        for (const auto& row : cells) {
            if (!row[c].empty() && !parse_double(row[c])) {
                ok = false;
                break;
            }
        }
        if (ok) {
            numeric.push_back(c);
        } else {
            table.warnings.push_back("dropped non-numeric column '" + header[c] + "'");
        }
    }
    if (numeric.empty() && !candidates.empty()) {
        throw DataError("CSV file '" + path.string() + "' has no numeric columns");
    }

    for (auto c : numeric) table.columns.push_back(header[c]);
    table.values.resize(numeric.size());
    for (const auto& row : cells) {
        bool ok = true;
        for (auto c : numeric) {
            if (!parse_double(row[c])) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            ++rejected;
            continue;
        }
        for (std::size_t k = 0; k < numeric.size(); ++k) {
            table.values[k].push_back(*parse_double(row[numeric[k]]));
        }
        if (label_idx) table.labels.push_back(row[*label_idx]);
        if (category_idx) table.categories.push_back(row[*category_idx]);
    }
    table.rejected_rows = rejected;
    if (rejected > 0) {
        table.warnings.push_back("rejected " + std::to_string(rejected) + " malformed row(s)");
    }
    return table;
}

// ---------------------------------------------------------------------------
// Standardization

Standardizer fit_standardizer(const Matrix& x, std::vector<std::string> features) {
    if (x.cols() == 0) throw DataError("fit_standardizer: no samples");
    Standardizer s;
    s.features = std::move(features);
    s.mean = x.rowwise().mean();
    const Matrix centered = x.colwise() - s.mean;
    s.stddev = (centered.rowwise().squaredNorm() / static_cast<double>(x.cols())).cwiseSqrt();
    s.constant.resize(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double scale = std::max(1.0, std::abs(s.mean(i)));
        s.constant[static_cast<std::size_t>(i)] = !(s.stddev(i) > 1e-12 * scale);
    }
    return s;
}

Matrix apply_standardizer(const Standardizer& s, const Matrix& x) {
    if (x.rows() != s.dim()) throw DimensionError("apply_standardizer: feature count mismatch");
    Matrix z(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (s.constant[static_cast<std::size_t>(i)]) {
            z.row(i).setZero();
        } else {
            z.row(i) = (x.row(i).array() - s.mean(i)) / s.stddev(i);
        }
    }
    return z;
}

Matrix invert_standardizer(const Standardizer& s, const Matrix& z) {
    if (z.rows() != s.dim()) throw DimensionError("invert_standardizer: feature count mismatch");
    Matrix x(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (s.constant[static_cast<std::size_t>(i)]) {
            x.row(i).setConstant(s.mean(i));
        } else {
            x.row(i) = z.row(i).array() * s.stddev(i) + s.mean(i);
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Partitioning

std::vector<std::vector<std::size_t>> partition_indices(std::span<const double> key,
                                                        std::size_t n_blocks) {
    if (n_blocks == 0) throw DataError("partition: need at least one block");
    if (n_blocks > key.size()) {
        throw DataError("partition: " + std::to_string(n_blocks) + " blocks requested for " +
                        std::to_string(key.size()) + " samples");
    }
    std::vector<std::size_t> order(key.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });

    const std::size_t base = key.size() / n_blocks;
    const std::size_t extra = key.size() % n_blocks;
    std::vector<std::vector<std::size_t>> blocks(n_blocks);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t len = base + (b < extra ? 1 : 0);
        blocks[b].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return blocks;
}

std::vector<GatewayDatasetPtr> partition_noniid(const Matrix& x, std::span<const double> key,
                                                std::size_t n_blocks) {
    if (static_cast<std::size_t>(x.cols()) != key.size()) {
        throw DimensionError("partition_noniid: key length differs from sample count");
    }
    const auto blocks = partition_indices(key, n_blocks);
    std::vector<GatewayDatasetPtr> out;
    out.reserve(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Matrix part(x.rows(), static_cast<Eigen::Index>(blocks[b].size()));
        for (std::size_t j = 0; j < blocks[b].size(); ++j) {
            part.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(blocks[b][j]));
        }
        out.push_back(std::make_shared<const GatewayDataset>(
            GatewayDataset::from_matrix(static_cast<int>(b), std::move(part))));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic planted-subspace data

SynthData synth_planted(const SynthSpec& spec) {
    if (spec.d <= 0 || spec.m <= 0 || spec.m >= spec.d) {
        throw ConfigError("synth: need 0 < m < d");
    }
    if (spec.n_normal <= 0 || spec.n_anomaly < 0) throw ConfigError("synth: bad sample counts");
    if (!(spec.noise_sigma >= 0.0) || !(spec.anomaly_scale >= 0.0)) {
        throw ConfigError("synth: noise_sigma and anomaly_scale must be nonnegative");
    }
    const int n_test_normal = spec.n_test_normal < 0 ? spec.n_anomaly : spec.n_test_normal;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
        Matrix g(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) g(i, j) = gauss(rng);
        return g;
    };

    SynthData out;
    out.true_basis = ProjectionMatrix::orthonormalize(gaussian(spec.d, spec.m)).matrix();
    const Matrix& q = out.true_basis;

    auto normals = [&](int n) -> Matrix {
        return q * gaussian(spec.m, n) + spec.noise_sigma * gaussian(spec.d, n);
    };

    out.train = normals(spec.n_normal);

    const Matrix test_normal = normals(n_test_normal);
    Matrix anomalies = normals(spec.n_anomaly);
    const Matrix complement = Matrix::Identity(spec.d, spec.d) - q * q.transpose();
    for (Eigen::Index j = 0; j < anomalies.cols(); ++j) {
        Eigen::VectorXd dir = complement * gaussian(spec.d, 1).col(0);
        dir.normalize();
        anomalies.col(j) += spec.anomaly_scale * dir;
    }

    out.test.x.resize(spec.d, n_test_normal + spec.n_anomaly);
    out.test.x << test_normal, anomalies;
    out.test.attack.assign(static_cast<std::size_t>(n_test_normal), false);
    out.test.attack.resize(static_cast<std::size_t>(n_test_normal + spec.n_anomaly), true);
    out.test.categories.assign(static_cast<std::size_t>(n_test_normal), "normal");
    out.test.categories.resize(out.test.attack.size(), "anomaly");
    return out;
}

std::vector<GatewayDatasetPtr> synth_gateways(const SynthData& data, std::size_t n_gateways) {
    const Eigen::VectorXd key = data.train.row(0).transpose();
    return partition_noniid(data.train, std::span<const double>(key.data(), key.size()),
                            n_gateways);
}

// ---------------------------------------------------------------------------
// FSSP1 container

namespace {

constexpr char kMagic[5] = {'F', 'S', 'S', 'P', '1'};

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

}  // namespace

std::string encode_matrix(const Matrix& m) {
    std::string out(kMagic, sizeof(kMagic));
    out.reserve(sizeof(kMagic) + 16 + 8 * static_cast<std::size_t>(m.size()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) put_le<double>(out, m(i, j));
    return out;
}

Matrix decode_matrix(std::string_view bytes) {
    constexpr std::size_t header = sizeof(kMagic) + 16;
    if (bytes.size() < header || bytes.substr(0, sizeof(kMagic)) != std::string_view(kMagic, 5)) {
        throw DataError("matrix container: bad magic");
    }
    const auto rows = get_le<std::uint64_t>(bytes, 5);
    const auto cols = get_le<std::uint64_t>(bytes, 13);
    if (rows > (1ULL << 32) || cols > (1ULL << 32) ||
        bytes.size() != header + 8 * rows * cols) {
        throw DataError("matrix container: size does not match header");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::size_t off = header;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i, off += 8) m(i, j) = get_le<double>(bytes, off);
    return m;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    const std::string bytes = encode_matrix(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_matrix(ss.str());
}

}  // namespace fedssp

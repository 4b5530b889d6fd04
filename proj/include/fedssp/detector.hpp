#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedssp {

using Matrix = Eigen::MatrixXd;

// Percentages; the positive class is "attack".
struct DetectionReport {
    double threshold = 0.0;
    std::vector<double> scores;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    double acc = 0.0;
    double pre = 0.0;
    double recall = 0.0;
    double fnr = 0.0;
    double f1 = 0.0;
    // Set when the corresponding ratio had a zero denominator and was reported as 0.
    bool pre_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;

    std::size_t total() const { return tp + fp + tn + fn; }
};

// Squared distance of every column of `x` to span(z). `z` is orthonormalized by thin QR first.
std::vector<double> score(const Matrix& z, const Matrix& x);

// Empirical quantile with linear interpolation between order statistics.
double fit_threshold(std::span<const double> train_scores, double quantile = 0.95);

// attack iff score > threshold
std::vector<bool> classify(std::span<const double> scores, double threshold);

DetectionReport compute_metrics(const std::vector<bool>& pred, const std::vector<bool>& truth);

// acc, pre, recall, fnr, f1, threshold, tp, fp, tn, fn (plus degenerate flags).
nlohmann::json report_json(const DetectionReport& report);

}  // namespace fedssp

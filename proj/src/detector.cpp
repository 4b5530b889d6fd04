#include "fedssp/detector.hpp"

#include "fedssp/errors.hpp"
#include "fedssp/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedssp {

std::vector<double> score(const Matrix& z, const Matrix& x) {
    if (z.rows() != x.rows()) {
        throw DimensionError("score: Z has " + std::to_string(z.rows()) + " rows, data has " +
                             std::to_string(x.rows()) + " features");
    }
    const Matrix q = ProjectionMatrix::orthonormalize(z).matrix();
    const Matrix residual = x - q * (q.transpose() * x);
    std::vector<double> out(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) out[static_cast<std::size_t>(j)] = residual.col(j).squaredNorm();
    return out;
}

double fit_threshold(std::span<const double> train_scores, double quantile) {
    if (train_scores.empty()) throw DataError("fit_threshold: no training scores");
    if (!(quantile > 0.0 && quantile <= 1.0)) {
        throw ConfigError("fit_threshold: quantile must lie in (0, 1]");
    }
    std::vector<double> sorted(train_scores.begin(), train_scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = quantile * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<bool> classify(std::span<const double> scores, double threshold) {
    std::vector<bool> labels;
    labels.reserve(scores.size());
    for (double s : scores) labels.push_back(s > threshold);
    return labels;
}

DetectionReport compute_metrics(const std::vector<bool>& pred, const std::vector<bool>& truth) {
    if (pred.size() != truth.size()) {
        throw DimensionError("compute_metrics: " + std::to_string(pred.size()) +
                             " predictions for " + std::to_string(truth.size()) + " labels");
    }
    if (pred.empty()) throw DataError("compute_metrics: no samples");

    DetectionReport r;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i]) {
            (pred[i] ? r.tp : r.fn)++;
        } else {
            (pred[i] ? r.fp : r.tn)++;
        }
    }
    const auto pct = [](std::size_t num, std::size_t den) {
        return 100.0 * static_cast<double>(num) / static_cast<double>(den);
    };
    r.acc = pct(r.tp + r.tn, r.total());
    if (r.tp + r.fp > 0) {
        r.pre = pct(r.tp, r.tp + r.fp);
    } else {
        r.pre_degenerate = true;
    }
    if (r.tp + r.fn > 0) {
        r.recall = pct(r.tp, r.tp + r.fn);
        r.fnr = pct(r.fn, r.tp + r.fn);
    } else {
        r.recall_degenerate = true;
    }
    if (r.pre + r.recall > 0.0) {
        r.f1 = 2.0 * r.pre * r.recall / (r.pre + r.recall);
    } else {
        r.f1_degenerate = true;
    }
    return r;
}

nlohmann::json report_json(const DetectionReport& r) {
    nlohmann::json j = {{"acc", r.acc},       {"pre", r.pre}, {"recall", r.recall},
                        {"fnr", r.fnr},       {"f1", r.f1},   {"threshold", r.threshold},
                        {"tp", r.tp},         {"fp", r.fp},   {"tn", r.tn},
                        {"fn", r.fn}};
    j["degenerate"] = {{"pre", r.pre_degenerate},
                       {"recall", r.recall_degenerate},
                       {"f1", r.f1_degenerate}};
    return j;
}

}  // namespace fedssp

#include "fedssp/detector.hpp"
#include "fedssp/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <numeric>

using namespace fedssp;

TEST_CASE("score") {
    const Matrix q = oracle::random_orthonormal(6, 2, 1);
    std::mt19937_64 rng(2);

    const Matrix inside = q * oracle::gaussian(2, 5, rng);
    for (double s : score(q, inside)) CHECK(s <= 1e-20 + 1e-12 * inside.squaredNorm());

    const Matrix g = oracle::gaussian(6, 5, rng);
    const Matrix outside = g - q * (q.transpose() * g);
    const auto s_out = score(q, outside);
    for (Eigen::Index j = 0; j < 5; ++j) {
        CHECK(s_out[static_cast<std::size_t>(j)] ==
              doctest::Approx(outside.col(j).squaredNorm()).epsilon(1e-12));
    }

    const Matrix x = oracle::gaussian(6, 20, rng);
    const auto s = score(q, x);
    const Matrix residual = (Matrix::Identity(6, 6) - q * q.transpose()) * x;
    for (Eigen::Index j = 0; j < 20; ++j) {
        CHECK(std::abs(s[static_cast<std::size_t>(j)] - residual.col(j).squaredNorm()) <= 1e-10);
    }

    SUBCASE("basis invariance and non-orthonormal Z") {
        const Matrix r = oracle::random_orthonormal(2, 2, 3);
        const auto rotated = score(q * r, x);
        Matrix skewed(2, 2);
        skewed << 2.0, 0.3, 0.0, 0.5;
        const auto scaled = score(q * skewed, x);
        for (std::size_t j = 0; j < s.size(); ++j) {
            CHECK(std::abs(rotated[j] - s[j]) <= 1e-10);
            CHECK(std::abs(scaled[j] - s[j]) <= 1e-10);
        }
    }
    CHECK_THROWS_AS(score(q, Matrix::Zero(5, 3)), DimensionError);
}

TEST_CASE("fit_threshold") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 1.0);
    CHECK(oracle::quantile(v, 0.95) == doctest::Approx(95.05).epsilon(1e-14));
    CHECK(fit_threshold(v, 0.95) == doctest::Approx(95.05).epsilon(1e-14));
    CHECK(fit_threshold(v, 1.0) == 100.0);
    CHECK(fit_threshold(std::vector<double>(7, 2.5), 0.3) == 2.5);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<double> r(37);
    for (auto& x : r) x = u(rng);
    for (double p : {0.01, 0.5, 0.9, 0.95}) {
        CHECK(fit_threshold(r, p) == doctest::Approx(oracle::quantile(r, p)).epsilon(1e-14));
    }

    CHECK_THROWS_AS(fit_threshold(std::vector<double>{}, 0.95), DataError);
    CHECK_THROWS_AS(fit_threshold(v, 0.0), ConfigError);
}

TEST_CASE("classify") {
    const std::vector<double> s{1.0, 2.0, 2.0 + 1e-12, 0.5};
    CHECK(classify(s, 2.0) == std::vector<bool>{false, false, true, false});
    CHECK(classify(std::vector<double>{}, 1.0).empty());
}

TEST_CASE("compute_metrics") {
    SUBCASE("perfect predictions") {
        const std::vector<bool> truth{true, false, true, false};
        const auto r = compute_metrics(truth, truth);
        CHECK(r.acc == 100.0);
        CHECK(r.fnr == 0.0);
        CHECK(r.f1 == 100.0);
    }
    SUBCASE("90 TP, 10 FP") {
        std::vector<bool> pred(100, true);
        std::vector<bool> truth(100, true);
        for (int i = 0; i < 10; ++i) truth[static_cast<std::size_t>(i)] = false;
        const auto r = compute_metrics(pred, truth);
        CHECK(r.tp == 90);
        CHECK(r.fp == 10);
        CHECK(r.pre == doctest::Approx(90.0));
        CHECK(r.recall == doctest::Approx(100.0));
        CHECK(r.f1 == doctest::Approx(2.0 * 90.0 * 100.0 / 190.0).epsilon(1e-14));
        CHECK(r.f1 == doctest::Approx(94.7368).epsilon(1e-6));
    }
    SUBCASE("no positive labels is flagged") {
        const auto r = compute_metrics({false, true}, {false, false});
        CHECK(r.recall_degenerate);
        CHECK(r.recall == 0.0);
        CHECK(r.fnr == 0.0);
        CHECK(r.fp == 1);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_metrics({true}, {true, false}), DimensionError);
        CHECK_THROWS_AS(compute_metrics({}, {}), DataError);
    }
    SUBCASE("identities on random labels") {
        std::mt19937_64 rng(9);
        std::bernoulli_distribution coin(0.5);
        for (int trial = 0; trial < 500; ++trial) {
            std::vector<bool> pred(50), truth(50);
            for (std::size_t i = 0; i < 50; ++i) {
                pred[i] = coin(rng);
                truth[i] = coin(rng);
            }
            const auto r = compute_metrics(pred, truth);
            CHECK(r.total() == 50);
            CHECK(r.acc >= 0.0);
            CHECK(r.acc <= 100.0);
            if (!r.recall_degenerate) CHECK(std::abs(r.recall + r.fnr - 100.0) <= 1e-9);
            if (!r.f1_degenerate) {
                CHECK(r.f1 >= std::min(r.pre, r.recall) - 1e-9);
                CHECK(r.f1 <= std::max(r.pre, r.recall) + 1e-9);
            }
        }
    }
}

TEST_CASE("raising the threshold trades recall for FNR") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> s(200);
    std::vector<bool> truth(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
        truth[i] = i % 3 == 0;
        s[i] = g(rng) + (truth[i] ? 1.5 : 0.0);
    }
    double prev_recall = 101.0;
    double prev_fnr = -1.0;
    for (double t = -3.0; t <= 4.0; t += 0.25) {
        const auto r = compute_metrics(classify(s, t), truth);
        CHECK(r.recall <= prev_recall);
        CHECK(r.fnr >= prev_fnr);
        prev_recall = r.recall;
        prev_fnr = r.fnr;
    }
}

TEST_CASE("report_json field names") {
    DetectionReport r;
    r.tp = 3;
    r.threshold = 1.25;
    const auto j = report_json(r);
    for (const char* key : {"acc", "pre", "recall", "fnr", "f1", "threshold", "tp", "fp", "tn", "fn"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["tp"] == 3);
    CHECK(j["threshold"] == 1.25);
}

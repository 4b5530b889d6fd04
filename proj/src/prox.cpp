#include "fedssp/prox.hpp"

#include "fedssp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedssp {

void ProxParams::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("prox: lambda must be finite and nonnegative, got " +
                          std::to_string(lambda));
    }
    if (!(q >= 0.0 && q < 1.0)) {
        throw ConfigError("prox: exponent must lie in [0, 1), got " + std::to_string(q));
    }
}

double c_value(double lambda, double q) {
    if (lambda <= 0.0) return 0.0;
    return std::pow(2.0 * lambda * (1.0 - q), 1.0 / (2.0 - q));
}

double kappa_value(double lambda, double q) {
    if (lambda <= 0.0) return 0.0;
    // Value of a where lambda c^q + (c - a)^2 / 2 equals a^2 / 2, i.e. a = c + lambda q c^(q-1).
    // The exponent on 2(1-q) is (q-1)/(2-q); (q+1)/(q-2) only coincides with it at q = 0 and 1/2.
    return (2.0 - q) * std::pow(lambda, 1.0 / (2.0 - q)) *
           std::pow(2.0 * (1.0 - q), (q - 1.0) / (2.0 - q));
}

double varpi_root(double a, double lambda, double q) {
    auto phi = [&](double x) { return x - a + lambda * q * std::pow(x, q - 1.0); };
    auto dphi = [&](double x) { return 1.0 + lambda * q * (q - 1.0) * std::pow(x, q - 2.0); };

    const double tol = 1e-12 * std::max(1.0, a);
    double x = a;
    bool newton_ok = false;
    for (int it = 0; it < 100; ++it) {
        const double slope = dphi(x);
        if (!(slope > 0.0)) break;
        const double next = x - phi(x) / slope;
        if (!std::isfinite(next) || next <= 0.0 || next > a) break;
        const double step = std::abs(next - x);
        x = next;
        if (step <= tol) {
            newton_ok = true;
            break;
        }
    }

    if (!newton_ok) {
        // phi(c) <= 0 <= phi(a) in the nondegenerate region.
        double lo = std::min(c_value(lambda, q), a);
        double hi = a;
        for (int it = 0; it < 200 && hi - lo > tol; ++it) {
            const double mid = 0.5 * (lo + hi);
            (phi(mid) > 0.0 ? hi : lo) = mid;
        }
        x = 0.5 * (lo + hi);
    }

    const double residual = std::abs(phi(x));
    if (!std::isfinite(x) || residual > 1e-8 * std::max(1.0, a)) {
        throw NumericalError("varpi_root: no root found for a=" + std::to_string(a) +
                             " lambda=" + std::to_string(lambda) + " q=" + std::to_string(q));
    }
    return x;
}

double prox_scalar(double a, const ProxParams& params) {
    const double lambda = params.lambda;
    const double q = params.q;
    if (lambda == 0.0) return a;

    const double mag = std::abs(a);
    const double kappa = kappa_value(lambda, q);
    if (mag <= kappa) return 0.0;
    if (q == 0.0) return a;
    return std::copysign(varpi_root(mag, lambda, q), a);
}

Eigen::MatrixXd prox_elementwise(const Eigen::MatrixXd& a, const ProxParams& params) {
    return a.unaryExpr([&](double x) { return prox_scalar(x, params); });
}

Eigen::MatrixXd prox_rowwise(const Eigen::MatrixXd& b, const ProxParams& params) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(b.rows(), b.cols());
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        const double norm = b.row(i).norm();
        if (norm == 0.0) continue;
        const double shrunk = prox_scalar(norm, params);
        if (shrunk != 0.0) out.row(i) = (shrunk / norm) * b.row(i);
    }
    return out;
}

}  // namespace fedssp

#pragma once

#include <Eigen/Dense>

namespace fedssp {

// Penalty weight and exponent of  argmin_x lambda*|x|^q + (x - a)^2 / 2.
// For the row-wise operator `q` plays the role of p.
struct ProxParams {
    double lambda = 0.0;
    double q = 0.0;

    void validate() const;  // throws ConfigError unless lambda >= 0 and 0 <= q < 1
};

// Magnitude of the smallest nonzero output: (2 lambda (1-q))^(1/(2-q)).
double c_value(double lambda, double q);

// Threshold below which the prox returns 0:
// (2-q) lambda^(1/(2-q)) (2(1-q))^((q+1)/(q-2)).
double kappa_value(double lambda, double q);

// Largest positive root of x - a + lambda q x^(q-1) = 0 for a > kappa, q in (0,1).
// Newton from x0 = a; bisection on [c, a] if Newton misbehaves.
double varpi_root(double a, double lambda, double q);

// Scalar l_q thresholding. At |a| == kappa the zero solution is returned.
double prox_scalar(double a, const ProxParams& params);

Eigen::MatrixXd prox_elementwise(const Eigen::MatrixXd& a, const ProxParams& params);

// Applies prox_scalar to each row norm and rescales the row; rows never rotate.
Eigen::MatrixXd prox_rowwise(const Eigen::MatrixXd& b, const ProxParams& params);

}  // namespace fedssp

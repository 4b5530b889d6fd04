#pragma once

#include <Eigen/Dense>

#include <vector>

namespace fedssp {

using Matrix = Eigen::MatrixXd;

// A d x m matrix with orthonormal columns.
class ProjectionMatrix {
public:
    static constexpr double kOrthonormalTol = 1e-8;

    // Wraps an already orthonormal matrix; throws DimensionError if W^T W
    // deviates from the identity by more than kOrthonormalTol.
    static ProjectionMatrix from_orthonormal(Matrix w);

    // Thin-QR Q factor of `a` with nonnegative R diagonal.
    static ProjectionMatrix orthonormalize(const Matrix& a);

    const Matrix& matrix() const { return w_; }
    Eigen::Index dim() const { return w_.rows(); }
    Eigen::Index rank() const { return w_.cols(); }

private:
    explicit ProjectionMatrix(Matrix w) : w_(std::move(w)) {}
    Matrix w_;
};

// max |W^T W - I|
double orthonormality_error(const Matrix& w);

struct TangentDirection {
    Matrix entries;
};

// Data of the W-block subproblem:
//   g(W) = data_const - Tr(W^T S W) + b1/2|W-U|^2 + b2/2|W-V|^2
//          + b3/2|W-Z|^2 + tau1/2|W-W_prev|^2
struct WSubproblemContext {
    Matrix gram;  // S = X X^T
    Matrix u;
    Matrix v;
    Matrix z;
    Matrix w_prev;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double beta3 = 0.0;
    double tau1 = 0.0;
    double data_const = 0.0;  // Tr(X^T X)
};

Matrix sym(const Matrix& a);

TangentDirection project_tangent(const ProjectionMatrix& w, const Matrix& g);

Matrix euclidean_gradient(const Matrix& w, const WSubproblemContext& ctx);
double objective_g(const Matrix& w, const WSubproblemContext& ctx);

ProjectionMatrix qr_retract(const ProjectionMatrix& w, const Matrix& d, double t);

TangentDirection transport(const ProjectionMatrix& w_new, const Matrix& xi_old);

struct CgOptions {
    int max_iters = 100;
    double grad_tol = 1e-6;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 30;
    double initial_step = 1.0;
};

struct CgResult {
    ProjectionMatrix w;
    int iterations = 0;
    bool stalled = false;  // line search exhausted its backtracks
    double grad_norm = 0.0;
    std::vector<double> objective_trace;  // g at the start and after each accepted step
};

// Riemannian Fletcher-Reeves CG with Armijo backtracking and QR retraction.
CgResult cg_minimize_w(const ProjectionMatrix& w_init, const WSubproblemContext& ctx,
                       const CgOptions& opts = {});

}  // namespace fedssp

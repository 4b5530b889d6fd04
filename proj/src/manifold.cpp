#include "fedssp/manifold.hpp"

#include "fedssp/errors.hpp"

#include <cmath>
#include <string>

namespace fedssp {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()) + ")");
    }
}

void require_context(const Matrix& w, const WSubproblemContext& ctx) {
    const auto d = w.rows();
    if (ctx.gram.rows() != d || ctx.gram.cols() != d) {
        throw DimensionError("W-subproblem: gram matrix must be d x d");
    }
    require_same_shape(w, ctx.u, "W-subproblem U");
    require_same_shape(w, ctx.v, "W-subproblem V");
    require_same_shape(w, ctx.z, "W-subproblem Z");
    require_same_shape(w, ctx.w_prev, "W-subproblem W_prev");
}

// Thin QR with the sign of each column chosen so that diag(R) >= 0.
Matrix thin_q(const Matrix& a) {
    const auto d = a.rows();
    const auto m = a.cols();
    if (m == 0 || m > d) {
        throw DimensionError("orthonormalize: need 1 <= m <= d");
    }
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(d, m);
    const auto& r = qr.matrixQR();

    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < m; ++j) {
        const double rjj = r(j, j);
        if (!std::isfinite(rjj) || std::abs(rjj) <= 1e-12 * scale) {
            throw RetractionError("thin QR: matrix is rank deficient (|R(" + std::to_string(j) +
                                  "," + std::to_string(j) + ")| = " + std::to_string(rjj) + ")");
        }
        if (rjj < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

}  // namespace

ProjectionMatrix ProjectionMatrix::from_orthonormal(Matrix w) {
    if (w.rows() == 0 || w.cols() == 0 || w.cols() > w.rows()) {
        throw DimensionError("ProjectionMatrix: need 1 <= m <= d");
    }
    const double err = orthonormality_error(w);
    if (!(err <= kOrthonormalTol)) {
        throw DimensionError("ProjectionMatrix: columns not orthonormal (max |W^T W - I| = " +
                             std::to_string(err) + ")");
    }
    return ProjectionMatrix(std::move(w));
}

ProjectionMatrix ProjectionMatrix::orthonormalize(const Matrix& a) {
    return ProjectionMatrix(thin_q(a));
}

double orthonormality_error(const Matrix& w) {
    const Matrix gram = w.transpose() * w;
    return (gram - Matrix::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff();
}

Matrix sym(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("sym: matrix must be square");
    return 0.5 * (a + a.transpose());
}

TangentDirection project_tangent(const ProjectionMatrix& w, const Matrix& g) {
    const Matrix& base = w.matrix();
    require_same_shape(base, g, "project_tangent");
    return {g - base * sym(base.transpose() * g)};
}

Matrix euclidean_gradient(const Matrix& w, const WSubproblemContext& ctx) {
    require_context(w, ctx);
    return -2.0 * (ctx.gram * w) + ctx.beta1 * (w - ctx.u) + ctx.beta2 * (w - ctx.v) +
           ctx.beta3 * (w - ctx.z) + ctx.tau1 * (w - ctx.w_prev);
}

double objective_g(const Matrix& w, const WSubproblemContext& ctx) {
    require_context(w, ctx);
    const double captured = (w.transpose() * ctx.gram * w).trace();
    return ctx.data_const - captured + 0.5 * ctx.beta1 * (w - ctx.u).squaredNorm() +
           0.5 * ctx.beta2 * (w - ctx.v).squaredNorm() +
           0.5 * ctx.beta3 * (w - ctx.z).squaredNorm() +
           0.5 * ctx.tau1 * (w - ctx.w_prev).squaredNorm();
}

ProjectionMatrix qr_retract(const ProjectionMatrix& w, const Matrix& d, double t) {
    require_same_shape(w.matrix(), d, "qr_retract");
    if (!std::isfinite(t)) throw NumericalError("qr_retract: non-finite step");
    return ProjectionMatrix::orthonormalize(w.matrix() + t * d);
}

TangentDirection transport(const ProjectionMatrix& w_new, const Matrix& xi_old) {
    return project_tangent(w_new, xi_old);
}

CgResult cg_minimize_w(const ProjectionMatrix& w_init, const WSubproblemContext& ctx,
                       const CgOptions& opts) {
    CgResult res{w_init, 0, false, 0.0, {}};
    double g = objective_g(w_init.matrix(), ctx);
    if (!std::isfinite(g)) throw NumericalError("cg_minimize_w: non-finite initial objective");
    res.objective_trace.push_back(g);

    Matrix xi_prev;
    double eta_sq_prev = 0.0;

    for (int k = 0; k < opts.max_iters; ++k) {
        const ProjectionMatrix& w = res.w;
        const Matrix eta = project_tangent(w, euclidean_gradient(w.matrix(), ctx)).entries;
        const double eta_sq = eta.squaredNorm();
        res.grad_norm = std::sqrt(eta_sq);
        if (!std::isfinite(eta_sq)) throw NumericalError("cg_minimize_w: non-finite gradient");
        if (res.grad_norm <= opts.grad_tol) break;

        Matrix xi = -eta;
        if (k > 0 && eta_sq_prev > 0.0) {
            const double fr = eta_sq / eta_sq_prev;
            xi += fr * transport(w, xi_prev).entries;
        }
        double slope = (eta.array() * xi.array()).sum();
        if (!(slope < 0.0)) {
            // restart with steepest descent
            xi = -eta;
            slope = -eta_sq;
        }

        double t = opts.initial_step;
        bool accepted = false;
        for (int b = 0; b <= opts.max_backtracks; ++b, t *= opts.backtrack) {
            ProjectionMatrix trial = w;
            try {
                trial = qr_retract(w, xi, t);
            } catch (const RetractionError&) {
                continue;
            }
            const double g_trial = objective_g(trial.matrix(), ctx);
            if (!std::isfinite(g_trial)) continue;
            if (g_trial <= g + opts.armijo_c * t * slope) {
                res.w = std::move(trial);
                g = g_trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.stalled = true;
            break;
        }
        res.objective_trace.push_back(g);
        ++res.iterations;
        xi_prev = std::move(xi);
        eta_sq_prev = eta_sq;
    }
    return res;
}

}  // namespace fedssp

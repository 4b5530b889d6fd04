#include "fedssp/local_solver.hpp"

#include "fedssp/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace fedssp {

namespace {

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ConfigError(std::string(name) + " must be positive and finite");
    }
}

void require_nonnegative(double value, const char* name) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
        throw ConfigError(std::string(name) + " must be nonnegative and finite");
    }
}

void require_exponent(double value, const char* name) {
    if (!(value >= 0.0 && value < 1.0)) {
        throw ConfigError(std::string(name) + " must lie in [0, 1)");
    }
}

}  // namespace

void HyperParams::validate(Eigen::Index d) const {
    require_nonnegative(lambda1, "lambda1");
    require_nonnegative(lambda2, "lambda2");
    require_exponent(p, "p");
    require_exponent(q, "q");
    require_positive(beta1, "beta1");
    require_positive(beta2, "beta2");
    require_positive(beta3, "beta3");
    require_positive(tau1, "tau1");
    require_positive(tau2, "tau2");
    require_positive(tau3, "tau3");
    require_positive(tau4, "tau4");
    if (m < 1) throw ConfigError("m must be at least 1");
    if (d > 0 && m > d) {
        throw ConfigError("m = " + std::to_string(m) + " exceeds feature dimension " +
                          std::to_string(d));
    }
    if (rounds < 0) throw ConfigError("rounds must be nonnegative");
    require_nonnegative(outer_tol, "outer_tol");
    if (inner.max_iters < 0) throw ConfigError("inner max_iters must be nonnegative");
    require_nonnegative(inner.grad_tol, "grad_tol");
    if (!(inner.armijo_c > 0.0 && inner.armijo_c < 1.0)) {
        throw ConfigError("armijo_c must lie in (0, 1)");
    }
    if (!(inner.backtrack > 0.0 && inner.backtrack < 1.0)) {
        throw ConfigError("backtrack factor must lie in (0, 1)");
    }
    if (inner.max_backtracks < 0) throw ConfigError("max_backtracks must be nonnegative");
    require_positive(inner.initial_step, "initial_step");
}

Matrix initial_projection(Eigen::Index d, Eigen::Index m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix g(d, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < d; ++i) g(i, j) = gauss(rng);
    return ProjectionMatrix::orthonormalize(g).matrix();
}

GatewayState make_gateway_state(GatewayDatasetPtr data, const Matrix& init) {
    if (!data) throw DataError("gateway state needs a dataset");
    if (data->dim() != init.rows()) {
        throw DimensionError("gateway " + std::to_string(data->gateway_id) +
                             ": data dimension differs from the initial projection");
    }
    GatewayState s;
    s.gateway_id = data->gateway_id;
    s.data = std::move(data);
    s.w = init;
    s.u = init;
    s.v = init;
    return s;
}

WSubproblemContext w_context(const GatewayState& state, const Matrix& z, const HyperParams& hp) {
    WSubproblemContext ctx;
    ctx.gram = state.data->gram;
    ctx.data_const = state.data->data_const;
    ctx.u = state.u;
    ctx.v = state.v;
    ctx.z = z;
    ctx.w_prev = state.w;
    ctx.beta1 = hp.beta1;
    ctx.beta2 = hp.beta2;
    ctx.beta3 = hp.beta3;
    ctx.tau1 = hp.tau1;
    return ctx;
}

ProjectionMatrix update_w(const GatewayState& state, const Matrix& z, const HyperParams& hp) {
    const auto ctx = w_context(state, z, hp);
    return cg_minimize_w(ProjectionMatrix::from_orthonormal(state.w), ctx, hp.inner).w;
}

Matrix update_u(const GatewayState& state, const Matrix& w_new, const HyperParams& hp) {
    if (w_new.rows() != state.u.rows() || w_new.cols() != state.u.cols()) {
        throw DimensionError("update_u: shape mismatch");
    }
    const Matrix a = (hp.beta1 * w_new + hp.tau2 * state.u) / (hp.beta1 + hp.tau2);
    return prox_elementwise(a, hp.elementwise_prox());
}

Matrix update_v(const GatewayState& state, const Matrix& w_new, const HyperParams& hp) {
    if (w_new.rows() != state.v.rows() || w_new.cols() != state.v.cols()) {
        throw DimensionError("update_v: shape mismatch");
    }
    const Matrix b = (hp.beta2 * w_new + hp.tau3 * state.v) / (hp.beta2 + hp.tau3);
    return prox_rowwise(b, hp.rowwise_prox());
}

GatewayState local_round(const GatewayState& state, const Matrix& z, const HyperParams& hp) {
    GatewayState next = state;
    next.w = update_w(state, z, hp).matrix();
    next.u = update_u(state, next.w, hp);
    next.v = update_v(state, next.w, hp);
    return next;
}

double row_norm_penalty(const Matrix& v, double p) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double norm = v.row(i).norm();
        if (norm == 0.0) continue;
        total += (p == 0.0) ? 1.0 : std::pow(norm, p);
    }
    return total;
}

double entry_norm_penalty(const Matrix& u, double q) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            const double a = std::abs(u(i, j));
            if (a == 0.0) continue;
            total += (q == 0.0) ? 1.0 : std::pow(a, q);
        }
    }
    return total;
}

double local_objective_without_consensus(const GatewayState& state, const HyperParams& hp) {
    const Matrix& w = state.w;
    const double err = orthonormality_error(w);
    if (!(err <= ProjectionMatrix::kOrthonormalTol)) {
        throw InfeasibleError("local objective: W of gateway " + std::to_string(state.gateway_id) +
                              " is off the manifold (max |W^T W - I| = " + std::to_string(err) +
                              ")");
    }
    const auto& data = *state.data;
    const double reconstruction = data.data_const - (w.transpose() * data.gram * w).trace();
    return reconstruction + hp.lambda1 * row_norm_penalty(state.v, hp.p) +
           hp.lambda2 * entry_norm_penalty(state.u, hp.q) +
           0.5 * hp.beta1 * (w - state.u).squaredNorm() +
           0.5 * hp.beta2 * (w - state.v).squaredNorm();
}

double local_objective(const GatewayState& state, const Matrix& z, const HyperParams& hp) {
    if (z.rows() != state.w.rows() || z.cols() != state.w.cols()) {
        throw DimensionError("local_objective: Z shape mismatch");
    }
    return local_objective_without_consensus(state, hp) +
           0.5 * hp.beta3 * (state.w - z).squaredNorm();
}

}  // namespace fedssp

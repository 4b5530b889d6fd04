#pragma once

#include "fedssp/data.hpp"
#include "fedssp/manifold.hpp"
#include "fedssp/prox.hpp"

#include <cstdint>

namespace fedssp {

struct HyperParams {
    double lambda1 = 0.1;  // row-wise l_{2,p} weight
    double lambda2 = 0.1;  // element-wise l_q weight
    double p = 0.5;
    double q = 0.5;
    double beta1 = 1.0;
    double beta2 = 1.0;
    double beta3 = 1.0;
    double tau1 = 1e-3;
    double tau2 = 1e-3;
    double tau3 = 1e-3;
    double tau4 = 1e-3;
    int m = 5;
    int rounds = 100;
    double outer_tol = 1e-6;  // relative change of Z between rounds
    CgOptions inner;

    // Throws ConfigError on any out-of-range value. `d` = feature dimension, 0 to skip.
    void validate(Eigen::Index d = 0) const;

    ProxParams elementwise_prox() const { return {lambda2 / (beta1 + tau2), q}; }
    ProxParams rowwise_prox() const { return {lambda1 / (beta2 + tau3), p}; }
};

struct GatewayState {
    int gateway_id = 0;
    GatewayDatasetPtr data;
    Matrix w;
    Matrix u;
    Matrix v;
};

// Orthonormal d x m starting point shared by all gateways and Z: Q of a seeded Gaussian.
Matrix initial_projection(Eigen::Index d, Eigen::Index m, std::uint64_t seed);

// W = U = V = init.
GatewayState make_gateway_state(GatewayDatasetPtr data, const Matrix& init);

WSubproblemContext w_context(const GatewayState& state, const Matrix& z, const HyperParams& hp);

ProjectionMatrix update_w(const GatewayState& state, const Matrix& z, const HyperParams& hp);
Matrix update_u(const GatewayState& state, const Matrix& w_new, const HyperParams& hp);
Matrix update_v(const GatewayState& state, const Matrix& w_new, const HyperParams& hp);

// W, then U, then V (Gauss-Seidel); Z held fixed.
GatewayState local_round(const GatewayState& state, const Matrix& z, const HyperParams& hp);

// sum_i |row_i|_2^p; rows are counted when p == 0.
double row_norm_penalty(const Matrix& v, double p);
// sum_ij |v_ij|^q; nonzeros are counted when q == 0.
double entry_norm_penalty(const Matrix& u, double q);

// Reconstruction error plus sparsity and coupling terms, excluding beta3/2 |W - Z|^2.
// Throws InfeasibleError when W is off the manifold.
double local_objective_without_consensus(const GatewayState& state, const HyperParams& hp);

double local_objective(const GatewayState& state, const Matrix& z, const HyperParams& hp);

}  // namespace fedssp

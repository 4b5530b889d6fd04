#pragma once

#include "fedssp/local_solver.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedssp {

// Gateway -> coordinator. Carries the local projection only, never samples.
struct ModelUpdateMsg {
    int gateway_id = 0;
    int round = 0;
    Matrix w;
    // Local objective without the consensus term, so the coordinator can report
    // the global objective at the new Z without seeing any data.
    double local_value = 0.0;
};

// Coordinator -> gateways.
struct GlobalModelMsg {
    int round = 0;
    Matrix z;
};

nlohmann::json to_json(const ModelUpdateMsg& msg);
nlohmann::json to_json(const GlobalModelMsg& msg);

struct RoundRecord {
    int round = 0;                          // 1-based
    double global_objective = 0.0;          // sum_t f(W_t, U_t, V_t, Z) at the new Z
    double consensus_residual = 0.0;        // max_t |W_t - Z|_F
    double max_orthonormality_error = 0.0;  // max_t max |W_t^T W_t - I|
    double z_change = 0.0;                  // |Z_new - Z_old|_F / |Z_old|_F
    std::vector<double> local_objectives;   // ordered by gateway id
    double wall_ms = 0.0;                   // not exported unless asked
};

using RoundHistory = std::vector<RoundRecord>;

// One JSON object per line. The first line is {"config": ...} when `header` is non-null.
void write_history(std::ostream& out, const RoundHistory& history,
                   const nlohmann::json& header = nullptr, bool include_timing = false);
void write_history(const std::filesystem::path& path, const RoundHistory& history,
                   const nlohmann::json& header = nullptr, bool include_timing = false);

Matrix aggregate_z(const std::vector<Matrix>& w_list, const Matrix& z_prev, double beta3,
                   double tau4);

double global_objective(const std::vector<GatewayState>& gateways, const Matrix& z,
                        const HyperParams& hp);

struct TransportOptions {
    std::chrono::microseconds latency{0};  // injected per message
    // Coordinator waits at most this long for each reply; nullopt waits forever.
    std::optional<std::chrono::milliseconds> reply_timeout;
    // Fault injection: gateway ids that never answer.
    std::vector<int> silent_gateways;
    // Sees every message in serialized form, in the order the coordinator handles them.
    std::function<void(const nlohmann::json&)> tap;
};

struct FederationResult {
    Matrix z;
    RoundHistory history;
    std::vector<GatewayState> gateways;  // final local states
    bool converged = false;              // stopped by outer_tol
};

// Synchronous rounds: broadcast Z, every gateway runs one local_round on its own worker thread
// and replies with its W, the coordinator aggregates once all N replies are in.
// `z0` defaults to the common initializer the gateways start from.
FederationResult run_rounds(std::vector<GatewayState> gateways, const HyperParams& hp,
                            const TransportOptions& transport = {},
                            std::optional<Matrix> z0 = std::nullopt);

}  // namespace fedssp

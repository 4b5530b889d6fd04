#include "fedssp/federation.hpp"

#include "fedssp/channel.hpp"
#include "fedssp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <thread>

namespace fedssp {

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

struct Reply {
    ModelUpdateMsg msg;
    std::exception_ptr error;
};

struct Worker {
    GatewayState state;
    Channel<GlobalModelMsg> inbox;
    bool silent = false;

    Worker(GatewayState s, std::chrono::microseconds latency, bool mute)
        : state(std::move(s)), inbox(latency), silent(mute) {}
};

void gateway_loop(Worker& worker, Channel<Reply>& uplink, const HyperParams& hp) {
    while (auto msg = worker.inbox.receive()) {
        if (worker.silent) continue;
        Reply reply;
        try {
            worker.state = local_round(worker.state, msg->z, hp);
            reply.msg.gateway_id = worker.state.gateway_id;
            reply.msg.round = msg->round;
            reply.msg.w = worker.state.w;
            reply.msg.local_value = local_objective_without_consensus(worker.state, hp);
        } catch (...) {
            reply.msg.gateway_id = worker.state.gateway_id;
            reply.msg.round = msg->round;
            reply.error = std::current_exception();
        }
        if (!uplink.send(std::move(reply))) return;
    }
}

// Closes every channel and joins the gateway threads, also on the error path.
class WorkerPool {
public:
    WorkerPool(std::vector<std::unique_ptr<Worker>>& workers, Channel<Reply>& uplink,
               const HyperParams& hp)
        : workers_(workers), uplink_(uplink) {
        threads_.reserve(workers.size());
        for (auto& w : workers) {
            threads_.emplace_back([&worker = *w, &uplink, &hp] { gateway_loop(worker, uplink, hp); });
        }
    }
    ~WorkerPool() { shutdown(); }

    void shutdown() {
        for (auto& w : workers_) w->inbox.close();
        uplink_.close();
        for (auto& t : threads_) {
            if (t.joinable()) t.join();
        }
    }

private:
    std::vector<std::unique_ptr<Worker>>& workers_;
    Channel<Reply>& uplink_;
    std::vector<std::thread> threads_;
};

}  // namespace

nlohmann::json to_json(const ModelUpdateMsg& msg) {
    return {{"type", "model_update"},
            {"gateway_id", msg.gateway_id},
            {"round", msg.round},
            {"W", matrix_json(msg.w)},
            {"local_value", msg.local_value}};
}

nlohmann::json to_json(const GlobalModelMsg& msg) {
    return {{"type", "global_model"}, {"round", msg.round}, {"Z", matrix_json(msg.z)}};
}

void write_history(std::ostream& out, const RoundHistory& history, const nlohmann::json& header,
                   bool include_timing) {
    if (!header.is_null()) out << nlohmann::json{{"config", header}}.dump() << '\n';
    for (const auto& r : history) {
        nlohmann::json rec = {{"round", r.round},
                              {"global_objective", r.global_objective},
                              {"consensus_residual", r.consensus_residual},
                              {"max_orthonormality_error", r.max_orthonormality_error},
                              {"z_change", r.z_change},
                              {"local_objectives", r.local_objectives}};
        if (include_timing) rec["wall_ms"] = r.wall_ms;
        out << rec.dump() << '\n';
    }
}

void write_history(const std::filesystem::path& path, const RoundHistory& history,
                   const nlohmann::json& header, bool include_timing) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    write_history(out, history, header, include_timing);
}

Matrix aggregate_z(const std::vector<Matrix>& w_list, const Matrix& z_prev, double beta3,
                   double tau4) {
    if (w_list.empty()) throw ProtocolError("aggregate_z: no gateway updates");
    const double denom = static_cast<double>(w_list.size()) * beta3 + tau4;
    if (!(denom > 0.0)) throw ProtocolError("aggregate_z: N*beta3 + tau4 must be positive");

    Matrix sum = Matrix::Zero(z_prev.rows(), z_prev.cols());
    for (const auto& w : w_list) {
        if (w.rows() != z_prev.rows() || w.cols() != z_prev.cols()) {
            throw ProtocolError("aggregate_z: update shape differs from Z");
        }
        sum += w;
    }
    return (beta3 * sum + tau4 * z_prev) / denom;
}

double global_objective(const std::vector<GatewayState>& gateways, const Matrix& z,
                        const HyperParams& hp) {
    double total = 0.0;
    for (const auto& g : gateways) total += local_objective(g, z, hp);
    return total;
}

FederationResult run_rounds(std::vector<GatewayState> gateways, const HyperParams& hp,
                            const TransportOptions& transport, std::optional<Matrix> z0) {
    if (gateways.empty()) throw ProtocolError("run_rounds: no gateways");
    const Eigen::Index d = gateways.front().w.rows();
    const Eigen::Index m = gateways.front().w.cols();
    hp.validate(d);
    if (m != hp.m) throw DimensionError("run_rounds: gateway W has m != hp.m");
    for (const auto& g : gateways) {
        if (!g.data || g.data->dim() != d || g.w.rows() != d || g.w.cols() != m ||
            g.u.rows() != d || g.u.cols() != m || g.v.rows() != d || g.v.cols() != m) {
            throw ProtocolError("run_rounds: gateway " + std::to_string(g.gateway_id) +
                                " disagrees on d or m");
        }
    }
    std::sort(gateways.begin(), gateways.end(),
              [](const GatewayState& a, const GatewayState& b) { return a.gateway_id < b.gateway_id; });
    for (std::size_t i = 1; i < gateways.size(); ++i) {
        if (gateways[i].gateway_id == gateways[i - 1].gateway_id) {
            throw ProtocolError("run_rounds: duplicate gateway id " +
                                std::to_string(gateways[i].gateway_id));
        }
    }

    FederationResult result;
    result.z = z0 ? std::move(*z0) : gateways.front().w;
    if (result.z.rows() != d || result.z.cols() != m) {
        throw DimensionError("run_rounds: Z0 has the wrong shape");
    }

    const std::size_t n = gateways.size();
    std::vector<std::unique_ptr<Worker>> workers;
    std::vector<int> ids;
    workers.reserve(n);
    for (auto& g : gateways) {
        ids.push_back(g.gateway_id);
        const bool silent = std::find(transport.silent_gateways.begin(),
                                      transport.silent_gateways.end(),
                                      g.gateway_id) != transport.silent_gateways.end();
        workers.push_back(std::make_unique<Worker>(std::move(g), transport.latency, silent));
    }
    Channel<Reply> uplink(transport.latency);

    {
        WorkerPool pool(workers, uplink, hp);

        for (int round = 1; round <= hp.rounds; ++round) {
            const auto started = std::chrono::steady_clock::now();
            const GlobalModelMsg broadcast{round, result.z};
            if (transport.tap) transport.tap(to_json(broadcast));
            for (auto& w : workers) w->inbox.send(broadcast);

            // Barrier: every gateway must answer before Z moves.
            std::vector<std::optional<ModelUpdateMsg>> replies(n);
            for (std::size_t received = 0; received < n; ++received) {
                auto reply = transport.reply_timeout ? uplink.receive_for(*transport.reply_timeout)
                                                     : uplink.receive();
                if (!reply) {
                    throw RoundTimeoutError("round " + std::to_string(round) + ": only " +
                                            std::to_string(received) + " of " + std::to_string(n) +
                                            " gateways replied");
                }
                if (reply->error) std::rethrow_exception(reply->error);
                auto& msg = reply->msg;
                const auto slot = std::find(ids.begin(), ids.end(), msg.gateway_id);
                if (slot == ids.end() || msg.round != round) {
                    throw ProtocolError("unexpected update from gateway " +
                                        std::to_string(msg.gateway_id) + " for round " +
                                        std::to_string(msg.round));
                }
                auto& target = replies[static_cast<std::size_t>(slot - ids.begin())];
                if (target) {
                    throw ProtocolError("duplicate update from gateway " +
                                        std::to_string(msg.gateway_id));
                }
                if (msg.w.rows() != d || msg.w.cols() != m || !msg.w.allFinite()) {
                    throw ProtocolError("malformed W from gateway " + std::to_string(msg.gateway_id));
                }
                target = std::move(msg);
            }

            std::vector<Matrix> w_list;
            w_list.reserve(n);
            for (const auto& r : replies) {
                if (transport.tap) transport.tap(to_json(*r));
                w_list.push_back(r->w);
            }
            Matrix z_new = aggregate_z(w_list, result.z, hp.beta3, hp.tau4);

            RoundRecord rec;
            rec.round = round;
            for (const auto& r : replies) {
                const double local = r->local_value + 0.5 * hp.beta3 * (r->w - z_new).squaredNorm();
                rec.local_objectives.push_back(local);
                rec.global_objective += local;
                rec.consensus_residual = std::max(rec.consensus_residual, (r->w - z_new).norm());
                rec.max_orthonormality_error =
                    std::max(rec.max_orthonormality_error, orthonormality_error(r->w));
            }
            const double z_norm = result.z.norm();
            rec.z_change = (z_new - result.z).norm() / (z_norm > 0.0 ? z_norm : 1.0);
            result.z = std::move(z_new);
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
            result.history.push_back(std::move(rec));

            if (result.history.back().z_change <= hp.outer_tol) {
                result.converged = true;
                break;
            }
        }
        pool.shutdown();
    }

    result.gateways.reserve(n);
    for (auto& w : workers) result.gateways.push_back(std::move(w->state));
    return result;
}

}  // namespace fedssp

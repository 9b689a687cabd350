#pragma once

#include <cstdint>
#include <vector>

#include "meada/bayes.hpp"
#include "meada/model.hpp"

namespace meada {

struct ObjectiveConfig {
    double beta = 10.0;       // prediction-entropy weight in the ascent objective
    double gamma = 1.0;       // transport penalty
    double weight_decay = 0.0;
};

void validate_objective_config(const ObjectiveConfig& cfg);

// Probabilities below this are clamped before the log in cross-entropy; each
// clamp is counted so saturation cannot pass silently.
inline constexpr double kProbFloor = 1e-12;

long long ce_clamp_events();
void reset_ce_clamp_events();

// ---- scalar forms ----

double cross_entropy(const Tensor& probs_row, int label);    // -log p_y, natural log
double prediction_entropy(const Tensor& probs_row);           // -sum p log p, 0 log 0 = 0
double prediction_entropy_logp(const Tensor& logp_row);

// Squared Euclidean latent distance when labels agree, +infinity otherwise.
double transport_cost(const Tensor& z0, int y0, const Tensor& z, int y);

// Mean cross-entropy over the batch plus weight_decay * squared l2 norm of
// all parameters.
double ib_loss(const Model& m, const Tensor& x, const std::vector<int>& labels,
               const ObjectiveConfig& cfg);

// CE(x) + beta * h(x) - gamma * ||z(x) - z(x_anchor)||^2 at fixed parameters.
double adversarial_objective(const Model& m, const Tensor& x, const Tensor& x_anchor, int y,
                             const ObjectiveConfig& cfg);

// ---- tape builders (shared by trainer and gradcheck) ----

// per-row -log p_y with the probability floor, shape [N]
NodeId ce_rows_node(Graph& g, NodeId logp, const std::vector<int>& labels);
// per-row prediction entropy, shape [N]
NodeId entropy_rows_node(Graph& g, NodeId logp);
// per-row squared latent distance to a fixed anchor latent z0, shape [N]
NodeId transport_rows_node(Graph& g, NodeId z, const Tensor& z0);

// scalar mean CE + weight decay over fn.param_ids
NodeId ib_loss_node(Graph& g, const ForwardNodes& fn, const std::vector<int>& labels,
                    const ObjectiveConfig& cfg);

// scalar sum over rows of CE + beta h - gamma c against anchor latents z0
NodeId adversarial_objective_node(Graph& g, const ForwardNodes& fn,
                                  const std::vector<int>& labels, const Tensor& z0,
                                  const ObjectiveConfig& cfg);

// ---- Bayesian forms ----

// Monte Carlo variational free energy over T draws (mean over samples):
// E_q[log q(theta|psi) - log p(theta) - log p(D|theta)].
double bnn_free_energy(const BayesianModel& bnn, const Tensor& x, const std::vector<int>& labels,
                       int T, std::uint64_t seed);

struct BnnNodes {
    std::vector<NodeId> mu_ids;
    std::vector<NodeId> rho_ids;
};

NodeId bnn_free_energy_node(Graph& g, const BayesianModel& bnn, BnnNodes& nodes, const Tensor& x,
                            const std::vector<int>& labels, int T, std::uint64_t seed);

// Ascent objective with the entropy term averaged over T posterior draws;
// cross-entropy and the transport embedding use the first draw.
double bnn_adversarial_objective(const BayesianModel& bnn, const Tensor& x,
                                 const Tensor& x_anchor, int y, const ObjectiveConfig& cfg, int T,
                                 std::uint64_t seed);

NodeId bnn_adversarial_objective_node(Graph& g, const BayesianModel& bnn, NodeId x_id,
                                      const Tensor& x_anchor, int y, const ObjectiveConfig& cfg,
                                      int T, std::uint64_t seed);

}  // namespace meada

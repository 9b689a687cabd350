#include "meada/objectives.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace meada {

namespace {

std::atomic<long long> clamp_counter{0};

const double kLogFloor = std::log(kProbFloor);

Tensor one_hot(const std::vector<int>& labels, int classes) {
    const int n = static_cast<int>(labels.size());
    Tensor t({n, classes});
    for (int i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= classes)
            throw shape_error("cross_entropy: label " + std::to_string(y) +
                              " out of range for " + std::to_string(classes) + " classes");
        t.at2(i, y) = 1.0;
    }
    return t;
}

Tensor batchify(const Tensor& x, const ModelSpec& spec) {
    if (x.ndim() == static_cast<int>(spec.input_shape.size())) {
        Shape s = x.shape;
        s.insert(s.begin(), 1);
        return x.reshaped(s);
    }
    return x;
}

}  // namespace

void validate_objective_config(const ObjectiveConfig& cfg) {
    if (cfg.beta < 0.0 || cfg.gamma < 0.0 || cfg.weight_decay < 0.0)
        throw std::invalid_argument("objective config: beta, gamma, weight_decay must be >= 0");
}

long long ce_clamp_events() { return clamp_counter.load(); }
void reset_ce_clamp_events() { clamp_counter.store(0); }

double cross_entropy(const Tensor& probs_row, int label) {
    if (label < 0 || label >= static_cast<int>(probs_row.numel()))
        throw shape_error("cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(probs_row.numel()) + " classes");
    double p = probs_row[label];
    if (p < kProbFloor) {
        p = kProbFloor;
        ++clamp_counter;
    }
    return -std::log(p);
}

double prediction_entropy(const Tensor& probs_row) {
    double h = 0.0;
    for (double p : probs_row.data)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

double prediction_entropy_logp(const Tensor& logp_row) {
    double h = 0.0;
    for (double lp : logp_row.data) {
        const double p = std::exp(lp);
        if (p > 0.0) h -= p * lp;
    }
    return h;
}

double transport_cost(const Tensor& z0, int y0, const Tensor& z, int y) {
    if (!z0.same_shape(z))
        throw shape_error("transport_cost: shape mismatch " + shape_str(z0.shape) + " vs " +
                          shape_str(z.shape));
    if (y0 != y) return std::numeric_limits<double>::infinity();
    double c = 0.0;
    for (std::int64_t i = 0; i < z.numel(); ++i) {
        const double d = z0[i] - z[i];
        c += d * d;
    }
    return c;
}

NodeId ce_rows_node(Graph& g, NodeId logp, const std::vector<int>& labels) {
    const Tensor& lp = g.value(logp);
    if (lp.ndim() != 2 || static_cast<int>(labels.size()) != lp.shape[0])
        throw shape_error("cross_entropy: logp " + shape_str(lp.shape) + " vs " +
                          std::to_string(labels.size()) + " labels");
    NodeId sel = row_sum(g, mul(g, logp, g.constant(one_hot(labels, lp.shape[1]))));
    for (double v : g.value(sel).data)
        if (v < kLogFloor) ++clamp_counter;
    return mul_scalar(g, clamp_min(g, sel, kLogFloor), -1.0);
}

NodeId entropy_rows_node(Graph& g, NodeId logp) {
    return mul_scalar(g, row_sum(g, mul(g, exp(g, logp), logp)), -1.0);
}

NodeId transport_rows_node(Graph& g, NodeId z, const Tensor& z0) {
    return row_sum(g, square(g, sub(g, z, g.constant(z0))));
}

NodeId ib_loss_node(Graph& g, const ForwardNodes& fn, const std::vector<int>& labels,
                    const ObjectiveConfig& cfg) {
    validate_objective_config(cfg);
    const int n = g.value(fn.logp).shape[0];
    NodeId loss = mul_scalar(g, sum(g, ce_rows_node(g, fn.logp, labels)), 1.0 / n);
    if (cfg.weight_decay > 0.0) {
        NodeId l2 = -1;
        for (NodeId pid : fn.param_ids) {
            NodeId s = sum(g, square(g, pid));
            l2 = l2 < 0 ? s : add(g, l2, s);
        }
        if (l2 >= 0) loss = add(g, loss, mul_scalar(g, l2, cfg.weight_decay));
    }
    return loss;
}

NodeId adversarial_objective_node(Graph& g, const ForwardNodes& fn,
                                  const std::vector<int>& labels, const Tensor& z0,
                                  const ObjectiveConfig& cfg) {
    validate_objective_config(cfg);
    NodeId combo = ce_rows_node(g, fn.logp, labels);
    if (cfg.beta != 0.0)
        combo = add(g, combo, mul_scalar(g, entropy_rows_node(g, fn.logp), cfg.beta));
    if (cfg.gamma != 0.0)
        combo = add(g, combo, mul_scalar(g, transport_rows_node(g, fn.z, z0), -cfg.gamma));
    return sum(g, combo);
}

double ib_loss(const Model& m, const Tensor& x, const std::vector<int>& labels,
               const ObjectiveConfig& cfg) {
    Graph g;
    NodeId x_id = g.input(batchify(x, m.spec), false);
    ForwardNodes fn = model_forward(g, m, x_id, false);
    return g.value(ib_loss_node(g, fn, labels, cfg))[0];
}

double adversarial_objective(const Model& m, const Tensor& x, const Tensor& x_anchor, int y,
                             const ObjectiveConfig& cfg) {
    Graph g;
    NodeId x_id = g.input(batchify(x, m.spec), false);
    ForwardNodes fn = model_forward(g, m, x_id, false);
    const Tensor z0 = forward(m, x_anchor).z;
    return g.value(adversarial_objective_node(g, fn, {y}, z0, cfg))[0];
}

namespace {

const double kTwoPi = 6.283185307179586476925286766559;

// log of the scale-mixture prior density, summed over one parameter tensor
NodeId log_prior_node(Graph& g, NodeId theta, const BayesianPrior& prior) {
    const double s1 = std::exp(prior.log_sigma1);
    const double s2 = std::exp(prior.log_sigma2);
    const double norm1 = prior.pi / (s1 * std::sqrt(kTwoPi));
    const double norm2 = (1.0 - prior.pi) / (s2 * std::sqrt(kTwoPi));
    NodeId sq = square(g, theta);
    NodeId c1 = mul_scalar(g, exp(g, mul_scalar(g, sq, -0.5 / (s1 * s1))), norm1);
    NodeId c2 = mul_scalar(g, exp(g, mul_scalar(g, sq, -0.5 / (s2 * s2))), norm2);
    return sum(g, log(g, clamp_min(g, add(g, c1, c2), 1e-300)));
}

}  // namespace

NodeId bnn_free_energy_node(Graph& g, const BayesianModel& bnn, BnnNodes& nodes, const Tensor& x,
                            const std::vector<int>& labels, int T, std::uint64_t seed) {
    if (T < 1) throw std::invalid_argument("bnn_free_energy: T must be >= 1");
    nodes.mu_ids.clear();
    nodes.rho_ids.clear();
    std::vector<NodeId> sigma_ids;
    std::int64_t n_params = 0;
    for (size_t p = 0; p < bnn.mu.size(); ++p) {
        nodes.mu_ids.push_back(g.input(bnn.mu[p].value, true));
        nodes.rho_ids.push_back(g.input(bnn.rho[p].value, true));
        sigma_ids.push_back(softplus(g, nodes.rho_ids.back()));
        n_params += bnn.mu[p].value.numel();
    }
    NodeId x_id = g.input(batchify(x, bnn.spec), false);

    // E_q[log q] = -sum log sigma - mean_j (0.5 sum eps^2 + 0.5 n log 2pi);
    // the eps are fixed draws, so only the sigma part carries gradients.
    NodeId sum_log_sigma = -1;
    for (NodeId s : sigma_ids) {
        NodeId t = sum(g, log(g, s));
        sum_log_sigma = sum_log_sigma < 0 ? t : add(g, sum_log_sigma, t);
    }

    Rng stream(seed);
    double mean_c = 0.0;
    NodeId per_sample = -1;  // sum_j (ce_j - log prior_j)
    for (int j = 0; j < T; ++j) {
        std::vector<NodeId> theta_ids;
        double sum_eps2 = 0.0;
        for (size_t p = 0; p < bnn.mu.size(); ++p) {
            Tensor eps(bnn.mu[p].value.shape);
            for (auto& v : eps.data) {
                v = stream.normal();
                sum_eps2 += v * v;
            }
            theta_ids.push_back(
                add(g, nodes.mu_ids[p], mul(g, sigma_ids[p], g.constant(std::move(eps)))));
        }
        mean_c += (0.5 * sum_eps2 + 0.5 * static_cast<double>(n_params) * std::log(kTwoPi)) / T;

        ForwardNodes fn = model_forward_with_params(g, bnn.spec, theta_ids, x_id);
        NodeId ce = sum(g, ce_rows_node(g, fn.logp, labels));
        NodeId prior = -1;
        for (NodeId th : theta_ids) {
            NodeId t = log_prior_node(g, th, bnn.prior);
            prior = prior < 0 ? t : add(g, prior, t);
        }
        NodeId term = add(g, ce, mul_scalar(g, prior, -1.0));
        per_sample = per_sample < 0 ? term : add(g, per_sample, term);
    }

    NodeId f = add(g, mul_scalar(g, sum_log_sigma, -1.0), g.constant(Tensor::scalar(-mean_c)));
    return add(g, f, mul_scalar(g, per_sample, 1.0 / T));
}

double bnn_free_energy(const BayesianModel& bnn, const Tensor& x, const std::vector<int>& labels,
                       int T, std::uint64_t seed) {
    Graph g;
    BnnNodes nodes;
    return g.value(bnn_free_energy_node(g, bnn, nodes, x, labels, T, seed))[0];
}

NodeId bnn_adversarial_objective_node(Graph& g, const BayesianModel& bnn, NodeId x_id,
                                      const Tensor& x_anchor, int y, const ObjectiveConfig& cfg,
                                      int T, std::uint64_t seed) {
    if (T < 1) throw std::invalid_argument("bnn_adversarial_objective: T must be >= 1");
    validate_objective_config(cfg);
    Rng stream(seed);
    std::vector<Model> draws;
    draws.reserve(static_cast<size_t>(T));
    for (int j = 0; j < T; ++j) draws.push_back(sample_parameters(bnn, stream));

    ForwardNodes first = model_forward(g, draws[0], x_id, false);
    NodeId combo = ce_rows_node(g, first.logp, {y});
    if (cfg.beta != 0.0) {
        NodeId h = entropy_rows_node(g, first.logp);
        for (int j = 1; j < T; ++j) {
            ForwardNodes fn = model_forward(g, draws[static_cast<size_t>(j)], x_id, false);
            h = add(g, h, entropy_rows_node(g, fn.logp));
        }
        combo = add(g, combo, mul_scalar(g, h, cfg.beta / T));
    }
    if (cfg.gamma != 0.0) {
        const Tensor z0 = forward(draws[0], x_anchor).z;
        combo = add(g, combo, mul_scalar(g, transport_rows_node(g, first.z, z0), -cfg.gamma));
    }
    return sum(g, combo);
}

double bnn_adversarial_objective(const BayesianModel& bnn, const Tensor& x,
                                 const Tensor& x_anchor, int y, const ObjectiveConfig& cfg, int T,
                                 std::uint64_t seed) {
    Graph g;
    NodeId x_id = g.input(batchify(x, bnn.spec), false);
    return g.value(bnn_adversarial_objective_node(g, bnn, x_id, x_anchor, y, cfg, T, seed))[0];
}

}  // namespace meada

#include "meada/bayes.hpp"

#include <cmath>
#include <stdexcept>

#include "meada/objectives.hpp"

namespace meada {

double sigma_of_rho(double rho) {
    return (rho > 0.0 ? rho : 0.0) + std::log1p(std::exp(-std::fabs(rho)));
}

BayesianModel make_bayesian_model(const ModelSpec& spec, double rho_init) {
    BayesianModel bnn;
    bnn.spec = spec;
    Model base = make_model(spec);
    bnn.mu = base.params;
    for (const Param& p : base.params)
        bnn.rho.push_back({p.name, Tensor::full(p.value.shape, rho_init)});
    return bnn;
}

Model sample_parameters(const BayesianModel& bnn, Rng& stream) {
    Model m;
    m.spec = bnn.spec;
    m.params.reserve(bnn.mu.size());
    for (size_t p = 0; p < bnn.mu.size(); ++p) {
        Tensor value = bnn.mu[p].value;
        const Tensor& rho = bnn.rho[p].value;
        // normals are always consumed, so the stream position is independent
        // of sigma and a draw sequence extends prefix-for-prefix
        for (std::int64_t i = 0; i < value.numel(); ++i)
            value[i] += sigma_of_rho(rho[i]) * stream.normal();
        m.params.push_back({bnn.mu[p].name, std::move(value)});
    }
    return m;
}

Model sample_parameters(const BayesianModel& bnn, std::uint64_t seed) {
    Rng stream(seed);
    return sample_parameters(bnn, stream);
}

double predictive_entropy_mc(const BayesianModel& bnn, const Tensor& x, int T,
                             std::uint64_t seed) {
    if (T < 1) throw std::invalid_argument("predictive_entropy_mc: T must be >= 1");
    Rng stream(seed);
    double h = 0.0;
    for (int j = 0; j < T; ++j) {
        const Model m = sample_parameters(bnn, stream);
        const ForwardResult fr = forward(m, x);
        h += prediction_entropy(fr.probs.reshaped({fr.probs.shape.back()}));
    }
    return h / T;
}

std::vector<double> bnn_train_free_energy(BayesianModel& bnn, const Tensor& x,
                                          const std::vector<int>& labels, int steps, double lr,
                                          int T, std::uint64_t seed) {
    const std::uint64_t eval_seed = derive_seed(seed, "bnn_eval");
    std::vector<double> trace;
    trace.reserve(static_cast<size_t>(steps) + 1);
    trace.push_back(bnn_free_energy(bnn, x, labels, T, eval_seed));
    for (int s = 0; s < steps; ++s) {
        Graph g;
        BnnNodes nodes;
        NodeId f = bnn_free_energy_node(g, bnn, nodes, x, labels, T,
                                        derive_seed(seed, "bnn_step", static_cast<std::uint64_t>(s)));
        g.backward(f);
        for (size_t p = 0; p < bnn.mu.size(); ++p) {
            const Tensor& gmu = g.grad(nodes.mu_ids[p]);
            const Tensor& grho = g.grad(nodes.rho_ids[p]);
            Tensor& mu = bnn.mu[p].value;
            Tensor& rho = bnn.rho[p].value;
            for (std::int64_t i = 0; i < mu.numel(); ++i) {
                mu[i] -= lr * gmu[i];
                rho[i] -= lr * grho[i];
            }
        }
        trace.push_back(bnn_free_energy(bnn, x, labels, T, eval_seed));
    }
    return trace;
}

}  // namespace meada

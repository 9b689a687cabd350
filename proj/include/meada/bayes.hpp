#pragma once

#include <cstdint>
#include <vector>

#include "meada/model.hpp"
#include "meada/rng.hpp"

namespace meada {

// Scale mixture of two zero-mean Gaussians, pi * N(0, sigma1^2) +
// (1-pi) * N(0, sigma2^2), parameterized by log standard deviations.
struct BayesianPrior {
    double pi = 0.25;
    double log_sigma1 = 0.0;
    double log_sigma2 = -6.0;
};

// Gaussian variational posterior per parameter: theta = mu + sigma * eps with
// sigma = softplus(rho), so positivity needs no constraint handling.
struct BayesianModel {
    ModelSpec spec;
    std::vector<Param> mu;
    std::vector<Param> rho;
    BayesianPrior prior;
};

// mu initialized like make_model, rho constant. rho_init = -1e9 makes
// softplus(rho) exactly 0.0 in float64, collapsing sampling onto mu.
BayesianModel make_bayesian_model(const ModelSpec& spec, double rho_init = -5.0);

double sigma_of_rho(double rho);

// One reparameterized draw; consumes normals from the stream in parameter
// order, so a longer Monte Carlo run extends a shorter one sample-for-sample.
Model sample_parameters(const BayesianModel& bnn, Rng& stream);
Model sample_parameters(const BayesianModel& bnn, std::uint64_t seed);

// Mean prediction entropy over T posterior draws for one input x.
double predictive_entropy_mc(const BayesianModel& bnn, const Tensor& x, int T,
                             std::uint64_t seed);

// Plain SGD on the variational free energy, resampling epsilon every step.
// Returns the free-energy trace evaluated after each step with a fixed
// evaluation seed (common random numbers), length steps+1 including the
// starting value.
std::vector<double> bnn_train_free_energy(BayesianModel& bnn, const Tensor& x,
                                          const std::vector<int>& labels, int steps, double lr,
                                          int T, std::uint64_t seed);

}  // namespace meada

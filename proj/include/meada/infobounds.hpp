#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meada/model.hpp"
#include "meada/tensor.hpp"

namespace meada {

// Joint distribution over finite alphabets, p.shape = [card_x, card_y].
struct DiscreteJoint {
    Tensor p;
};

// Entries must be nonnegative and sum to 1 within 1e-12.
void validate_joint(const DiscreteJoint& joint);

struct BoundReport {
    std::string name;        // "prop1" | "prop3" | "corollary1"
    int card_y = 0;
    std::int64_t n = 0;      // sample-set size where applicable
    double delta = 0.0;      // confidence level (prop3)
    double epsilon = 0.0;    // closeness level (corollary1)
    double bound = 0.0;
    double observed = 0.0;      // worst observed statistic across trials
    double observed_cond = 0.0; // conditional entropy H(Yhat|X), prop1 only
    long long trials = 0;
    long long violations = 0;
    bool pass = false;
};

std::string bound_report_json(const BoundReport& r);

// ---- entropy and mutual information ----

// Entropy of the elementwise mean of the rows.
double entropy_of_mean(const std::vector<Tensor>& pred_rows);
// Arithmetic mean of the per-row entropies; never exceeds entropy_of_mean.
double mean_prediction_entropy(const std::vector<Tensor>& pred_rows);

// Exact plug-in mutual information of a discrete joint, in nats.
double mutual_information_discrete(const DiscreteJoint& joint);

// ---- bound checks ----

// Builds the empirical joint of (input index, argmax prediction) over distinct
// inputs x of shape [N, ...input_shape] and checks that I(X;Yhat) = H(Yhat)
// within 1e-10 and H(Yhat|X) = 0 within 1e-12.
BoundReport verify_prop1(const Model& m, const Tensor& inputs);

// card_y * ln(N) * sqrt(ln(2/delta)) / sqrt(2N) + (card_y - 1) / N
double prop3_bound(int card_y, std::int64_t n, double delta);

// Draws `trials` i.i.d. sample sets of size n from the joint's x-marginal,
// forms the plug-in estimate H(sum_x p(y|x) phat(x)), and reports the
// fraction of trials whose deviation from H(Y) exceeds the closed-form bound.
// pass iff that fraction is <= delta. bound_scale != 1 is a negative-control
// hook that rescales the bound before comparison.
BoundReport verify_prop3_montecarlo(const DiscreteJoint& joint, std::int64_t n, double delta,
                                    long long trials, std::uint64_t seed,
                                    double bound_scale = 1.0);

// Exact H(Y|X) of a joint, in nats.
double conditional_entropy(const DiscreteJoint& joint);

// One random admissible perturbation of a deterministic joint (one nonzero
// per x-row): mass moves only within rows, so the x-marginal is preserved
// exactly and the l1 distance stays <= epsilon.
DiscreteJoint corollary1_perturb(const DiscreteJoint& joint_det, double epsilon,
                                 std::uint64_t seed);

// Checks exact H(Y|X) of one perturbation <= -epsilon * ln(epsilon / card_y^3).
BoundReport corollary1_check(const DiscreteJoint& joint_det, double epsilon, std::uint64_t seed);

// Aggregates corollary1_check over `trials` independent perturbations.
BoundReport corollary1_trials(const DiscreteJoint& joint_det, double epsilon, long long trials,
                              std::uint64_t seed, double bound_scale = 1.0);

}  // namespace meada

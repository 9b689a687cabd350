#include "meada/infobounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "meada/rng.hpp"

namespace meada {

namespace {

double entropy_vec(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

// Chunks [0, count) across hardware threads; body(i) must only touch
// per-index state derived from i so the split order cannot matter.
template <typename Body>
void parallel_trials(long long count, const Body& body) {
    const unsigned workers =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                           static_cast<unsigned>(std::max<long long>(1, count)));
    if (workers <= 1) {
        for (long long i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (long long i = w; i < count; i += workers) body(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

void validate_joint(const DiscreteJoint& joint) {
    if (joint.p.ndim() != 2)
        throw shape_error("joint: expected [card_x, card_y], got " + shape_str(joint.p.shape));
    double total = 0.0;
    for (double v : joint.p.data) {
        if (v < 0.0) throw std::invalid_argument("joint: negative probability entry");
        total += v;
    }
    if (std::fabs(total - 1.0) > 1e-12)
        throw std::invalid_argument("joint: entries sum to " + std::to_string(total));
}

std::string bound_report_json(const BoundReport& r) {
    nlohmann::json j{{"name", r.name},
                     {"card_y", r.card_y},
                     {"n", r.n},
                     {"delta", r.delta},
                     {"epsilon", r.epsilon},
                     {"bound", r.bound},
                     {"observed", r.observed},
                     {"conditional_entropy", r.observed_cond},
                     {"trials", r.trials},
                     {"violations", r.violations},
                     {"pass", r.pass}};
    return j.dump();
}

double entropy_of_mean(const std::vector<Tensor>& pred_rows) {
    if (pred_rows.empty()) throw std::invalid_argument("entropy_of_mean: no rows");
    const std::int64_t c = pred_rows.front().numel();
    std::vector<double> mean(static_cast<size_t>(c), 0.0);
    for (const Tensor& row : pred_rows) {
        if (row.numel() != c)
            throw shape_error("entropy_of_mean: row " + shape_str(row.shape) + " vs length " +
                              std::to_string(c));
        for (std::int64_t i = 0; i < c; ++i) mean[static_cast<size_t>(i)] += row[i];
    }
    for (double& v : mean) v /= static_cast<double>(pred_rows.size());
    return entropy_vec(mean);
}

double mean_prediction_entropy(const std::vector<Tensor>& pred_rows) {
    if (pred_rows.empty()) throw std::invalid_argument("mean_prediction_entropy: no rows");
    double h = 0.0;
    for (const Tensor& row : pred_rows) {
        double rh = 0.0;
        for (double v : row.data)
            if (v > 0.0) rh -= v * std::log(v);
        h += rh;
    }
    return h / static_cast<double>(pred_rows.size());
}

double mutual_information_discrete(const DiscreteJoint& joint) {
    validate_joint(joint);
    const int cx = joint.p.shape[0], cy = joint.p.shape[1];
    std::vector<double> px(static_cast<size_t>(cx), 0.0), py(static_cast<size_t>(cy), 0.0);
    for (int x = 0; x < cx; ++x)
        for (int y = 0; y < cy; ++y) {
            px[static_cast<size_t>(x)] += joint.p.at2(x, y);
            py[static_cast<size_t>(y)] += joint.p.at2(x, y);
        }
    double mi = 0.0;
    for (int x = 0; x < cx; ++x)
        for (int y = 0; y < cy; ++y) {
            const double p = joint.p.at2(x, y);
            if (p > 0.0)
                mi += p * std::log(p / (px[static_cast<size_t>(x)] * py[static_cast<size_t>(y)]));
        }
    return std::max(0.0, mi);
}

BoundReport verify_prop1(const Model& m, const Tensor& inputs) {
    if (inputs.ndim() != static_cast<int>(m.spec.input_shape.size()) + 1 || inputs.shape[0] < 1)
        throw shape_error("verify_prop1: inputs must be a batch, got " + shape_str(inputs.shape));
    const int n = inputs.shape[0];
    const std::int64_t row_len = inputs.numel() / n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            bool same = true;
            for (std::int64_t k = 0; k < row_len && same; ++k)
                same = inputs[i * row_len + k] == inputs[j * row_len + k];
            if (same) throw std::invalid_argument("verify_prop1: duplicate inputs");
        }

    const ForwardResult fr = forward(m, inputs);
    const int classes = m.spec.classes;
    DiscreteJoint joint{Tensor({n, classes})};
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (fr.probs.at2(i, c) > fr.probs.at2(i, best)) best = c;
        joint.p.at2(i, best) = 1.0 / n;
    }

    std::vector<double> py(static_cast<size_t>(classes), 0.0);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < classes; ++c) py[static_cast<size_t>(c)] += joint.p.at2(i, c);
    const double hy = entropy_vec(py);
    const double mi = mutual_information_discrete(joint);

    // H(Yhat|X): each conditional row is one-hot, so every term is exactly 0
    double h_cond = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < classes; ++c) {
            const double p = joint.p.at2(i, c) * n;  // conditional given uniform p(x)
            if (p > 0.0) h_cond -= (1.0 / n) * p * std::log(p);
        }
    }

    BoundReport r;
    r.name = "prop1";
    r.card_y = classes;
    r.n = n;
    r.bound = 1e-10;
    r.observed = std::fabs(mi - hy);
    r.observed_cond = h_cond;
    r.trials = 1;
    r.violations = (r.observed > 1e-10 ? 1 : 0) + (h_cond > 1e-12 ? 1 : 0);
    r.pass = r.violations == 0;
    return r;
}

double prop3_bound(int card_y, std::int64_t n, double delta) {
    if (card_y < 2) throw std::invalid_argument("prop3_bound: card_y must be >= 2");
    if (n < 1) throw std::invalid_argument("prop3_bound: n must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("prop3_bound: delta must be in (0,1)");
    const double nn = static_cast<double>(n);
    return card_y * std::log(nn) * std::sqrt(std::log(2.0 / delta)) / std::sqrt(2.0 * nn) +
           (card_y - 1) / nn;
}

BoundReport verify_prop3_montecarlo(const DiscreteJoint& joint, std::int64_t n, double delta,
                                    long long trials, std::uint64_t seed, double bound_scale) {
    validate_joint(joint);
    if (trials < 100) throw std::invalid_argument("verify_prop3: trials must be >= 100");
    const int cx = joint.p.shape[0], cy = joint.p.shape[1];

    std::vector<double> px(static_cast<size_t>(cx), 0.0), py(static_cast<size_t>(cy), 0.0);
    for (int x = 0; x < cx; ++x)
        for (int y = 0; y < cy; ++y) {
            px[static_cast<size_t>(x)] += joint.p.at2(x, y);
            py[static_cast<size_t>(y)] += joint.p.at2(x, y);
        }
    const double hy = entropy_vec(py);

    // conditional rows p(y|x); zero-mass rows are never drawn
    std::vector<std::vector<double>> cond(static_cast<size_t>(cx),
                                          std::vector<double>(static_cast<size_t>(cy), 0.0));
    for (int x = 0; x < cx; ++x)
        if (px[static_cast<size_t>(x)] > 0.0)
            for (int y = 0; y < cy; ++y)
                cond[static_cast<size_t>(x)][static_cast<size_t>(y)] =
                    joint.p.at2(x, y) / px[static_cast<size_t>(x)];

    std::vector<double> cdf(static_cast<size_t>(cx), 0.0);
    double acc = 0.0;
    int last_live = 0;
    for (int x = 0; x < cx; ++x) {
        acc += px[static_cast<size_t>(x)];
        cdf[static_cast<size_t>(x)] = acc;
        if (px[static_cast<size_t>(x)] > 0.0) last_live = x;
    }

    const double bound = prop3_bound(cy, n, delta) * bound_scale;

    std::vector<long long> viol(static_cast<size_t>(trials), 0);
    std::vector<double> dev(static_cast<size_t>(trials), 0.0);
    parallel_trials(trials, [&](long long t) {
        Rng r(derive_seed(seed, "prop3_trial", static_cast<std::uint64_t>(t)));
        std::vector<std::int64_t> counts(static_cast<size_t>(cx), 0);
        for (std::int64_t i = 0; i < n; ++i) {
            const double u = r.uniform();
            int x = last_live;
            for (int j = 0; j < cx; ++j)
                if (u < cdf[static_cast<size_t>(j)]) {
                    x = j;
                    break;
                }
            ++counts[static_cast<size_t>(x)];
        }
        std::vector<double> mix(static_cast<size_t>(cy), 0.0);
        for (int x = 0; x < cx; ++x)
            if (counts[static_cast<size_t>(x)] > 0) {
                const double phat =
                    static_cast<double>(counts[static_cast<size_t>(x)]) / static_cast<double>(n);
                for (int y = 0; y < cy; ++y)
                    mix[static_cast<size_t>(y)] += phat * cond[static_cast<size_t>(x)][static_cast<size_t>(y)];
            }
        const double d = std::fabs(hy - entropy_vec(mix));
        dev[static_cast<size_t>(t)] = d;
        if (d > bound) viol[static_cast<size_t>(t)] = 1;
    });

    BoundReport r;
    r.name = "prop3";
    r.card_y = cy;
    r.n = n;
    r.delta = delta;
    r.bound = bound;
    r.observed = *std::max_element(dev.begin(), dev.end());
    r.trials = trials;
    for (long long v : viol) r.violations += v;
    r.pass = static_cast<double>(r.violations) <= delta * static_cast<double>(trials) + 1e-12;
    return r;
}

double conditional_entropy(const DiscreteJoint& joint) {
    validate_joint(joint);
    const int cx = joint.p.shape[0], cy = joint.p.shape[1];
    double h_cond = 0.0;
    for (int x = 0; x < cx; ++x) {
        double mass = 0.0;
        for (int y = 0; y < cy; ++y) mass += joint.p.at2(x, y);
        if (mass <= 0.0) continue;
        for (int y = 0; y < cy; ++y) {
            const double p = joint.p.at2(x, y) / mass;
            if (p > 0.0) h_cond -= mass * p * std::log(p);
        }
    }
    return h_cond;
}

DiscreteJoint corollary1_perturb(const DiscreteJoint& joint_det, double epsilon,
                                 std::uint64_t seed) {
    validate_joint(joint_det);
    if (!(epsilon >= 0.0 && epsilon <= 0.5))
        throw std::invalid_argument("corollary1: epsilon must be in [0, 0.5]");
    const int cx = joint_det.p.shape[0], cy = joint_det.p.shape[1];

    std::vector<double> px(static_cast<size_t>(cx), 0.0);
    std::vector<int> f(static_cast<size_t>(cx), -1);
    for (int x = 0; x < cx; ++x) {
        for (int y = 0; y < cy; ++y) {
            const double p = joint_det.p.at2(x, y);
            if (p > 0.0) {
                if (f[static_cast<size_t>(x)] >= 0)
                    throw std::invalid_argument("corollary1: joint is not deterministic");
                f[static_cast<size_t>(x)] = y;
                px[static_cast<size_t>(x)] = p;
            }
        }
    }

    DiscreteJoint out{joint_det.p};
    if (epsilon == 0.0 || cy < 2) return out;

    Rng r(derive_seed(seed, "cor1_perturb"));
    std::vector<double> w(static_cast<size_t>(cx), 0.0);
    double wsum = 0.0;
    for (int x = 0; x < cx; ++x)
        if (px[static_cast<size_t>(x)] > 0.0) {
            w[static_cast<size_t>(x)] = r.uniform();
            wsum += w[static_cast<size_t>(x)];
        }
    const double total_move = 0.5 * epsilon * r.uniform(0.5, 1.0);
    for (int x = 0; x < cx; ++x) {
        if (w[static_cast<size_t>(x)] <= 0.0 || wsum <= 0.0) continue;
        const double m =
            std::min(total_move * w[static_cast<size_t>(x)] / wsum, px[static_cast<size_t>(x)]);
        if (m <= 0.0) continue;
        std::vector<double> split(static_cast<size_t>(cy), 0.0);
        double ssum = 0.0;
        for (int y = 0; y < cy; ++y)
            if (y != f[static_cast<size_t>(x)]) {
                split[static_cast<size_t>(y)] = -std::log(1.0 - r.uniform());
                ssum += split[static_cast<size_t>(y)];
            }
        out.p.at2(x, f[static_cast<size_t>(x)]) -= m;
        for (int y = 0; y < cy; ++y)
            if (y != f[static_cast<size_t>(x)])
                out.p.at2(x, y) += m * split[static_cast<size_t>(y)] / ssum;
    }
    return out;
}

BoundReport corollary1_trials(const DiscreteJoint& joint_det, double epsilon, long long trials,
                              std::uint64_t seed, double bound_scale) {
    validate_joint(joint_det);
    if (trials < 1) throw std::invalid_argument("corollary1: trials must be >= 1");
    const int cy = joint_det.p.shape[1];

    const double cy3 = static_cast<double>(cy) * cy * cy;
    const double bound = (epsilon == 0.0 ? 0.0 : -epsilon * std::log(epsilon / cy3)) * bound_scale;

    BoundReport r;
    r.name = "corollary1";
    r.card_y = cy;
    r.epsilon = epsilon;
    r.bound = bound;
    r.trials = trials;
    for (long long t = 0; t < trials; ++t) {
        const DiscreteJoint q =
            corollary1_perturb(joint_det, epsilon, derive_seed(seed, "cor1_trial", static_cast<std::uint64_t>(t)));
        const double h = conditional_entropy(q);
        r.observed = std::max(r.observed, h);
        if (h > bound) ++r.violations;
    }
    r.pass = r.violations == 0;
    return r;
}

BoundReport corollary1_check(const DiscreteJoint& joint_det, double epsilon, std::uint64_t seed) {
    return corollary1_trials(joint_det, epsilon, 1, seed, 1.0);
}

}  // namespace meada

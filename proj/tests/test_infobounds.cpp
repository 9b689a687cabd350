#include <doctest.h>

#include <cmath>
#include <vector>

#include "meada/infobounds.hpp"
#include "meada/rng.hpp"

using namespace meada;

namespace {

Tensor rand_row(Rng& r, int c) {
    Tensor t({c});
    double s = 0.0;
    for (auto& v : t.data) {
        v = -std::log(1.0 - r.uniform());
        s += v;
    }
    for (auto& v : t.data) v /= s;
    return t;
}

DiscreteJoint rand_joint(Rng& r, int cx, int cy) {
    DiscreteJoint j{Tensor({cx, cy})};
    double s = 0.0;
    for (auto& v : j.p.data) {
        v = -std::log(1.0 - r.uniform());
        s += v;
    }
    for (auto& v : j.p.data) v /= s;
    return j;
}

// deterministic joint: row x puts mass px[x] on symbol f(x)
DiscreteJoint det_joint(const std::vector<double>& px, const std::vector<int>& f, int cy) {
    DiscreteJoint j{Tensor({static_cast<int>(px.size()), cy})};
    for (size_t x = 0; x < px.size(); ++x) j.p.at2(static_cast<int>(x), f[x]) = px[x];
    return j;
}

double entropy_of(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

}  // namespace

TEST_CASE("entropy of mean on closed-form inputs") {
    const Tensor a({2}, {1.0, 0.0});
    const Tensor b({2}, {0.0, 1.0});
    CHECK(entropy_of_mean({a, b}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(mean_prediction_entropy({a, b}) == 0.0);

    const Tensor u = Tensor::full({10}, 0.1);
    CHECK(mean_prediction_entropy({u, u, u}) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    Rng r(5);
    const Tensor single = rand_row(r, 7);
    CHECK(entropy_of_mean({single}) == doctest::Approx(mean_prediction_entropy({single})).epsilon(1e-15));

    const Tensor same = rand_row(r, 4);
    CHECK(entropy_of_mean({same, same, same}) ==
          doctest::Approx(mean_prediction_entropy({same, same, same})).epsilon(1e-12));

    CHECK_THROWS(entropy_of_mean({}));
    CHECK_THROWS(mean_prediction_entropy({}));
    CHECK_THROWS(entropy_of_mean({a, Tensor({3})}));
}

TEST_CASE("mixture entropy dominates mean entropy on random batches") {
    Rng r(31);
    double min_slack = 1e300;
    for (int i = 0; i < 10000; ++i) {
        const int c = 2 + static_cast<int>(r.uniform_int(9));
        const int n = 1 + static_cast<int>(r.uniform_int(16));
        std::vector<Tensor> rows;
        for (int k = 0; k < n; ++k) rows.push_back(rand_row(r, c));
        min_slack = std::min(min_slack, entropy_of_mean(rows) - mean_prediction_entropy(rows));
    }
    CHECK(min_slack >= -1e-12);
}

TEST_CASE("mutual information on closed-form joints") {
    SUBCASE("product joint has zero information") {
        Rng r(8);
        const Tensor px = rand_row(r, 6);
        const Tensor py = rand_row(r, 4);
        DiscreteJoint j{Tensor({6, 4})};
        for (int x = 0; x < 6; ++x)
            for (int y = 0; y < 4; ++y) j.p.at2(x, y) = px[x] * py[y];
        CHECK(mutual_information_discrete(j) <= 1e-12);
    }
    SUBCASE("uniform diagonal gives ln of the alphabet size") {
        DiscreteJoint j{Tensor({4, 4})};
        for (int x = 0; x < 4; ++x) j.p.at2(x, x) = 0.25;
        CHECK(mutual_information_discrete(j) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("chain rule oracle on random joints") {
        Rng r(77);
        for (int rep = 0; rep < 50; ++rep) {
            const DiscreteJoint j = rand_joint(r, 8, 5);
            std::vector<double> py(5, 0.0);
            for (int x = 0; x < 8; ++x)
                for (int y = 0; y < 5; ++y) py[static_cast<size_t>(y)] += j.p.at2(x, y);
            const double expected = entropy_of(py) - conditional_entropy(j);
            CHECK(std::fabs(mutual_information_discrete(j) - expected) < 1e-12);
            CHECK(mutual_information_discrete(j) >= 0.0);
        }
    }
    SUBCASE("invalid joints are rejected") {
        CHECK_THROWS(mutual_information_discrete({Tensor({2, 2}, {0.5, 0.5, 0.5, 0.5})}));
        CHECK_THROWS(mutual_information_discrete({Tensor({4})}));
        CHECK_THROWS(mutual_information_discrete({Tensor({2, 2}, {1.5, -0.5, 0.0, 0.0})}));
    }
}

TEST_CASE("deterministic predictors saturate the information lower bound") {
    SUBCASE("constant classifier") {
        ModelSpec s{"mlp", {4}, {3}, 5, 2};
        Model m = make_model(s);
        for (auto& p : m.params) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
        m.param("out.b")[2] = 1.0;  // every input lands on class 2
        Rng r(3);
        Tensor inputs({8, 4});
        for (auto& v : inputs.data) v = r.uniform(0, 1);
        const BoundReport rep = verify_prop1(m, inputs);
        CHECK(rep.pass);
        CHECK(rep.observed <= 1e-15);
        CHECK(rep.observed_cond <= 1e-15);
    }
    SUBCASE("injective predictor reaches ln N") {
        ModelSpec s{"mlp", {16}, {}, 16, 0};
        Model m = make_model(s);
        for (auto& p : m.params) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
        for (int i = 0; i < 16; ++i) m.param("out.w").at2(i, i) = 20.0;
        Tensor inputs({16, 16});
        for (int i = 0; i < 16; ++i) inputs.at2(i, i) = 1.0;
        const BoundReport rep = verify_prop1(m, inputs);
        CHECK(rep.pass);

        DiscreteJoint j{Tensor({16, 16})};
        for (int i = 0; i < 16; ++i) j.p.at2(i, i) = 1.0 / 16.0;
        CHECK(mutual_information_discrete(j) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
    }
    SUBCASE("random convolutional model on 64 inputs") {
        ModelSpec s{"lenet-small", {16, 16, 1}, {}, 10, 21};
        Model m = make_model(s);
        Rng r(22);
        Tensor inputs({64, 16, 16, 1});
        for (auto& v : inputs.data) v = r.uniform(0, 1);
        const BoundReport rep = verify_prop1(m, inputs);
        CHECK(rep.pass);
        CHECK(rep.observed < 1e-10);
        CHECK(rep.observed_cond < 1e-12);
    }
    SUBCASE("duplicate inputs are rejected") {
        ModelSpec s{"mlp", {2}, {}, 3, 1};
        Model m = make_model(s);
        Tensor inputs({2, 2}, {0.5, 0.5, 0.5, 0.5});
        CHECK_THROWS(verify_prop1(m, inputs));
    }
}

TEST_CASE("closed-form concentration bound") {
    CHECK(prop3_bound(2, 100, 0.5) == doctest::Approx(0.7768111347020676).epsilon(1e-12));
    CHECK(std::fabs(prop3_bound(2, 100, 0.5) - 0.77683) < 5e-5);

    SUBCASE("first term shrink factor under N -> 4N") {
        for (std::int64_t n : {100, 1000, 10000}) {
            const double first_n = prop3_bound(3, n, 0.1) - 2.0 / n;
            const double first_4n = prop3_bound(3, 4 * n, 0.1) - 2.0 / (4 * n);
            const double expected = std::log(4.0 * n) / (2.0 * std::log(static_cast<double>(n)));
            CHECK(first_4n / first_n == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("monotone in delta") {
        double prev = 0.0;
        for (double delta : {0.5, 0.2, 0.1, 0.05, 0.01}) {
            const double b = prop3_bound(5, 1000, delta);
            CHECK(b > prev);
            prev = b;
        }
    }
    SUBCASE("domain errors") {
        CHECK_THROWS(prop3_bound(1, 100, 0.1));
        CHECK_THROWS(prop3_bound(2, 0, 0.1));
        CHECK_THROWS(prop3_bound(2, 100, 0.0));
        CHECK_THROWS(prop3_bound(2, 100, 1.0));
    }
}

TEST_CASE("plug-in entropy concentrates within the bound") {
    SUBCASE("deterministic binary channel, small N") {
        DiscreteJoint j = det_joint({0.5, 0.5}, {0, 1}, 2);
        const BoundReport rep = verify_prop3_montecarlo(j, 10, 0.2, 1000, 99);
        CHECK(rep.pass);
        CHECK(rep.violations == 0);
        CHECK(rep.trials == 1000);
    }
    SUBCASE("random channel at N = 10000") {
        Rng r(41);
        const DiscreteJoint j = rand_joint(r, 12, 10);
        const BoundReport rep = verify_prop3_montecarlo(j, 10000, 0.05, 1000, 7);
        CHECK(rep.pass);
        CHECK(static_cast<double>(rep.violations) / rep.trials <= 0.05);
    }
    SUBCASE("N = 1 is vacuous but runs") {
        Rng r(42);
        const DiscreteJoint j = rand_joint(r, 4, 3);
        const BoundReport rep = verify_prop3_montecarlo(j, 1, 0.05, 200, 3);
        CHECK(rep.pass);
        CHECK(rep.bound >= std::log(3.0));
    }
    SUBCASE("negative control: a crushed bound fails") {
        Rng r(43);
        const DiscreteJoint j = rand_joint(r, 6, 4);
        const BoundReport rep = verify_prop3_montecarlo(j, 100, 0.05, 500, 11, 1e-4);
        CHECK_FALSE(rep.pass);
        CHECK(rep.violations > 25);
    }
    SUBCASE("too few trials rejected") {
        DiscreteJoint j = det_joint({1.0}, {0}, 2);
        CHECK_THROWS(verify_prop3_montecarlo(j, 10, 0.1, 99, 0));
    }
}

TEST_CASE("perturbations stay within the near-determinism bound") {
    Rng seeds(7);
    for (double eps : {0.01, 0.1, 0.5}) {
        for (int cy : {2, 4, 10}) {
            // random deterministic base joint over 6 input symbols
            std::vector<double> px = {0.3, 0.25, 0.2, 0.1, 0.1, 0.05};
            std::vector<int> f;
            for (int x = 0; x < 6; ++x) f.push_back(static_cast<int>(seeds.uniform_int(cy)));
            const DiscreteJoint base = det_joint(px, f, cy);

            const BoundReport rep = corollary1_trials(base, eps, 100, seeds.uniform_int(1u << 30));
            CHECK(rep.pass);
            CHECK(rep.violations == 0);
            CHECK(rep.observed <= rep.bound);
        }
    }
}

TEST_CASE("perturbation construction is admissible") {
    const DiscreteJoint base = det_joint({0.4, 0.35, 0.25}, {1, 0, 3}, 4);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const double eps = 0.5 * (s + 1) / 50.0;
        const DiscreteJoint q = corollary1_perturb(base, eps, s);

        double l1 = 0.0;
        for (std::int64_t i = 0; i < q.p.numel(); ++i) {
            CHECK(q.p[i] >= 0.0);
            l1 += std::fabs(q.p[i] - base.p[i]);
        }
        CHECK(l1 <= eps + 1e-12);
        CHECK(std::fabs(q.p.sum() - 1.0) < 1e-12);
        for (int x = 0; x < 3; ++x) {
            double row_base = 0.0, row_q = 0.0;
            for (int y = 0; y < 4; ++y) {
                row_base += base.p.at2(x, y);
                row_q += q.p.at2(x, y);
            }
            CHECK(row_q == doctest::Approx(row_base).epsilon(1e-13));
        }
    }
}

TEST_CASE("near-determinism bound values and edge cases") {
    const DiscreteJoint base = det_joint({0.5, 0.5}, {0, 1}, 2);
    SUBCASE("epsilon zero leaves the joint untouched") {
        const BoundReport rep = corollary1_check(base, 0.0, 1);
        CHECK(rep.pass);
        CHECK(rep.bound == 0.0);
        CHECK(rep.observed == 0.0);
    }
    SUBCASE("bound constants match hand evaluation") {
        CHECK(corollary1_check(base, 0.5, 1).bound ==
              doctest::Approx(1.3862943611198906).epsilon(1e-12));
        const DiscreteJoint base4 = det_joint({1.0}, {2}, 4);
        CHECK(corollary1_check(base4, 0.1, 1).bound ==
              doctest::Approx(0.6461468176353717).epsilon(1e-12));
    }
    SUBCASE("preconditions are enforced") {
        CHECK_THROWS(corollary1_check(base, 0.6, 1));
        CHECK_THROWS(corollary1_check(base, -0.1, 1));
        DiscreteJoint soft{Tensor({1, 2}, {0.5, 0.5})};
        CHECK_THROWS(corollary1_check(soft, 0.1, 1));
    }
    SUBCASE("negative control: a crushed bound fails") {
        const BoundReport rep = corollary1_trials(base, 0.5, 20, 9, 1e-6);
        CHECK_FALSE(rep.pass);
        CHECK(rep.violations == 20);
    }
}

TEST_CASE("bound reports serialize to json") {
    BoundReport r;
    r.name = "prop3";
    r.card_y = 10;
    r.n = 100;
    r.delta = 0.05;
    r.bound = 0.5;
    r.observed = 0.25;
    r.trials = 1000;
    r.violations = 12;
    r.pass = true;
    const std::string s = bound_report_json(r);
    CHECK(s.find("\"name\":\"prop3\"") != std::string::npos);
    CHECK(s.find("\"trials\":1000") != std::string::npos);
    CHECK(s.find("\"pass\":true") != std::string::npos);
}

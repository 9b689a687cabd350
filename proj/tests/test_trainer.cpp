#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "meada/rng.hpp"
#include "meada/serde.hpp"
#include "meada/trainer.hpp"

using namespace meada;

namespace {

ModelSpec mlp_spec(Shape input, std::vector<int> hidden, int classes, std::uint64_t seed) {
    ModelSpec spec;
    spec.arch = "mlp";
    spec.input_shape = std::move(input);
    spec.hidden = std::move(hidden);
    spec.classes = classes;
    spec.seed = seed;
    return spec;
}

// logistic pair-logit model: logits = [w x + b0, -w x + b1], latent z = x
Model logistic_1d(double w, double b0, double b1) {
    Model m = make_model(mlp_spec({1}, {}, 2, 0));
    m.param("out.w") = Tensor({1, 2}, {w, -w});
    m.param("out.b") = Tensor({2}, {b0, b1});
    return m;
}

double logistic_objective(double w, double b0, double b1, double x, double x0, int y, double beta,
                          double gamma) {
    const double u = (w * x + b0) - (-w * x + b1);
    const double p0 = 1.0 / (1.0 + std::exp(-u));
    const double p1 = 1.0 - p0;
    const double ce = -std::log(std::max(y == 0 ? p0 : p1, 1e-12));
    double h = 0.0;
    if (p0 > 0.0) h -= p0 * std::log(p0);
    if (p1 > 0.0) h -= p1 * std::log(p1);
    return ce + beta * h - gamma * (x - x0) * (x - x0);
}

// two classes in disjoint coordinate boxes; linearly separable by construction
ImageDataset separable_blobs(int n, std::uint64_t seed) {
    ImageDataset ds;
    ds.name = "blobs";
    ds.images = Tensor({n, 1, 2, 1});
    ds.labels.resize(static_cast<size_t>(n));
    Rng r(seed);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        const double lo = label == 0 ? 0.05 : 0.55;
        const double hi = label == 0 ? 0.45 : 0.95;
        const double cx = label == 0 ? 0.25 : 0.75;
        ds.images[2 * i] = std::clamp(cx + 0.1 * r.normal(), lo, hi);
        ds.images[2 * i + 1] = std::clamp(cx + 0.1 * r.normal(), lo, hi);
        ds.labels[static_cast<size_t>(i)] = label;
    }
    return ds;
}

bool metrics_equal_ignoring_wallclock(const std::vector<MetricsRecord>& a,
                                      const std::vector<MetricsRecord>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const MetricsRecord& x = a[i];
        const MetricsRecord& y = b[i];
        if (x.phase != y.phase || x.round != y.round || x.step != y.step || x.loss != y.loss ||
            x.ce != y.ce || x.entropy_mean != y.entropy_mean ||
            x.entropy_origin_mean != y.entropy_origin_mean || x.flagged != y.flagged ||
            x.dataset_size != y.dataset_size)
            return false;
    }
    return true;
}

bool params_equal(const Model& a, const Model& b) {
    if (a.params.size() != b.params.size()) return false;
    for (size_t i = 0; i < a.params.size(); ++i)
        if (a.params[i].name != b.params[i].name || !(a.params[i].value == b.params[i].value))
            return false;
    return true;
}

Tensor batch_row(const Tensor& x, int i, const Shape& shape) {
    const std::int64_t stride = shape_numel(shape);
    return Tensor(shape, std::vector<double>(x.data.begin() + i * stride,
                                             x.data.begin() + (i + 1) * stride));
}

}  // namespace

TEST_CASE("config validation and defaults") {
    AdvConfig cfg;
    CHECK(cfg.k == 3);
    CHECK(cfg.t_min == 100);
    CHECK(cfg.t_max == 15);
    CHECK(cfg.alpha == 1e-4);
    CHECK(cfg.eta == 1.0);
    CHECK(cfg.gamma == 1.0);
    CHECK(cfg.beta == 10.0);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.optimizer == "adam");
    CHECK(cfg.resolved_final_steps() == 1000);
    cfg.final_steps = 77;
    CHECK(cfg.resolved_final_steps() == 77);
    validate_adv_config(AdvConfig{});

    auto bad = [](auto&& mutate) {
        AdvConfig c;
        mutate(c);
        CHECK_THROWS_AS(validate_adv_config(c), std::invalid_argument);
    };
    bad([](AdvConfig& c) { c.k = -1; });
    bad([](AdvConfig& c) { c.t_min = 0; });
    bad([](AdvConfig& c) { c.t_max = 0; });
    bad([](AdvConfig& c) { c.alpha = -1e-9; });
    bad([](AdvConfig& c) { c.eta = -0.1; });
    bad([](AdvConfig& c) { c.beta = -1.0; });
    bad([](AdvConfig& c) { c.gamma = -1.0; });
    bad([](AdvConfig& c) { c.weight_decay = -1.0; });
    bad([](AdvConfig& c) { c.batch_size = 0; });
    bad([](AdvConfig& c) { c.final_steps = -2; });
    bad([](AdvConfig& c) { c.optimizer = "rmsprop"; });
    bad([](AdvConfig& c) { c.lr_schedule = "linear"; });

    // zero steps are inert but admissible: the eta = 0 augment path and the
    // alpha = 0 identity are part of the operation contracts
    AdvConfig zeros;
    zeros.alpha = 0.0;
    zeros.eta = 0.0;
    validate_adv_config(zeros);
}

TEST_CASE("learning-rate schedule") {
    AdvConfig cfg;
    cfg.alpha = 0.5;
    cfg.k = 0;
    cfg.t_min = 10;
    cfg.final_steps = 100;
    CHECK(lr_at(cfg, 0) == 0.5);
    CHECK(lr_at(cfg, 99) == 0.5);
    cfg.lr_schedule = "cosine";
    CHECK(lr_at(cfg, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(lr_at(cfg, 50) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(lr_at(cfg, 100) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_at(cfg, 1000) == doctest::Approx(0.0).epsilon(1e-15));
    for (int t = 1; t <= 100; ++t) CHECK(lr_at(cfg, t) <= lr_at(cfg, t - 1));
}

TEST_CASE("wrap_source and batch assembly") {
    ImageDataset ds = separable_blobs(6, 4);
    AugmentedDataset ad = wrap_source(ds, {2});
    CHECK(ad.size() == 6);
    CHECK(ad.source_size == 6);
    for (int i = 0; i < 6; ++i) {
        CHECK(ad.records[static_cast<size_t>(i)].round == 0);
        CHECK(ad.records[static_cast<size_t>(i)].origin == i);
        CHECK(ad.records[static_cast<size_t>(i)].label == ds.labels[static_cast<size_t>(i)]);
        CHECK(ad.records[static_cast<size_t>(i)].image.shape == Shape{2});
        CHECK(ad.records[static_cast<size_t>(i)].image[0] == ds.images[2 * i]);
        CHECK(ad.records[static_cast<size_t>(i)].image[1] == ds.images[2 * i + 1]);
    }
    CHECK_THROWS_AS(wrap_source(ds, {3}), shape_error);

    Batch b = gather_batch(ad, {5, 0, 2});
    CHECK(b.x.shape == Shape{3, 2});
    CHECK(b.labels == std::vector<int>{1, 0, 0});
    CHECK(b.x[0] == ds.images[10]);
    CHECK(b.x[2] == ds.images[0]);
    CHECK_THROWS_AS(gather_batch(ad, {}), std::invalid_argument);
    CHECK_THROWS_AS(gather_batch(ad, {6}), std::invalid_argument);

    AdvConfig cfg;
    cfg.batch_size = 4;
    cfg.seed = 11;
    std::vector<int> full = sample_batch_indices(cfg, 0, 3);
    CHECK(full == std::vector<int>{0, 1, 2});  // batch covers the dataset: fixed order
    std::vector<int> a = sample_batch_indices(cfg, 7, 50);
    std::vector<int> b2 = sample_batch_indices(cfg, 7, 50);
    std::vector<int> c = sample_batch_indices(cfg, 8, 50);
    CHECK(a == b2);
    CHECK(a != c);
    CHECK(a.size() == 4);
    for (int v : a) {
        CHECK(v >= 0);
        CHECK(v < 50);
    }
}

TEST_CASE("optimizer updates match closed forms") {
    Model m = make_model(mlp_spec({2}, {}, 2, 5));
    const Tensor w0 = m.param("out.w");
    const Tensor b0 = m.param("out.b");
    std::vector<Tensor> grads = {Tensor({2, 2}, {0.5, -0.25, 1.0, 0.0}),
                                 Tensor({2}, {-2.0, 0.125})};

    Optimizer sgd = make_optimizer("sgd", m);
    optimizer_step(sgd, m, grads, 0.1);
    for (int j = 0; j < 4; ++j)
        CHECK(m.param("out.w")[j] == doctest::Approx(w0[j] - 0.1 * grads[0][j]).epsilon(1e-15));
    for (int j = 0; j < 2; ++j)
        CHECK(m.param("out.b")[j] == doctest::Approx(b0[j] - 0.1 * grads[1][j]).epsilon(1e-15));

    // first adam step: m-hat = g, v-hat = g^2, update = -lr g / (|g| + eps)
    Model m2 = make_model(mlp_spec({2}, {}, 2, 5));
    Optimizer adam = make_optimizer("adam", m2);
    optimizer_step(adam, m2, grads, 0.1);
    CHECK(adam.t == 1);
    for (int j = 0; j < 4; ++j) {
        const double g = grads[0][j];
        const double expect = w0[j] - 0.1 * g / (std::abs(g) + 1e-8);
        CHECK(m2.param("out.w")[j] == doctest::Approx(expect).epsilon(1e-12));
    }

    CHECK_THROWS_AS(make_optimizer("rmsprop", m), std::invalid_argument);
    std::vector<Tensor> short_grads = {grads[0]};
    CHECK_THROWS_AS(optimizer_step(sgd, m, short_grads, 0.1), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    AdvConfig cfg;
    cfg.alpha = 0.0;
    cfg.t_min = 5;
    cfg.batch_size = 4;
    cfg.optimizer = "sgd";
    cfg.seed = 2;
    TrainerState st = init_trainer(mlp_spec({2}, {3}, 2, 7), cfg);
    const Model before = st.model;
    AugmentedDataset ds = wrap_source(separable_blobs(8, 3), {2});
    minimize_phase(st, ds, nullptr);
    CHECK(params_equal(before, st.model));
    CHECK(st.next_phase == 1);
    CHECK(st.global_step == 5);
}

TEST_CASE("single full-batch step equals the analytic gradient update") {
    AdvConfig cfg;
    cfg.alpha = 0.05;
    cfg.t_min = 1;
    cfg.batch_size = 8;  // covers the 4-point dataset: full batch in order
    cfg.weight_decay = 0.01;
    cfg.optimizer = "sgd";
    TrainerState st = init_trainer(mlp_spec({2}, {}, 2, 3), cfg);
    const Tensor w0 = st.model.param("out.w");
    const Tensor bb0 = st.model.param("out.b");

    ImageDataset raw;
    raw.name = "four";
    raw.images = Tensor({4, 1, 2, 1}, {0.1, 0.9, 0.8, 0.2, 0.3, 0.4, 0.6, 0.7});
    raw.labels = {0, 1, 1, 0};
    AugmentedDataset ds = wrap_source(raw, {2});

    minimize_phase(st, ds, nullptr);

    // mean softmax cross-entropy gradient plus the 2 wd theta ridge term
    double gw[4] = {0, 0, 0, 0};
    double gb[2] = {0, 0};
    for (int i = 0; i < 4; ++i) {
        const double x0 = raw.images[2 * i], x1 = raw.images[2 * i + 1];
        double logits[2];
        for (int c = 0; c < 2; ++c) logits[c] = x0 * w0[c] + x1 * w0[2 + c] + bb0[c];
        const double mx = std::max(logits[0], logits[1]);
        const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
        const double p[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
        for (int c = 0; c < 2; ++c) {
            const double d = (p[c] - (raw.labels[static_cast<size_t>(i)] == c ? 1.0 : 0.0)) / 4.0;
            gw[c] += x0 * d;
            gw[2 + c] += x1 * d;
            gb[c] += d;
        }
    }
    for (int j = 0; j < 4; ++j) gw[j] += 2.0 * 0.01 * w0[j];
    for (int j = 0; j < 2; ++j) gb[j] += 2.0 * 0.01 * bb0[j];

    for (int j = 0; j < 4; ++j)
        CHECK(std::abs(st.model.param("out.w")[j] - (w0[j] - 0.05 * gw[j])) < 1e-12);
    for (int j = 0; j < 2; ++j)
        CHECK(std::abs(st.model.param("out.b")[j] - (bb0[j] - 0.05 * gb[j])) < 1e-12);
}

TEST_CASE("separable toy converges") {
    AdvConfig cfg;
    cfg.alpha = 2.0;
    cfg.t_min = 500;
    cfg.batch_size = 32;
    cfg.optimizer = "sgd";
    cfg.seed = 6;
    TrainerState st = init_trainer(mlp_spec({2}, {}, 2, 9), cfg);
    ImageDataset ds = separable_blobs(200, 12);
    AugmentedDataset ad = wrap_source(ds, {2});
    minimize_phase(st, ad, nullptr);
    const EvalResult ev = evaluate(st.model, ds);
    CHECK(ev.n == 200);
    CHECK(ev.accuracy >= 0.99);
}

TEST_CASE("training aborts on a non-finite loss with a snapshot") {
    AdvConfig cfg;
    cfg.alpha = 0.1;
    cfg.t_min = 1;
    cfg.batch_size = 8;
    cfg.optimizer = "sgd";
    TrainerState st = init_trainer(mlp_spec({2}, {}, 2, 3), cfg);
    st.model.param("out.w")[0] = std::numeric_limits<double>::quiet_NaN();
    AugmentedDataset ds = wrap_source(separable_blobs(4, 3), {2});
    try {
        minimize_phase(st, ds, nullptr);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
        CHECK(e.snapshot.find("phase=min") != std::string::npos);
        CHECK(e.snapshot.find("global_step=0") != std::string::npos);
    }
}

TEST_CASE("zero ascent step returns the input bitwise") {
    Model m = make_model(mlp_spec({4}, {5}, 3, 33));
    AdvConfig cfg;
    cfg.eta = 0.0;
    cfg.t_max = 7;
    const Tensor x0({4}, {0.2, 0.8, 0.5, 0.1});
    const Tensor out = maximize_sample(m, x0, 1, cfg);
    CHECK(out == x0);
}

TEST_CASE("batched ascent is bit-identical to per-sample ascent") {
    Model m = make_model(mlp_spec({4}, {5}, 3, 33));
    AdvConfig cfg;
    cfg.eta = 0.05;
    cfg.t_max = 6;
    cfg.beta = 2.0;
    cfg.gamma = 0.5;
    Rng r(91);
    const int n = 6;
    Tensor x0({n, 4});
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        labels[static_cast<size_t>(i)] = i % 3;
        for (int j = 0; j < 4; ++j) x0[4 * i + j] = r.uniform();
    }
    const AscentResult batch = maximize_batch(m, x0, labels, cfg);
    for (int i = 0; i < n; ++i) {
        const Tensor single =
            maximize_sample(m, batch_row(x0, i, {4}), labels[static_cast<size_t>(i)], cfg);
        CHECK(batch_row(batch.x, i, {4}) == single);
        CHECK(batch.flagged[static_cast<size_t>(i)] == 0);
    }
}

TEST_CASE("ascent objective is non-decreasing at small step size") {
    Model m = logistic_1d(2.0, 0.3, -0.1);
    AdvConfig cfg;
    cfg.eta = 1e-3;
    cfg.t_max = 2000;
    cfg.beta = 5.0;
    cfg.gamma = 20.0;
    std::vector<std::vector<double>> trace;
    const Tensor x0({1, 1}, {0.15});
    maximize_batch(m, x0, {0}, cfg, &trace);
    REQUIRE(trace.size() == 2001);
    for (size_t t = 1; t < trace.size(); ++t)
        CHECK(trace[t][0] >= trace[t - 1][0] - 1e-9);
}

TEST_CASE("ascent reaches the grid-search maximum on the logistic toy") {
    const double w = 2.0, b0 = 0.3, b1 = -0.1, x_start = 0.15, beta = 5.0, gamma = 20.0;
    Model m = logistic_1d(w, b0, b1);
    AdvConfig cfg;
    cfg.eta = 1e-3;
    cfg.t_max = 2000;
    cfg.beta = beta;
    cfg.gamma = gamma;
    const Tensor x_adv = maximize_sample(m, Tensor({1}, {x_start}), 0, cfg);
    const double achieved = logistic_objective(w, b0, b1, x_adv[0], x_start, 0, beta, gamma);

    double grid_best = -1e300;
    const int kGrid = 160000;
    for (int i = 0; i <= kGrid; ++i) {
        const double x = x_start - 4.0 + 8.0 * i / kGrid;
        grid_best = std::max(grid_best, logistic_objective(w, b0, b1, x, x_start, 0, beta, gamma));
    }
    CHECK(std::abs(achieved - grid_best) <= 1e-3);
}

TEST_CASE("large transport penalty pins the iterate to the anchor latent") {
    Model m = make_model(mlp_spec({4}, {6}, 3, 21));
    const Tensor x0({1, 4}, {0.3, 0.8, 0.1, 0.5});
    const ForwardResult fr0 = forward(m, x0);

    auto latent_dist = [&](const AdvConfig& cfg) {
        const AscentResult r = maximize_batch(m, x0, {1}, cfg);
        REQUIRE(r.flagged[0] == 0);
        const ForwardResult fr = forward(m, r.x);
        double d2 = 0.0;
        for (int l = 0; l < fr.z.shape[1]; ++l) {
            const double d = fr.z[l] - fr0.z[l];
            d2 += d * d;
        }
        return std::sqrt(d2);
    };

    AdvConfig huge;
    huge.gamma = 1e9;
    huge.eta = 1e-11;
    huge.t_max = 2000;
    huge.beta = 10.0;
    CHECK(latent_dist(huge) <= 1e-3);

    AdvConfig binding;
    binding.gamma = 1e4;
    binding.eta = 1e-5;
    binding.t_max = 500;
    binding.beta = 10.0;
    AdvConfig free = binding;
    free.gamma = 0.0;
    const double bound_dist = latent_dist(binding);
    CHECK(bound_dist <= 1e-3);
    CHECK(latent_dist(free) > bound_dist);
}

TEST_CASE("non-finite ascent rows freeze at the last finite iterate") {
    Model m = logistic_1d(2.0, 0.3, -0.1);
    AdvConfig cfg;
    cfg.eta = 1e12;
    cfg.t_max = 15;
    cfg.beta = 0.0;
    cfg.gamma = 1.0;
    const AscentResult r = maximize_batch(m, Tensor({1, 1}, {0.15}), {0}, cfg);
    CHECK(r.flagged[0] == 1);
    CHECK(r.x.all_finite());
    CHECK(std::isfinite(r.objective[0]));
}

TEST_CASE("maximize input validation") {
    Model m = make_model(mlp_spec({4}, {5}, 3, 33));
    AdvConfig cfg;
    CHECK_THROWS_AS(maximize_sample(m, Tensor({3}), 0, cfg), shape_error);
    CHECK_THROWS_AS(maximize_batch(m, Tensor({2, 4}), {0}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(maximize_batch(m, Tensor({1, 4}), {3}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(maximize_batch(m, Tensor({1, 4}), {-1}, cfg), std::invalid_argument);
}

TEST_CASE("augmentation doubles the dataset with inherited labels") {
    Model m = make_model(mlp_spec({2}, {4}, 2, 15));
    AdvConfig cfg;
    cfg.eta = 0.01;
    cfg.t_max = 2;
    cfg.batch_size = 8;
    AugmentedDataset ds = wrap_source(separable_blobs(10, 21), {2});
    const std::vector<Record> originals(ds.records.begin(), ds.records.end());

    int expect = 10;
    for (int round = 1; round <= 3; ++round) {
        const int before = ds.size();
        const MetricsRecord rec = augment_round(m, ds, round, cfg);
        expect *= 2;
        CHECK(ds.size() == expect);
        CHECK(rec.dataset_size == expect);
        CHECK(rec.phase == "aug");
        CHECK(rec.round == round);
        CHECK(rec.flagged == 0);
        for (int i = before; i < ds.size(); ++i) {
            const Record& r = ds.records[static_cast<size_t>(i)];
            CHECK(r.round == round);
            CHECK(r.origin == i - before);
            CHECK(r.origin < before);
            CHECK(r.label == ds.records[static_cast<size_t>(r.origin)].label);
        }
    }
    CHECK(ds.source_size == 10);
    for (int i = 0; i < 10; ++i) {
        CHECK(ds.records[static_cast<size_t>(i)].image == originals[static_cast<size_t>(i)].image);
        CHECK(ds.records[static_cast<size_t>(i)].round == 0);
    }
    CHECK(ds.size() == 10 * 8);  // N0 * 2^k after k rounds
}

TEST_CASE("zero-eta augmentation appends exact copies") {
    Model m = make_model(mlp_spec({2}, {4}, 2, 15));
    AdvConfig cfg;
    cfg.eta = 0.0;
    cfg.t_max = 3;
    AugmentedDataset ds = wrap_source(separable_blobs(7, 22), {2});
    augment_round(m, ds, 1, cfg);
    CHECK(ds.size() == 14);
    for (int i = 7; i < 14; ++i) {
        const Record& r = ds.records[static_cast<size_t>(i)];
        CHECK(r.image == ds.records[static_cast<size_t>(r.origin)].image);
    }
}

TEST_CASE("source-only growth variant adds one copy of the source per round") {
    Model m = make_model(mlp_spec({2}, {4}, 2, 15));
    AdvConfig cfg;
    cfg.eta = 0.01;
    cfg.t_max = 1;
    cfg.perturb_source_only = true;
    AugmentedDataset ds = wrap_source(separable_blobs(10, 23), {2});
    for (int round = 1; round <= 3; ++round) {
        augment_round(m, ds, round, cfg);
        CHECK(ds.size() == 10 * (round + 1));
    }
    for (int i = 10; i < ds.size(); ++i) CHECK(ds.records[static_cast<size_t>(i)].origin < 10);

    AugmentedDataset empty;
    CHECK_THROWS_AS(augment_round(m, empty, 1, cfg), std::invalid_argument);
}

namespace {

AdvConfig toy_run_config() {
    AdvConfig cfg;
    cfg.k = 2;
    cfg.t_min = 25;
    cfg.t_max = 10;
    cfg.alpha = 0.5;
    cfg.eta = 0.05;  // sized to the toy: unit steps overshoot into saturation
    cfg.gamma = 1.0;
    cfg.beta = 10.0;
    cfg.batch_size = 16;
    cfg.final_steps = 20;
    cfg.optimizer = "sgd";
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("full run: phase sequence, growth, determinism, entropy direction") {
    const ImageDataset source = separable_blobs(60, 31);
    const ModelSpec spec = mlp_spec({2}, {8}, 2, 19);
    const AdvConfig cfg = toy_run_config();

    const RunResult a = run_me_ada(source, spec, cfg);
    const RunResult b = run_me_ada(source, spec, cfg);

    CHECK(a.dataset.size() == 240);  // 60 * 2^2
    CHECK(a.state.next_phase == phase_count(cfg));
    CHECK(a.metrics.size() == 25 + 1 + 25 + 1 + 20);
    CHECK(a.metrics[0].phase == "min");
    CHECK(a.metrics[0].round == 1);
    CHECK(a.metrics[25].phase == "aug");
    CHECK(a.metrics[25].round == 1);
    CHECK(a.metrics[25].dataset_size == 120);
    CHECK(a.metrics[26].phase == "min");
    CHECK(a.metrics[26].round == 2);
    CHECK(a.metrics[51].phase == "aug");
    CHECK(a.metrics[51].dataset_size == 240);
    CHECK(a.metrics[52].phase == "final");
    CHECK(a.metrics.back().phase == "final");
    CHECK(a.metrics.back().step == 69);  // 25 + 25 + 20 minimization steps, zero-based

    // the maximization enlarges predictive uncertainty under the generating model
    for (const MetricsRecord& rec : a.metrics)
        if (rec.phase == "aug") CHECK(rec.entropy_mean >= rec.entropy_origin_mean);

    CHECK(params_equal(a.state.model, b.state.model));
    CHECK(metrics_equal_ignoring_wallclock(a.metrics, b.metrics));
    for (int i = 0; i < a.dataset.size(); ++i)
        CHECK(a.dataset.records[static_cast<size_t>(i)].image ==
              b.dataset.records[static_cast<size_t>(i)].image);

    // wrapper equals the stepwise drive
    TrainerState st = init_trainer(spec, cfg);
    AugmentedDataset ds = wrap_source(source, spec.input_shape);
    std::vector<MetricsRecord> log;
    while (step_phase(st, ds, log)) {
    }
    CHECK(params_equal(a.state.model, st.model));
    CHECK(metrics_equal_ignoring_wallclock(a.metrics, log));
}

TEST_CASE("k = 0 degenerates to plain training on the source set") {
    const ImageDataset source = separable_blobs(40, 41);
    AdvConfig cfg = toy_run_config();
    cfg.k = 0;
    cfg.final_steps = 30;
    const RunResult r = run_me_ada(source, mlp_spec({2}, {}, 2, 19), cfg);
    CHECK(r.dataset.size() == 40);
    CHECK(r.metrics.size() == 30);
    for (const MetricsRecord& rec : r.metrics) {
        CHECK(rec.phase == "final");
        CHECK(rec.round == 0);
        CHECK(rec.dataset_size == 40);
    }
    CHECK(phase_count(cfg) == 1);
}

TEST_CASE("metrics serialization") {
    MetricsRecord rec;
    rec.phase = "aug";
    rec.round = 2;
    rec.step = 50;
    rec.loss = 1.5;
    rec.ce = 0.25;
    rec.entropy_mean = 0.6;
    rec.entropy_origin_mean = 0.4;
    rec.flagged = 1;
    rec.dataset_size = 240;
    rec.wallclock_s = 0.125;
    const nlohmann::json j = nlohmann::json::parse(metrics_json(rec));
    CHECK(j["phase"] == "aug");
    CHECK(j["round"] == 2);
    CHECK(j["step"] == 50);
    CHECK(j["loss"] == 1.5);
    CHECK(j["entropy_origin_mean"] == 0.4);
    CHECK(j["flagged"] == 1);
    CHECK(j["dataset_size"] == 240);
    CHECK(j["wallclock_s"] == 0.125);

    MetricsRecord min_rec = rec;
    min_rec.phase = "min";
    const nlohmann::json jm = nlohmann::json::parse(metrics_json(min_rec));
    CHECK(!jm.contains("entropy_origin_mean"));
    CHECK(!jm.contains("flagged"));

    std::vector<MetricsRecord> log = {rec, min_rec};
    write_metrics("metrics_test.jsonl", log);
    std::ifstream in("metrics_test.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        CHECK(nlohmann::json::parse(line).contains("phase"));
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("config json round trip rejects unknown keys") {
    AdvConfig cfg = toy_run_config();
    cfg.clip_pixels = true;
    const AdvConfig back = adv_config_from_json(adv_config_to_json(cfg));
    CHECK(back.k == cfg.k);
    CHECK(back.t_min == cfg.t_min);
    CHECK(back.t_max == cfg.t_max);
    CHECK(back.alpha == cfg.alpha);
    CHECK(back.eta == cfg.eta);
    CHECK(back.gamma == cfg.gamma);
    CHECK(back.beta == cfg.beta);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.final_steps == cfg.final_steps);
    CHECK(back.optimizer == cfg.optimizer);
    CHECK(back.clip_pixels == cfg.clip_pixels);
    CHECK(back.seed == cfg.seed);

    const ModelSpec spec = mlp_spec({28, 28, 1}, {16, 16}, 10, 77);
    const ModelSpec spec_back = model_spec_from_json(model_spec_to_json(spec));
    CHECK(spec_back.arch == spec.arch);
    CHECK(spec_back.input_shape == spec.input_shape);
    CHECK(spec_back.hidden == spec.hidden);
    CHECK(spec_back.classes == spec.classes);
    CHECK(spec_back.seed == spec.seed);

    try {
        adv_config_from_json(nlohmann::json{{"t_mim", 5}});
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("train.t_mim") != std::string::npos);
    }
    try {
        model_spec_from_json(nlohmann::json{{"classes", "ten"}});
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("model.classes") != std::string::npos);
    }
    CHECK_THROWS_AS(adv_config_from_json(nlohmann::json::array()), std::invalid_argument);

    // partial objects start from defaults
    const AdvConfig partial = adv_config_from_json(nlohmann::json{{"k", 1}});
    CHECK(partial.k == 1);
    CHECK(partial.t_min == 100);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const ImageDataset source = separable_blobs(12, 51);
    const ModelSpec spec = mlp_spec({2}, {4}, 2, 23);
    AdvConfig cfg = toy_run_config();
    cfg.optimizer = "adam";
    cfg.alpha = 0.01;
    TrainerState st = init_trainer(spec, cfg);
    AugmentedDataset ds = wrap_source(source, spec.input_shape);
    std::vector<MetricsRecord> log;
    step_phase(st, ds, log);  // min round 1
    step_phase(st, ds, log);  // aug round 1

    save_checkpoint("ckpt_rt.bin", st, &ds);
    const Checkpoint ck = load_checkpoint("ckpt_rt.bin");
    CHECK(params_equal(ck.state.model, st.model));
    CHECK(ck.state.opt.kind == "adam");
    CHECK(ck.state.opt.t == st.opt.t);
    for (size_t i = 0; i < st.opt.m.size(); ++i) {
        CHECK(ck.state.opt.m[i] == st.opt.m[i]);
        CHECK(ck.state.opt.v[i] == st.opt.v[i]);
    }
    CHECK(ck.state.global_step == st.global_step);
    CHECK(ck.state.next_phase == 2);
    CHECK(ck.state.cfg.seed == cfg.seed);
    CHECK(ck.state.cfg.optimizer == "adam");
    REQUIRE(ck.has_dataset);
    CHECK(ck.dataset.source_size == 12);
    REQUIRE(ck.dataset.size() == ds.size());
    for (int i = 0; i < ds.size(); ++i) {
        const Record& a = ck.dataset.records[static_cast<size_t>(i)];
        const Record& b = ds.records[static_cast<size_t>(i)];
        CHECK(a.image == b.image);
        CHECK(a.label == b.label);
        CHECK(a.origin == b.origin);
        CHECK(a.round == b.round);
    }

    // plain model checkpoint without the dataset
    save_checkpoint("ckpt_plain.bin", st);
    const Checkpoint plain = load_checkpoint("ckpt_plain.bin");
    CHECK(!plain.has_dataset);
    CHECK(params_equal(plain.state.model, st.model));
}

TEST_CASE("checkpoint format errors") {
    const ModelSpec spec = mlp_spec({2}, {}, 2, 23);
    AdvConfig cfg = toy_run_config();
    cfg.optimizer = "sgd";
    TrainerState st = init_trainer(spec, cfg);
    save_checkpoint("ckpt_fmt.bin", st);

    std::ifstream in("ckpt_fmt.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    REQUIRE(bytes.size() > 20);

    auto write_bytes = [](const std::string& path, const std::string& data) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
    };

    std::string bad = bytes;
    bad[0] = 'X';
    write_bytes("ckpt_badmagic.bin", bad);
    try {
        load_checkpoint("ckpt_badmagic.bin");
        FAIL("expected format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }

    bad = bytes;
    bad[5] = 0x02;
    write_bytes("ckpt_badver.bin", bad);
    try {
        load_checkpoint("ckpt_badver.bin");
        FAIL("expected format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    write_bytes("ckpt_trunc.bin", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint("ckpt_trunc.bin"), format_error);

    std::string garbage("MEADA", 5);
    garbage.push_back(0x01);
    const std::uint64_t hlen = 5;
    for (int i = 0; i < 8; ++i) garbage.push_back(static_cast<char>((hlen >> (8 * i)) & 0xff));
    garbage += "hello";
    write_bytes("ckpt_garbage.bin", garbage);
    CHECK_THROWS_AS(load_checkpoint("ckpt_garbage.bin"), format_error);

    CHECK_THROWS_AS(load_checkpoint("ckpt_missing.bin"), format_error);
}

TEST_CASE("resume from a mid-run checkpoint matches the uninterrupted run") {
    const ImageDataset source = separable_blobs(30, 61);
    const ModelSpec spec = mlp_spec({2}, {6}, 2, 29);
    AdvConfig cfg = toy_run_config();
    cfg.optimizer = "adam";
    cfg.alpha = 0.02;

    const RunResult full = run_me_ada(source, spec, cfg);

    TrainerState st = init_trainer(spec, cfg);
    AugmentedDataset ds = wrap_source(source, spec.input_shape);
    std::vector<MetricsRecord> pre;
    step_phase(st, ds, pre);  // min 1
    step_phase(st, ds, pre);  // aug 1
    step_phase(st, ds, pre);  // min 2
    save_checkpoint("ckpt_resume.bin", st, &ds);

    const Checkpoint ck = load_checkpoint("ckpt_resume.bin");
    REQUIRE(ck.has_dataset);
    CHECK(ck.state.next_phase == 3);
    const RunResult resumed = resume_me_ada(ck.state, ck.dataset);

    CHECK(params_equal(full.state.model, resumed.state.model));
    CHECK(resumed.dataset.size() == full.dataset.size());
    for (int i = 0; i < full.dataset.size(); ++i)
        CHECK(full.dataset.records[static_cast<size_t>(i)].image ==
              resumed.dataset.records[static_cast<size_t>(i)].image);

    // the resumed log holds exactly the tail phases: aug 2 and final
    const std::vector<MetricsRecord> tail(full.metrics.begin() + 51, full.metrics.end());
    CHECK(metrics_equal_ignoring_wallclock(tail, resumed.metrics));
}

TEST_CASE("evaluation on a uniform model") {
    Model m = make_model(mlp_spec({2}, {}, 3, 1));
    for (Param& p : m.params) p.value = Tensor(p.value.shape);
    ImageDataset ds;
    ds.name = "uniform-toy";
    ds.images = Tensor({5, 1, 2, 1}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
    ds.labels = {0, 1, 0, 2, 0};
    const EvalResult ev = evaluate(m, ds, 2);
    CHECK(ev.domain == "uniform-toy");
    CHECK(ev.n == 5);
    CHECK(ev.accuracy == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(ev.entropy_mean == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(evaluate(m, ds, 0), std::invalid_argument);
}

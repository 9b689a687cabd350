#include "meada/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <json.hpp>

#include "meada/model.hpp"
#include "meada/objectives.hpp"
#include "meada/ops.hpp"
#include "meada/rng.hpp"

namespace meada {
namespace {

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

Tensor rand_tensor(Rng& rng, const Shape& s, double lo, double hi) {
    Tensor t(s);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Values at least `margin` away from `kink` so the difference step never
// straddles the non-smooth point.
Tensor rand_away(Rng& rng, const Shape& s, double lo, double hi, double kink, double margin) {
    Tensor t(s);
    for (auto& v : t.data) {
        double x;
        do {
            x = rng.uniform(lo, hi);
        } while (std::fabs(x - kink) < margin);
        v = x;
    }
    return t;
}

// All entries distinct with gaps of exactly 0.1 (shuffled grid), so pooling
// argmaxes cannot flip under the difference step.
Tensor rand_distinct(Rng& rng, const Shape& s) {
    Tensor t(s);
    const std::int64_t n = t.numel();
    std::vector<std::int64_t> order(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);
    for (std::int64_t i = 0; i < n; ++i)
        t[i] = 0.1 * static_cast<double>(order[static_cast<size_t>(i)]) - 0.05 * static_cast<double>(n);
    return t;
}

// Projection weights bounded away from zero so every output element
// contributes a non-negligible term to the checked scalar.
Tensor rand_weights(Rng& rng, const Shape& s) {
    Tensor t(s);
    for (auto& v : t.data) {
        const double mag = rng.uniform(0.5, 1.5);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

int dim_between(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.uniform_int(hi - lo + 1));
}

using Builder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

double project(const Builder& build, const std::vector<Tensor>& inputs, const Tensor& w) {
    Graph g;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.input(t));
    const NodeId out = build(g, ids);
    const NodeId loss = sum(g, mul(g, out, g.constant(w)));
    return g.value(loss)[0];
}

// One random instance: analytic gradients of the projected output with respect
// to every input, against central differences. Returns the worst relative
// error over all inputs and elements.
double check_instance(Rng& rng, const Builder& build, std::vector<Tensor> inputs, double fd_step,
                      bool sabotaged) {
    Shape out_shape;
    {
        Graph g;
        std::vector<NodeId> ids;
        for (const Tensor& t : inputs) ids.push_back(g.input(t));
        out_shape = g.value(build(g, ids)).shape;
    }
    const Tensor w = rand_weights(rng, out_shape);

    Graph g;
    std::vector<NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(g.input(t, true));
    const NodeId out = build(g, ids);
    g.backward(sum(g, mul(g, out, g.constant(w))));

    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        Tensor analytic = g.grad(ids[i]);
        if (sabotaged)
            for (auto& v : analytic.data) v += 0.5;
        Tensor& xi = inputs[i];
        for (std::int64_t e = 0; e < xi.numel(); ++e) {
            const double saved = xi[e];
            xi[e] = saved + fd_step;
            const double up = project(build, inputs, w);
            xi[e] = saved - fd_step;
            const double dn = project(build, inputs, w);
            xi[e] = saved;
            worst = std::max(worst, rel_err(analytic[e], (up - dn) / (2.0 * fd_step)));
        }
    }
    return worst;
}

struct CaseDef {
    std::string name;
    std::function<double(Rng&, std::uint64_t, double, bool)> run;  // rng, instance seed, step, sabotaged
};

std::vector<CaseDef> case_table() {
    std::vector<CaseDef> defs;

    auto elementwise_pair = [](const char* name, NodeId (*op)(Graph&, NodeId, NodeId),
                               bool broadcasts) {
        return CaseDef{name, [op, broadcasts](Rng& rng, std::uint64_t, double h, bool sab) {
                           const Shape s = {dim_between(rng, 1, 4), dim_between(rng, 1, 4)};
                           const int variant = broadcasts ? static_cast<int>(rng.uniform_int(3)) : 0;
                           Shape sa = variant == 2 ? Shape{1} : s;
                           Shape sb = variant == 1 ? Shape{1} : s;
                           Tensor a = rand_tensor(rng, sa, -2.0, 2.0);
                           Tensor b = rand_tensor(rng, sb, -2.0, 2.0);
                           Builder build = [op](Graph& g, const std::vector<NodeId>& ids) {
                               return op(g, ids[0], ids[1]);
                           };
                           return check_instance(rng, build, {std::move(a), std::move(b)}, h, sab);
                       }};
    };
    defs.push_back(elementwise_pair("add", &add, true));

    defs.push_back({"add_bias", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        Shape sa;
                        if (rng.uniform_int(2) == 0)
                            sa = {dim_between(rng, 1, 4), dim_between(rng, 2, 5)};
                        else
                            sa = {dim_between(rng, 1, 2), dim_between(rng, 2, 3),
                                  dim_between(rng, 2, 3), dim_between(rng, 1, 3)};
                        Tensor a = rand_tensor(rng, sa, -2.0, 2.0);
                        Tensor b = rand_tensor(rng, {sa.back()}, -2.0, 2.0);
                        Builder build = [](Graph& g, const std::vector<NodeId>& ids) {
                            return add_bias(g, ids[0], ids[1]);
                        };
                        return check_instance(rng, build, {std::move(a), std::move(b)}, h, sab);
                    }});

    defs.push_back(elementwise_pair("mul", &mul, true));

    defs.push_back({"mul_scalar", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        Tensor a = rand_tensor(rng, {dim_between(rng, 1, 4), dim_between(rng, 1, 4)},
                                               -2.0, 2.0);
                        const double s = rng.uniform(-2.0, 2.0);
                        Builder build = [s](Graph& g, const std::vector<NodeId>& ids) {
                            return mul_scalar(g, ids[0], s);
                        };
                        return check_instance(rng, build, {std::move(a)}, h, sab);
                    }});

    defs.push_back(elementwise_pair("sub", &sub, false));

    defs.push_back({"matmul", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        const int m = dim_between(rng, 1, 4);
                        const int k = dim_between(rng, 1, 4);
                        const int n = dim_between(rng, 1, 4);
                        Tensor a = rand_tensor(rng, {m, k}, -2.0, 2.0);
                        Tensor b = rand_tensor(rng, {k, n}, -2.0, 2.0);
                        Builder build = [](Graph& g, const std::vector<NodeId>& ids) {
                            return matmul(g, ids[0], ids[1]);
                        };
                        return check_instance(rng, build, {std::move(a), std::move(b)}, h, sab);
                    }});

    defs.push_back({"conv2d", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        const Pad pad = rng.uniform_int(2) == 0 ? Pad::valid : Pad::same;
                        const int k = rng.uniform_int(2) == 0 ? 1 : 3;
                        Tensor input = rand_tensor(rng,
                                                   {dim_between(rng, 1, 2), dim_between(rng, 3, 5),
                                                    dim_between(rng, 3, 5), dim_between(rng, 1, 2)},
                                                   -1.0, 1.0);
                        Tensor kernel = rand_tensor(
                            rng, {k, k, input.shape[3], dim_between(rng, 1, 2)}, -1.0, 1.0);
                        Builder build = [pad](Graph& g, const std::vector<NodeId>& ids) {
                            return conv2d(g, ids[0], ids[1], pad);
                        };
                        return check_instance(rng, build, {std::move(input), std::move(kernel)}, h,
                                              sab);
                    }});

    defs.push_back({"maxpool2", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        Tensor a = rand_distinct(
                            rng, {dim_between(rng, 1, 2), 2 * dim_between(rng, 1, 2),
                                  2 * dim_between(rng, 1, 2), dim_between(rng, 1, 2)});
                        Builder build = [](Graph& g, const std::vector<NodeId>& ids) {
                            return maxpool2(g, ids[0]);
                        };
                        return check_instance(rng, build, {std::move(a)}, h, sab);
                    }});

    auto unary = [](const char* name, NodeId (*op)(Graph&, NodeId),
                    std::function<Tensor(Rng&)> gen) {
        return CaseDef{name, [op, gen](Rng& rng, std::uint64_t, double h, bool sab) {
                           Tensor a = gen(rng);
                           Builder build = [op](Graph& g, const std::vector<NodeId>& ids) {
                               return op(g, ids[0]);
                           };
                           return check_instance(rng, build, {std::move(a)}, h, sab);
                       }};
    };
    auto shape_2d = [](Rng& rng) { return Shape{dim_between(rng, 1, 4), dim_between(rng, 1, 4)}; };

    defs.push_back(unary("relu", &relu, [shape_2d](Rng& rng) {
        return rand_away(rng, shape_2d(rng), -2.0, 2.0, 0.0, 0.05);
    }));
    defs.push_back(unary("log", &log, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), 0.1, 3.0);
    }));
    defs.push_back(unary("exp", &exp, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), -2.0, 2.0);
    }));
    defs.push_back(unary("square", &square, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), -2.0, 2.0);
    }));
    defs.push_back(unary("softplus", &softplus, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), -4.0, 4.0);
    }));

    defs.push_back({"clamp_min", [shape_2d](Rng& rng, std::uint64_t, double h, bool sab) {
                        const double lo = rng.uniform(-1.0, 1.0);
                        Tensor a = rand_away(rng, shape_2d(rng), lo - 2.0, lo + 2.0, lo, 0.05);
                        Builder build = [lo](Graph& g, const std::vector<NodeId>& ids) {
                            return clamp_min(g, ids[0], lo);
                        };
                        return check_instance(rng, build, {std::move(a)}, h, sab);
                    }});

    defs.push_back(unary("sum", &sum, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), -2.0, 2.0);
    }));
    defs.push_back(unary("mean", &mean, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), -2.0, 2.0);
    }));
    defs.push_back(unary("row_sum", &row_sum, [shape_2d](Rng& rng) {
        return rand_tensor(rng, shape_2d(rng), -2.0, 2.0);
    }));
    defs.push_back(unary("log_softmax", &log_softmax, [](Rng& rng) {
        return rand_tensor(rng, {dim_between(rng, 1, 4), dim_between(rng, 2, 6)}, -3.0, 3.0);
    }));

    defs.push_back({"concat", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        const int axis = static_cast<int>(rng.uniform_int(2));
                        const int parts = 2 + static_cast<int>(rng.uniform_int(2));
                        const int fixed = dim_between(rng, 1, 3);
                        std::vector<Tensor> inputs;
                        for (int p = 0; p < parts; ++p) {
                            const int var = dim_between(rng, 1, 3);
                            const Shape s = axis == 0 ? Shape{var, fixed} : Shape{fixed, var};
                            inputs.push_back(rand_tensor(rng, s, -2.0, 2.0));
                        }
                        Builder build = [axis](Graph& g, const std::vector<NodeId>& ids) {
                            return concat(g, ids, axis);
                        };
                        return check_instance(rng, build, std::move(inputs), h, sab);
                    }});

    defs.push_back({"reshape", [](Rng& rng, std::uint64_t, double h, bool sab) {
                        const int m = dim_between(rng, 1, 4);
                        const int n = dim_between(rng, 1, 4);
                        Tensor a = rand_tensor(rng, {m, n}, -2.0, 2.0);
                        Shape target;
                        switch (rng.uniform_int(3)) {
                            case 0: target = {m * n}; break;
                            case 1: target = {n, m}; break;
                            default: target = {1, m, n}; break;
                        }
                        Builder build = [target](Graph& g, const std::vector<NodeId>& ids) {
                            return reshape(g, ids[0], target);
                        };
                        return check_instance(rng, build, {std::move(a)}, h, sab);
                    }});

    defs.push_back({"adversarial_objective",
                    [](Rng& rng, std::uint64_t inst_seed, double h, bool sab) {
                        ModelSpec spec;
                        spec.arch = "mlp";
                        spec.input_shape = {2, 2, 1};
                        spec.hidden = {5};
                        spec.classes = 3;
                        spec.seed = derive_seed(inst_seed, "model");
                        const Model m = make_model(spec);
                        Tensor x = rand_tensor(rng, {2, 2, 2, 1}, 0.05, 0.95);
                        const std::vector<int> labels = {static_cast<int>(rng.uniform_int(3)),
                                                         static_cast<int>(rng.uniform_int(3))};
                        Tensor xa = x;
                        for (auto& v : xa.data) v += rng.uniform(-0.1, 0.1);
                        const Tensor z0 = forward(m, xa).z;
                        const ObjectiveConfig ocfg{0.7, 0.4, 0.0};
                        Builder build = [&m, &labels, &z0, &ocfg](Graph& g,
                                                                  const std::vector<NodeId>& ids) {
                            ForwardNodes fn = model_forward(g, m, ids[0], false);
                            return adversarial_objective_node(g, fn, labels, z0, ocfg);
                        };
                        return check_instance(rng, build, {std::move(x)}, h, sab);
                    }});

    return defs;
}

}  // namespace

std::vector<std::string> gradcheck_case_names() {
    std::vector<std::string> names;
    for (const CaseDef& def : case_table()) names.push_back(def.name);
    return names;
}

void validate_gradcheck_config(const GradcheckConfig& cfg) {
    if (cfg.instances < 1) throw std::invalid_argument("gradcheck: instances must be >= 1");
    if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("gradcheck: tolerance must be > 0");
    if (!(cfg.fd_step > 0.0)) throw std::invalid_argument("gradcheck: fd_step must be > 0");
    if (!cfg.sabotage.empty()) {
        const auto names = gradcheck_case_names();
        if (std::find(names.begin(), names.end(), cfg.sabotage) == names.end())
            throw std::invalid_argument("gradcheck: unknown sabotage target \"" + cfg.sabotage +
                                        "\"");
    }
}

bool GradcheckReport::all_pass() const {
    for (const GradcheckCase& c : cases)
        if (!c.pass) return false;
    return true;
}

const GradcheckCase& GradcheckReport::worst() const {
    if (cases.empty()) throw std::logic_error("gradcheck: empty report");
    const GradcheckCase* w = &cases[0];
    for (const GradcheckCase& c : cases)
        if (c.max_rel_err > w->max_rel_err) w = &c;
    return *w;
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
    validate_gradcheck_config(cfg);
    GradcheckReport rep;
    rep.config = cfg;
    for (const CaseDef& def : case_table()) {
        GradcheckCase c;
        c.name = def.name;
        c.instances = cfg.instances;
        const bool sabotaged = cfg.sabotage == def.name;
        for (int i = 0; i < cfg.instances; ++i) {
            const std::uint64_t s =
                derive_seed(cfg.seed, "gradcheck:" + def.name, static_cast<std::uint64_t>(i));
            Rng rng(s);
            c.max_rel_err = std::max(c.max_rel_err, def.run(rng, s, cfg.fd_step, sabotaged));
        }
        c.pass = c.max_rel_err < cfg.tolerance;
        rep.cases.push_back(std::move(c));
    }
    return rep;
}

std::string gradcheck_report_json(const GradcheckReport& rep) {
    nlohmann::ordered_json j;
    j["suite"] = "gradcheck";
    j["instances"] = rep.config.instances;
    j["tolerance"] = rep.config.tolerance;
    j["fd_step"] = rep.config.fd_step;
    j["seed"] = rep.config.seed;
    j["sabotage"] = rep.config.sabotage;
    j["cases"] = nlohmann::ordered_json::array();
    for (const GradcheckCase& c : rep.cases) {
        nlohmann::ordered_json cj;
        cj["name"] = c.name;
        cj["instances"] = c.instances;
        cj["max_rel_err"] = c.max_rel_err;
        cj["pass"] = c.pass;
        j["cases"].push_back(std::move(cj));
    }
    j["all_pass"] = rep.all_pass();
    const GradcheckCase& w = rep.worst();
    j["worst"] = {{"name", w.name}, {"max_rel_err", w.max_rel_err}};
    return j.dump(2);
}

}  // namespace meada

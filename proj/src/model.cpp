#include "meada/model.hpp"

#include <cmath>

#include "meada/rng.hpp"

namespace meada {

namespace {

std::int64_t flat_dim(const Shape& s) { return shape_numel(s); }

// spatial sizes along the lenet chain; throws if any stage degenerates
struct LenetDims {
    int h1, w1, p1h, p1w, h2, w2, p2h, p2w;
    std::int64_t flat;
};

LenetDims lenet_dims(const Shape& in) {
    LenetDims d{};
    d.h1 = in[0] - 4;
    d.w1 = in[1] - 4;
    if (d.h1 <= 0 || d.w1 <= 0 || d.h1 % 2 || d.w1 % 2)
        throw shape_error("lenet-small: input " + shape_str(in) + " too small for conv1+pool");
    d.p1h = d.h1 / 2;
    d.p1w = d.w1 / 2;
    d.h2 = d.p1h - 4;
    d.w2 = d.p1w - 4;
    if (d.h2 <= 0 || d.w2 <= 0 || d.h2 % 2 || d.w2 % 2)
        throw shape_error("lenet-small: input " + shape_str(in) + " too small for conv2+pool");
    d.p2h = d.h2 / 2;
    d.p2w = d.w2 / 2;
    d.flat = static_cast<std::int64_t>(d.p2h) * d.p2w * 16;
    return d;
}

Tensor kaiming_uniform(Rng& r, const Shape& s, std::int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t(s);
    for (auto& v : t.data) v = r.uniform(-bound, bound);
    return t;
}

}  // namespace

void validate_spec(const ModelSpec& spec) {
    if (spec.classes < 2)
        throw shape_error("model spec: class count must be at least 2, got " +
                          std::to_string(spec.classes));
    if (spec.input_shape.empty()) throw shape_error("model spec: empty input shape");
    for (int d : spec.input_shape)
        if (d <= 0) throw shape_error("model spec: bad input shape " + shape_str(spec.input_shape));
    for (int h : spec.hidden)
        if (h <= 0) throw shape_error("model spec: non-positive hidden width");
    if (spec.arch == "mlp") return;
    if (spec.arch == "lenet-small") {
        if (spec.input_shape.size() != 3)
            throw shape_error("lenet-small: input shape must be [H,W,C], got " +
                              shape_str(spec.input_shape));
        lenet_dims(spec.input_shape);
        return;
    }
    throw shape_error("model spec: unknown architecture '" + spec.arch + "'");
}

Tensor& Model::param(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return p.value;
    throw shape_error("model: no parameter named '" + name + "'");
}

const Tensor& Model::param(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return p.value;
    throw shape_error("model: no parameter named '" + name + "'");
}

int latent_dim(const ModelSpec& spec) {
    validate_spec(spec);
    if (spec.arch == "lenet-small") return 84;
    return spec.hidden.empty() ? static_cast<int>(flat_dim(spec.input_shape)) : spec.hidden.back();
}

Model make_model(const ModelSpec& spec) {
    validate_spec(spec);
    Rng r(derive_seed(spec.seed, "model_init"));
    Model m;
    m.spec = spec;
    if (spec.arch == "mlp") {
        int in = static_cast<int>(flat_dim(spec.input_shape));
        for (size_t i = 0; i < spec.hidden.size(); ++i) {
            const int out = spec.hidden[i];
            const std::string tag = "fc" + std::to_string(i + 1);
            m.params.push_back({tag + ".w", kaiming_uniform(r, {in, out}, in)});
            m.params.push_back({tag + ".b", Tensor({out})});
            in = out;
        }
        m.params.push_back({"out.w", kaiming_uniform(r, {in, spec.classes}, in)});
        m.params.push_back({"out.b", Tensor({spec.classes})});
        return m;
    }
    const int ci = spec.input_shape[2];
    const LenetDims d = lenet_dims(spec.input_shape);
    m.params.push_back({"conv1.w", kaiming_uniform(r, {5, 5, ci, 6}, 25 * ci)});
    m.params.push_back({"conv1.b", Tensor({6})});
    m.params.push_back({"conv2.w", kaiming_uniform(r, {5, 5, 6, 16}, 25 * 6)});
    m.params.push_back({"conv2.b", Tensor({16})});
    m.params.push_back({"fc1.w", kaiming_uniform(r, {static_cast<int>(d.flat), 120}, d.flat)});
    m.params.push_back({"fc1.b", Tensor({120})});
    m.params.push_back({"fc2.w", kaiming_uniform(r, {120, 84}, 120)});
    m.params.push_back({"fc2.b", Tensor({84})});
    m.params.push_back({"out.w", kaiming_uniform(r, {84, spec.classes}, 84)});
    m.params.push_back({"out.b", Tensor({spec.classes})});
    return m;
}

ForwardNodes model_forward_with_params(Graph& g, const ModelSpec& spec,
                                       const std::vector<NodeId>& param_ids, NodeId x_id) {
    validate_spec(spec);
    const Tensor& x = g.value(x_id);
    Shape expected = spec.input_shape;
    expected.insert(expected.begin(), x.ndim() ? x.shape[0] : 0);
    if (x.ndim() != static_cast<int>(spec.input_shape.size()) + 1 || x.shape != expected)
        throw shape_error("forward: input " + shape_str(x.shape) + " does not match batched spec " +
                          shape_str(expected));
    const int n = x.shape[0];

    ForwardNodes out;
    out.param_ids = param_ids;
    size_t p = 0;
    const auto next = [&]() { return param_ids.at(p++); };

    NodeId h = x_id;
    if (spec.arch == "mlp") {
        if (spec.input_shape.size() > 1)
            h = reshape(g, h, {n, static_cast<int>(flat_dim(spec.input_shape))});
        for (size_t i = 0; i < spec.hidden.size(); ++i) {
            NodeId w = next(), b = next();
            h = relu(g, add_bias(g, matmul(g, h, w), b));
        }
        out.z = h;
    } else {
        NodeId c1w = next(), c1b = next();
        h = maxpool2(g, relu(g, add_bias(g, conv2d(g, h, c1w, Pad::valid), c1b)));
        NodeId c2w = next(), c2b = next();
        h = maxpool2(g, relu(g, add_bias(g, conv2d(g, h, c2w, Pad::valid), c2b)));
        const LenetDims d = lenet_dims(spec.input_shape);
        h = reshape(g, h, {n, static_cast<int>(d.flat)});
        NodeId f1w = next(), f1b = next();
        h = relu(g, add_bias(g, matmul(g, h, f1w), f1b));
        NodeId f2w = next(), f2b = next();
        h = relu(g, add_bias(g, matmul(g, h, f2w), f2b));
        out.z = h;
    }
    NodeId ow = next(), ob = next();
    if (p != param_ids.size())
        throw shape_error("forward: parameter count mismatch for arch '" + spec.arch + "'");
    out.logits = add_bias(g, matmul(g, out.z, ow), ob);
    out.logp = log_softmax(g, out.logits);
    return out;
}

ForwardNodes model_forward(Graph& g, const Model& m, NodeId x_id, bool train_params) {
    std::vector<NodeId> ids;
    ids.reserve(m.params.size());
    for (const Param& p : m.params) ids.push_back(g.input(p.value, train_params));
    return model_forward_with_params(g, m.spec, ids, x_id);
}

ForwardResult forward(const Model& m, const Tensor& x) {
    Tensor xb = x;
    if (x.ndim() == static_cast<int>(m.spec.input_shape.size())) {
        Shape s = x.shape;
        s.insert(s.begin(), 1);
        xb = x.reshaped(s);
    }
    Graph g;
    ForwardNodes fn = model_forward(g, m, g.input(std::move(xb), false), false);
    ForwardResult res;
    res.z = g.value(fn.z);
    res.logits = g.value(fn.logits);
    res.probs = g.value(fn.logp);
    for (auto& v : res.probs.data) v = std::exp(v);
    return res;
}

}  // namespace meada

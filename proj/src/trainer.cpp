#include "meada/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "meada/rng.hpp"
#include "meada/serde.hpp"

namespace meada {

namespace {

constexpr double kPi = 3.14159265358979323846;

double elapsed_s(const TrainerState& st) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - st.run_start).count();
}

std::string train_snapshot(const TrainerState& st, const char* phase, int round,
                           const std::vector<int>& idx, double loss) {
    std::ostringstream ss;
    ss << "phase=" << phase << " round=" << round << " global_step=" << st.global_step
       << " loss=" << loss << " dataset_batch=[";
    for (size_t i = 0; i < idx.size() && i < 8; ++i) ss << (i ? "," : "") << idx[i];
    if (idx.size() > 8) ss << ",...";
    double sqnorm = 0.0;
    for (const Param& p : st.model.params)
        for (double v : p.value.data) sqnorm += v * v;
    ss << "] param_sqnorm=" << sqnorm;
    return ss.str();
}

}  // namespace

void validate_adv_config(const AdvConfig& cfg) {
    if (cfg.k < 0) throw std::invalid_argument("config: k must be >= 0");
    if (cfg.t_min < 1) throw std::invalid_argument("config: t_min must be >= 1");
    if (cfg.t_max < 1) throw std::invalid_argument("config: t_max must be >= 1");
    if (!std::isfinite(cfg.alpha) || cfg.alpha < 0.0)
        throw std::invalid_argument("config: alpha must be finite and >= 0");
    if (!std::isfinite(cfg.eta) || cfg.eta < 0.0)
        throw std::invalid_argument("config: eta must be finite and >= 0");
    validate_objective_config(cfg.objective());
    if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (cfg.final_steps < -1)
        throw std::invalid_argument("config: final_steps must be >= 0, or -1 for the default");
    if (cfg.optimizer != "sgd" && cfg.optimizer != "adam")
        throw std::invalid_argument("config: unknown optimizer \"" + cfg.optimizer + "\"");
    if (cfg.lr_schedule != "constant" && cfg.lr_schedule != "cosine")
        throw std::invalid_argument("config: unknown lr_schedule \"" + cfg.lr_schedule + "\"");
}

double lr_at(const AdvConfig& cfg, int global_step) {
    if (cfg.lr_schedule == "constant") return cfg.alpha;
    const double total =
        static_cast<double>(cfg.k) * cfg.t_min + static_cast<double>(cfg.resolved_final_steps());
    const double t = total > 0.0 ? std::min(1.0, static_cast<double>(global_step) / total) : 1.0;
    return cfg.alpha * 0.5 * (1.0 + std::cos(kPi * t));
}

AugmentedDataset wrap_source(const ImageDataset& ds, const Shape& input_shape) {
    validate_dataset(ds);
    if (input_shape.empty()) throw shape_error("wrap_source: empty input shape");
    const std::int64_t stride = shape_numel(input_shape);
    const std::int64_t row = static_cast<std::int64_t>(ds.images.shape[1]) * ds.images.shape[2] *
                             ds.images.shape[3];
    if (stride != row)
        throw shape_error("wrap_source: image numel " + std::to_string(row) +
                          " != input shape numel " + std::to_string(stride));
    AugmentedDataset out;
    out.source_size = ds.size();
    out.records.reserve(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) {
        Record rec;
        rec.image = Tensor(input_shape,
                           std::vector<double>(ds.images.data.begin() + i * row,
                                               ds.images.data.begin() + (i + 1) * row));
        rec.label = ds.labels[static_cast<size_t>(i)];
        rec.origin = i;
        rec.round = 0;
        out.records.push_back(std::move(rec));
    }
    return out;
}

Batch gather_batch(const AugmentedDataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("batch: empty index list");
    if (ds.size() == 0) throw std::invalid_argument("batch: empty dataset");
    const Shape& in_shape = ds.records.front().image.shape;
    const std::int64_t stride = shape_numel(in_shape);
    Shape bs;
    bs.reserve(in_shape.size() + 1);
    bs.push_back(static_cast<int>(indices.size()));
    for (int d : in_shape) bs.push_back(d);
    Batch b;
    b.x = Tensor(bs);
    b.labels.reserve(indices.size());
    for (size_t j = 0; j < indices.size(); ++j) {
        const int idx = indices[j];
        if (idx < 0 || idx >= ds.size())
            throw std::invalid_argument("batch: index " + std::to_string(idx) + " out of range");
        const Record& rec = ds.records[static_cast<size_t>(idx)];
        if (!(rec.image.shape == in_shape))
            throw shape_error("batch: record " + std::to_string(idx) + " has shape " +
                              shape_str(rec.image.shape) + ", expected " + shape_str(in_shape));
        std::copy(rec.image.data.begin(), rec.image.data.end(),
                  b.x.data.begin() + static_cast<std::int64_t>(j) * stride);
        b.labels.push_back(rec.label);
    }
    return b;
}

std::vector<int> sample_batch_indices(const AdvConfig& cfg, int global_step, int n) {
    if (n < 1) throw std::invalid_argument("batch: dataset empty");
    std::vector<int> idx;
    if (cfg.batch_size >= n) {
        idx.resize(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        return idx;  // covers the dataset: fixed full batch in order
    }
    Rng r(derive_seed(cfg.seed, "batch", static_cast<std::uint64_t>(global_step)));
    idx.reserve(static_cast<size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) idx.push_back(static_cast<int>(r.uniform_int(n)));
    return idx;
}

Optimizer make_optimizer(const std::string& kind, const Model& model) {
    if (kind != "sgd" && kind != "adam")
        throw std::invalid_argument("optimizer: unknown kind \"" + kind + "\"");
    Optimizer opt;
    opt.kind = kind;
    if (kind == "adam") {
        opt.m.reserve(model.params.size());
        opt.v.reserve(model.params.size());
        for (const Param& p : model.params) {
            opt.m.emplace_back(p.value.shape);
            opt.v.emplace_back(p.value.shape);
        }
    }
    return opt;
}

void optimizer_step(Optimizer& opt, Model& model, const std::vector<Tensor>& grads, double lr) {
    if (grads.size() != model.params.size())
        throw std::invalid_argument("optimizer: got " + std::to_string(grads.size()) +
                                    " gradients for " + std::to_string(model.params.size()) +
                                    " parameters");
    for (size_t i = 0; i < grads.size(); ++i)
        if (!(grads[i].shape == model.params[i].value.shape))
            throw shape_error("optimizer: gradient shape mismatch for " + model.params[i].name);
    if (opt.kind == "sgd") {
        for (size_t i = 0; i < grads.size(); ++i) {
            Tensor& p = model.params[i].value;
            const Tensor& g = grads[i];
            for (std::int64_t j = 0; j < p.numel(); ++j) p[j] -= lr * g[j];
        }
        return;
    }
    if (opt.m.size() != model.params.size() || opt.v.size() != model.params.size())
        throw std::invalid_argument("optimizer: moment slots not initialized");
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
    for (size_t i = 0; i < grads.size(); ++i) {
        Tensor& p = model.params[i].value;
        Tensor& m = opt.m[i];
        Tensor& v = opt.v[i];
        const Tensor& g = grads[i];
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            const double gj = g[j];
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * gj;
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * gj * gj;
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt.eps);
        }
    }
}

std::string metrics_json(const MetricsRecord& rec) {
    nlohmann::ordered_json j;
    j["phase"] = rec.phase;
    j["round"] = rec.round;
    j["step"] = rec.step;
    j["loss"] = rec.loss;
    j["ce"] = rec.ce;
    j["entropy_mean"] = rec.entropy_mean;
    if (rec.phase == "aug") {
        j["entropy_origin_mean"] = rec.entropy_origin_mean;
        j["flagged"] = rec.flagged;
    }
    j["dataset_size"] = rec.dataset_size;
    j["wallclock_s"] = rec.wallclock_s;
    return j.dump();
}

void write_metrics(const std::string& path, const std::vector<MetricsRecord>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw format_error("metrics: cannot open " + path);
    for (const MetricsRecord& rec : log) out << metrics_json(rec) << '\n';
    out.flush();
    if (!out) throw format_error("metrics: write failed for " + path);
}

TrainerState init_trainer(const ModelSpec& spec, const AdvConfig& cfg) {
    validate_spec(spec);
    validate_adv_config(cfg);
    TrainerState st;
    st.model = make_model(spec);
    st.opt = make_optimizer(cfg.optimizer, st.model);
    st.cfg = cfg;
    return st;
}

int phase_count(const AdvConfig& cfg) { return 2 * cfg.k + 1; }

std::string phase_name(const AdvConfig& cfg, int phase) {
    if (phase < 0 || phase >= phase_count(cfg))
        throw std::invalid_argument("phase: index " + std::to_string(phase) + " out of range");
    if (phase == 2 * cfg.k) return "final";
    return phase % 2 == 0 ? "min" : "aug";
}

namespace {

// `steps` optimizer updates on batches keyed off the global step counter.
void train_steps(TrainerState& st, const AugmentedDataset& ds, int steps, int round_label,
                 const char* phase_label, std::vector<MetricsRecord>* log) {
    if (ds.size() == 0) throw std::invalid_argument("train: empty dataset");
    const ObjectiveConfig ocfg = st.cfg.objective();
    const int classes = st.model.spec.classes;
    for (int s = 0; s < steps; ++s) {
        const std::vector<int> idx = sample_batch_indices(st.cfg, st.global_step, ds.size());
        Batch b = gather_batch(ds, idx);
        const int bn = static_cast<int>(b.labels.size());
        Graph g;
        const NodeId x_id = g.input(std::move(b.x), false);
        const ForwardNodes fn = model_forward(g, st.model, x_id, true);
        const NodeId loss_id = ib_loss_node(g, fn, b.labels, ocfg);
        const double loss = g.value(loss_id)[0];
        if (!std::isfinite(loss))
            throw numeric_error("train: non-finite loss",
                                train_snapshot(st, phase_label, round_label, idx, loss));
        g.backward(loss_id);
        std::vector<Tensor> grads;
        grads.reserve(fn.param_ids.size());
        for (const NodeId pid : fn.param_ids) grads.push_back(g.grad(pid));
        for (const Tensor& gr : grads)
            if (!gr.all_finite())
                throw numeric_error("train: non-finite gradient",
                                    train_snapshot(st, phase_label, round_label, idx, loss));
        if (log) {
            const Tensor& logp = g.value(fn.logp);
            const double cap = -std::log(kProbFloor);
            double ce_sum = 0.0, h_sum = 0.0;
            for (int i = 0; i < bn; ++i) {
                const double* lp = logp.data.data() + static_cast<size_t>(i) * classes;
                ce_sum += std::min(-lp[b.labels[static_cast<size_t>(i)]], cap);
                double h = 0.0;
                for (int c = 0; c < classes; ++c) h -= std::exp(lp[c]) * lp[c];
                h_sum += h;
            }
            MetricsRecord rec;
            rec.phase = phase_label;
            rec.round = round_label;
            rec.step = st.global_step;
            rec.loss = loss;
            rec.ce = ce_sum / bn;
            rec.entropy_mean = h_sum / bn;
            rec.dataset_size = ds.size();
            rec.wallclock_s = elapsed_s(st);
            log->push_back(std::move(rec));
        }
        optimizer_step(st.opt, st.model, grads, lr_at(st.cfg, st.global_step));
        st.global_step += 1;
    }
}

}  // namespace

void minimize_phase(TrainerState& st, const AugmentedDataset& ds,
                    std::vector<MetricsRecord>* log) {
    const int round = st.next_phase / 2 + 1;
    train_steps(st, ds, st.cfg.t_min, round, "min", log);
    st.next_phase += 1;
}

AscentResult maximize_batch(const Model& m, const Tensor& x0, const std::vector<int>& labels,
                            const AdvConfig& cfg, std::vector<std::vector<double>>* trace) {
    const Shape& in_shape = m.spec.input_shape;
    if (x0.ndim() != static_cast<int>(in_shape.size()) + 1 || x0.shape[0] < 1)
        throw shape_error("maximize: x0 must be [N, ...input_shape], got " + shape_str(x0.shape));
    for (size_t d = 0; d < in_shape.size(); ++d)
        if (x0.shape[d + 1] != in_shape[d])
            throw shape_error("maximize: x0 shape " + shape_str(x0.shape) +
                              " does not match input shape " + shape_str(in_shape));
    const int n = x0.shape[0];
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("maximize: " + std::to_string(n) + " rows vs " +
                                    std::to_string(labels.size()) + " labels");
    const int classes = m.spec.classes;
    for (const int y : labels)
        if (y < 0 || y >= classes)
            throw std::invalid_argument("maximize: label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(classes) + ")");
    if (trace) trace->clear();

    const ObjectiveConfig ocfg = cfg.objective();
    const std::int64_t stride = x0.numel() / n;

    // anchor latents and entropies under the fixed model
    const ForwardResult anchor = forward(m, x0);
    const Tensor& z0 = anchor.z;
    const int latent = z0.shape[1];

    AscentResult res;
    res.x = x0;
    res.flagged.assign(static_cast<size_t>(n), 0);
    res.origin_entropy.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* pr = anchor.probs.data.data() + static_cast<size_t>(i) * classes;
        double h = 0.0;
        for (int c = 0; c < classes; ++c)
            if (pr[c] > 0.0) h -= pr[c] * std::log(pr[c]);
        res.origin_entropy[static_cast<size_t>(i)] = h;
    }

    Tensor last_finite = x0;
    std::vector<char> active(static_cast<size_t>(n), 1);
    std::vector<double> obj(static_cast<size_t>(n)), ce(static_cast<size_t>(n)),
        hrow(static_cast<size_t>(n));

    const double cap = -std::log(kProbFloor);
    auto eval_rows = [&](const Tensor& logp, const Tensor& z) {
        for (int i = 0; i < n; ++i) {
            const double* lp = logp.data.data() + static_cast<size_t>(i) * classes;
            const double row_ce = std::min(-lp[labels[static_cast<size_t>(i)]], cap);
            double h = 0.0;
            for (int c = 0; c < classes; ++c) h -= std::exp(lp[c]) * lp[c];
            double tc = 0.0;
            const double* zr = z.data.data() + static_cast<size_t>(i) * latent;
            const double* z0r = z0.data.data() + static_cast<size_t>(i) * latent;
            for (int l = 0; l < latent; ++l) {
                const double d = zr[l] - z0r[l];
                tc += d * d;
            }
            ce[static_cast<size_t>(i)] = row_ce;
            hrow[static_cast<size_t>(i)] = h;
            obj[static_cast<size_t>(i)] = row_ce + ocfg.beta * h - ocfg.gamma * tc;
        }
    };

    for (int t = 0; t < cfg.t_max; ++t) {
        Graph g;
        const NodeId x_id = g.input(res.x, true);
        const ForwardNodes fn = model_forward(g, m, x_id, false);
        const NodeId obj_id = adversarial_objective_node(g, fn, labels, z0, ocfg);
        eval_rows(g.value(fn.logp), g.value(fn.z));
        if (trace) trace->push_back(obj);
        g.backward(obj_id);
        const Tensor& gx = g.grad(x_id);
        for (int i = 0; i < n; ++i) {
            if (!active[static_cast<size_t>(i)]) continue;
            double* xr = res.x.data.data() + static_cast<std::int64_t>(i) * stride;
            const double* gr = gx.data.data() + static_cast<std::int64_t>(i) * stride;
            double* lf = last_finite.data.data() + static_cast<std::int64_t>(i) * stride;
            bool finite = std::isfinite(obj[static_cast<size_t>(i)]);
            for (std::int64_t jj = 0; finite && jj < stride; ++jj)
                finite = std::isfinite(gr[jj]);
            if (!finite) {
                std::copy(lf, lf + stride, xr);
                res.flagged[static_cast<size_t>(i)] = 1;
                active[static_cast<size_t>(i)] = 0;
                continue;
            }
            std::copy(xr, xr + stride, lf);
            for (std::int64_t jj = 0; jj < stride; ++jj) xr[jj] += cfg.eta * gr[jj];
        }
    }

    if (cfg.clip_pixels)
        for (double& v : res.x.data) v = std::clamp(v, 0.0, 1.0);

    // evaluate the returned iterate; a row that stepped into non-finite
    // territory on the last update reverts like any other
    auto final_eval = [&]() {
        Graph g;
        const NodeId x_id = g.input(res.x, false);
        const ForwardNodes fn = model_forward(g, m, x_id, false);
        eval_rows(g.value(fn.logp), g.value(fn.z));
    };
    final_eval();
    bool reverted = false;
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(obj[static_cast<size_t>(i)])) continue;
        double* xr = res.x.data.data() + static_cast<std::int64_t>(i) * stride;
        const double* lf = last_finite.data.data() + static_cast<std::int64_t>(i) * stride;
        std::copy(lf, lf + stride, xr);
        if (cfg.clip_pixels)
            for (std::int64_t jj = 0; jj < stride; ++jj) xr[jj] = std::clamp(xr[jj], 0.0, 1.0);
        res.flagged[static_cast<size_t>(i)] = 1;
        reverted = true;
    }
    if (reverted) final_eval();
    if (trace) trace->push_back(obj);
    res.objective = std::move(obj);
    res.ce = std::move(ce);
    res.entropy = std::move(hrow);
    return res;
}

Tensor maximize_sample(const Model& m, const Tensor& x0, int y, const AdvConfig& cfg) {
    const Shape& in_shape = m.spec.input_shape;
    if (!(x0.shape == in_shape))
        throw shape_error("maximize: x0 shape " + shape_str(x0.shape) +
                          " does not match input shape " + shape_str(in_shape));
    Shape batched;
    batched.reserve(in_shape.size() + 1);
    batched.push_back(1);
    for (int d : in_shape) batched.push_back(d);
    const AscentResult r = maximize_batch(m, x0.reshaped(batched), {y}, cfg);
    return r.x.reshaped(in_shape);
}

MetricsRecord augment_round(const Model& m, AugmentedDataset& ds, int round_k,
                            const AdvConfig& cfg) {
    if (ds.size() == 0) throw std::invalid_argument("augment: empty dataset");
    if (round_k < 1) throw std::invalid_argument("augment: round must be >= 1");
    const int limit = cfg.perturb_source_only ? ds.source_size : ds.size();
    if (limit < 1 || limit > ds.size())
        throw std::invalid_argument("augment: invalid source_size " +
                                    std::to_string(ds.source_size));
    const int chunk = std::max(1, cfg.batch_size);
    const std::int64_t stride = shape_numel(m.spec.input_shape);
    ds.records.reserve(ds.records.size() + static_cast<size_t>(limit));
    double obj_sum = 0.0, ce_sum = 0.0, h_sum = 0.0, h0_sum = 0.0;
    int flagged = 0;
    for (int begin = 0; begin < limit; begin += chunk) {
        const int end = std::min(limit, begin + chunk);
        std::vector<int> idx(static_cast<size_t>(end - begin));
        std::iota(idx.begin(), idx.end(), begin);
        const Batch b = gather_batch(ds, idx);
        const AscentResult ar = maximize_batch(m, b.x, b.labels, cfg);
        for (int i = 0; i < end - begin; ++i) {
            Record rec;
            rec.image = Tensor(m.spec.input_shape,
                               std::vector<double>(
                                   ar.x.data.begin() + static_cast<std::int64_t>(i) * stride,
                                   ar.x.data.begin() + static_cast<std::int64_t>(i + 1) * stride));
            rec.label = b.labels[static_cast<size_t>(i)];
            rec.origin = begin + i;
            rec.round = round_k;
            ds.records.push_back(std::move(rec));
            obj_sum += ar.objective[static_cast<size_t>(i)];
            ce_sum += ar.ce[static_cast<size_t>(i)];
            h_sum += ar.entropy[static_cast<size_t>(i)];
            h0_sum += ar.origin_entropy[static_cast<size_t>(i)];
            flagged += ar.flagged[static_cast<size_t>(i)];
        }
    }
    MetricsRecord rec;
    rec.phase = "aug";
    rec.round = round_k;
    rec.loss = obj_sum / limit;
    rec.ce = ce_sum / limit;
    rec.entropy_mean = h_sum / limit;
    rec.entropy_origin_mean = h0_sum / limit;
    rec.flagged = flagged;
    rec.dataset_size = ds.size();
    return rec;
}

bool step_phase(TrainerState& st, AugmentedDataset& ds, std::vector<MetricsRecord>& log) {
    const int total = phase_count(st.cfg);
    if (st.next_phase >= total) return false;
    const int p = st.next_phase;
    if (p == 2 * st.cfg.k) {
        train_steps(st, ds, st.cfg.resolved_final_steps(), st.cfg.k, "final", &log);
        st.next_phase = p + 1;
    } else if (p % 2 == 0) {
        minimize_phase(st, ds, &log);
    } else {
        MetricsRecord rec = augment_round(st.model, ds, (p + 1) / 2, st.cfg);
        rec.step = st.global_step;
        rec.wallclock_s = elapsed_s(st);
        log.push_back(std::move(rec));
        st.next_phase = p + 1;
    }
    return true;
}

RunResult run_me_ada(const ImageDataset& source, const ModelSpec& spec, const AdvConfig& cfg) {
    TrainerState st = init_trainer(spec, cfg);
    AugmentedDataset ds = wrap_source(source, spec.input_shape);
    return resume_me_ada(std::move(st), std::move(ds));
}

RunResult resume_me_ada(TrainerState st, AugmentedDataset ds, std::vector<MetricsRecord> log) {
    validate_adv_config(st.cfg);
    while (step_phase(st, ds, log)) {
    }
    RunResult out;
    out.state = std::move(st);
    out.dataset = std::move(ds);
    out.metrics = std::move(log);
    return out;
}

EvalResult evaluate(const Model& m, const ImageDataset& ds, int batch_size) {
    validate_dataset(ds);
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    const int n = ds.size();
    if (n == 0) throw std::invalid_argument("evaluate: empty dataset");
    const std::int64_t stride = shape_numel(m.spec.input_shape);
    const std::int64_t row = static_cast<std::int64_t>(ds.images.shape[1]) * ds.images.shape[2] *
                             ds.images.shape[3];
    if (stride != row)
        throw shape_error("evaluate: image numel " + std::to_string(row) +
                          " != model input numel " + std::to_string(stride));
    const int classes = m.spec.classes;
    int correct = 0;
    double h_sum = 0.0;
    for (int begin = 0; begin < n; begin += batch_size) {
        const int end = std::min(n, begin + batch_size);
        Shape bs;
        bs.reserve(m.spec.input_shape.size() + 1);
        bs.push_back(end - begin);
        for (int d : m.spec.input_shape) bs.push_back(d);
        const Tensor bx(bs, std::vector<double>(ds.images.data.begin() + begin * row,
                                                ds.images.data.begin() + end * row));
        const ForwardResult fr = forward(m, bx);
        for (int i = 0; i < end - begin; ++i) {
            const int label = ds.labels[static_cast<size_t>(begin + i)];
            if (label >= classes)
                throw std::invalid_argument("evaluate: label " + std::to_string(label) +
                                            " >= classes " + std::to_string(classes));
            const double* pr = fr.probs.data.data() + static_cast<size_t>(i) * classes;
            int arg = 0;
            for (int c = 1; c < classes; ++c)
                if (pr[c] > pr[arg]) arg = c;
            if (arg == label) ++correct;
            for (int c = 0; c < classes; ++c)
                if (pr[c] > 0.0) h_sum -= pr[c] * std::log(pr[c]);
        }
    }
    EvalResult out;
    out.domain = ds.name;
    out.accuracy = static_cast<double>(correct) / n;
    out.n = n;
    out.entropy_mean = h_sum / n;
    return out;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[5] = {'M', 'E', 'A', 'D', 'A'};
constexpr unsigned char kVersion = 0x01;

struct ManifestEntry {
    std::string name;
    Shape shape;
};

// Tensor order of the blob: parameters, adam moments (m then v per
// parameter), then the embedded dataset. data_count < 0 means no dataset.
std::vector<ManifestEntry> checkpoint_manifest(const Model& model, const std::string& opt_kind,
                                               int data_count) {
    std::vector<ManifestEntry> out;
    for (const Param& p : model.params) out.push_back({p.name, p.value.shape});
    if (opt_kind == "adam")
        for (const Param& p : model.params) {
            out.push_back({"adam.m." + p.name, p.value.shape});
            out.push_back({"adam.v." + p.name, p.value.shape});
        }
    if (data_count >= 0) {
        Shape imgs;
        imgs.push_back(data_count);
        for (int d : model.spec.input_shape) imgs.push_back(d);
        out.push_back({"data.images", imgs});
        out.push_back({"data.labels", {data_count}});
        out.push_back({"data.origin", {data_count}});
        out.push_back({"data.round", {data_count}});
    }
    return out;
}

void write_u64le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_doubles(std::ostream& out, const double* p, std::int64_t count) {
    unsigned char buf[8 * 512];
    while (count > 0) {
        const std::int64_t take = std::min<std::int64_t>(count, 512);
        for (std::int64_t k = 0; k < take; ++k) {
            const std::uint64_t bits = std::bit_cast<std::uint64_t>(p[k]);
            for (int i = 0; i < 8; ++i)
                buf[k * 8 + i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        }
        out.write(reinterpret_cast<const char*>(buf), take * 8);
        p += take;
        count -= take;
    }
}

std::uint64_t read_u64le(std::istream& in, const char* what) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw format_error(std::string("checkpoint: truncated ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void read_doubles(std::istream& in, double* p, std::int64_t count, const std::string& what) {
    unsigned char buf[8 * 512];
    while (count > 0) {
        const std::int64_t take = std::min<std::int64_t>(count, 512);
        in.read(reinterpret_cast<char*>(buf), take * 8);
        if (!in) throw format_error("checkpoint: truncated tensor data for " + what);
        for (std::int64_t k = 0; k < take; ++k) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<std::uint64_t>(buf[k * 8 + i]) << (8 * i);
            p[k] = std::bit_cast<double>(bits);
        }
        p += take;
        count -= take;
    }
}

int header_int(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || (!j[key].is_number_integer() && !j[key].is_number_unsigned()))
        throw format_error(std::string("checkpoint: header missing integer field ") + key);
    return j[key].get<int>();
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainerState& st,
                     const AugmentedDataset* ds) {
    if (ds && ds->size() == 0)
        throw std::invalid_argument("checkpoint: refusing to embed an empty dataset");
    if (ds)
        for (const Record& rec : ds->records)
            if (!(rec.image.shape == st.model.spec.input_shape))
                throw shape_error("checkpoint: record shape " + shape_str(rec.image.shape) +
                                  " != model input shape " + shape_str(st.model.spec.input_shape));
    nlohmann::json header;
    header["spec"] = model_spec_to_json(st.model.spec);
    header["config"] = adv_config_to_json(st.cfg);
    header["global_step"] = st.global_step;
    header["next_phase"] = st.next_phase;
    header["rng_state"] = {{"kind", "derived"}, {"seed", st.cfg.seed}};
    header["optimizer"] = {{"kind", st.opt.kind}, {"t", st.opt.t}};
    header["dataset"] = {{"present", ds != nullptr},
                         {"count", ds ? ds->size() : 0},
                         {"source_size", ds ? ds->source_size : 0}};
    const auto manifest = checkpoint_manifest(st.model, st.opt.kind, ds ? ds->size() : -1);
    nlohmann::json jm = nlohmann::json::array();
    for (const ManifestEntry& e : manifest) jm.push_back({{"name", e.name}, {"shape", e.shape}});
    header["manifest"] = std::move(jm);
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("checkpoint: cannot open " + path);
    out.write(kMagic, 5);
    out.put(static_cast<char>(kVersion));
    write_u64le(out, htext.size());
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const Param& p : st.model.params) write_doubles(out, p.value.data.data(), p.value.numel());
    if (st.opt.kind == "adam")
        for (size_t i = 0; i < st.model.params.size(); ++i) {
            write_doubles(out, st.opt.m[i].data.data(), st.opt.m[i].numel());
            write_doubles(out, st.opt.v[i].data.data(), st.opt.v[i].numel());
        }
    if (ds) {
        for (const Record& rec : ds->records)
            write_doubles(out, rec.image.data.data(), rec.image.numel());
        std::vector<double> col(ds->records.size());
        for (size_t i = 0; i < ds->records.size(); ++i) col[i] = ds->records[i].label;
        write_doubles(out, col.data(), static_cast<std::int64_t>(col.size()));
        for (size_t i = 0; i < ds->records.size(); ++i) col[i] = ds->records[i].origin;
        write_doubles(out, col.data(), static_cast<std::int64_t>(col.size()));
        for (size_t i = 0; i < ds->records.size(); ++i) col[i] = ds->records[i].round;
        write_doubles(out, col.data(), static_cast<std::int64_t>(col.size()));
    }
    out.flush();
    if (!out) throw format_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("checkpoint: cannot open " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kMagic, 5) != 0) throw format_error("checkpoint: bad magic");
    const int version = in.get();
    if (version == std::char_traits<char>::eof())
        throw format_error("checkpoint: truncated header");
    if (version != kVersion)
        throw format_error("checkpoint: unsupported version " + std::to_string(version));
    const std::uint64_t hlen = read_u64le(in, "header length");
    if (hlen == 0 || hlen > (1ull << 30)) throw format_error("checkpoint: bad header length");
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw format_error("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("checkpoint: bad header json: ") + e.what());
    }

    ModelSpec spec;
    AdvConfig cfg;
    try {
        spec = model_spec_from_json(header.at("spec"), "spec");
        cfg = adv_config_from_json(header.at("config"), "config");
        validate_spec(spec);
        validate_adv_config(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("checkpoint: bad header: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw format_error(std::string("checkpoint: ") + e.what());
    }

    const int global_step = header_int(header, "global_step");
    const int next_phase = header_int(header, "next_phase");
    if (global_step < 0 || next_phase < 0 || next_phase > phase_count(cfg))
        throw format_error("checkpoint: counter out of range");
    if (!header.contains("rng_state") || header["rng_state"].value("kind", "") != "derived" ||
        !header["rng_state"].contains("seed") ||
        header["rng_state"]["seed"].get<std::uint64_t>() != cfg.seed)
        throw format_error("checkpoint: rng state mismatch");
    if (!header.contains("optimizer") || header["optimizer"].value("kind", "") != cfg.optimizer)
        throw format_error("checkpoint: optimizer kind mismatch");
    const std::int64_t opt_t = header["optimizer"].value("t", std::int64_t{-1});
    if (opt_t < 0) throw format_error("checkpoint: bad optimizer step count");

    if (!header.contains("dataset") || !header["dataset"].is_object())
        throw format_error("checkpoint: header missing dataset block");
    const bool present = header["dataset"].value("present", false);
    const int count = header_int(header["dataset"], "count");
    const int source_size = header_int(header["dataset"], "source_size");
    if (present && (count < 1 || source_size < 1 || source_size > count))
        throw format_error("checkpoint: bad dataset counts");

    Checkpoint ck;
    ck.state.model = make_model(spec);
    ck.state.opt = make_optimizer(cfg.optimizer, ck.state.model);
    ck.state.opt.t = opt_t;
    ck.state.cfg = cfg;
    ck.state.global_step = global_step;
    ck.state.next_phase = next_phase;

    const auto expected = checkpoint_manifest(ck.state.model, cfg.optimizer, present ? count : -1);
    if (!header.contains("manifest") || !header["manifest"].is_array() ||
        header["manifest"].size() != expected.size())
        throw format_error("checkpoint: manifest size mismatch");
    for (size_t i = 0; i < expected.size(); ++i) {
        const auto& je = header["manifest"][i];
        if (je.value("name", "") != expected[i].name ||
            !(je.value("shape", Shape{}) == expected[i].shape))
            throw format_error("checkpoint: manifest mismatch at " + expected[i].name);
    }

    for (Param& p : ck.state.model.params)
        read_doubles(in, p.value.data.data(), p.value.numel(), p.name);
    if (cfg.optimizer == "adam")
        for (size_t i = 0; i < ck.state.model.params.size(); ++i) {
            read_doubles(in, ck.state.opt.m[i].data.data(), ck.state.opt.m[i].numel(),
                         "adam.m." + ck.state.model.params[i].name);
            read_doubles(in, ck.state.opt.v[i].data.data(), ck.state.opt.v[i].numel(),
                         "adam.v." + ck.state.model.params[i].name);
        }
    if (present) {
        ck.has_dataset = true;
        ck.dataset.source_size = source_size;
        ck.dataset.records.resize(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) {
            Tensor img(spec.input_shape);
            read_doubles(in, img.data.data(), img.numel(), "data.images");
            ck.dataset.records[static_cast<size_t>(i)].image = std::move(img);
        }
        std::vector<double> col(static_cast<size_t>(count));
        read_doubles(in, col.data(), count, "data.labels");
        for (int i = 0; i < count; ++i) {
            const long long y = std::llround(col[static_cast<size_t>(i)]);
            if (y < 0 || y >= spec.classes) throw format_error("checkpoint: label out of range");
            ck.dataset.records[static_cast<size_t>(i)].label = static_cast<int>(y);
        }
        read_doubles(in, col.data(), count, "data.origin");
        for (int i = 0; i < count; ++i) {
            const long long o = std::llround(col[static_cast<size_t>(i)]);
            if (o < 0 || o >= count) throw format_error("checkpoint: origin out of range");
            ck.dataset.records[static_cast<size_t>(i)].origin = static_cast<int>(o);
        }
        read_doubles(in, col.data(), count, "data.round");
        for (int i = 0; i < count; ++i) {
            const long long r = std::llround(col[static_cast<size_t>(i)]);
            if (r < 0) throw format_error("checkpoint: round out of range");
            ck.dataset.records[static_cast<size_t>(i)].round = static_cast<int>(r);
        }
    }
    if (in.get() != std::char_traits<char>::eof())
        throw format_error("checkpoint: trailing data");
    return ck;
}

}  // namespace meada

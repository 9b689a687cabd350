#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "meada/data.hpp"
#include "meada/gradcheck.hpp"
#include "meada/infobounds.hpp"
#include "meada/serde.hpp"
#include "meada/trainer.hpp"

// Operator surface. One JSON config plus --set overrides drives every
// subcommand; all randomness flows from the single top-level seed, from which
// each section derives its own stream unless it sets a seed explicitly.
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 numeric abort.

namespace {

using meada::AdvConfig;
using meada::cfg_bool;
using meada::cfg_double;
using meada::cfg_double_array;
using meada::cfg_int;
using meada::cfg_int_array;
using meada::cfg_string;
using meada::cfg_u64;
using nlohmann::json;
using nlohmann::ordered_json;

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open \"" + path + "\"");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    return j;
}

// Apply one KEY=VALUE override; KEY is a dotted path, VALUE is parsed as JSON
// with a fallback to a plain string so bare words need no quoting.
void apply_set(json& doc, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("--set expects KEY=VALUE, got \"" + kv + "\"");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* cur = &doc;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::invalid_argument("--set path \"" + path + "\" has an empty segment");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key)) (*cur)[key] = json::object();
        cur = &(*cur)[key];
        if (!cur->is_object())
            throw std::invalid_argument("--set path \"" + path + "\" crosses the non-object key \"" +
                                        key + "\"");
        start = dot + 1;
    }
}

// ---------------- sections beyond model/train/gradcheck ----------------

struct DataConfig {
    std::string source = "synth";  // synth | idx
    std::string images;            // IDX paths, required when source = idx
    std::string labels;
    int n = 2000;  // synth size, or subset cap for idx (0 = all)
    bool rgb32 = false;
    std::string severity_tables = "configs/severity_tables.json";
    std::uint64_t seed = 0;
};

DataConfig data_config_from_json(const json& j, const std::string& prefix = "data") {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    DataConfig cfg;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "source")
            cfg.source = cfg_string(val, path);
        else if (key == "images")
            cfg.images = cfg_string(val, path);
        else if (key == "labels")
            cfg.labels = cfg_string(val, path);
        else if (key == "n")
            cfg.n = cfg_int(val, path);
        else if (key == "rgb32")
            cfg.rgb32 = cfg_bool(val, path);
        else if (key == "severity_tables")
            cfg.severity_tables = cfg_string(val, path);
        else if (key == "seed")
            cfg.seed = cfg_u64(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return cfg;
}

struct DomainSpec {
    std::string name;
    std::string shift;       // empty unless a domain shift is applied
    std::string corruption;  // empty unless a corruption is applied
    int severity = 3;
};

DomainSpec domain_from_json(const json& j, const std::string& prefix) {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    DomainSpec d;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "name")
            d.name = cfg_string(val, path);
        else if (key == "shift")
            d.shift = cfg_string(val, path);
        else if (key == "corruption")
            d.corruption = cfg_string(val, path);
        else if (key == "severity")
            d.severity = cfg_int(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    if (!d.shift.empty() && !d.corruption.empty())
        throw std::invalid_argument("config: " + prefix + " sets both shift and corruption");
    if (d.severity < 1 || d.severity > 5)
        throw std::invalid_argument("config: " + prefix + ".severity must be in 1..5");
    if (d.name.empty()) {
        if (!d.shift.empty())
            d.name = d.shift + "-" + std::to_string(d.severity);
        else if (!d.corruption.empty())
            d.name = d.corruption + "-" + std::to_string(d.severity);
        else
            d.name = "source";
    }
    return d;
}

struct EvalConfig {
    std::string checkpoint;
    std::vector<DomainSpec> domains = {DomainSpec{"source", "", "", 3}};
    int batch_size = 256;
};

EvalConfig eval_config_from_json(const json& j, const std::string& prefix = "eval") {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    EvalConfig cfg;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "checkpoint")
            cfg.checkpoint = cfg_string(val, path);
        else if (key == "batch_size")
            cfg.batch_size = cfg_int(val, path);
        else if (key == "domains") {
            if (!val.is_array())
                throw std::invalid_argument("config: " + path + " must be an array");
            cfg.domains.clear();
            for (size_t i = 0; i < val.size(); ++i)
                cfg.domains.push_back(
                    domain_from_json(val[i], path + "[" + std::to_string(i) + "]"));
        } else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return cfg;
}

struct AugmentConfig {
    std::string checkpoint;
};

AugmentConfig augment_config_from_json(const json& j, const std::string& prefix = "augment") {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    AugmentConfig cfg;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "checkpoint")
            cfg.checkpoint = cfg_string(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return cfg;
}

struct BoundsConfig {
    int prop1_models = 3;
    int prop1_inputs = 64;
    std::vector<int> prop3_card_y = {2, 5, 10};
    std::vector<int> prop3_n = {100, 1000, 10000};
    std::vector<double> prop3_delta = {0.05, 0.2};
    long long prop3_trials = 1000;
    std::vector<double> cor1_epsilon = {0.01, 0.1, 0.5};
    std::vector<int> cor1_card_y = {2, 4, 10};
    long long cor1_trials = 100;
    int card_x = 8;
    double bound_scale = 1.0;  // negative-control hook; 1.0 checks the real bound
    std::uint64_t seed = 0;
};

BoundsConfig bounds_config_from_json(const json& j, const std::string& prefix = "bounds") {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    BoundsConfig cfg;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "prop1_models")
            cfg.prop1_models = cfg_int(val, path);
        else if (key == "prop1_inputs")
            cfg.prop1_inputs = cfg_int(val, path);
        else if (key == "prop3_card_y")
            cfg.prop3_card_y = cfg_int_array(val, path);
        else if (key == "prop3_n")
            cfg.prop3_n = cfg_int_array(val, path);
        else if (key == "prop3_delta")
            cfg.prop3_delta = cfg_double_array(val, path);
        else if (key == "prop3_trials")
            cfg.prop3_trials = cfg_int(val, path);
        else if (key == "cor1_epsilon")
            cfg.cor1_epsilon = cfg_double_array(val, path);
        else if (key == "cor1_card_y")
            cfg.cor1_card_y = cfg_int_array(val, path);
        else if (key == "cor1_trials")
            cfg.cor1_trials = cfg_int(val, path);
        else if (key == "card_x")
            cfg.card_x = cfg_int(val, path);
        else if (key == "bound_scale")
            cfg.bound_scale = cfg_double(val, path);
        else if (key == "seed")
            cfg.seed = cfg_u64(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return cfg;
}

// ---------------- run config ----------------

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";
    meada::ModelSpec model;
    AdvConfig train;
    DataConfig data;
    EvalConfig eval;
    AugmentConfig augment;
    BoundsConfig bounds;
    meada::GradcheckConfig gradcheck;
    json resolved;  // the full document after overrides and derived seeds
};

void ensure_derived_seed(json& doc, const char* section, std::uint64_t master) {
    if (!doc.contains(section)) doc[section] = json::object();
    json& s = doc[section];
    if (!s.is_object())
        throw std::invalid_argument(std::string("config: ") + section + " must be an object");
    if (!s.contains("seed")) s["seed"] = meada::derive_seed(master, section);
}

RunConfig assemble_run_config(json doc, const std::vector<std::string>& sets,
                              const std::uint64_t* seed_flag, const std::string& out_flag) {
    for (const std::string& kv : sets) apply_set(doc, kv);
    if (seed_flag) doc["seed"] = *seed_flag;
    if (!out_flag.empty()) doc["out_dir"] = out_flag;

    static const std::set<std::string> known = {"seed", "out_dir", "model",   "train",    "data",
                                                "eval", "augment", "bounds", "gradcheck"};
    for (const auto& [key, val] : doc.items())
        if (!known.count(key)) throw std::invalid_argument("config: unknown key \"" + key + "\"");

    RunConfig rc;
    if (doc.contains("seed")) rc.seed = cfg_u64(doc["seed"], "seed");
    if (doc.contains("out_dir")) rc.out_dir = cfg_string(doc["out_dir"], "out_dir");
    doc["seed"] = rc.seed;
    doc["out_dir"] = rc.out_dir;
    for (const char* sec : {"model", "train", "data", "bounds", "gradcheck"})
        ensure_derived_seed(doc, sec, rc.seed);

    rc.model = meada::model_spec_from_json(doc["model"]);
    rc.train = meada::adv_config_from_json(doc["train"]);
    rc.data = data_config_from_json(doc["data"]);
    rc.eval = eval_config_from_json(doc.value("eval", json::object()));
    rc.augment = augment_config_from_json(doc.value("augment", json::object()));
    rc.bounds = bounds_config_from_json(doc["bounds"]);
    rc.gradcheck = meada::gradcheck_config_from_json(doc["gradcheck"]);
    rc.resolved = std::move(doc);
    return rc;
}

meada::ImageDataset resolve_dataset(const DataConfig& d) {
    meada::ImageDataset ds;
    if (d.source == "synth") {
        ds = meada::make_synth_digits(d.n > 0 ? d.n : 2000, d.seed);
    } else if (d.source == "idx") {
        if (d.images.empty())
            throw std::invalid_argument("config: data.images is required when data.source is \"idx\"");
        if (d.labels.empty())
            throw std::invalid_argument("config: data.labels is required when data.source is \"idx\"");
        ds = meada::load_idx(d.images, d.labels);
        if (d.n > 0 && d.n < ds.size()) {
            std::vector<int> head(static_cast<size_t>(d.n));
            for (int i = 0; i < d.n; ++i) head[static_cast<size_t>(i)] = i;
            ds = meada::take(ds, head);
        }
    } else {
        throw std::invalid_argument("config: data.source must be \"synth\" or \"idx\"");
    }
    if (d.rgb32) ds = meada::to_rgb32(ds);
    meada::validate_dataset(ds);
    return ds;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw meada::format_error("cannot write " + path);
    out << text;
    if (!out) throw meada::format_error("write failed on " + path);
}

std::string out_path(const RunConfig& rc, const std::string& name) {
    std::filesystem::create_directories(rc.out_dir);
    return (std::filesystem::path(rc.out_dir) / name).string();
}

// ---------------- subcommands ----------------

int cmd_train(const RunConfig& rc) {
    meada::validate_spec(rc.model);
    meada::validate_adv_config(rc.train);
    const meada::ImageDataset source = resolve_dataset(rc.data);
    write_text(out_path(rc, "config.json"), rc.resolved.dump(2) + "\n");

    meada::TrainerState st = meada::init_trainer(rc.model, rc.train);
    meada::AugmentedDataset ds = meada::wrap_source(source, rc.model.input_shape);
    std::vector<meada::MetricsRecord> log;
    while (meada::step_phase(st, ds, log))
        if (!log.empty()) std::cout << meada::metrics_json(log.back()) << "\n";

    const std::string ckpt = out_path(rc, "checkpoint.bin");
    meada::save_checkpoint(ckpt, st, &ds);
    meada::write_metrics(out_path(rc, "metrics.jsonl"), log);
    std::cout << "trained " << rc.model.arch << " on " << source.size() << " samples; dataset grew to "
              << ds.size() << "; wrote " << ckpt << "\n";
    return 0;
}

const meada::SeverityTables& tables_for(const RunConfig& rc, meada::SeverityTables& cache,
                                        bool& loaded) {
    if (!loaded) {
        if (rc.data.severity_tables.empty())
            throw std::invalid_argument(
                "config: data.severity_tables is required for shift/corruption domains");
        cache = meada::load_severity_tables(rc.data.severity_tables);
        loaded = true;
    }
    return cache;
}

int cmd_eval(const RunConfig& rc) {
    if (rc.eval.checkpoint.empty())
        throw std::invalid_argument("config: eval.checkpoint is required");
    const meada::Checkpoint ck = meada::load_checkpoint(rc.eval.checkpoint);
    const meada::ImageDataset base = resolve_dataset(rc.data);

    meada::SeverityTables cache;
    bool loaded = false;
    ordered_json reports = ordered_json::array();
    for (size_t i = 0; i < rc.eval.domains.size(); ++i) {
        const DomainSpec& dom = rc.eval.domains[i];
        const std::uint64_t dseed = meada::derive_seed(rc.data.seed, "domain", i);
        meada::ImageDataset d;
        if (!dom.shift.empty()) {
            meada::ShiftSpec spec{dom.shift, dom.severity, dseed};
            d = meada::apply_shift(base, spec, tables_for(rc, cache, loaded));
        } else if (!dom.corruption.empty()) {
            d = meada::apply_corruption(base, dom.corruption, dom.severity, dseed,
                                        tables_for(rc, cache, loaded));
        } else {
            d = base;
        }
        const meada::EvalResult r = meada::evaluate(ck.state.model, d, rc.eval.batch_size);
        ordered_json o;
        o["domain"] = dom.name;
        o["accuracy"] = r.accuracy;
        o["n"] = r.n;
        o["mean_entropy"] = r.entropy_mean;
        std::cout << o.dump() << "\n";
        reports.push_back(std::move(o));
    }
    ordered_json out;
    out["suite"] = "eval";
    out["checkpoint"] = rc.eval.checkpoint;
    out["config"] = rc.resolved;
    out["domains"] = std::move(reports);
    write_text(out_path(rc, "eval.json"), out.dump(2) + "\n");
    return 0;
}

int cmd_augment(const RunConfig& rc) {
    if (rc.augment.checkpoint.empty())
        throw std::invalid_argument("config: augment.checkpoint is required");
    meada::validate_adv_config(rc.train);
    const meada::Checkpoint ck = meada::load_checkpoint(rc.augment.checkpoint);
    const meada::Model& m = ck.state.model;
    const meada::ImageDataset source = resolve_dataset(rc.data);
    const meada::AugmentedDataset wrapped =
        meada::wrap_source(source, m.spec.input_shape);

    meada::ImageDataset adv;
    adv.images = meada::Tensor(source.images.shape);
    adv.labels = source.labels;
    adv.name = source.name + "-adv";
    adv.provenance = "gradient-ascent perturbation of " + source.name;
    const std::int64_t row = source.images.numel() / source.size();
    double h_source = 0.0, h_adv = 0.0;
    long long flagged = 0;
    const int bs = rc.train.batch_size;
    for (int at = 0; at < wrapped.size(); at += bs) {
        std::vector<int> idx;
        for (int i = at; i < std::min(at + bs, wrapped.size()); ++i) idx.push_back(i);
        const meada::Batch b = meada::gather_batch(wrapped, idx);
        const meada::AscentResult ar = meada::maximize_batch(m, b.x, b.labels, rc.train);
        for (size_t r = 0; r < idx.size(); ++r) {
            const std::int64_t dst = static_cast<std::int64_t>(idx[r]) * row;
            for (std::int64_t e = 0; e < row; ++e) {
                // byte export demands [0,1]; identity whenever ascent stayed in range
                const double v = ar.x[static_cast<std::int64_t>(r) * row + e];
                adv.images[dst + e] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            }
            h_source += ar.origin_entropy[r];
            h_adv += ar.entropy[r];
            flagged += ar.flagged[r] ? 1 : 0;
        }
    }
    const std::string images_path = out_path(rc, "augmented-images.idx");
    const std::string labels_path = out_path(rc, "augmented-labels.idx");
    meada::save_idx(adv, images_path, labels_path);

    ordered_json out;
    out["suite"] = "augment";
    out["checkpoint"] = rc.augment.checkpoint;
    out["source"] = {{"name", source.name}, {"n", source.size()}};
    out["ascent"] = {{"eta", rc.train.eta},
                     {"t_max", rc.train.t_max},
                     {"beta", rc.train.beta},
                     {"gamma", rc.train.gamma},
                     {"clip_pixels", rc.train.clip_pixels}};
    out["mean_entropy_source"] = h_source / source.size();
    out["mean_entropy_augmented"] = h_adv / source.size();
    out["flagged"] = flagged;
    out["files"] = {{"images", images_path}, {"labels", labels_path}};
    out["config"] = rc.resolved;
    write_text(out_path(rc, "augment.json"), out.dump(2) + "\n");
    std::cout << "augmented " << source.size() << " samples; mean entropy "
              << out["mean_entropy_source"].dump() << " -> " << out["mean_entropy_augmented"].dump()
              << "; wrote " << images_path << "\n";
    return 0;
}

// Rows are peaked (85% on one class) so the mixture entropy sits away from its
// flat maximum and the plug-in deviations stay within an order of magnitude of
// the closed-form bound, keeping the Monte Carlo check informative.
meada::DiscreteJoint random_joint(int card_x, int card_y, std::uint64_t seed) {
    meada::Rng rng(seed);
    std::vector<double> marginal(static_cast<size_t>(card_x));
    double total = 0.0;
    for (auto& v : marginal) {
        v = rng.uniform(0.5, 1.5);
        total += v;
    }
    meada::Tensor p({card_x, card_y});
    for (int x = 0; x < card_x; ++x) {
        const double px = marginal[static_cast<size_t>(x)] / total;
        const int star = static_cast<int>(rng.uniform_int(card_y));
        for (int y = 0; y < card_y; ++y)
            p.at2(x, y) = px * (0.15 / card_y + (y == star ? 0.85 : 0.0));
    }
    return {p};
}

meada::DiscreteJoint deterministic_joint(int card_x, int card_y, std::uint64_t seed) {
    meada::Rng rng(seed);
    std::vector<double> marginal(static_cast<size_t>(card_x));
    double total = 0.0;
    for (auto& v : marginal) {
        v = rng.uniform(0.5, 1.5);
        total += v;
    }
    meada::Tensor p({card_x, card_y});
    for (int x = 0; x < card_x; ++x) {
        const int y = static_cast<int>(rng.uniform_int(card_y));
        p.at2(x, y) = marginal[static_cast<size_t>(x)] / total;
    }
    return {p};
}

int cmd_verify_bounds(const RunConfig& rc) {
    const BoundsConfig& b = rc.bounds;
    std::vector<meada::BoundReport> reports;

    for (int i = 0; i < b.prop1_models; ++i) {
        static const int classes[] = {2, 3, 5};
        meada::ModelSpec spec;
        spec.arch = "mlp";
        spec.input_shape = {6};
        spec.hidden = {16};
        spec.classes = classes[i % 3];
        spec.seed = meada::derive_seed(b.seed, "prop1-model", static_cast<std::uint64_t>(i));
        const meada::Model m = meada::make_model(spec);
        meada::Rng rng(meada::derive_seed(b.seed, "prop1-inputs", static_cast<std::uint64_t>(i)));
        meada::Tensor x({b.prop1_inputs, 6});
        for (auto& v : x.data) v = rng.uniform(-3.0, 3.0);
        reports.push_back(meada::verify_prop1(m, x));
    }

    std::uint64_t cell = 0;
    for (int card_y : b.prop3_card_y)
        for (int n : b.prop3_n)
            for (double delta : b.prop3_delta) {
                const meada::DiscreteJoint joint =
                    random_joint(b.card_x, card_y, meada::derive_seed(b.seed, "prop3-joint", cell));
                reports.push_back(meada::verify_prop3_montecarlo(
                    joint, n, delta, b.prop3_trials, meada::derive_seed(b.seed, "prop3-mc", cell),
                    b.bound_scale));
                ++cell;
            }

    cell = 0;
    for (double eps : b.cor1_epsilon)
        for (int card_y : b.cor1_card_y) {
            const meada::DiscreteJoint joint =
                deterministic_joint(b.card_x, card_y, meada::derive_seed(b.seed, "cor1-joint", cell));
            reports.push_back(meada::corollary1_trials(joint, eps, b.cor1_trials,
                                                       meada::derive_seed(b.seed, "cor1", cell),
                                                       b.bound_scale));
            ++cell;
        }

    ordered_json arr = ordered_json::array();
    std::vector<std::string> violations;
    for (const meada::BoundReport& r : reports) {
        arr.push_back(ordered_json::parse(meada::bound_report_json(r)));
        std::cout << (r.pass ? "ok   " : "FAIL ") << r.name << " card_y=" << r.card_y
                  << " n=" << r.n << " delta=" << r.delta << " epsilon=" << r.epsilon
                  << " bound=" << r.bound << " observed=" << r.observed
                  << " violations=" << r.violations << "/" << r.trials << "\n";
        if (!r.pass)
            violations.push_back(r.name + " card_y=" + std::to_string(r.card_y) + " n=" +
                                 std::to_string(r.n));
    }
    ordered_json out;
    out["suite"] = "bounds";
    out["config"] = rc.resolved;
    out["reports"] = std::move(arr);
    out["all_pass"] = violations.empty();
    write_text(out_path(rc, "bounds.json"), out.dump(2) + "\n");

    if (!violations.empty()) {
        std::cerr << "bound verification failed:\n";
        for (const std::string& v : violations) std::cerr << "  " << v << "\n";
        return 1;
    }
    std::cout << "all " << reports.size() << " bound checks passed\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
    const meada::GradcheckReport rep = meada::run_gradcheck(rc.gradcheck);
    for (const meada::GradcheckCase& c : rep.cases)
        std::cout << (c.pass ? "ok   " : "FAIL ") << c.name << " max_rel_err=" << c.max_rel_err
                  << "\n";
    write_text(out_path(rc, "gradcheck.json"), meada::gradcheck_report_json(rep) + "\n");
    if (!rep.all_pass()) {
        const meada::GradcheckCase& w = rep.worst();
        std::cerr << "gradient check failed: worst offender " << w.name
                  << " (max_rel_err=" << w.max_rel_err << ", tolerance=" << rep.config.tolerance
                  << ")\n";
        return 1;
    }
    std::cout << "all " << rep.cases.size() << " gradient checks passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maximum-entropy adversarial data augmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;

    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& [name, desc] :
         std::vector<std::pair<std::string, std::string>>{
             {"train", "run the adversarial minimax training loop"},
             {"eval", "evaluate a checkpoint across shifted domains"},
             {"augment", "export adversarially perturbed samples as IDX files"},
             {"verify-bounds", "run the information-bound verification matrix"},
             {"gradcheck", "compare analytic gradients against finite differences"}}) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "JSON run config file");
        sub->add_option("--set", sets, "dotted-path override KEY=VALUE (repeatable)");
        sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
        seed_opts.push_back(sub->add_option("--seed", seed, "master seed (overrides seed)"));
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        bool seed_given = false;
        for (const CLI::Option* o : seed_opts) seed_given |= o->count() > 0;
        json doc = config_path.empty() ? json::object() : load_config_file(config_path);
        const RunConfig rc =
            assemble_run_config(std::move(doc), sets, seed_given ? &seed : nullptr, out_dir);

        if (subs[0]->parsed()) return cmd_train(rc);
        if (subs[1]->parsed()) return cmd_eval(rc);
        if (subs[2]->parsed()) return cmd_augment(rc);
        if (subs[3]->parsed()) return cmd_verify_bounds(rc);
        if (subs[4]->parsed()) return cmd_gradcheck(rc);
        return 2;
    } catch (const meada::numeric_error& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        if (!e.snapshot.empty()) std::cerr << e.snapshot << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

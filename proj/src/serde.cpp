#include "meada/serde.hpp"

#include <limits>
#include <stdexcept>

namespace meada {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& want) {
    throw std::invalid_argument("config: " + path + " must be " + want);
}

}  // namespace

std::string cfg_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "a string");
    return v.get<std::string>();
}

bool cfg_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "a boolean");
    return v.get<bool>();
}

std::int64_t cfg_i64(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) fail(path, "an integer");
    return v.get<std::int64_t>();
}

int cfg_int(const json& v, const std::string& path) {
    const std::int64_t x = cfg_i64(v, path);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        fail(path, "a 32-bit integer");
    return static_cast<int>(x);
}

std::uint64_t cfg_u64(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const std::int64_t x = cfg_i64(v, path);
    if (x < 0) fail(path, "a non-negative integer");
    return static_cast<std::uint64_t>(x);
}

double cfg_double(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "a number");
    return v.get<double>();
}

std::vector<int> cfg_int_array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "an array of integers");
    std::vector<int> out;
    out.reserve(v.size());
    for (size_t i = 0; i < v.size(); ++i)
        out.push_back(cfg_int(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<double> cfg_double_array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (size_t i = 0; i < v.size(); ++i)
        out.push_back(cfg_double(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
    return {{"arch", spec.arch},
            {"input_shape", spec.input_shape},
            {"hidden", spec.hidden},
            {"classes", spec.classes},
            {"seed", spec.seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& prefix) {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    ModelSpec spec;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "arch")
            spec.arch = cfg_string(val, path);
        else if (key == "input_shape")
            spec.input_shape = cfg_int_array(val, path);
        else if (key == "hidden")
            spec.hidden = cfg_int_array(val, path);
        else if (key == "classes")
            spec.classes = cfg_int(val, path);
        else if (key == "seed")
            spec.seed = cfg_u64(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return spec;
}

nlohmann::json adv_config_to_json(const AdvConfig& cfg) {
    return {{"k", cfg.k},
            {"t_min", cfg.t_min},
            {"t_max", cfg.t_max},
            {"alpha", cfg.alpha},
            {"eta", cfg.eta},
            {"gamma", cfg.gamma},
            {"beta", cfg.beta},
            {"weight_decay", cfg.weight_decay},
            {"batch_size", cfg.batch_size},
            {"final_steps", cfg.final_steps},
            {"optimizer", cfg.optimizer},
            {"lr_schedule", cfg.lr_schedule},
            {"clip_pixels", cfg.clip_pixels},
            {"perturb_source_only", cfg.perturb_source_only},
            {"seed", cfg.seed}};
}

AdvConfig adv_config_from_json(const nlohmann::json& j, const std::string& prefix) {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    AdvConfig cfg;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "k")
            cfg.k = cfg_int(val, path);
        else if (key == "t_min")
            cfg.t_min = cfg_int(val, path);
        else if (key == "t_max")
            cfg.t_max = cfg_int(val, path);
        else if (key == "alpha")
            cfg.alpha = cfg_double(val, path);
        else if (key == "eta")
            cfg.eta = cfg_double(val, path);
        else if (key == "gamma")
            cfg.gamma = cfg_double(val, path);
        else if (key == "beta")
            cfg.beta = cfg_double(val, path);
        else if (key == "weight_decay")
            cfg.weight_decay = cfg_double(val, path);
        else if (key == "batch_size")
            cfg.batch_size = cfg_int(val, path);
        else if (key == "final_steps")
            cfg.final_steps = cfg_int(val, path);
        else if (key == "optimizer")
            cfg.optimizer = cfg_string(val, path);
        else if (key == "lr_schedule")
            cfg.lr_schedule = cfg_string(val, path);
        else if (key == "clip_pixels")
            cfg.clip_pixels = cfg_bool(val, path);
        else if (key == "perturb_source_only")
            cfg.perturb_source_only = cfg_bool(val, path);
        else if (key == "seed")
            cfg.seed = cfg_u64(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return cfg;
}

nlohmann::json gradcheck_config_to_json(const GradcheckConfig& cfg) {
    nlohmann::json j;
    j["instances"] = cfg.instances;
    j["tolerance"] = cfg.tolerance;
    j["fd_step"] = cfg.fd_step;
    j["seed"] = cfg.seed;
    j["sabotage"] = cfg.sabotage;
    return j;
}

GradcheckConfig gradcheck_config_from_json(const nlohmann::json& j, const std::string& prefix) {
    if (!j.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
    GradcheckConfig cfg;
    for (const auto& [key, val] : j.items()) {
        const std::string path = prefix + "." + key;
        if (key == "instances")
            cfg.instances = cfg_int(val, path);
        else if (key == "tolerance")
            cfg.tolerance = cfg_double(val, path);
        else if (key == "fd_step")
            cfg.fd_step = cfg_double(val, path);
        else if (key == "seed")
            cfg.seed = cfg_u64(val, path);
        else if (key == "sabotage")
            cfg.sabotage = cfg_string(val, path);
        else
            throw std::invalid_argument("config: unknown key \"" + path + "\"");
    }
    return cfg;
}

}  // namespace meada

#pragma once

#include <string>

#include <json.hpp>

#include "meada/gradcheck.hpp"
#include "meada/trainer.hpp"

namespace meada {

// Typed JSON getters shared by every config reader; on a type mismatch they
// throw std::invalid_argument naming the full key path.
std::string cfg_string(const nlohmann::json& v, const std::string& path);
bool cfg_bool(const nlohmann::json& v, const std::string& path);
int cfg_int(const nlohmann::json& v, const std::string& path);
std::int64_t cfg_i64(const nlohmann::json& v, const std::string& path);
std::uint64_t cfg_u64(const nlohmann::json& v, const std::string& path);
double cfg_double(const nlohmann::json& v, const std::string& path);
std::vector<int> cfg_int_array(const nlohmann::json& v, const std::string& path);
std::vector<double> cfg_double_array(const nlohmann::json& v, const std::string& path);

// JSON forms of the config structs. The from_json readers start from the
// defaults, accept partial objects, and reject unknown or mistyped keys with
// an error naming the full path (prefix + key), so config-file typos and bad
// --set paths fail loudly instead of being ignored.
nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& prefix = "model");

nlohmann::json adv_config_to_json(const AdvConfig& cfg);
AdvConfig adv_config_from_json(const nlohmann::json& j, const std::string& prefix = "train");

nlohmann::json gradcheck_config_to_json(const GradcheckConfig& cfg);
GradcheckConfig gradcheck_config_from_json(const nlohmann::json& j,
                                           const std::string& prefix = "gradcheck");

}  // namespace meada

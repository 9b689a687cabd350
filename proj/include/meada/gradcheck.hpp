#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace meada {

// Finite-difference audit of the reverse-mode engine: every primitive plus the
// full adversarial ascent objective, each checked on `instances` random cases
// against central differences.
struct GradcheckConfig {
    int instances = 100;
    double tolerance = 1e-4;
    double fd_step = 1e-5;
    std::uint64_t seed = 0;
    // Negative-control fixture: shift the analytic gradient of the named case
    // so that case must fail. Empty means off; unknown names are rejected.
    std::string sabotage;
};

void validate_gradcheck_config(const GradcheckConfig& cfg);

struct GradcheckCase {
    std::string name;
    int instances = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    GradcheckConfig config;
    std::vector<GradcheckCase> cases;

    bool all_pass() const;
    const GradcheckCase& worst() const;  // case with the largest max_rel_err
};

// All case names, in run order: the primitives, then the ascent objective.
std::vector<std::string> gradcheck_case_names();

GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

std::string gradcheck_report_json(const GradcheckReport& rep);

}  // namespace meada

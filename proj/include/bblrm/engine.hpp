#pragma once

// One decision step shared by the simulator, the CLI and the service:
// posterior sampling, burden draws from the latest cohort and the
// recommendation, all keyed by a single 64-bit seed.

#include "bblrm/decision.hpp"
#include "bblrm/trial_config.hpp"

#include <cstdint>
#include <vector>

namespace bblrm {

struct DoseBand {
    double lower = 0.0;   // 2.5%
    double median = 0.0;
    double upper = 0.0;   // 97.5%
};

struct EngineResult {
    Recommendation recommendation;
    std::uint64_t seed = 0;
    double dose = 0.0;
    double acceptance_rate = 0.0;
    std::vector<DoseBand> bands;  // filled when requested
};

/// Current dose of a history: the latest cohort's dose, else the start dose.
std::size_t current_dose_index(const TrialConfig& config, const TrialHistory& history);

EngineResult evaluate(const TrialConfig& config, const TrialHistory& history, std::uint64_t seed,
                      bool with_bands = false);

}  // namespace bblrm

#pragma once

// JSON documents: trial configuration, scenario files, cohort data files,
// recommendations and per-trial audit records.

#include "bblrm/engine.hpp"
#include "bblrm/scenarios.hpp"
#include "bblrm/simulator.hpp"
#include "bblrm/trial_config.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace bblrm {

using Json = nlohmann::ordered_json;

/// True for integers >= 0, whether stored signed or unsigned.
inline bool is_non_negative_integer(const Json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

/// Missing fields keep their defaults; unknown fields, wrong types and
/// invariant violations are all reported together in a ConfigError.
TrialConfig trial_config_from_json(const Json& doc, TrialConfig base = {});
Json to_json(const TrialConfig& config);

/// {name, doses, dlt_probs, ndltae_probs}; doses must equal the trial grid.
Scenario scenario_from_json(const Json& doc, const DoseGrid& grid);

/// {"cohorts": [{"dose", "n", "dlt_count", "ndltae_count"}, ...]}. Doses are
/// amounts and must be grid members; "dose_index" is accepted instead.
TrialHistory history_from_json(const Json& doc, const DoseGrid& grid);
Json to_json(const TrialHistory& history, const DoseGrid& grid);

CohortObservation cohort_from_json(const Json& doc, const DoseGrid& grid, const std::string& where);
Json to_json(const CohortObservation& obs, const DoseGrid& grid);

Json to_json(const Recommendation& rec, const DoseGrid& grid);
Json to_json(const EngineResult& result, const DoseGrid& grid);
Json to_json(const TrialRecord& record, const DoseGrid& grid);
Json to_json(const OperatingCharacteristics& oc, const DoseGrid& grid);

/// Parses a file, wrapping parse errors as InvalidArgument naming the path.
Json read_json_file(const std::filesystem::path& path);

}  // namespace bblrm

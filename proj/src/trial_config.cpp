#include "bblrm/trial_config.hpp"

#include <sstream>

namespace bblrm {

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
    std::ostringstream msg;
    msg << "invalid configuration:";
    for (const auto& e : errors) msg << "\n  " << e.field << ": " << e.message;
    return msg.str();
}

template <typename Check>
void collect(std::vector<FieldError>& out, const std::string& field, Check&& check) {
    try {
        check();
    } catch (const InvalidArgument& e) {
        out.push_back({field, e.what()});
    }
}

}  // namespace

ConfigError::ConfigError(std::vector<FieldError> errors)
    : InvalidArgument(join_errors(errors)), errors_(std::move(errors)) {}

std::vector<FieldError> TrialConfig::field_errors() const {
    std::vector<FieldError> out;
    collect(out, "grid", [&] { grid.validate(); });
    collect(out, "intervals", [&] { intervals.validate(); });
    collect(out, "prior", [&] { prior.validate(); });
    collect(out, "mcmc", [&] { mcmc.validate(); });
    collect(out, "decision", [&] { decision.validate(); });
    if (cohort_size < 1) out.push_back({"cohort_size", "must be >= 1"});
    if (max_cohorts < 1) out.push_back({"max_cohorts", "must be >= 1"});
    if (start_dose_index >= grid.size()) out.push_back({"start_dose_index", "outside the dose grid"});
    return out;
}

void TrialConfig::validate() const {
    auto errors = field_errors();
    if (!errors.empty()) throw ConfigError(std::move(errors));
}

}  // namespace bblrm

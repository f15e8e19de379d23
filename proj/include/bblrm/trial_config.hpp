#pragma once

#include "bblrm/core_model.hpp"
#include "bblrm/decision.hpp"
#include "bblrm/inference.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace bblrm {

struct FieldError {
    std::string field;
    std::string message;
};

/// Validation failure carrying one entry per offending field.
class ConfigError : public InvalidArgument {
public:
    explicit ConfigError(std::vector<FieldError> errors);

    const std::vector<FieldError>& errors() const noexcept { return errors_; }

private:
    std::vector<FieldError> errors_;
};

struct TrialConfig {
    DoseGrid grid = DoseGrid::standard();
    ToxicityIntervals intervals;
    PriorSpec prior;
    McmcConfig mcmc;
    DecisionConfig decision;
    int cohort_size = 3;
    int max_cohorts = 9;
    std::size_t start_dose_index = 0;

    /// Every violated invariant, keyed by the top-level field name.
    std::vector<FieldError> field_errors() const;
    void validate() const;
};

}  // namespace bblrm

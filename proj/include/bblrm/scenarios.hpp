#pragma once

#include "bblrm/core_model.hpp"
#include "bblrm/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bblrm {

inline constexpr double kTrueMtdProbability = 0.25;
inline constexpr double kToxicThreshold = 0.33;

/// A simulation truth: per-dose DLT and nDLTAE probabilities.
struct Scenario {
    std::string name;
    std::vector<double> dlt_probs;
    std::vector<double> ndltae_probs;

    /// Index whose DLT probability equals 0.25, if any.
    std::optional<std::size_t> true_mtd_index() const;
    /// Indices with DLT probability above 0.33.
    std::vector<std::size_t> toxic_indices() const;
    bool is_toxic(std::size_t dose_index) const;

    /// Collects every invariant violation against a grid of `grid_size` doses;
    /// empty when valid. Probabilities must lie in [0, 1] (endpoints allowed for
    /// synthetic truths), DLT probabilities weakly increasing.
    std::vector<std::string> violations(std::size_t grid_size) const;
    void validate(std::size_t grid_size) const;
};

/// S1..S7 over the standard dose grid.
const std::vector<Scenario>& builtin_scenarios();

/// Looks up S1..S7 by name; throws InvalidArgument otherwise.
const Scenario& builtin_scenario(const std::string& name);

/// Step function from DLT probability to nDLTAE probability used to build the
/// simulation truths. DLT 0.25 maps to 0.80.
double ndltae_prob_for(double p_dlt);

/// One cohort of `n` patients at `dose_index`: per patient, a DLT with
/// probability dlt_probs[i] and independently an nDLTAE with probability
/// ndltae_probs[i].
CohortObservation simulate_cohort(const Scenario& scenario, std::size_t dose_index, int n, Rng& rng);

}  // namespace bblrm

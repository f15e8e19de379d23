#pragma once

// From posterior draws to a dose recommendation: burden draws, interval
// probabilities, the underdose/overdose escalation rules, the MTD posterior
// and overdose-controlled grid selection.

#include "bblrm/core_model.hpp"
#include "bblrm/inference.hpp"
#include "bblrm/rng.hpp"

#include <span>
#include <string>
#include <vector>

namespace bblrm {

enum class EscalationRule { Rule1, Rule2 };

enum class Rationale { EscalatedByRule, EwocSelection, NoSkipCapped };

std::string to_string(EscalationRule r);
std::string to_string(Rationale r);
EscalationRule escalation_rule_from_string(const std::string& s);
Rationale rationale_from_string(const std::string& s);

struct DecisionConfig {
    double alpha = 0.35;   // escalation-rule feasibility bound
    double omega = 0.55;   // burden intensity
    double gamma = 0.25;   // overdose-control feasibility bound
    EscalationRule rule = EscalationRule::Rule1;
    bool no_skip = true;
    bool burden_enabled = true;

    void validate() const;
};

struct Recommendation {
    std::size_t dose_index = 0;
    Rationale rationale = Rationale::EwocSelection;
    std::vector<IntervalProbs> interval_probs;  // per grid dose
    double mtd_quantile = 0.0;
};

/// `count` independent draws from U(max(0, omega (s-1)/n), omega s/n).
/// s = 0 gives exact zeros.
std::vector<double> sample_delta(int s, int n, double omega, Rng& rng, std::size_t count);

/// Fraction of draws whose burdened DLT probability falls in each interval,
/// per grid dose. Pass all-zero deltas for the plain model.
std::vector<IntervalProbs> interval_probabilities(const PosteriorSamples& samples,
                                                  std::span<const double> deltas,
                                                  const DoseGrid& grid,
                                                  const ToxicityIntervals& intervals);

/// (1 - alpha) P(Under) > alpha P(Over)
bool escalate_rule1(double p_under, double p_over, double alpha) noexcept;

/// Rule 1 on interval-width standardised probabilities P(Under)/u, P(Over)/(1 - o).
bool escalate_rule2(double p_under, double p_over, const ToxicityIntervals& intervals,
                    double alpha) noexcept;

/// Dose at which the burdened curve crosses `target`. Saturates at e^700 on
/// the log scale instead of overflowing.
double mtd_from_theta(const ThetaSample& theta, double delta, double target, double ref_dose);

/// Posterior expected asymmetric loss of assigning `dose` when the MTD draws
/// are `mtd`: gamma per unit of underdosing, (1 - gamma) per unit of
/// overdosing. Minimised by the gamma-quantile of the draws.
double expected_asymmetric_loss(double dose, std::span<const double> mtd, double gamma);

/// Left-continuous inverse of the empirical CDF: the ceil(gamma * M)-th
/// order statistic.
double empirical_quantile(std::vector<double> values, double gamma);

/// Index of the candidate minimising expected_asymmetric_loss; ties go to the
/// lower index. Candidates must be sorted ascending.
std::size_t minimise_expected_loss(std::span<const double> candidates, std::span<const double> mtd,
                                   double gamma);

struct EwocSelection {
    std::size_t dose_index = 0;
    double mtd_quantile = 0.0;
};

EwocSelection ewoc_select(const PosteriorSamples& samples, std::span<const double> deltas,
                          const DoseGrid& grid, const ToxicityIntervals& intervals, double gamma);

/// Rule-based escalation from the current dose, otherwise the overdose-control
/// selection, then the no-skip cap relative to the highest tested dose. With
/// an empty history the cap is the current dose itself.
Recommendation recommend_next(const TrialHistory& history, const PosteriorSamples& samples,
                              std::span<const double> deltas, const DoseGrid& grid,
                              const ToxicityIntervals& intervals, const DecisionConfig& config,
                              std::size_t current_dose_index);

}  // namespace bblrm

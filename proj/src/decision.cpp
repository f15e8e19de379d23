#include "bblrm/decision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace bblrm {

std::string to_string(EscalationRule r) {
    return r == EscalationRule::Rule1 ? "Rule1" : "Rule2";
}

std::string to_string(Rationale r) {
    switch (r) {
        case Rationale::EscalatedByRule: return "EscalatedByRule";
        case Rationale::EwocSelection: return "EwocSelection";
        case Rationale::NoSkipCapped: return "NoSkipCapped";
    }
    return "?";
}

EscalationRule escalation_rule_from_string(const std::string& s) {
    if (s == "Rule1") return EscalationRule::Rule1;
    if (s == "Rule2") return EscalationRule::Rule2;
    throw InvalidArgument("unknown escalation rule '" + s + "' (expected Rule1 or Rule2)");
}

Rationale rationale_from_string(const std::string& s) {
    if (s == "EscalatedByRule") return Rationale::EscalatedByRule;
    if (s == "EwocSelection") return Rationale::EwocSelection;
    if (s == "NoSkipCapped") return Rationale::NoSkipCapped;
    throw InvalidArgument("unknown rationale '" + s + "'");
}

void DecisionConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma < 0.5)) throw InvalidArgument("gamma must lie in (0, 0.5)");
    if (!(omega >= 0.0 && omega <= 1.0)) throw InvalidArgument("omega must lie in [0, 1]");
}

std::vector<double> sample_delta(int s, int n, double omega, Rng& rng, std::size_t count) {
    if (n < 1) throw InvalidArgument("cohort size must be >= 1");
    if (s < 0 || s > n) throw InvalidArgument("nDLTAE count must lie in [0, n]");
    if (!(omega >= 0.0 && omega <= 1.0)) throw InvalidArgument("omega must lie in [0, 1]");

    const double lower = std::max(0.0, omega * (s - 1) / n);
    const double upper = omega * s / n;
    std::vector<double> deltas(count);
    for (auto& d : deltas) d = lower + (upper - lower) * uniform01(rng);
    return deltas;
}

std::vector<IntervalProbs> interval_probabilities(const PosteriorSamples& samples,
                                                  std::span<const double> deltas,
                                                  const DoseGrid& grid,
                                                  const ToxicityIntervals& intervals) {
    if (deltas.size() != samples.draws.size()) {
        throw InvalidArgument("deltas length " + std::to_string(deltas.size()) +
                              " does not match draws length " + std::to_string(samples.draws.size()));
    }
    if (samples.draws.empty()) throw InvalidArgument("no posterior draws");

    for (double delta : deltas) {
        if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in [0, 1]");
    }

    // Same arithmetic as burdened_dlt_probability, with the per-dose log ratio
    // and per-draw slope hoisted out of the inner loop.
    std::vector<double> log_ratio(grid.size());
    for (std::size_t d = 0; d < grid.size(); ++d) log_ratio[d] = std::log(grid[d] / grid.ref_dose);

    std::vector<std::array<std::size_t, 3>> counts(grid.size(), {0, 0, 0});
    for (std::size_t k = 0; k < samples.draws.size(); ++k) {
        const ThetaSample& theta = samples.draws[k];
        const double base = theta.theta1 + std::abs(deltas[k] * theta.theta1);
        const double slope = std::exp(theta.theta2);
        for (std::size_t d = 0; d < grid.size(); ++d) {
            const double p = logistic(base + slope * log_ratio[d]);
            ++counts[d][static_cast<std::size_t>(classify(p, intervals))];
        }
    }

    std::vector<IntervalProbs> out(grid.size());
    const double m = static_cast<double>(samples.draws.size());
    for (std::size_t d = 0; d < grid.size(); ++d) {
        out[d] = {static_cast<double>(counts[d][0]) / m, static_cast<double>(counts[d][1]) / m,
                  static_cast<double>(counts[d][2]) / m};
    }
    return out;
}

bool escalate_rule1(double p_under, double p_over, double alpha) noexcept {
    return (1.0 - alpha) * p_under > alpha * p_over;
}

bool escalate_rule2(double p_under, double p_over, const ToxicityIntervals& intervals,
                    double alpha) noexcept {
    return (1.0 - alpha) * (p_under / intervals.u) > alpha * (p_over / (1.0 - intervals.o));
}

double mtd_from_theta(const ThetaSample& theta, double delta, double target, double ref_dose) {
    const double shift = (logit(target) - theta.theta1 - std::abs(delta * theta.theta1)) /
                         std::exp(theta.theta2);
    const double log_dose = std::clamp(std::log(ref_dose) + shift, -700.0, 700.0);
    return std::exp(log_dose);
}

double expected_asymmetric_loss(double dose, std::span<const double> mtd, double gamma) {
    double total = 0.0;
    for (double t : mtd) total += dose < t ? gamma * (t - dose) : (1.0 - gamma) * (dose - t);
    return total / static_cast<double>(mtd.size());
}

double empirical_quantile(std::vector<double> values, double gamma) {
    if (values.empty()) throw InvalidArgument("quantile of an empty sample");
    const auto m = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(m)));
    rank = std::clamp<std::size_t>(rank, 1, m);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

std::size_t minimise_expected_loss(std::span<const double> candidates, std::span<const double> mtd,
                                   double gamma) {
    if (candidates.empty() || mtd.empty()) throw InvalidArgument("empty candidates or MTD sample");
    std::vector<double> sorted(mtd.begin(), mtd.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> prefix(sorted.size() + 1, 0.0);
    std::partial_sum(sorted.begin(), sorted.end(), prefix.begin() + 1);
    const double total = prefix.back();
    const double m = static_cast<double>(sorted.size());

    std::size_t best = 0;
    double best_loss = 0.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double d = candidates[c];
        const auto below = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), d) - sorted.begin());
        const double sum_below = prefix[below];
        const double n_below = static_cast<double>(below);
        const double loss = (gamma * ((total - sum_below) - (m - n_below) * d) +
                             (1.0 - gamma) * (n_below * d - sum_below)) / m;
        // Prefix-sum rounding must not break exact ties toward the higher dose.
        if (c == 0 || loss < best_loss - 1e-12 * (std::abs(best_loss) + 1.0)) {
            best = c;
            best_loss = loss;
        }
    }
    return best;
}

EwocSelection ewoc_select(const PosteriorSamples& samples, std::span<const double> deltas,
                          const DoseGrid& grid, const ToxicityIntervals& intervals, double gamma) {
    if (samples.draws.empty()) throw InvalidArgument("ewoc_select needs posterior draws");
    if (deltas.size() != samples.draws.size()) throw InvalidArgument("deltas length does not match draws");
    if (!(gamma > 0.0 && gamma < 0.5)) throw InvalidArgument("gamma must lie in (0, 0.5)");

    std::vector<double> mtd(samples.draws.size());
    for (std::size_t k = 0; k < mtd.size(); ++k) {
        mtd[k] = mtd_from_theta(samples.draws[k], deltas[k], intervals.target, grid.ref_dose);
    }
    EwocSelection out;
    out.mtd_quantile = empirical_quantile(mtd, gamma);

    // Clamping draws into the grid range leaves differences in expected loss
    // between grid doses unchanged, and keeps the arithmetic finite.
    for (auto& t : mtd) t = std::clamp(t, grid.min_dose(), grid.max_dose());
    out.dose_index = minimise_expected_loss(grid.doses, mtd, gamma);
    return out;
}

Recommendation recommend_next(const TrialHistory& history, const PosteriorSamples& samples,
                              std::span<const double> deltas, const DoseGrid& grid,
                              const ToxicityIntervals& intervals, const DecisionConfig& config,
                              std::size_t current_dose_index) {
    config.validate();
    if (current_dose_index >= grid.size()) throw InvalidArgument("current dose index outside grid");
    if (samples.draws.empty()) throw InvalidArgument("recommend_next needs posterior draws");

    std::vector<double> zeros;
    std::span<const double> effective = deltas;
    if (!config.burden_enabled) {
        zeros.assign(samples.draws.size(), 0.0);
        effective = zeros;
    }

    Recommendation rec;
    rec.interval_probs = interval_probabilities(samples, effective, grid, intervals);
    const EwocSelection ewoc = ewoc_select(samples, effective, grid, intervals, config.gamma);
    rec.mtd_quantile = ewoc.mtd_quantile;

    const IntervalProbs& here = rec.interval_probs[current_dose_index];
    const bool escalate = config.rule == EscalationRule::Rule1
                              ? escalate_rule1(here.under, here.over, config.alpha)
                              : escalate_rule2(here.under, here.over, intervals, config.alpha);
    if (escalate) {
        rec.dose_index = std::min(current_dose_index + 1, grid.size() - 1);
        rec.rationale = Rationale::EscalatedByRule;
    } else {
        rec.dose_index = ewoc.dose_index;
        rec.rationale = Rationale::EwocSelection;
    }

    if (config.no_skip) {
        const auto highest = history.highest_dose_index();
        const std::size_t cap = highest ? std::min(*highest + 1, grid.size() - 1) : current_dose_index;
        if (rec.dose_index > cap) {
            rec.dose_index = cap;
            rec.rationale = Rationale::NoSkipCapped;
        }
    }
    return rec;
}

}  // namespace bblrm

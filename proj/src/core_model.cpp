#include "bblrm/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bblrm {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace

void DoseGrid::validate() const {
    require(doses.size() >= 2, "dose grid needs at least two doses");
    for (std::size_t i = 0; i < doses.size(); ++i) {
        require(std::isfinite(doses[i]) && doses[i] > 0.0, "doses must be finite and positive");
        if (i > 0) require(doses[i] > doses[i - 1], "doses must be strictly increasing");
    }
    require(std::isfinite(ref_dose) && ref_dose > 0.0, "ref_dose must be positive");
    if (ref_index) {
        require(*ref_index < doses.size(), "ref_index out of range");
        require(doses[*ref_index] == ref_dose, "ref_index does not point at ref_dose");
    }
}

std::optional<std::size_t> DoseGrid::index_of(double dose) const {
    auto it = std::find(doses.begin(), doses.end(), dose);
    if (it == doses.end()) return std::nullopt;
    return static_cast<std::size_t>(it - doses.begin());
}

DoseGrid DoseGrid::standard() {
    return DoseGrid{{2, 4, 8, 16, 22, 28, 40, 54, 70}, 16.0, 3};
}

void ToxicityIntervals::validate() const {
    require(u > 0.0 && u < o && o < 1.0, "intervals need 0 < u < o < 1");
    require(u <= target && target <= o, "target must lie in [u, o]");
}

std::string to_string(ToxicityClass c) {
    switch (c) {
        case ToxicityClass::Underdose: return "Underdose";
        case ToxicityClass::Target: return "Target";
        case ToxicityClass::Overdose: return "Overdose";
    }
    return "?";
}

void CohortObservation::validate(const DoseGrid& grid) const {
    std::ostringstream msg;
    if (dose_index >= grid.size()) {
        msg << "dose_index " << dose_index << " outside grid of " << grid.size();
    } else if (n < 1) {
        msg << "cohort size must be >= 1, got " << n;
    } else if (dlt_count < 0 || dlt_count > n) {
        msg << "dlt_count " << dlt_count << " not in [0, " << n << "]";
    } else if (ndltae_count < 0 || ndltae_count > n) {
        msg << "ndltae_count " << ndltae_count << " not in [0, " << n << "]";
    } else {
        return;
    }
    throw InvalidArgument(msg.str());
}

void TrialHistory::validate(const DoseGrid& grid) const {
    for (std::size_t k = 0; k < cohorts.size(); ++k) {
        try {
            cohorts[k].validate(grid);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("cohort " + std::to_string(k) + ": " + e.what());
        }
    }
}

int TrialHistory::total_patients() const noexcept {
    int total = 0;
    for (const auto& c : cohorts) total += c.n;
    return total;
}

std::optional<std::size_t> TrialHistory::highest_dose_index() const noexcept {
    std::optional<std::size_t> best;
    for (const auto& c : cohorts) {
        if (!best || c.dose_index > *best) best = c.dose_index;
    }
    return best;
}

double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    require(p > 0.0 && p < 1.0, "logit needs p in (0, 1)");
    return std::log(p / (1.0 - p));
}

double dlt_log_odds(const ThetaSample& theta, double dose, double ref_dose) {
    require(dose > 0.0, "dose must be positive");
    require(ref_dose > 0.0, "ref_dose must be positive");
    return theta.theta1 + std::exp(theta.theta2) * std::log(dose / ref_dose);
}

double burdened_dlt_log_odds(const ThetaSample& theta, double delta, double dose, double ref_dose) {
    require(delta >= 0.0 && delta <= 1.0, "delta must lie in [0, 1]");
    require(dose > 0.0, "dose must be positive");
    require(ref_dose > 0.0, "ref_dose must be positive");
    return theta.theta1 + std::abs(delta * theta.theta1) +
           std::exp(theta.theta2) * std::log(dose / ref_dose);
}

double dlt_probability(const ThetaSample& theta, double dose, double ref_dose) {
    return logistic(dlt_log_odds(theta, dose, ref_dose));
}

double burdened_dlt_probability(const ThetaSample& theta, double delta, double dose, double ref_dose) {
    return logistic(burdened_dlt_log_odds(theta, delta, dose, ref_dose));
}

ToxicityClass classify(double p, const ToxicityIntervals& intervals) noexcept {
    if (p < intervals.u) return ToxicityClass::Underdose;
    if (p > intervals.o) return ToxicityClass::Overdose;
    return ToxicityClass::Target;
}

}  // namespace bblrm

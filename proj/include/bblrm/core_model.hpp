#pragma once

// Dose-toxicity model primitives: the two-parameter logistic link, the
// nDLTAE-burdened link and toxicity-interval classification.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bblrm {

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Ordered ladder of administrable doses plus the reference dose of the link.
struct DoseGrid {
    std::vector<double> doses;
    double ref_dose = 16.0;
    std::optional<std::size_t> ref_index;

    /// Throws InvalidArgument unless doses are strictly increasing, positive,
    /// at least two long, and ref_dose > 0.
    void validate() const;

    std::size_t size() const noexcept { return doses.size(); }
    double operator[](std::size_t i) const { return doses.at(i); }
    double min_dose() const { return doses.front(); }
    double max_dose() const { return doses.back(); }

    /// Index of an exact grid member, if any.
    std::optional<std::size_t> index_of(double dose) const;

    /// {2, 4, 8, 16, 22, 28, 40, 54, 70} with reference dose 16.
    static DoseGrid standard();
};

struct ThetaSample {
    double theta1 = 0.0;  // log-odds of DLT at the reference dose
    double theta2 = 0.0;  // log slope
};

/// Underdose (0, u), target [u, o], overdose (o, 1).
struct ToxicityIntervals {
    double u = 0.16;
    double o = 0.33;
    double target = 0.25;

    void validate() const;
};

enum class ToxicityClass { Underdose, Target, Overdose };

std::string to_string(ToxicityClass c);

/// Posterior mass of one dose's DLT probability in each interval.
struct IntervalProbs {
    double under = 0.0;
    double target = 0.0;
    double over = 0.0;

    double sum() const noexcept { return under + target + over; }
};

struct CohortObservation {
    std::size_t dose_index = 0;
    int n = 3;
    int dlt_count = 0;
    int ndltae_count = 0;

    void validate(const DoseGrid& grid) const;
};

struct TrialHistory {
    std::vector<CohortObservation> cohorts;

    void validate(const DoseGrid& grid) const;
    bool empty() const noexcept { return cohorts.empty(); }
    std::size_t size() const noexcept { return cohorts.size(); }
    int total_patients() const noexcept;
    std::optional<std::size_t> highest_dose_index() const noexcept;
};

double logistic(double x) noexcept;
double logit(double p);

/// Log-odds of DLT under the plain link: theta1 + exp(theta2) * ln(dose / ref).
double dlt_log_odds(const ThetaSample& theta, double dose, double ref_dose);

/// Same, with the burden term |delta * theta1| added.
double burdened_dlt_log_odds(const ThetaSample& theta, double delta, double dose, double ref_dose);

double dlt_probability(const ThetaSample& theta, double dose, double ref_dose);
double burdened_dlt_probability(const ThetaSample& theta, double delta, double dose, double ref_dose);

/// Interval boundaries belong to Target.
ToxicityClass classify(double p, const ToxicityIntervals& intervals) noexcept;

}  // namespace bblrm

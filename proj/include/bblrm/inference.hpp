#pragma once

#include "bblrm/core_model.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bblrm {

class SamplerFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Independent normal priors on theta1 and theta2. The default centres the
/// reference dose at a prior median DLT probability of 0.25.
struct PriorSpec {
    double mean1 = -1.0986122886681098;  // logit(0.25)
    double sd1 = 2.0;
    double mean2 = 0.0;
    double sd2 = 1.0;

    void validate() const;
};

struct McmcConfig {
    int burn_in = 2000;
    int kept = 8000;
    /// Chain steps per kept draw.
    int thin = 2;
    std::uint64_t seed = 1;
    double target_acceptance = 0.3;

    void validate() const;
};

struct PosteriorSamples {
    std::vector<ThetaSample> draws;
    std::uint64_t seed = 0;
    double acceptance_rate = 0.0;

    std::size_t size() const noexcept { return draws.size(); }
};

/// Normal log-prior plus binomial log-likelihood (combinatorial constant
/// included), one term per cohort.
double log_posterior(const ThetaSample& theta, const TrialHistory& history,
                     const DoseGrid& grid, const PriorSpec& prior);

/// The same density with cohorts pooled per dose; this is what the sampler
/// evaluates. Agrees with log_posterior up to rounding.
///
/// sheared() takes (psi, theta2) with psi = theta1 + exp(theta2) * centre,
/// the log-odds at dose ref_dose * exp(centre).
class PooledLogPosterior {
public:
    PooledLogPosterior(const TrialHistory& history, const DoseGrid& grid, const PriorSpec& prior,
                       double centre = 0.0);

    double operator()(const ThetaSample& theta) const noexcept;
    double sheared(const ThetaSample& point) const noexcept;

private:
    struct DoseTerm {
        double log_ratio;
        double dlt;
        double no_dlt;
    };
    std::vector<DoseTerm> terms_;
    double constant_ = 0.0;
    PriorSpec prior_;
    double centre_ = 0.0;
};

/// Adaptive random-walk Metropolis on (theta1, theta2). The Gaussian proposal
/// is tuned during burn-in and frozen afterwards; draws are deterministic in
/// config.seed.
PosteriorSamples sample_posterior(const TrialHistory& history, const DoseGrid& grid,
                                  const PriorSpec& prior, const McmcConfig& config);

/// Initial-positive-sequence ESS estimate of a scalar chain.
double effective_sample_size(std::span<const double> chain);

}  // namespace bblrm

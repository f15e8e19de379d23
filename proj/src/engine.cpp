#include "bblrm/engine.hpp"

#include "bblrm/rng.hpp"

namespace bblrm {

std::size_t current_dose_index(const TrialConfig& config, const TrialHistory& history) {
    return history.empty() ? config.start_dose_index : history.cohorts.back().dose_index;
}

EngineResult evaluate(const TrialConfig& config, const TrialHistory& history, std::uint64_t seed,
                      bool with_bands) {
    config.validate();
    history.validate(config.grid);

    McmcConfig mcmc = config.mcmc;
    mcmc.seed = seed;
    const PosteriorSamples samples = sample_posterior(history, config.grid, config.prior, mcmc);

    std::vector<double> deltas(samples.size(), 0.0);
    if (config.decision.burden_enabled && !history.empty()) {
        const CohortObservation& latest = history.cohorts.back();
        Rng rng(derive_seed(seed, kDeltaStream));
        deltas = sample_delta(latest.ndltae_count, latest.n, config.decision.omega, rng, samples.size());
    }

    EngineResult out;
    out.seed = seed;
    out.acceptance_rate = samples.acceptance_rate;
    out.recommendation = recommend_next(history, samples, deltas, config.grid, config.intervals,
                                        config.decision, current_dose_index(config, history));
    out.dose = config.grid[out.recommendation.dose_index];

    if (with_bands) {
        out.bands.reserve(config.grid.size());
        std::vector<double> p(samples.size());
        for (std::size_t d = 0; d < config.grid.size(); ++d) {
            for (std::size_t k = 0; k < samples.size(); ++k) {
                const double delta = config.decision.burden_enabled ? deltas[k] : 0.0;
                p[k] = burdened_dlt_probability(samples.draws[k], delta, config.grid[d], config.grid.ref_dose);
            }
            out.bands.push_back({empirical_quantile(p, 0.025), empirical_quantile(p, 0.5),
                                 empirical_quantile(p, 0.975)});
        }
    }
    return out;
}

}  // namespace bblrm

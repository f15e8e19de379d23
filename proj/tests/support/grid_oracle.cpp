#include "grid_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bblrm::testing {

OracleResult grid_posterior_oracle(const TrialHistory& history, const DoseGrid& grid,
                                   const PriorSpec& prior, const ToxicityIntervals& intervals,
                                   OracleResolution resolution) {
    if (resolution.n1 < 200 || resolution.n2 < 200) {
        throw std::invalid_argument("oracle resolution must be at least 200x200");
    }
    const double lo1 = prior.mean1 - 6.0 * prior.sd1;
    const double lo2 = prior.mean2 - 6.0 * prior.sd2;
    const double h1 = 12.0 * prior.sd1 / resolution.n1;
    const double h2 = 12.0 * prior.sd2 / resolution.n2;

    const auto cells = static_cast<std::size_t>(resolution.n1) * static_cast<std::size_t>(resolution.n2);
    std::vector<double> logp(cells);
    double max_lp = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < resolution.n1; ++i) {
        for (int j = 0; j < resolution.n2; ++j) {
            const ThetaSample theta{lo1 + (i + 0.5) * h1, lo2 + (j + 0.5) * h2};
            const double lp = log_posterior(theta, history, grid, prior);
            logp[static_cast<std::size_t>(i) * resolution.n2 + j] = lp;
            if (lp > max_lp) max_lp = lp;
        }
    }
    if (!std::isfinite(max_lp)) throw OracleFailure("log posterior not finite anywhere on the rectangle");

    OracleResult out;
    out.interval_probs.assign(grid.size(), {});
    out.mean_dlt.assign(grid.size(), 0.0);
    const double logit_u = logit(intervals.u);
    const double logit_o = logit(intervals.o);
    double total = 0.0;
    double edge = 0.0;
    for (int i = 0; i < resolution.n1; ++i) {
        for (int j = 0; j < resolution.n2; ++j) {
            const double w = std::exp(logp[static_cast<std::size_t>(i) * resolution.n2 + j] - max_lp);
            if (w == 0.0) continue;
            total += w;
            if (i == 0 || j == 0 || i == resolution.n1 - 1 || j == resolution.n2 - 1) edge += w;
            const double cell_lo = lo1 + i * h1;
            const ThetaSample theta{cell_lo + 0.5 * h1, lo2 + (j + 0.5) * h2};
            const double slope = std::exp(theta.theta2);
            for (std::size_t d = 0; d < grid.size(); ++d) {
                const double shift = slope * std::log(grid[d] / grid.ref_dose);
                out.mean_dlt[d] += w * dlt_probability(theta, grid[d], grid.ref_dose);
                // For fixed theta2 the class boundaries are explicit in theta1,
                // so each cell contributes the fraction of its width on each side.
                const double below_u = std::clamp((logit_u - shift - cell_lo) / h1, 0.0, 1.0);
                const double below_o = std::clamp((logit_o - shift - cell_lo) / h1, 0.0, 1.0);
                out.interval_probs[d].under += w * below_u;
                out.interval_probs[d].target += w * (below_o - below_u);
                out.interval_probs[d].over += w * (1.0 - below_o);
            }
        }
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw OracleFailure("posterior mass underflow; widen the rectangle");
    if (edge / total > 1e-6) throw OracleFailure("posterior mass reaches the rectangle edge; widen the rectangle");

    for (std::size_t d = 0; d < grid.size(); ++d) {
        out.interval_probs[d].under /= total;
        out.interval_probs[d].target /= total;
        out.interval_probs[d].over /= total;
        out.mean_dlt[d] /= total;
    }
    return out;
}

}  // namespace bblrm::testing

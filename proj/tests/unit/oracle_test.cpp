#include "grid_oracle.hpp"

#include "bblrm/decision.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bblrm;
using bblrm::testing::grid_posterior_oracle;
using bblrm::testing::OracleFailure;

namespace {

const DoseGrid kGrid = DoseGrid::standard();

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

std::vector<TrialHistory> desk_histories() {
    return {
        TrialHistory{},
        TrialHistory{{{0, 3, 0, 0}, {1, 3, 1, 0}}},
        TrialHistory{{{0, 3, 0, 0}, {1, 3, 0, 0}, {2, 3, 2, 0}}},
    };
}

}  // namespace

TEST(GridOracle, ClosedFormAtReferenceDose) {
    const PriorSpec prior;
    const ToxicityIntervals iv;
    const auto r = grid_posterior_oracle({}, kGrid, prior, iv);
    const auto& ref = r.interval_probs[*kGrid.ref_index];
    const double under = normal_cdf((logit(iv.u) - prior.mean1) / prior.sd1);
    const double over = 1.0 - normal_cdf((logit(iv.o) - prior.mean1) / prior.sd1);
    EXPECT_NEAR(ref.under, under, 0.005);
    EXPECT_NEAR(ref.over, over, 0.005);
    EXPECT_NEAR(ref.sum(), 1.0, 1e-12);
}

TEST(GridOracle, FrozenTwoCohortTable) {
    // Frozen from the 400x400 quadrature for [0/3 at 2, 1/3 at 4].
    const double expected[9][3] = {
        {0.75746346111594465, 0.19340508510930493, 0.049131453774789884},
        {0.55872089886128018, 0.30610879159396809, 0.13517030954479342},
        {0.33167228939178062, 0.32705710752146966, 0.34127060308679119},
        {0.19103967580166514, 0.25395558357355702, 0.55500474062481009},
        {0.1524814255666756, 0.21954427712889191, 0.62797429730446597},
        {0.13020941313827117, 0.19655939741106987, 0.67323118945069216},
        {0.10494228785391033, 0.16758559867094652, 0.72747211347514762},
        {0.088770797878722191, 0.14733233117250691, 0.76389687094877401},
        {0.077502567340520051, 0.13236344961822358, 0.79013398304126015},
    };
    const auto r = grid_posterior_oracle(TrialHistory{{{0, 3, 0, 0}, {1, 3, 1, 0}}}, kGrid, PriorSpec{},
                                         ToxicityIntervals{});
    for (std::size_t d = 0; d < 9; ++d) {
        EXPECT_NEAR(r.interval_probs[d].under, expected[d][0], 1e-12) << d;
        EXPECT_NEAR(r.interval_probs[d].target, expected[d][1], 1e-12) << d;
        EXPECT_NEAR(r.interval_probs[d].over, expected[d][2], 1e-12) << d;
    }
}

TEST(GridOracle, ResolutionIsStable) {
    const TrialHistory h{{{0, 3, 0, 0}, {1, 3, 1, 0}}};
    const auto coarse = grid_posterior_oracle(h, kGrid, PriorSpec{}, ToxicityIntervals{}, {200, 200});
    const auto fine = grid_posterior_oracle(h, kGrid, PriorSpec{}, ToxicityIntervals{}, {400, 400});
    for (std::size_t d = 0; d < kGrid.size(); ++d) {
        EXPECT_NEAR(coarse.interval_probs[d].over, fine.interval_probs[d].over, 0.005);
        EXPECT_NEAR(coarse.interval_probs[d].under, fine.interval_probs[d].under, 0.005);
    }
}

TEST(GridOracle, RejectsCoarseGridsAndEdgeMass) {
    EXPECT_THROW(grid_posterior_oracle({}, kGrid, PriorSpec{}, ToxicityIntervals{}, {100, 400}),
                 std::invalid_argument);
    // A tight prior overwhelmed by toxic data pushes the mass off the rectangle.
    TrialHistory toxic;
    for (int i = 0; i < 10; ++i) toxic.cohorts.push_back({8, 3, 3, 0});
    EXPECT_THROW(grid_posterior_oracle(toxic, kGrid, PriorSpec{-1.1, 0.2, 0.0, 0.2}, ToxicityIntervals{}),
                 OracleFailure);
}

TEST(GridOracle, McmcAgreesOnDeskHistories) {
    constexpr double kTolerance = 0.02;
    for (const auto& h : desk_histories()) {
        const auto oracle = grid_posterior_oracle(h, kGrid, PriorSpec{}, ToxicityIntervals{});
        McmcConfig cfg;
        cfg.seed = 314159;
        const auto samples = sample_posterior(h, kGrid, PriorSpec{}, cfg);
        const std::vector<double> zeros(samples.size(), 0.0);
        const auto mcmc = interval_probabilities(samples, zeros, kGrid, ToxicityIntervals{});
        for (std::size_t d = 0; d < kGrid.size(); ++d) {
            EXPECT_NEAR(mcmc[d].under, oracle.interval_probs[d].under, kTolerance) << h.size() << "/" << d;
            EXPECT_NEAR(mcmc[d].target, oracle.interval_probs[d].target, kTolerance) << h.size() << "/" << d;
            EXPECT_NEAR(mcmc[d].over, oracle.interval_probs[d].over, kTolerance) << h.size() << "/" << d;
            double mean_p = 0.0;
            for (const auto& t : samples.draws) mean_p += dlt_probability(t, kGrid[d], 16.0);
            EXPECT_NEAR(mean_p / static_cast<double>(samples.size()), oracle.mean_dlt[d], 0.01);
        }
    }
}

#include "bblrm/inference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace bblrm;

namespace {

const DoseGrid kGrid = DoseGrid::standard();

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> component(const PosteriorSamples& s, bool first) {
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& d : s.draws) out.push_back(first ? d.theta1 : d.theta2);
    return out;
}

// Binomial log pmf with its combinatorial constant, written out directly.
double binomial_log_pmf(int k, int n, double p) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
}

}  // namespace

TEST(LogPosterior, MatchesDirectFormula) {
    const PriorSpec prior;
    const TrialHistory h{{{0, 3, 0, 0}, {1, 3, 1, 2}}};
    const ThetaSample t{-1.3, 0.2};
    double expected = 0.0;
    for (auto [x, m, s] : {std::tuple{t.theta1, prior.mean1, prior.sd1}, std::tuple{t.theta2, prior.mean2, prior.sd2}}) {
        expected += -0.5 * std::log(2.0 * M_PI) - std::log(s) - 0.5 * ((x - m) / s) * ((x - m) / s);
    }
    for (const auto& c : h.cohorts) {
        expected += binomial_log_pmf(c.dlt_count, c.n, dlt_probability(t, kGrid[c.dose_index], 16.0));
    }
    EXPECT_NEAR(log_posterior(t, h, kGrid, prior), expected, 1e-12);
}

TEST(LogPosterior, EmptyHistoryPeaksAtPriorMean) {
    const PriorSpec prior;
    const TrialHistory empty;
    const double at_mean = log_posterior({prior.mean1, prior.mean2}, empty, kGrid, prior);
    for (auto [d1, d2] : {std::pair{0.1, 0.0}, {-0.1, 0.0}, {0.0, 0.1}, {0.0, -0.1}}) {
        EXPECT_LT(log_posterior({prior.mean1 + d1, prior.mean2 + d2}, empty, kGrid, prior), at_mean);
    }
}

TEST(LogPosterior, FiniteAtExtremes) {
    const TrialHistory h{{{8, 3, 3, 3}, {0, 3, 0, 0}}};
    for (ThetaSample t : {ThetaSample{60, 12}, {-60, 12}, {60, -12}, {-60, -12}, {0, 40}}) {
        EXPECT_TRUE(std::isfinite(log_posterior(t, h, kGrid, PriorSpec{}))) << t.theta1 << "," << t.theta2;
    }
}

TEST(PooledLogPosterior, AgreesWithPerCohortDensity) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n1(-1.1, 3.0), n2(0.0, 1.5);
    const TrialHistory h{{{0, 3, 0, 1}, {1, 3, 1, 2}, {1, 3, 0, 0}, {2, 4, 2, 3}, {1, 2, 2, 0}}};
    const PriorSpec prior{-0.5, 1.5, 0.2, 0.8};
    const PooledLogPosterior pooled(h, kGrid, prior);
    const double centre = 0.7;
    const PooledLogPosterior sheared(h, kGrid, prior, centre);
    for (int i = 0; i < 500; ++i) {
        const ThetaSample t{n1(rng), n2(rng)};
        const double reference = log_posterior(t, h, kGrid, prior);
        EXPECT_NEAR(pooled(t), reference, 1e-9 * std::max(1.0, std::abs(reference)));
        EXPECT_NEAR(sheared(t), reference, 1e-9 * std::max(1.0, std::abs(reference)));
        const ThetaSample psi{t.theta1 + std::exp(t.theta2) * centre, t.theta2};
        EXPECT_NEAR(sheared.sheared(psi), reference, 1e-9 * std::max(1.0, std::abs(reference)));
    }
}

TEST(Sampler, ConfigValidation) {
    EXPECT_NO_THROW(McmcConfig{}.validate());
    EXPECT_THROW((McmcConfig{-1, 10, 1, 1, 0.3}).validate(), InvalidArgument);
    EXPECT_THROW((McmcConfig{10, 0, 1, 1, 0.3}).validate(), InvalidArgument);
    EXPECT_THROW((McmcConfig{10, 10, 0, 1, 0.3}).validate(), InvalidArgument);
    EXPECT_THROW((McmcConfig{10, 10, 1, 1, 1.0}).validate(), InvalidArgument);
    EXPECT_THROW((PriorSpec{0, 0, 0, 1}).validate(), InvalidArgument);
    EXPECT_THROW((PriorSpec{0, 1, NAN, 1}).validate(), InvalidArgument);
}

TEST(Sampler, SeedDeterminism) {
    const TrialHistory h{{{0, 3, 0, 0}, {1, 3, 1, 0}}};
    McmcConfig cfg;
    cfg.kept = 2000;
    cfg.seed = 42;
    const auto a = sample_posterior(h, kGrid, PriorSpec{}, cfg);
    const auto b = sample_posterior(h, kGrid, PriorSpec{}, cfg);
    ASSERT_EQ(a.size(), 2000u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a.draws[i].theta1, b.draws[i].theta1);
        ASSERT_EQ(a.draws[i].theta2, b.draws[i].theta2);
    }
    EXPECT_EQ(a.acceptance_rate, b.acceptance_rate);
    cfg.seed = 43;
    const auto c = sample_posterior(h, kGrid, PriorSpec{}, cfg);
    EXPECT_NE(a.draws.back().theta1, c.draws.back().theta1);
}

TEST(Sampler, RecoversPriorWithoutData) {
    const PriorSpec prior;
    McmcConfig cfg;
    cfg.seed = 2024;
    const auto s = sample_posterior({}, kGrid, prior, cfg);
    const auto t1 = component(s, true);
    const auto t2 = component(s, false);
    EXPECT_NEAR(mean(t1), prior.mean1, 0.10);
    EXPECT_NEAR(sd(t1), prior.sd1, 0.15);
    EXPECT_NEAR(mean(t2), prior.mean2, 0.10);
    EXPECT_NEAR(sd(t2), prior.sd2, 0.15);
    // Three standard errors of the mean, using the chain's effective size.
    EXPECT_NEAR(mean(t1), prior.mean1, 3.0 * prior.sd1 / std::sqrt(effective_sample_size(t1)));
    EXPECT_NEAR(mean(t2), prior.mean2, 3.0 * prior.sd2 / std::sqrt(effective_sample_size(t2)));
    EXPECT_GT(s.acceptance_rate, 0.1);
}

TEST(Sampler, ToxicTopDoseShiftsPosteriorUp) {
    McmcConfig cfg;
    cfg.seed = 9;
    const auto prior_only = sample_posterior({}, kGrid, PriorSpec{}, cfg);
    const auto posterior = sample_posterior(TrialHistory{{{8, 3, 3, 0}}}, kGrid, PriorSpec{}, cfg);
    auto mean_p70 = [](const PosteriorSamples& s) {
        double total = 0.0;
        for (const auto& d : s.draws) total += dlt_probability(d, 70.0, 16.0);
        return total / static_cast<double>(s.size());
    };
    EXPECT_GT(mean_p70(posterior), mean_p70(prior_only));
}

TEST(Sampler, RejectsInvalidHistory) {
    EXPECT_THROW(sample_posterior(TrialHistory{{{0, 3, 5, 0}}}, kGrid, PriorSpec{}, McmcConfig{}), InvalidArgument);
}

TEST(EffectiveSampleSize, IidAndAutocorrelatedChains) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    std::vector<double> iid(20000), ar(20000);
    const double rho = 0.9;
    double x = 0.0;
    for (std::size_t i = 0; i < iid.size(); ++i) {
        iid[i] = z(rng);
        x = rho * x + std::sqrt(1 - rho * rho) * z(rng);
        ar[i] = x;
    }
    EXPECT_NEAR(effective_sample_size(iid) / 20000.0, 1.0, 0.1);
    // AR(1): n (1 - rho) / (1 + rho)
    EXPECT_NEAR(effective_sample_size(ar) / (20000.0 * (1 - rho) / (1 + rho)), 1.0, 0.25);
}

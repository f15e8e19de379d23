#include "bblrm/core_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace bblrm;

TEST(DoseGrid, StandardLadder) {
    const auto grid = DoseGrid::standard();
    EXPECT_EQ(grid.doses, (std::vector<double>{2, 4, 8, 16, 22, 28, 40, 54, 70}));
    EXPECT_EQ(grid.ref_dose, 16.0);
    ASSERT_TRUE(grid.ref_index.has_value());
    EXPECT_EQ(*grid.ref_index, 3u);
    EXPECT_NO_THROW(grid.validate());
    EXPECT_EQ(grid.min_dose(), 2.0);
    EXPECT_EQ(grid.max_dose(), 70.0);
}

TEST(DoseGrid, RejectsMalformedLadders) {
    EXPECT_THROW((DoseGrid{{2, 2, 8}, 16, std::nullopt}).validate(), InvalidArgument);
    EXPECT_THROW((DoseGrid{{4, 2}, 16, std::nullopt}).validate(), InvalidArgument);
    EXPECT_THROW((DoseGrid{{-1, 2}, 16, std::nullopt}).validate(), InvalidArgument);
    EXPECT_THROW((DoseGrid{{2}, 16, std::nullopt}).validate(), InvalidArgument);
    EXPECT_THROW((DoseGrid{{2, 4}, 0, std::nullopt}).validate(), InvalidArgument);
    EXPECT_THROW((DoseGrid{{2, 4}, 4, 0}).validate(), InvalidArgument);
    EXPECT_NO_THROW((DoseGrid{{2, 4}, 3, std::nullopt}).validate());  // ref need not be on the grid
}

TEST(DoseGrid, IndexOfExactMembersOnly) {
    const auto grid = DoseGrid::standard();
    EXPECT_EQ(grid.index_of(22.0), std::optional<std::size_t>(4));
    EXPECT_FALSE(grid.index_of(23.0).has_value());
}

TEST(Link, LogisticAndLogitInvert) {
    for (double p : {1e-9, 0.01, 0.16, 0.25, 0.33, 0.5, 0.9, 1 - 1e-9}) {
        EXPECT_NEAR(logistic(logit(p)), p, 1e-12 * std::max(1.0, 1.0 / p));
    }
    EXPECT_EQ(logistic(-800.0), 0.0);
    EXPECT_EQ(logistic(800.0), 1.0);
    EXPECT_THROW(logit(0.0), InvalidArgument);
    EXPECT_THROW(logit(1.0), InvalidArgument);
}

TEST(Link, ReferenceDoseDependsOnInterceptOnly) {
    const ThetaSample theta{-1.0986122886681098, 1.7};
    EXPECT_NEAR(dlt_probability(theta, 16.0, 16.0), 0.25, 1e-15);
}

TEST(Link, SlopeRaisesProbabilityAboveReference) {
    const ThetaSample theta{-1.0, 0.0};
    EXPECT_NEAR(dlt_log_odds(theta, 32.0, 16.0), -1.0 + std::log(2.0), 1e-15);
    EXPECT_GT(dlt_probability(theta, 70.0, 16.0), dlt_probability(theta, 2.0, 16.0));
}

TEST(Link, ZeroBurdenIsBitIdentical) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n1(-1.1, 2.0), n2(0.0, 1.0);
    const auto grid = DoseGrid::standard();
    for (int i = 0; i < 2000; ++i) {
        const ThetaSample t{n1(rng), n2(rng)};
        for (double d : grid.doses) {
            EXPECT_EQ(burdened_dlt_probability(t, 0.0, d, 16.0), dlt_probability(t, d, 16.0));
        }
    }
}

TEST(Link, BurdenAddsAbsoluteInterceptShare) {
    const ThetaSample t{-2.0, 0.3};
    const double plain = dlt_log_odds(t, 8.0, 16.0);
    EXPECT_NEAR(burdened_dlt_log_odds(t, 0.5, 8.0, 16.0) - plain, 1.0, 1e-14);
    const ThetaSample positive{2.0, 0.3};
    EXPECT_NEAR(burdened_dlt_log_odds(positive, 0.5, 8.0, 16.0) - dlt_log_odds(positive, 8.0, 16.0), 1.0,
                1e-14);
    EXPECT_THROW(burdened_dlt_log_odds(t, 1.5, 8.0, 16.0), InvalidArgument);
    EXPECT_THROW(burdened_dlt_log_odds(t, -0.1, 8.0, 16.0), InvalidArgument);
}

TEST(Classify, BoundariesBelongToTarget) {
    const ToxicityIntervals iv;
    EXPECT_EQ(classify(0.16, iv), ToxicityClass::Target);
    EXPECT_EQ(classify(0.33, iv), ToxicityClass::Target);
    EXPECT_EQ(classify(std::nextafter(0.16, 0.0), iv), ToxicityClass::Underdose);
    EXPECT_EQ(classify(std::nextafter(0.33, 1.0), iv), ToxicityClass::Overdose);
    EXPECT_EQ(classify(0.0, iv), ToxicityClass::Underdose);
    EXPECT_EQ(classify(1.0, iv), ToxicityClass::Overdose);
    EXPECT_EQ(to_string(ToxicityClass::Overdose), "Overdose");
}

TEST(Intervals, Validation) {
    EXPECT_NO_THROW(ToxicityIntervals{}.validate());
    EXPECT_THROW((ToxicityIntervals{0.4, 0.3, 0.35}).validate(), InvalidArgument);
    EXPECT_THROW((ToxicityIntervals{0.16, 0.33, 0.5}).validate(), InvalidArgument);
    EXPECT_THROW((ToxicityIntervals{0.0, 0.33, 0.25}).validate(), InvalidArgument);
}

TEST(History, CohortValidation) {
    const auto grid = DoseGrid::standard();
    EXPECT_NO_THROW((CohortObservation{0, 3, 3, 0}).validate(grid));
    EXPECT_THROW((CohortObservation{9, 3, 0, 0}).validate(grid), InvalidArgument);
    EXPECT_THROW((CohortObservation{0, 0, 0, 0}).validate(grid), InvalidArgument);
    EXPECT_THROW((CohortObservation{0, 3, 4, 0}).validate(grid), InvalidArgument);
    EXPECT_THROW((CohortObservation{0, 3, 0, -1}).validate(grid), InvalidArgument);
    TrialHistory h{{{0, 3, 0, 0}, {1, 3, 9, 0}}};
    try {
        h.validate(grid);
        FAIL() << "expected InvalidArgument";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("cohort 1"), std::string::npos);
    }
}

TEST(History, Accounting) {
    TrialHistory h;
    EXPECT_FALSE(h.highest_dose_index().has_value());
    EXPECT_EQ(h.total_patients(), 0);
    h.cohorts = {{0, 3, 0, 0}, {2, 3, 1, 1}, {1, 4, 0, 0}};
    EXPECT_EQ(h.total_patients(), 10);
    EXPECT_EQ(h.highest_dose_index(), std::optional<std::size_t>(2));
}

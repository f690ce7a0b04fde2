#include "foldmenu/shares.hpp"
#include "foldmenu/assortment.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace foldmenu;

TEST(Normal, QuantileInvertsCdf) {
    for (double p : {1e-300, 1e-20, 1e-8, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.975, 0.999999}) {
        const double z = normal::quantile(p);
        EXPECT_NEAR(normal::cdf(z) / p, 1.0, 1e-13) << p;
    }
    EXPECT_TRUE(std::isinf(normal::quantile(0.0)));
    EXPECT_TRUE(std::isinf(normal::quantile(1.0)));
    EXPECT_NEAR(normal::quantile(0.975), 1.959963984540054, 1e-14);
}

TEST(AlphaCdf, SupportAndMedian) {
    const TasteDistribution dist{2.0, 1.1, 0.4};
    EXPECT_EQ(alpha_cdf(dist, 0.0), 0.0);
    EXPECT_EQ(alpha_cdf(dist, -1.0), 0.0);
    EXPECT_NEAR(alpha_cdf(dist, std::exp(std::log(2.0) - 1.1)), 0.5, 1e-15);
}

TEST(AlphaCdf, MatchesEmpiricalCdf) {
    // Oracle: 10^6 draws of theta / exp(mu + sigma z).
    Rng pick(8);
    for (int rep = 0; rep < 3; ++rep) {
        const TasteDistribution dist{0.5 + 3.0 * pick.uniform(), -0.5 + 2.0 * pick.uniform(), 0.1 + 0.8 * pick.uniform()};
        Rng rng(1000 + rep);
        std::vector<double> a(1'000'000);
        for (auto& x : a) x = dist.theta / std::exp(dist.income_log_mean + dist.income_log_sd * rng.normal());
        std::sort(a.begin(), a.end());
        for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
            const double x = a[static_cast<std::size_t>(q * a.size())];
            const double emp = static_cast<double>(std::upper_bound(a.begin(), a.end(), x) - a.begin()) / a.size();
            EXPECT_NEAR(alpha_cdf(dist, x), emp, 2e-3);
        }
    }
}

TEST(ConditionalSample, UnrestrictedIntervalGivesUnconditionalQuantiles) {
    const TasteDistribution dist{2.0, 0.5, 0.6};
    const DrawSet draws = DrawSet::make(3, 50, 1);
    const double inf = std::numeric_limits<double>::infinity();
    const auto s = conditional_alpha_sample(dist, -inf, inf, draws);
    ASSERT_EQ(s.alpha.size(), 50u);
    EXPECT_NEAR(s.mass, 1.0, 1e-15);
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_NEAR(s.alpha[i], dist.alpha_of(normal::quantile(draws.uniforms[i])), 1e-12 * s.alpha[i]);
    }
}

TEST(ConditionalSample, HalfOnUpperHalfIsSeventyFifthPercentile) {
    const TasteDistribution dist{2.0, 0.5, 0.6};
    DrawSet draws;
    draws.uniforms = {0.5};
    const double median = dist.alpha_of(0.0);
    const auto s = conditional_alpha_sample(dist, median, std::numeric_limits<double>::infinity(), draws);
    EXPECT_NEAR(s.mass, 0.5, 1e-15);
    EXPECT_NEAR(s.alpha[0], dist.alpha_of(normal::quantile(0.75)), 1e-12);
}

TEST(ConditionalSample, ZeroMassIntervalIsEmpty) {
    const TasteDistribution dist{2.0, 0.5, 0.6};
    const auto s = conditional_alpha_sample(dist, -3.0, -1.0, DrawSet::make(1, 10, 1));
    EXPECT_TRUE(s.empty());
    EXPECT_EQ(s.mass, 0.0);
}

TEST(ConditionalSample, StaysInsideInterval) {
    const TasteDistribution dist{2.0, 0.5, 0.6};
    const DrawSet draws = DrawSet::make(4, 2000, 1);
    // far upper tail, where the cdf difference would cancel
    const double lo = dist.alpha_of(9.0), hi = dist.alpha_of(9.5);
    const auto s = conditional_alpha_sample(dist, lo, hi, draws);
    ASSERT_FALSE(s.empty());
    for (double a : s.alpha) {
        EXPECT_GT(a, lo);
        EXPECT_LE(a, hi);
    }
}

TEST(DepthMasses, SumToOne) {
    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{2.0, 1.5, 1.2, 1.0, 0.8};
    const auto masses = depth_masses(solve_cutoffs(gamma, line), {2.0, 0.2, 0.5});
    double total = 0.0;
    for (double m : masses) {
        EXPECT_GE(m, 0.0);
        total += m;
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(PredictedShares, MatchesPlainMonteCarlo) {
    // Oracle: draw alpha directly, give each consumer the seller-optimal
    // foldable menu, average logit probabilities.
    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{2.0, 1.5, 1.2, 1.0, 0.8};
    const TasteDistribution dist{2.0, 0.3, 0.5};
    const auto sh = predicted_shares(gamma, line, dist, DrawSet::make(11, 200'000, 1));
    EXPECT_NEAR(sh.total(), 1.0, 1e-12);

    Rng rng(12);
    constexpr std::size_t kDraws = 1'000'000;
    std::vector<double> mc(line.size() + 1, 0.0);
    for (std::size_t i = 0; i < kDraws; ++i) {
        const ConsumerTaste taste{dist.alpha_of(rng.normal()), gamma};
        const auto menu = optimal_foldable(taste, line).assortment();
        const auto p = choice_probabilities(taste, line, menu);
        for (std::size_t k = 0; k < p.size(); ++k) mc[k] += p[k] / kDraws;
    }
    EXPECT_NEAR(sh.outside, mc[0], 1.5e-3);
    for (std::size_t j = 0; j < line.size(); ++j) EXPECT_NEAR(sh.inside[j], mc[j + 1], 1.5e-3) << "tier " << j;
}

TEST(PredictedShares, DegeneratePartitionEqualsStandardLogit) {
    // Every cutoff at or below zero: everyone faces the full line.
    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{0.4, 0.1, -0.2, 0.3, 0.0};
    const TasteDistribution dist{1.5, 0.2, 0.5};
    DrawSet draws = DrawSet::make(21, 3000, 1);
    draws.normals.clear();
    for (double u : draws.uniforms) draws.normals.push_back(-normal::quantile(u));  // same consumers
    const CutoffVector cuts({-4.0, -3.0, -2.0, -1.0});
    const auto fold = shares_given_cutoffs(gamma, line, dist, draws, cuts);
    const auto std_logit = standard_logit_shares(gamma, line, dist, draws.normals);
    for (std::size_t j = 0; j < line.size(); ++j) EXPECT_NEAR(fold.inside[j], std_logit.inside[j], 1e-13);
    EXPECT_NEAR(fold.outside, std_logit.outside, 1e-13);
}

TEST(PredictedShares, FullLineRuleUsesSameSample) {
    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{2.0, 1.5, 1.2, 1.0, 0.8};
    const TasteDistribution dist{2.0, 0.3, 0.5};
    const auto draws = DrawSet::make(5, 2000, 1);
    const auto cuts = solve_cutoffs(gamma, line);
    const auto fold = shares_given_cutoffs(gamma, line, dist, draws, cuts, MenuRule::kFoldable);
    const auto full = shares_given_cutoffs(gamma, line, dist, draws, cuts, MenuRule::kFullLine);
    EXPECT_NEAR(full.total(), 1.0, 1e-12);
    // More choice lowers the outside share and the top tier's share.
    EXPECT_LT(full.outside, fold.outside);
    EXPECT_LT(full.inside[0], fold.inside[0]);
}

TEST(StandardLogit, SmallThetaIsPureLogitInGamma) {
    const auto one = ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{1.0});
    Rng rng(2);
    const auto normals = rng.normals(1000);
    const auto s = standard_logit_shares(std::vector<double>{0.0}, one, {1e-9, 0.0, 0.5}, normals);
    EXPECT_NEAR(s.inside[0], 0.5, 1e-8);

    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{0.5, 0.2, -0.1, 0.0, 0.3};
    const auto t = standard_logit_shares(gamma, line, {1e-10, 0.0, 0.5}, normals);
    double den = 1.0;
    for (double g : gamma) den += std::exp(g);
    for (std::size_t j = 0; j < gamma.size(); ++j) EXPECT_NEAR(t.inside[j], std::exp(gamma[j]) / den, 1e-8);
}

TEST(StandardLogit, KernelMatchesDirectFormula) {
    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{2.0, 1.5, 1.2, 1.0, 0.8};
    const TasteDistribution dist{0.7, 0.4, 0.3};
    Rng rng(6);
    const auto normals = rng.normals(500);
    const auto s = standard_logit_shares(gamma, line, dist, normals);
    std::vector<double> want(line.size(), 0.0);
    for (double v : normals) {
        const ConsumerTaste taste{std::exp(std::log(dist.theta) - dist.income_log_mean - dist.income_log_sd * v), gamma};
        const auto p = choice_probabilities(taste, line, Assortment::top(line.size()));
        for (std::size_t j = 0; j < line.size(); ++j) want[j] += p[j + 1] / normals.size();
    }
    for (std::size_t j = 0; j < line.size(); ++j) EXPECT_NEAR(s.inside[j], want[j], 1e-14);
}

TEST(DrawSet, SeedDeterminesDraws) {
    const auto a = DrawSet::make(17, 100, 100);
    const auto b = DrawSet::make(17, 100, 100);
    EXPECT_EQ(a.uniforms, b.uniforms);
    EXPECT_EQ(a.normals, b.normals);
    EXPECT_NE(a.uniforms, DrawSet::make(18, 100, 100).uniforms);
}

#include "foldmenu/assortment.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace foldmenu;
using foldmenu::testing::random_instance;

TEST(ChoiceProbabilities, SingleProductZeroUtilityIsHalf) {
    const auto line = ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{1.0});
    const ConsumerTaste taste{0.0, {0.0}};
    const auto p = choice_probabilities(taste, line, Assortment::top(1));
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
    EXPECT_DOUBLE_EQ(expected_profit(taste, line, Assortment::top(1)), 0.5);
}

TEST(ChoiceProbabilities, DimensionMismatchThrows) {
    const auto line = ProductLine::from_vectors(std::vector<double>{2.0, 1.0}, std::vector<double>{2.0, 1.0});
    const ConsumerTaste taste{1.0, {}};
    EXPECT_THROW(choice_probabilities(taste, line, Assortment::top(2)), InputError);
}

TEST(ChoiceProbabilities, ProductsOutsideTheAssortmentGetZero) {
    const auto line = ProductLine::from_vectors(std::vector<double>{3.0, 2.0, 1.0}, std::vector<double>{3, 2, 1});
    const ConsumerTaste taste{0.5, {1.0, 2.0, 0.5}};
    const auto p = choice_probabilities(taste, line, Assortment::from_mask(0b101));
    EXPECT_EQ(p[2], 0.0);
    EXPECT_NEAR(p[0] + p[1] + p[3], 1.0, 1e-15);
}

TEST(ChoiceProbabilities, EmptyAssortmentProfitIsZero) {
    const auto line = ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{1.0});
    EXPECT_EQ(expected_profit({1.0, {0.3}}, line, Assortment{}), 0.0);
}

TEST(ChoiceProbabilities, MatchesGumbelSimulation) {
    // Oracle: simulate argmax of delta_j + Gumbel noise, outside utility 0 + noise.
    const auto line = ProductLine::from_vectors(std::vector<double>{2.5, 1.8}, std::vector<double>{3.6, 2.4});
    const ConsumerTaste taste{2.0, {2.0, 1.5}};
    const auto p = choice_probabilities(taste, line, Assortment::top(2));

    const double d1 = 2.0 - 2.0 * 3.6, d2 = 1.5 - 2.0 * 2.4;
    Rng rng(424242);
    constexpr std::size_t kDraws = 10'000'000;
    std::size_t count[3] = {0, 0, 0};
    auto gumbel = [&] { return -std::log(-std::log(rng.uniform())); };
    for (std::size_t i = 0; i < kDraws; ++i) {
        const double u0 = gumbel(), u1 = d1 + gumbel(), u2 = d2 + gumbel();
        count[u0 >= u1 && u0 >= u2 ? 0 : (u1 >= u2 ? 1 : 2)]++;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double freq = static_cast<double>(count[k]) / kDraws;
        const double se = std::sqrt(p[k] * (1.0 - p[k]) / kDraws);
        EXPECT_NEAR(freq, p[k], 5.0 * se) << "option " << k;
    }
    // Direct formula.
    const double den = 1.0 + std::exp(d1) + std::exp(d2);
    EXPECT_NEAR(p[1], std::exp(d1) / den, 1e-15);
    EXPECT_NEAR(p[2], std::exp(d2) / den, 1e-15);
}

TEST(ProductLine, RejectsUnsortedMargins) {
    EXPECT_THROW(ProductLine::from_vectors(std::vector<double>{1.0, 2.0}, std::vector<double>{1, 1}), InputError);
    EXPECT_THROW(ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{0.0}), InputError);
}

TEST(OptimalFoldable, SingleProductIsDepthOne) {
    const auto line = ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{2.0});
    EXPECT_EQ(optimal_foldable({0.7, {1.0}}, line).depth, 1u);
}

TEST(OptimalFoldable, EqualsBruteForceOnRandomInstances) {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto inst = random_instance(rng, 1 + rng.index(8));
        const auto fold = optimal_foldable(inst.taste, inst.line);
        const double fp = expected_profit(inst.taste, inst.line, fold.assortment());
        const auto bf = brute_force_best(inst.taste, inst.line);
        EXPECT_NEAR(fp, bf.profit, 1e-12) << "trial " << trial;
    }
}

TEST(BruteForce, SingleProduct) {
    const auto line = ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{1.0});
    const ConsumerTaste taste{1.0, {2.0}};
    const auto bf = brute_force_best(taste, line);
    EXPECT_EQ(bf.assortment, Assortment::top(1));
    EXPECT_DOUBLE_EQ(bf.profit, expected_profit(taste, line, Assortment::top(1)));
}

TEST(BruteForce, SymmetricEqualMarginsFullSetIsOptimal) {
    const auto line = ProductLine::from_vectors(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1, 1});
    const ConsumerTaste taste{1.0, {1.0, 1.0, 1.0}};
    const auto bf = brute_force_best(taste, line);
    EXPECT_NEAR(expected_profit(taste, line, Assortment::top(3)), bf.profit, 1e-15);
}

TEST(BruteForce, DominatesEveryFoldableDepth) {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_instance(rng, 1 + rng.index(6));
        const auto bf = brute_force_best(inst.taste, inst.line);
        for (std::size_t d = 1; d <= inst.line.size(); ++d) {
            EXPECT_GE(bf.profit + 1e-15, expected_profit(inst.taste, inst.line, Assortment::top(d)));
        }
    }
}

TEST(Cutoffs, TwoProductClosedForm) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const double pi1 = 0.5 + 3.0 * rng.uniform();
        const double pi2 = pi1 * (0.05 + 0.9 * rng.uniform());
        const double p1 = 0.5 + 3.0 * rng.uniform();
        const double g1 = -1.0 + 4.0 * rng.uniform();
        const auto line = ProductLine::from_vectors(std::vector<double>{pi1, pi2}, std::vector<double>{p1, 1.0});
        const std::vector<double> gamma{g1, 0.3};
        const double closed = (g1 - std::log(pi2 / (pi1 - pi2))) / p1;
        const auto cuts = solve_cutoffs(gamma, line);
        EXPECT_NEAR(cuts.interior()[0], closed, 1e-10);

        // Depth 1 below the cutoff, depth 2 above (brute force agrees).
        for (double alpha : {closed - 0.05, closed + 0.05}) {
            if (alpha <= 0.0) continue;
            const ConsumerTaste taste{alpha, gamma};
            const auto want = alpha < closed ? 1u : 2u;
            EXPECT_EQ(assortment_for_alpha(alpha, cuts).depth, want);
            EXPECT_EQ(optimal_foldable(taste, line).depth, want);
        }
    }
}

TEST(Cutoffs, DivergeAsSecondMarginVanishes) {
    double prev = -1e300;
    for (double pi2 : {1e-1, 1e-3, 1e-6, 1e-9}) {
        const auto line = ProductLine::from_vectors(std::vector<double>{1.0, pi2}, std::vector<double>{1.0, 1.0});
        const double c = solve_cutoffs(std::vector<double>{0.5, 0.0}, line).interior()[0];
        EXPECT_GT(c, prev);
        prev = c;
    }
    EXPECT_GT(prev, 20.0);
    const auto zero = ProductLine::from_vectors(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1.0});
    EXPECT_TRUE(std::isinf(solve_cutoffs(std::vector<double>{0.5, 0.0}, zero).interior()[0]));
}

TEST(Cutoffs, DgpRootsMatchGridScan) {
    // Oracle: dense alpha grid, sign of pi_j - expected profit of the top j-1.
    const auto line = foldmenu::testing::dgp_line();
    const std::vector<double> gamma{2.0, 1.5, 1.2, 1.0, 0.8};
    const auto cuts = solve_cutoffs(gamma, line);
    ASSERT_TRUE(cuts.strictly_increasing());
    for (std::size_t j = 1; j < line.size(); ++j) {
        auto sign = [&](double a) {
            return line.margin(j) - expected_profit({a, gamma}, line, Assortment::top(j)) > 0.0;
        };
        double root = std::nan("");
        const double step = 1e-4;
        for (double a = -5.0; a < 10.0; a += step) {
            if (!sign(a) && sign(a + step)) {
                // refine the bracketed sign change by bisection
                double lo = a, hi = a + step;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (sign(mid) ? hi : lo) = mid;
                }
                root = 0.5 * (lo + hi);
                break;
            }
        }
        ASSERT_FALSE(std::isnan(root)) << "no sign change for j=" << j;
        EXPECT_NEAR(cuts.interior()[j - 1], root, 1e-10);
        // The residual of the defining indifference condition.
        const double c = cuts.interior()[j - 1];
        EXPECT_LT(std::abs(line.margin(j) - expected_profit({c, gamma}, line, Assortment::top(j))), 1e-10);
    }
}

TEST(Cutoffs, ResidualsAndStrictMonotonicityOnRandomInstances) {
    Rng rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto inst = random_instance(rng, 2 + rng.index(7));
        const auto cuts = solve_cutoffs(inst.taste.gamma, inst.line);
        EXPECT_TRUE(cuts.strictly_increasing()) << "trial " << trial;
        for (std::size_t j = 1; j < inst.line.size(); ++j) {
            const double c = cuts.interior()[j - 1];
            const double gap = inst.line.margin(j) - expected_profit({c, inst.taste.gamma}, inst.line, Assortment::top(j));
            EXPECT_LT(std::abs(gap), 1e-10);
        }
    }
}

TEST(Cutoffs, RejectTiedMargins) {
    const auto line = ProductLine::from_vectors(std::vector<double>{2.0, 2.0}, std::vector<double>{1, 1});
    EXPECT_THROW(solve_cutoffs(std::vector<double>{1.0, 1.0}, line), InputError);
}

TEST(AssortmentForAlpha, IntervalEnds) {
    const CutoffVector cuts({0.5, 1.0, 2.0});
    EXPECT_EQ(assortment_for_alpha(0.1, cuts).depth, 1u);
    EXPECT_EQ(assortment_for_alpha(0.5, cuts).depth, 1u);  // closed right end
    EXPECT_EQ(assortment_for_alpha(1.0, cuts).depth, 2u);
    EXPECT_EQ(assortment_for_alpha(1.5, cuts).depth, 3u);
    EXPECT_EQ(assortment_for_alpha(2.0, cuts).depth, 3u);
    EXPECT_EQ(assortment_for_alpha(50.0, cuts).depth, 4u);
}

TEST(AssortmentForAlpha, AgreesWithOptimalFoldable) {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = random_instance(rng, 2 + rng.index(6));
        const auto cuts = solve_cutoffs(inst.taste.gamma, inst.line);
        ASSERT_TRUE(cuts.strictly_increasing());
        const auto d = assortment_for_alpha(inst.taste.alpha, cuts);
        const double pd = expected_profit(inst.taste, inst.line, d.assortment());
        const double best = expected_profit(inst.taste, inst.line, optimal_foldable(inst.taste, inst.line).assortment());
        EXPECT_NEAR(pd, best, 1e-12);
    }
}

#include "foldmenu/competition.hpp"
#include "foldmenu/dgp.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace foldmenu;

namespace {

CompetitionInstance random_market(Rng& rng, std::size_t firms, std::size_t max_products) {
    CompetitionInstance inst;
    inst.alpha = 0.1 + 1.5 * rng.uniform();
    for (std::size_t n = 0; n < firms; ++n) {
        const auto mono = foldmenu::testing::random_instance(rng, 1 + rng.index(max_products));
        std::vector<Product> products = mono.line.products();
        for (auto& p : products) p.id = "f" + std::to_string(n) + "p" + p.id;
        inst.firms.push_back({"f" + std::to_string(n), ProductLine(std::move(products))});
        inst.gamma.push_back(mono.taste.gamma);
    }
    return inst;
}

// Oracle: closed-form logit profit of firm n offering `mask`, rivals at their top depths.
double logit_profit(const CompetitionInstance& inst, std::size_t n, std::uint64_t mask, const LatticePoint& p) {
    double den = 1.0, num = 0.0;
    for (std::size_t m = 0; m < inst.firms.size(); ++m) {
        const auto& line = inst.firms[m].owned;
        for (std::size_t j = 0; j < line.size(); ++j) {
            const bool offered = m == n ? ((mask >> j) & 1U) != 0 : j < p.depths[m];
            if (!offered) continue;
            const double w = std::exp(inst.gamma[m][j] - inst.alpha * line.price(j));
            den += w;
            if (m == n) num += line.margin(j) * w;
        }
    }
    return num / den;
}

// Oracle Nash check over every own subset, from the closed form.
bool brute_force_nash(const CompetitionInstance& inst, const LatticePoint& p) {
    for (std::size_t n = 0; n < inst.firms.size(); ++n) {
        const double current = logit_profit(inst, n, foldable_mask(p.depths[n]), p);
        const std::uint64_t subsets = std::uint64_t{1} << inst.firms[n].owned.size();
        for (std::uint64_t mask = 1; mask < subsets; ++mask) {
            if (logit_profit(inst, n, mask, p) > current + 1e-12 * (1.0 + std::abs(current))) return false;
        }
    }
    return true;
}

}  // namespace

TEST(ConsumerPopulation, RepresentativeProfitMatchesClosedForm) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = random_market(rng, 1 + rng.index(3), 5);
        const auto pop = ConsumerPopulation::representative(inst);
        LatticePoint p;
        for (const auto& f : inst.firms) p.depths.push_back(1 + rng.index(f.owned.size()));
        for (std::size_t n = 0; n < inst.firms.size(); ++n) {
            const auto all = pop.subset_profits(n, p);
            for (std::uint64_t mask = 0; mask < all.size(); ++mask) {
                const double want = logit_profit(inst, n, mask, p);
                EXPECT_NEAR(pop.profit(n, mask, p), want, 1e-12 * (1.0 + want));
                EXPECT_NEAR(all[mask], want, 1e-12 * (1.0 + want));
            }
        }
    }
}

TEST(BestResponse, SingleFirmIsMonopolyFoldable) {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const auto mono = foldmenu::testing::random_instance(rng, 1 + rng.index(6));
        const CompetitionInstance inst{{{"solo", mono.line}}, {mono.taste.gamma}, mono.taste.alpha};
        const auto pop = ConsumerPopulation::representative(inst);
        const auto br = best_response(pop, 0, LatticePoint{{1}});
        const auto fold = optimal_foldable(mono.taste, mono.line);
        EXPECT_NEAR(expected_profit(mono.taste, mono.line, Assortment::top(br)),
                    expected_profit(mono.taste, mono.line, fold.assortment()), 1e-12);
        EXPECT_EQ(find_equilibrium(inst).point.depths[0], br);
    }
}

TEST(BestResponse, MaximizesOverFoldableDepths) {
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_market(rng, 2 + rng.index(2), 5);
        const auto pop = ConsumerPopulation::representative(inst);
        LatticePoint p;
        for (const auto& f : inst.firms) p.depths.push_back(1 + rng.index(f.owned.size()));
        for (std::size_t n = 0; n < inst.firms.size(); ++n) {
            const auto br = best_response(pop, n, p);
            const double got = logit_profit(inst, n, foldable_mask(br), p);
            for (std::size_t k = 1; k <= inst.firms[n].owned.size(); ++k) {
                EXPECT_GE(got + 1e-12, logit_profit(inst, n, foldable_mask(k), p));
            }
        }
    }
}

TEST(Equilibrium, NashAgainstAllSubsetsMonotoneAndSmallest) {
    Rng rng(2026);
    int checked = 0;
    for (int trial = 0; trial < 250; ++trial) {
        const auto inst = random_market(rng, 1 + rng.index(3), 5);
        const auto pop = ConsumerPopulation::representative(inst);
        const auto eq = find_equilibrium(pop);
        EXPECT_TRUE(eq.monotone) << "trial " << trial;
        for (std::size_t r = 1; r < eq.trajectory.size(); ++r) {
            EXPECT_TRUE(eq.trajectory[r - 1].leq(eq.trajectory[r]));
        }
        EXPECT_EQ(eq.trajectory.back(), eq.point);
        const auto rep = is_nash(pop, eq.point, true);
        EXPECT_TRUE(rep.is_nash) << "trial " << trial;
        EXPECT_TRUE(brute_force_nash(inst, eq.point)) << "trial " << trial;
        const auto all = nash_points(pop);
        ASSERT_FALSE(all.empty());
        for (const auto& q : all) EXPECT_TRUE(eq.point.leq(q)) << "trial " << trial;
        ++checked;
    }
    EXPECT_GE(checked, 200);
}

TEST(Equilibrium, SymmetricSingleProductFirmsBothOffer) {
    const auto line_a = ProductLine({{"a", 1.0, 1.0}});
    const auto line_b = ProductLine({{"b", 1.0, 1.0}});
    const CompetitionInstance inst{{{"A", line_a}, {"B", line_b}}, {{0.5}, {0.5}}, 1.0};
    const auto eq = find_equilibrium(inst);
    EXPECT_EQ(eq.point.depths, (std::vector<std::size_t>{1, 1}));
    const auto pop = ConsumerPopulation::representative(inst);
    EXPECT_NEAR(pop.profit(0, 1, eq.point), pop.profit(1, 1, eq.point), 1e-15);
}

TEST(IsNash, NamesTheProfitableDeviation) {
    // A monopolist whose second product is worth adding, held at depth 1.
    const auto line = ProductLine({{"hi", 2.0, 3.0}, {"lo", 1.9, 1.0}});
    const CompetitionInstance inst{{{"solo", line}}, {{0.0, 1.0}}, 1.0};
    const auto pop = ConsumerPopulation::representative(inst);
    ASSERT_GT(logit_profit(inst, 0, 3, {{1}}), logit_profit(inst, 0, 1, {{1}}));
    const auto rep = is_nash(pop, LatticePoint{{1}});
    EXPECT_FALSE(rep.is_nash);
    ASSERT_EQ(rep.deviations.size(), 1u);
    EXPECT_EQ(rep.deviations[0].firm, 0u);
    EXPECT_GT(rep.deviations[0].gain, 0.0);
    EXPECT_TRUE(rep.deviations[0].foldable);
}

TEST(CompetitionInstance, RejectsSharedProducts) {
    const auto line = ProductLine({{"x", 1.0, 1.0}});
    const CompetitionInstance inst{{{"A", line}, {"B", line}}, {{0.0}, {0.0}}, 1.0};
    EXPECT_THROW(inst.validate(), InputError);
    const CompetitionInstance dup{{{"A", line}, {"A", ProductLine({{"y", 1.0, 1.0}})}}, {{0.0}, {0.0}}, 1.0};
    EXPECT_THROW(dup.validate(), InputError);
    const CompetitionInstance short_gamma{{{"A", line}}, {}, 1.0};
    EXPECT_THROW(find_equilibrium(short_gamma), InputError);
}

TEST(RandomCoefLoss, ZeroDispersionHasNoLoss) {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = random_market(rng, 1 + rng.index(3), 5);
        const auto r = foldable_loss_random_coef(inst, {200, 0.0, 7});
        for (std::size_t n = 0; n < inst.firms.size(); ++n) {
            EXPECT_EQ(r.loss[n], 0.0) << "trial " << trial;
        }
    }
}

TEST(RandomCoefLoss, LossIsBoundedAndOverallBestDominates) {
    Rng rng(43);
    for (int trial = 0; trial < 60; ++trial) {
        const auto inst = random_market(rng, 1 + rng.index(2), 5);
        for (double a : {0.5, 2.0, 5.0}) {
            const auto r = foldable_loss_random_coef(inst, {300, a, 9});
            for (std::size_t n = 0; n < inst.firms.size(); ++n) {
                EXPECT_GE(r.loss[n], 0.0);
                EXPECT_LE(r.loss[n], 1.0);
                EXPECT_GE(r.overall_best[n], r.foldable_best[n]);
            }
        }
    }
}

TEST(RandomCoefLoss, HeterogeneityCanBreakFoldability) {
    // Two consumer types wanting opposite ends of the line: the middle
    // product only dilutes, so the best menu skips it.
    Rng rng(5);
    bool found = false;
    for (int trial = 0; trial < 200 && !found; ++trial) {
        const auto inst = random_market(rng, 1, 5);
        const auto r = foldable_loss_random_coef(inst, {500, 5.0, 13});
        found = r.loss[0] > 0.0;
    }
    EXPECT_TRUE(found);
}

TEST(RandomCoefLoss, DeterministicGivenSeed) {
    Rng rng(8);
    const auto inst = random_market(rng, 2, 4);
    const auto a = foldable_loss_random_coef(inst, {400, 1.0, 3});
    const auto b = foldable_loss_random_coef(inst, {400, 1.0, 3});
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.equilibrium.point, b.equilibrium.point);
}

TEST(PointOfSaleSweep, RowsCoverGridAndZeroDispersionIsLossless) {
    DgpConfig cfg;
    cfg.n_markets = 3;
    const auto sp = generate_panel(cfg);
    const FittedModel fm{cfg.theta_true, sp.truth.gamma, DrawSet::make(1, 10, 10), 1};
    PointOfSaleConfig pos;
    pos.dispersions = {0.0, 1.0, 5.0};
    pos.draw_counts = {100, 200};
    pos.points_per_market = 4;
    const auto rows = point_of_sale_loss_sweep(fm, sp.panel, pos);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.points, 12u);
        EXPECT_GE(r.loss, 0.0);
        EXPECT_LE(r.loss, 1.0);
        EXPECT_LE(r.loss, r.max_loss + 1e-15);
        if (r.dispersion == 0.0) {
            EXPECT_EQ(r.loss, 0.0);
            EXPECT_EQ(r.max_loss, 0.0);
            EXPECT_EQ(r.share_foldable_optimal, 1.0);
        }
    }
    pos.points_per_market = 0;
    EXPECT_THROW(point_of_sale_loss_sweep(fm, sp.panel, pos), InputError);
}

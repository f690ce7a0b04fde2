#include "foldmenu/dgp.hpp"
#include "foldmenu/estimator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace foldmenu;

namespace {

/// Seed of the draw set the generator used for `dgp`, so the estimator can
/// reuse identical draws.
std::uint64_t dgp_draw_seed(const DgpConfig& dgp) {
    Rng r(dgp.seed);
    return r.derive_seed();
}

SyntheticPanel small_panel(std::size_t markets, std::uint64_t seed, double shock = 0.3) {
    DgpConfig cfg;
    cfg.n_markets = markets;
    cfg.seed = seed;
    cfg.shock_scale = shock;
    return generate_panel(cfg);
}

double sup_log_residual(const Market& m, std::span<const double> gamma, double theta, const DrawSet& draws,
                        DemandModel model) {
    const auto s = model_shares(model, gamma, m, theta, draws);
    double r = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        r = std::max(r, std::abs(std::log(m.observed_shares[j]) - std::log(s.inside[j])));
    }
    return r;
}

}  // namespace

TEST(InvertShares, RoundTripRecoversGamma) {
    auto sp = small_panel(25, 3);
    EstimationConfig cfg;
    const auto draws = cfg.draws();
    // Observed shares simulated with the estimator's own draws.
    for (std::size_t t = 0; t < sp.panel.size(); ++t) {
        auto& m = sp.panel.markets[t];
        m.observed_shares = model_shares(DemandModel::kFoldable, sp.truth.gamma[t], m, 2.0, draws).inside;
    }
    const auto inv = invert_shares(sp.panel, 2.0, draws, cfg);
    for (std::size_t t = 0; t < sp.panel.size(); ++t) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(inv.gamma[t][j], sp.truth.gamma[t][j], 1e-5);
        EXPECT_LT(sup_log_residual(sp.panel.markets[t], inv.gamma[t], 2.0, draws, DemandModel::kFoldable),
                  10.0 * cfg.contraction_tol);
        EXPECT_LE(inv.last_step[t], cfg.contraction_tol);
    }
}

TEST(InvertShares, RoundTripStandardLogit) {
    auto sp = small_panel(10, 4);
    EstimationConfig cfg;
    cfg.contraction_tol = 1e-9;  // this map contracts slowly; the step is not the error
    const auto draws = cfg.draws();
    for (std::size_t t = 0; t < sp.panel.size(); ++t) {
        auto& m = sp.panel.markets[t];
        m.observed_shares = model_shares(DemandModel::kStandardLogit, sp.truth.gamma[t], m, 0.7, draws).inside;
    }
    const auto inv = invert_shares(sp.panel, 0.7, draws, cfg, DemandModel::kStandardLogit);
    for (std::size_t t = 0; t < sp.panel.size(); ++t) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(inv.gamma[t][j], sp.truth.gamma[t][j], 1e-5);
    }
}

TEST(InvertShares, SingleProductMatchesBisection) {
    // J = 1: no cutoffs, the whole alpha distribution faces the product.
    Market m;
    m.id = "solo";
    m.line = ProductLine::from_vectors(std::vector<double>{1.0}, std::vector<double>{2.0});
    m.income_log_mean = 0.4;
    m.income_log_sd = 0.5;
    m.observed_shares = {0.23};
    Panel panel{{m}};
    EstimationConfig cfg;
    cfg.contraction_tol = 1e-12;
    const auto draws = cfg.draws();
    const double theta = 1.3;
    const auto inv = invert_shares(panel, theta, draws, cfg);

    // Oracle: 1-D bisection on the simulated logit share.
    const TasteDistribution dist = m.taste(theta);
    auto share = [&](double g) {
        double s = 0.0;
        for (double u : draws.uniforms) {
            const double v = g - dist.alpha_of(normal::quantile(u)) * 2.0;
            s += 1.0 / (1.0 + std::exp(-v));
        }
        return s / static_cast<double>(draws.uniforms.size());
    };
    double lo = -20.0, hi = 20.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (share(mid) < 0.23 ? lo : hi) = mid;
    }
    EXPECT_NEAR(inv.gamma[0][0], 0.5 * (lo + hi), 1e-9);
}

TEST(InvertShares, ZeroShareIsRejected) {
    auto sp = small_panel(3, 1);
    sp.panel.markets[1].observed_shares[2] = 0.0;
    EstimationConfig cfg;
    EXPECT_THROW(invert_shares(sp.panel, 2.0, cfg.draws(), cfg), InputError);
}

TEST(InvertShares, FailureNamesMarketsAndTheta) {
    const auto sp = small_panel(30, 1);
    EstimationConfig cfg;
    try {
        invert_shares(sp.panel, 0.3, cfg.draws(), cfg);
        FAIL() << "expected the contraction to fail at a small theta";
    } catch (const InversionFailure& e) {
        EXPECT_EQ(e.theta(), 0.3);
        EXPECT_FALSE(e.markets().empty());
        EXPECT_NE(std::string(e.what()).find(e.markets().front()), std::string::npos);
    }
}

TEST(InvertShares, ThreadCountDoesNotChangeResults) {
    const auto sp = small_panel(12, 5);
    EstimationConfig one, four;
    four.threads = 4;
    const auto a = invert_shares(sp.panel, 2.0, one.draws(), one);
    const auto b = invert_shares(sp.panel, 2.0, four.draws(), four);
    EXPECT_EQ(a.gamma, b.gamma);
}

TEST(InvertShares, WarmStartReachesSameFixedPoint) {
    const auto sp = small_panel(12, 6);
    EstimationConfig cfg;
    cfg.contraction_tol = 1e-10;
    const auto draws = cfg.draws();
    const auto near = invert_shares(sp.panel, 2.05, draws, cfg);
    const auto cold = invert_shares(sp.panel, 2.0, draws, cfg);
    const auto warm = invert_shares(sp.panel, 2.0, draws, cfg, DemandModel::kFoldable, &near.gamma);
    for (std::size_t t = 0; t < cold.gamma.size(); ++t) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(warm.gamma[t][j], cold.gamma[t][j], 1e-8);
    }
}

TEST(Gmm, DummyResidualsAreOrthogonalToDummies) {
    auto sp = small_panel(30, 7);
    for (std::size_t t = 0; t < sp.panel.size(); ++t) sp.panel.markets[t].group = t % 3 == 0 ? "a" : "b";
    for (auto d : {DummyStructure::kTier, DummyStructure::kTierGroup}) {
        EstimationConfig cfg;
        cfg.dummy_structure = d;
        const auto ev = evaluate_gmm(2.0, sp.panel, cfg, cfg.draws());
        std::map<std::pair<std::string, std::string>, double> sum;
        double moment = 0.0;
        for (std::size_t t = 0; t < sp.panel.size(); ++t) {
            const auto& m = sp.panel.markets[t];
            for (std::size_t j = 0; j < m.size(); ++j) {
                const auto key = detail::cell_of(m, j, d);
                sum[key] += ev.delta_xi[t][j];
                EXPECT_NEAR(ev.gamma[t][j] - ev.delta_xi[t][j],
                            [&] {
                                for (const auto& x : ev.xi)
                                    if (x.tier == key.first && x.group == key.second) return x.value;
                                return std::nan("");
                            }(),
                            1e-12);
                moment += ev.delta_xi[t][j] * m.line.price(j);
            }
        }
        for (const auto& [key, s] : sum) EXPECT_NEAR(s, 0.0, 1e-10);
        EXPECT_EQ(ev.xi.size(), d == DummyStructure::kTier ? 5u : 10u);
        EXPECT_NEAR(ev.moment, moment, 1e-10);
        EXPECT_DOUBLE_EQ(ev.objective, ev.moment * ev.moment);
    }
}

TEST(Gmm, NoiselessPanelHasZeroObjectiveAtTruth) {
    DgpConfig dgp;
    dgp.n_markets = 40;
    dgp.shock_scale = 0.0;
    const auto sp = generate_panel(dgp);
    EstimationConfig cfg;
    cfg.seed = dgp_draw_seed(dgp);
    cfg.contraction_tol = 1e-10;
    const auto draws = cfg.draws();
    const double at_truth = gmm_objective(2.0, sp.panel, cfg, draws);
    EXPECT_LT(at_truth, 1e-12);
    EXPECT_GT(gmm_objective(1.6, sp.panel, cfg, draws), 1e3 * at_truth + 1e-6);
    EXPECT_GT(gmm_objective(3.0, sp.panel, cfg, draws), 1e3 * at_truth + 1e-6);

    // Independent draws: zero up to simulation noise, still far below the
    // off-truth values.
    EstimationConfig other;
    other.contraction_tol = 1e-10;
    const auto od = other.draws();
    EXPECT_LT(gmm_objective(2.0, sp.panel, other, od), 0.05 * gmm_objective(3.0, sp.panel, other, od));
}

TEST(Gmm, FiniteDifferencesAreStable) {
    const auto sp = small_panel(40, 8);
    EstimationConfig cfg;
    cfg.contraction_tol = 1e-10;
    const auto draws = cfg.draws();
    auto f = [&](double th) { return gmm_objective(th, sp.panel, cfg, draws); };
    for (double th : {2.0, 3.0}) {
        const double d4 = (f(th + 1e-4) - f(th - 1e-4)) / 2e-4;
        const double d5 = (f(th + 1e-5) - f(th - 1e-5)) / 2e-5;
        EXPECT_NEAR(d4 / d5, 1.0, 5e-4) << "theta " << th << ": " << d4 << " vs " << d5;
    }
}

TEST(Estimate, NoiselessPanelRecoversTheta) {
    DgpConfig dgp;
    dgp.n_markets = 60;
    dgp.shock_scale = 0.0;
    const auto sp = generate_panel(dgp);
    EstimationConfig cfg;
    cfg.seed = dgp_draw_seed(dgp);
    const auto r = estimate(sp.panel, cfg);
    EXPECT_NEAR(r.theta_hat, 2.0, 1e-2);
    ASSERT_EQ(r.xi_hat.size(), 5u);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(r.xi_hat[j].value, dgp.xi[j], 1e-2);
    EXPECT_FALSE(r.at_bracket_edge);
    EXPECT_FALSE(r.trace.empty());
    EXPECT_GT(r.objective_evaluations, cfg.grid_points);
}

TEST(Estimate, StandardLogitIsBiasedDownward) {
    const auto sp = small_panel(40, 9);
    EstimationConfig cfg;
    const auto fold = estimate(sp.panel, cfg);
    const auto std_logit = estimate_standard_logit(sp.panel, cfg);
    EXPECT_EQ(std_logit.model, DemandModel::kStandardLogit);
    EXPECT_LT(std_logit.theta_hat, fold.theta_hat);
    EXPECT_LT(std_logit.theta_hat, 1.0);
    EXPECT_GT(fold.theta_hat, 1.4);
    EXPECT_LT(fold.theta_hat, 2.8);
}

TEST(Estimate, RejectsBadConfig) {
    const auto sp = small_panel(3, 1);
    EstimationConfig cfg;
    cfg.theta_lo = 3.0;
    cfg.theta_hi = 2.0;
    EXPECT_THROW(estimate(sp.panel, cfg), InputError);
}

TEST(Estimate, AllGridPointsFailingIsNumericalError) {
    const auto sp = small_panel(60, 1);
    EstimationConfig cfg;
    cfg.theta_lo = 0.2;
    cfg.theta_hi = 0.4;
    cfg.grid_points = 3;
    EXPECT_THROW(estimate(sp.panel, cfg), NumericalError);
}

TEST(Bootstrap, ZeroRepsIsAnError) {
    const auto sp = small_panel(3, 1);
    EstimationConfig cfg;
    EXPECT_THROW(bootstrap_se(sp.panel, cfg), InputError);
}

TEST(Bootstrap, IdenticalMarketsGiveZeroSpread) {
    const auto sp = small_panel(1, 10);
    Panel dup;
    for (int k = 0; k < 8; ++k) {
        auto m = sp.panel.markets[0];
        m.id = "m" + std::to_string(k);
        dup.markets.push_back(m);
    }
    EstimationConfig cfg;
    cfg.bootstrap_reps = 3;
    cfg.grid_points = 4;
    const auto b = bootstrap_se(dup, cfg);
    EXPECT_EQ(b.reps, 3u);
    EXPECT_EQ(b.theta_draws.size() + b.failed, 3u);
    EXPECT_NEAR(b.theta_se, 0.0, 1e-12);
    for (const auto& x : b.xi_se) EXPECT_NEAR(x.value, 0.0, 1e-12);
}

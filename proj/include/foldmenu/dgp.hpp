#pragma once

// Synthetic panels for Monte Carlo work, lognormal income fits from
// quintile means, and after-tax wholesale margins from pricing rules.

#include "foldmenu/panel.hpp"
#include "foldmenu/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace foldmenu {

struct DgpConfig {
    std::size_t n_markets = 186;
    std::vector<double> xi{2.0, 1.5, 1.2, 1.0, 0.8};
    std::vector<double> nominal_prices{3.6, 2.4, 1.6, 1.2, 1.0};
    std::vector<double> nominal_margins{2.5, 1.8, 1.2, 1.0, 0.8};
    double theta_true = 2.0;
    double shock_scale = 0.3;
    std::uint64_t seed = 1;
    std::size_t n_draws = kDefaultSimDraws;  // uniforms used to simulate observed shares

    void validate() const {
        const auto n = xi.size();
        detail::require(n > 0, "dgp: need at least one tier");
        detail::require(nominal_prices.size() == n && nominal_margins.size() == n,
                        "dgp: xi, prices and margins must have the same length");
        detail::require(n_markets > 0, "dgp: need at least one market");
        detail::require(theta_true > 0.0, "dgp: theta must be > 0");
        detail::require(shock_scale >= 0.0, "dgp: shock scale must be >= 0");
        detail::require(n_draws > 0, "dgp: need at least one simulation draw");
    }
};

struct DgpTruth {
    double theta = 0.0;
    std::vector<double> xi;
    std::vector<std::vector<double>> gamma;  // per market, line order
};

struct SyntheticPanel {
    Panel panel;
    DgpTruth truth;
};

/// Draws CPI, income moments and demand shocks per market, then computes
/// observed shares with the endogenous-menu share simulator at the true
/// theta. Per market the stream is consumed as e1, e2, e3, rho_1..rho_J.
inline SyntheticPanel generate_panel(const DgpConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.xi.size();
    Rng rng(cfg.seed);
    const DrawSet draws = DrawSet::make(rng.derive_seed(), cfg.n_draws, 1);

    SyntheticPanel out;
    out.truth.theta = cfg.theta_true;
    out.truth.xi = cfg.xi;
    out.panel.markets.reserve(cfg.n_markets);
    out.truth.gamma.reserve(cfg.n_markets);

    for (std::size_t t = 0; t < cfg.n_markets; ++t) {
        const double e1 = rng.uniform();
        const double e2 = rng.uniform();
        const double e3 = rng.uniform();
        Market m;
        m.id = std::to_string(t + 1);
        m.cpi = 1.0 + 0.2 * e1;
        m.income_log_mean = 1.0 + 0.1 * e2;
        m.income_log_sd = 0.5 + 0.1 * e3;

        std::vector<double> gamma(n);
        for (std::size_t j = 0; j < n; ++j) gamma[j] = cfg.xi[j] + cfg.shock_scale * rng.normal();

        std::vector<Product> products;
        for (std::size_t j = 0; j < n; ++j) {
            products.push_back({std::to_string(j + 1), cfg.nominal_margins[j] / m.cpi,
                                cfg.nominal_prices[j] / m.cpi});
        }
        m.line = ProductLine(std::move(products));
        m.observed_shares = predicted_shares(gamma, m.line, m.taste(cfg.theta_true), draws).inside;
        out.panel.markets.push_back(std::move(m));
        out.truth.gamma.push_back(std::move(gamma));
    }
    return out;
}

struct LognormalFit {
    double mu = 0.0;
    double sigma = 0.0;
    double objective = 0.0;
    bool degenerate = false;  // sigma pinned at the lower edge of its range
};

inline constexpr std::uint64_t kQuintileFitSeed = 20240917;

namespace detail {

template <typename F>
double golden_section(F&& f, double lo, double hi, double tol) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo;
    double b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    return fc <= fd ? c : d;
}

}  // namespace detail

/// Fits (mu, sigma) of log income so that quintile means of a fixed seeded
/// lognormal sample match the observed ones in least squares. The search is
/// nested golden section: sigma outside, mu inside.
inline LognormalFit fit_lognormal_from_quintiles(std::span<const double> quintile_means,
                                                 std::size_t n_sim = 10000,
                                                 std::uint64_t seed = kQuintileFitSeed) {
    detail::require(quintile_means.size() == 5, "quintile fit needs exactly 5 quintile means");
    detail::require(n_sim >= 5, "quintile fit needs at least 5 simulated individuals");
    for (std::size_t q = 0; q < 5; ++q) {
        detail::require(quintile_means[q] > 0.0, "quintile means must be positive");
        if (q > 0) {
            detail::require(quintile_means[q] >= quintile_means[q - 1],
                            "quintile means must be non-decreasing");
        }
    }

    Rng rng(seed);
    auto z = rng.normals(n_sim);
    std::sort(z.begin(), z.end());
    std::array<std::size_t, 6> edge{};
    for (std::size_t q = 0; q <= 5; ++q) edge[q] = q * n_sim / 5;

    constexpr double kMuLo = -2.0, kMuHi = 5.0;
    constexpr double kSigmaLo = 1e-6, kSigmaHi = 3.0;
    constexpr double kTol = 1e-7;

    // Quintile means of exp(sigma z); exp(mu) scales them.
    auto unit_means = [&](double sigma) {
        std::array<double, 5> m{};
        for (std::size_t q = 0; q < 5; ++q) {
            double s = 0.0;
            for (std::size_t i = edge[q]; i < edge[q + 1]; ++i) s += std::exp(sigma * z[i]);
            m[q] = s / static_cast<double>(edge[q + 1] - edge[q]);
        }
        return m;
    };
    auto sse = [&](double mu, const std::array<double, 5>& m) {
        double s = 0.0;
        const double scale = std::exp(mu);
        for (std::size_t q = 0; q < 5; ++q) {
            const double r = scale * m[q] - quintile_means[q];
            s += r * r;
        }
        return s;
    };
    auto best_mu = [&](const std::array<double, 5>& m) {
        return detail::golden_section([&](double mu) { return sse(mu, m); }, kMuLo, kMuHi, kTol);
    };
    auto profile = [&](double sigma) {
        const auto m = unit_means(sigma);
        return sse(best_mu(m), m);
    };

    LognormalFit fit;
    fit.sigma = detail::golden_section(profile, kSigmaLo, kSigmaHi, kTol);
    const auto m = unit_means(fit.sigma);
    fit.mu = best_mu(m);
    fit.objective = sse(fit.mu, m);
    fit.degenerate = fit.sigma < 1e-3;
    return fit;
}

/// Pricing-chain inputs for one tier. Retail price is
/// A (1 + a)(1 + b)(1 + vat) with A the allocation price.
struct TaxParams {
    double wholesale_price = 1.0;                   // P_w
    double allocation_wholesale_margin_rate = 0.0;  // a
    double wholesale_retail_margin_rate = 0.0;      // b
    double vat_rate = 0.17;
    double advalorem_wholesale_rate = 0.0;          // t_a
    double specific_wholesale_tax = 0.0;            // t_s, currency per unit

    void validate() const {
        auto rate = [](double r) { return r >= 0.0 && r < 1.0; };
        detail::require(wholesale_price > 0.0, "tax params: wholesale price must be > 0");
        detail::require(rate(allocation_wholesale_margin_rate) && rate(wholesale_retail_margin_rate) &&
                            rate(vat_rate) && rate(advalorem_wholesale_rate),
                        "tax params: rates must lie in [0, 1)");
        detail::require(specific_wholesale_tax >= 0.0, "tax params: specific tax must be >= 0");
    }

    [[nodiscard]] double allocation_price() const {
        return wholesale_price / ((1.0 + allocation_wholesale_margin_rate) * (1.0 + vat_rate));
    }

    [[nodiscard]] double retail_price() const {
        return allocation_price() * (1.0 + allocation_wholesale_margin_rate) *
               (1.0 + wholesale_retail_margin_rate) * (1.0 + vat_rate);
    }
};

/// After-tax wholesale margin A a - A t_a - t_s.
inline double wholesale_margin(const TaxParams& tax) {
    tax.validate();
    const double a = tax.allocation_price();
    return a * tax.allocation_wholesale_margin_rate - a * tax.advalorem_wholesale_rate -
           tax.specific_wholesale_tax;
}

}  // namespace foldmenu

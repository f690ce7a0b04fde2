#pragma once

// Post-estimation counterfactuals. Every scenario holds the fitted mean
// utilities fixed and re-evaluates shares with the same draw set as its
// baseline, so differences carry no fresh simulation noise.

#include "foldmenu/estimator.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace foldmenu {

/// How shares respond to a price change.
enum class ResponseMode {
    kAdjusted,        // cutoffs re-solved at the new prices
    kFixedAssortment, // cutoffs frozen at their baseline values
    kStandardLogit,   // everyone sees the full line
};

inline std::string to_string(ResponseMode m) {
    switch (m) {
        case ResponseMode::kAdjusted: return "adjusted";
        case ResponseMode::kFixedAssortment: return "fixed";
        case ResponseMode::kStandardLogit: return "standard_logit";
    }
    return "?";
}

enum class MarketWeights {
    kSales,  // baseline total inside sales of each market
    kEqual,
};

/// The pieces of a fitted model the counterfactuals need.
struct FittedModel {
    double theta = 0.0;
    std::vector<std::vector<double>> gamma;  // per market, line order
    DrawSet draws;
    std::size_t threads = 1;

    static FittedModel from(const EstimationResult& r, const DrawSet& draws, std::size_t threads = 1) {
        return {r.theta_hat, r.gamma, draws, threads};
    }

    void check(const Panel& panel) const {
        detail::require(theta > 0.0, "fitted model: theta must be > 0");
        detail::require(gamma.size() == panel.size(), "fitted model: utilities do not match the panel");
        for (std::size_t t = 0; t < panel.size(); ++t) {
            detail::require(gamma[t].size() == panel.markets[t].size(),
                            "fitted model: utilities of market '" + panel.markets[t].id + "' have wrong length");
        }
    }
};

namespace detail {

inline MarketShares scenario_shares(const FittedModel& fm, const Market& m, std::size_t t,
                                    const ProductLine& line, ResponseMode mode,
                                    const CutoffVector* frozen) {
    const auto& g = fm.gamma[t];
    const auto dist = m.taste(fm.theta);
    switch (mode) {
        case ResponseMode::kAdjusted: return predicted_shares(g, line, dist, fm.draws);
        case ResponseMode::kFixedAssortment: return shares_given_cutoffs(g, line, dist, fm.draws, *frozen);
        case ResponseMode::kStandardLogit: return standard_logit_shares(g, line, dist, fm.draws.normals);
    }
    return {};
}

/// Position of each of the market's products in the panel tier order.
inline std::vector<std::size_t> tier_slots(const Market& m, const std::vector<std::string>& tiers) {
    std::vector<std::size_t> out(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
        out[j] = static_cast<std::size_t>(std::find(tiers.begin(), tiers.end(), m.line[j].id) - tiers.begin());
    }
    return out;
}

inline double percent_change(double base, double next) {
    return base == 0.0 ? 0.0 : 100.0 * (next - base) / base;
}

}  // namespace detail

/// sum w_t x_t / sum w_t.
inline double weighted_mean(std::span<const double> values, std::span<const double> weights) {
    detail::require(values.size() == weights.size(), "weighted_mean: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < values.size(); ++t) {
        num += weights[t] * values[t];
        den += weights[t];
    }
    detail::require(den > 0.0, "weighted_mean: weights sum to zero");
    return num / den;
}

/// entries[j][k]: sales-weighted mean % change in tier k sales when the
/// price of tier j rises by `pct` percent.
struct ElasticityMatrix {
    ResponseMode mode = ResponseMode::kAdjusted;
    std::vector<std::string> tiers;
    std::vector<std::vector<double>> entries;
    std::vector<double> weights;  // per market
};

inline ElasticityMatrix elasticities(const FittedModel& fm, const Panel& panel, ResponseMode mode,
                                     double pct = 1.0, MarketWeights weighting = MarketWeights::kSales) {
    panel.validate();
    fm.check(panel);
    const auto tiers = panel.tiers();
    const std::size_t n = tiers.size();
    const std::size_t T = panel.size();

    // change[t][j][k]
    std::vector<std::vector<std::vector<double>>> change(T);
    std::vector<double> weights(T, 1.0);
    parallel_for(T, fm.threads, [&](std::size_t t) {
        const auto& m = panel.markets[t];
        std::optional<CutoffVector> cuts;
        if (mode == ResponseMode::kFixedAssortment) cuts = solve_cutoffs(fm.gamma[t], m.line);
        const auto base = detail::scenario_shares(fm, m, t, m.line, mode, cuts ? &*cuts : nullptr);
        if (weighting == MarketWeights::kSales) {
            weights[t] = 0.0;
            for (double s : base.inside) weights[t] += s * m.market_size;
        }
        const auto slot = detail::tier_slots(m, tiers);
        change[t].assign(n, std::vector<double>(n, 0.0));
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> factor(n, 1.0);
            factor[j] = 1.0 + pct / 100.0;
            const auto line = m.line.with_price_factors(factor);
            const auto next = detail::scenario_shares(fm, m, t, line, mode, cuts ? &*cuts : nullptr);
            for (std::size_t k = 0; k < n; ++k) {
                change[t][slot[j]][slot[k]] = detail::percent_change(base.inside[k], next.inside[k]);
            }
        }
    });

    ElasticityMatrix out;
    out.mode = mode;
    out.tiers = tiers;
    out.weights = weights;
    out.entries.assign(n, std::vector<double>(n, 0.0));
    std::vector<double> col(T);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t t = 0; t < T; ++t) col[t] = change[t][j][k];
            out.entries[j][k] = weighted_mean(col, weights);
        }
    }
    return out;
}

/// Adjusted = fixed + adjustment, with the adjustment defined as the
/// difference, so `closure` is zero by construction.
struct ElasticityDecomposition {
    ElasticityMatrix adjusted;
    ElasticityMatrix fixed;
    std::vector<std::vector<double>> adjustment;
    std::vector<std::vector<double>> closure;

    [[nodiscard]] double max_abs_closure() const {
        double m = 0.0;
        for (const auto& row : closure) {
            for (double v : row) m = std::max(m, std::abs(v));
        }
        return m;
    }
};

inline ElasticityDecomposition decompose_elasticities(const FittedModel& fm, const Panel& panel,
                                                      double pct = 1.0) {
    ElasticityDecomposition d;
    d.adjusted = elasticities(fm, panel, ResponseMode::kAdjusted, pct);
    d.fixed = elasticities(fm, panel, ResponseMode::kFixedAssortment, pct);
    const std::size_t n = d.adjusted.entries.size();
    d.adjustment.assign(n, std::vector<double>(n));
    d.closure.assign(n, std::vector<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
            d.adjustment[j][k] = d.adjusted.entries[j][k] - d.fixed.entries[j][k];
            d.closure[j][k] = d.adjusted.entries[j][k] - d.fixed.entries[j][k] - d.adjustment[j][k];
        }
    }
    return d;
}

/// Per-tier totals across markets for one scenario against its baseline.
struct CounterfactualReport {
    std::string scenario;
    std::vector<std::string> tiers;
    std::vector<double> sales_base;
    std::vector<double> sales_new;
    std::vector<double> sales_change_pct;
    double total_sales_base = 0.0;
    double total_sales_new = 0.0;
    double total_sales_change_pct = 0.0;

    // Wholesale profit sum_j margin_j * sales_j.
    std::vector<double> profit_base;
    std::vector<double> profit_new;
    double total_profit_base = 0.0;
    double total_profit_new = 0.0;
    double total_profit_change_pct = 0.0;

    // Tax revenue; present only when baseline unit taxes were supplied.
    std::optional<std::vector<double>> revenue_base;
    std::optional<std::vector<double>> revenue_new;
    std::optional<std::vector<double>> revenue_change_pct;
    std::optional<double> total_revenue_change;
    std::optional<double> total_revenue_change_pct;
    std::string notice;
};

namespace detail {

/// Shared accumulation for scenarios that change prices (and possibly the
/// menu rule) market by market.
struct ScenarioAccumulator {
    CounterfactualReport r;

    explicit ScenarioAccumulator(std::string name, std::vector<std::string> tiers) {
        const auto n = tiers.size();
        r.scenario = std::move(name);
        r.tiers = std::move(tiers);
        r.sales_base.assign(n, 0.0);
        r.sales_new.assign(n, 0.0);
        r.profit_base.assign(n, 0.0);
        r.profit_new.assign(n, 0.0);
    }

    /// Tier position of product j of market m in the report order.
    [[nodiscard]] std::size_t slot(const Market& m, std::size_t j) const {
        const auto it = std::find(r.tiers.begin(), r.tiers.end(), m.line[j].id);
        return static_cast<std::size_t>(it - r.tiers.begin());
    }

    void add(const Market& m, const MarketShares& base, const MarketShares& next) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            const auto k = slot(m, j);
            const double sb = base.inside[j] * m.market_size;
            const double sn = next.inside[j] * m.market_size;
            r.sales_base[k] += sb;
            r.sales_new[k] += sn;
            r.profit_base[k] += m.line.margin(j) * sb;
            r.profit_new[k] += m.line.margin(j) * sn;
        }
    }

    CounterfactualReport finish() {
        const auto n = r.tiers.size();
        r.sales_change_pct.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            r.sales_change_pct[k] = percent_change(r.sales_base[k], r.sales_new[k]);
            r.total_sales_base += r.sales_base[k];
            r.total_sales_new += r.sales_new[k];
            r.total_profit_base += r.profit_base[k];
            r.total_profit_new += r.profit_new[k];
        }
        r.total_sales_change_pct = percent_change(r.total_sales_base, r.total_sales_new);
        r.total_profit_change_pct = percent_change(r.total_profit_base, r.total_profit_new);
        return std::move(r);
    }
};

inline ResponseMode require_price_mode(ResponseMode mode) {
    require(mode != ResponseMode::kFixedAssortment,
            "fixed-assortment mode applies to single-price elasticities only");
    return mode;
}

}  // namespace detail

/// All retail prices scaled by (1 + pct/100).
inline CounterfactualReport uniform_price_change(const FittedModel& fm, const Panel& panel, double pct,
                                                 ResponseMode mode = ResponseMode::kAdjusted) {
    panel.validate();
    fm.check(panel);
    detail::require(pct > -100.0, "uniform_price_change: pct must exceed -100");
    detail::ScenarioAccumulator acc("uniform_price_" + to_string(mode), panel.tiers());
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        std::optional<CutoffVector> cuts;
        if (mode == ResponseMode::kFixedAssortment) cuts = solve_cutoffs(fm.gamma[t], m.line);
        const std::vector<double> factor(m.size(), 1.0 + pct / 100.0);
        const auto base = detail::scenario_shares(fm, m, t, m.line, mode, cuts ? &*cuts : nullptr);
        const auto next =
            detail::scenario_shares(fm, m, t, m.line.with_price_factors(factor), mode, cuts ? &*cuts : nullptr);
        acc.add(m, base, next);
    }
    return acc.finish();
}

/// Ad valorem retail tax increase of `rate` on current retail prices. Unit
/// margins are unchanged; the new unit tax is the baseline unit tax plus
/// rate x baseline retail price. Revenue lines need `baseline_unit_tax`
/// (one per tier, panel tier order); without it they are left empty.
inline CounterfactualReport tax_counterfactual(const FittedModel& fm, const Panel& panel, double rate,
                                               ResponseMode mode = ResponseMode::kAdjusted,
                                               const std::vector<double>* baseline_unit_tax = nullptr) {
    panel.validate();
    fm.check(panel);
    detail::require_price_mode(mode);
    detail::require(rate >= 0.0 && rate < 1.0, "tax_counterfactual: rate must lie in [0, 1)");
    const auto tiers = panel.tiers();
    if (baseline_unit_tax != nullptr) {
        detail::require(baseline_unit_tax->size() == tiers.size(),
                        "tax_counterfactual: need one baseline unit tax per tier");
    }

    std::ostringstream name;
    name << "tax_" << rate * 100.0 << "pct_" << to_string(mode);
    detail::ScenarioAccumulator acc(name.str(), tiers);
    std::vector<double> rev_base(tiers.size(), 0.0), rev_new(tiers.size(), 0.0);
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        const std::vector<double> factor(m.size(), 1.0 + rate);
        const auto base = detail::scenario_shares(fm, m, t, m.line, mode, nullptr);
        const auto next = detail::scenario_shares(fm, m, t, m.line.with_price_factors(factor), mode, nullptr);
        acc.add(m, base, next);
        if (baseline_unit_tax != nullptr) {
            for (std::size_t j = 0; j < m.size(); ++j) {
                const auto k = acc.slot(m, j);
                const double tax0 = (*baseline_unit_tax)[k];
                const double tax1 = tax0 + rate * m.line.price(j);
                rev_base[k] += tax0 * base.inside[j] * m.market_size;
                rev_new[k] += tax1 * next.inside[j] * m.market_size;
            }
        }
    }
    auto r = acc.finish();
    if (baseline_unit_tax == nullptr) {
        r.notice = "tax revenue not reported: no baseline unit taxes supplied";
        return r;
    }
    std::vector<double> pct(tiers.size());
    double total0 = 0.0, total1 = 0.0;
    for (std::size_t k = 0; k < tiers.size(); ++k) {
        pct[k] = detail::percent_change(rev_base[k], rev_new[k]);
        total0 += rev_base[k];
        total1 += rev_new[k];
    }
    r.revenue_base = rev_base;
    r.revenue_new = rev_new;
    r.revenue_change_pct = pct;
    r.total_revenue_change = total1 - total0;
    r.total_revenue_change_pct = detail::percent_change(total0, total1);
    return r;
}

/// Every consumer offered the full line, against the optimal foldable
/// baseline. Both sides integrate over the same stratified alpha sample, so
/// the comparison holds draw by draw: each draw's foldable menu is the
/// seller's best menu for that draw.
inline CounterfactualReport full_availability(const FittedModel& fm, const Panel& panel) {
    panel.validate();
    fm.check(panel);
    detail::ScenarioAccumulator acc("full_availability", panel.tiers());
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        const auto cuts = solve_cutoffs(fm.gamma[t], m.line);
        const auto dist = m.taste(fm.theta);
        const auto base = shares_given_cutoffs(fm.gamma[t], m.line, dist, fm.draws, cuts, MenuRule::kFoldable);
        const auto next = shares_given_cutoffs(fm.gamma[t], m.line, dist, fm.draws, cuts, MenuRule::kFullLine);
        acc.add(m, base, next);
    }
    return acc.finish();
}

/// Probability of each foldable depth per market.
struct AssortmentDistribution {
    std::vector<std::string> market_ids;
    std::vector<std::vector<double>> mass;  // [market][depth - 1]
    std::vector<double> mean_mass;          // sales-weighted across markets
};

inline AssortmentDistribution assortment_distribution(const FittedModel& fm, const Panel& panel) {
    panel.validate();
    fm.check(panel);
    AssortmentDistribution out;
    std::vector<double> weights;
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        out.market_ids.push_back(m.id);
        out.mass.push_back(depth_masses(solve_cutoffs(fm.gamma[t], m.line), m.taste(fm.theta)));
        double w = 0.0;
        for (double s : m.observed_shares) w += s * m.market_size;
        weights.push_back(w);
    }
    const std::size_t n = panel.markets.front().size();
    out.mean_mass.assign(n, 0.0);
    std::vector<double> col(panel.size());
    for (std::size_t d = 0; d < n; ++d) {
        for (std::size_t t = 0; t < panel.size(); ++t) col[t] = out.mass[t][d];
        out.mean_mass[d] = weighted_mean(col, weights);
    }
    return out;
}

}  // namespace foldmenu

#pragma once

// Market-level data shared by the generator, the estimator and the
// counterfactual engine. One Market is one cell (e.g. province-year); its
// products are tiers in descending margin order, in real terms.

#include "foldmenu/shares.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace foldmenu {

struct Market {
    std::string id;
    std::string group;           // optional grouping for fixed-utility dummies
    ProductLine line;            // real prices and margins; product id = tier label
    double income_log_mean = 0.0;
    double income_log_sd = 1.0;
    double cpi = 1.0;
    double market_size = 1.0;
    std::vector<double> observed_shares;  // inside shares, line order

    [[nodiscard]] std::size_t size() const noexcept { return line.size(); }

    [[nodiscard]] double outside_share() const {
        return 1.0 - std::accumulate(observed_shares.begin(), observed_shares.end(), 0.0);
    }

    [[nodiscard]] TasteDistribution taste(double theta) const {
        return {theta, income_log_mean, income_log_sd};
    }
};

struct Panel {
    std::vector<Market> markets;

    [[nodiscard]] std::size_t size() const noexcept { return markets.size(); }
    [[nodiscard]] bool empty() const noexcept { return markets.empty(); }

    /// Tier labels of the first market, in its line order.
    [[nodiscard]] std::vector<std::string> tiers() const {
        std::vector<std::string> out;
        if (markets.empty()) return out;
        for (const auto& p : markets.front().line.products()) out.push_back(p.id);
        return out;
    }

    /// Structural checks: every market carries one share per product and
    /// the same tier set; shares lie strictly inside (0, 1) with a positive
    /// outside share.
    void validate(bool require_interior_shares = true) const {
        detail::require(!markets.empty(), "panel has no markets");
        std::set<std::string> ids;
        const auto ref = tiers();
        const std::set<std::string> ref_set(ref.begin(), ref.end());
        for (const auto& m : markets) {
            detail::require(ids.insert(m.id).second, "duplicate market id '" + m.id + "'");
            detail::require(!m.line.empty(), "market '" + m.id + "' has no products");
            detail::require(m.observed_shares.size() == m.line.size(),
                            "market '" + m.id + "': share count differs from product count");
            std::set<std::string> tier_set;
            for (const auto& p : m.line.products()) tier_set.insert(p.id);
            detail::require(tier_set == ref_set, "market '" + m.id + "' has a different tier set");
            detail::require(m.income_log_sd > 0.0, "market '" + m.id + "': income_log_sd must be > 0");
            detail::require(m.market_size > 0.0, "market '" + m.id + "': market_size must be > 0");
            if (require_interior_shares) {
                for (double s : m.observed_shares) {
                    detail::require(s > 0.0 && s < 1.0,
                                    "market '" + m.id + "': observed shares must lie strictly in (0, 1)");
                }
                detail::require(m.outside_share() > 0.0,
                                "market '" + m.id + "': outside share must be positive");
            }
        }
    }
};

}  // namespace foldmenu

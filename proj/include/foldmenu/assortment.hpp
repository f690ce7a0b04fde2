#pragma once

// Profit-maximizing assortments for a single logit consumer: the foldable
// search, an exhaustive subset oracle, and the price-sensitivity cutoffs
// that partition consumers across foldable depths.

#include "foldmenu/choice.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace foldmenu {

/// Relative slack used when comparing profits of competing menus. A deeper
/// menu must beat the incumbent by more than this to be chosen.
inline constexpr double kProfitTieTolerance = 1e-13;

namespace detail {

inline bool strictly_better(double candidate, double incumbent) {
    return candidate > incumbent + kProfitTieTolerance * std::max(1.0, std::abs(incumbent));
}

/// Expected profit of every foldable depth 1..J (index depth-1).
inline std::vector<double> foldable_profits(const ConsumerTaste& taste, const ProductLine& line) {
    const std::size_t n = line.size();
    double shift = 0.0;
    for (std::size_t j = 0; j < n; ++j) shift = std::max(shift, mean_utility(taste, line, j));
    std::vector<double> out(n);
    double num = 0.0;
    double den = std::exp(-shift);
    for (std::size_t j = 0; j < n; ++j) {
        const double w = std::exp(mean_utility(taste, line, j) - shift);
        num += line.margin(j) * w;
        den += w;
        out[j] = num / den;
    }
    return out;
}

}  // namespace detail

/// Depth in 1..J maximizing expected profit over the foldable menu.
/// Exact ties go to the smaller depth.
inline FoldableAssortment optimal_foldable(const ConsumerTaste& taste, const ProductLine& line) {
    detail::require(!line.empty(), "optimal_foldable: empty product line");
    detail::check_taste(taste, line);
    const auto profit = detail::foldable_profits(taste, line);
    std::size_t best = 0;
    for (std::size_t j = 1; j < profit.size(); ++j) {
        if (detail::strictly_better(profit[j], profit[best])) best = j;
    }
    return {best + 1};
}

/// Largest line the exhaustive search accepts.
inline constexpr std::size_t kMaxBruteForceProducts = 20;

struct BruteForceResult {
    Assortment assortment;
    double profit = 0.0;
};

/// Enumerates every non-empty subset and returns an argmax of expected
/// profit (the first in mask order among exact ties).
inline BruteForceResult brute_force_best(const ConsumerTaste& taste, const ProductLine& line) {
    detail::require(!line.empty(), "brute_force_best: empty product line");
    detail::require(line.size() <= kMaxBruteForceProducts,
                    "brute_force_best: at most 20 products (2^J subsets)");
    detail::check_taste(taste, line);

    const std::size_t n = line.size();
    double shift = 0.0;
    for (std::size_t j = 0; j < n; ++j) shift = std::max(shift, mean_utility(taste, line, j));
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = std::exp(mean_utility(taste, line, j) - shift);
    const double outside = std::exp(-shift);

    std::uint64_t best_mask = 0;
    double best = -1.0;
    const std::uint64_t last = (std::uint64_t{1} << n) - 1;
    for (std::uint64_t mask = 1; mask <= last; ++mask) {
        double num = 0.0;
        double den = outside;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask >> j & 1u) {
                num += line.margin(j) * w[j];
                den += w[j];
            }
        }
        const double profit = num / den;
        if (profit > best) {
            best = profit;
            best_mask = mask;
        }
    }
    auto a = Assortment::from_mask(best_mask);
    return {a, expected_profit(taste, line, a)};
}

/// Price-sensitivity thresholds c_{j,j+1}, j = 1..J-1, between consecutive
/// foldable depths, plus the infinite sentinels at both ends.
class CutoffVector {
public:
    CutoffVector() = default;
    explicit CutoffVector(std::vector<double> interior) : interior_(std::move(interior)) {}

    /// Number of products J the cutoffs partition.
    [[nodiscard]] std::size_t depth_count() const noexcept { return interior_.size() + 1; }

    /// c_{k,k+1} for k = 0..J; k = 0 is -inf and k = J is +inf.
    [[nodiscard]] double boundary(std::size_t k) const {
        if (k == 0) return -std::numeric_limits<double>::infinity();
        if (k >= depth_count()) return std::numeric_limits<double>::infinity();
        return interior_[k - 1];
    }

    [[nodiscard]] const std::vector<double>& interior() const noexcept { return interior_; }

    [[nodiscard]] bool strictly_increasing() const noexcept {
        for (std::size_t k = 1; k < interior_.size(); ++k) {
            if (!(interior_[k] > interior_[k - 1])) return false;
        }
        return true;
    }

private:
    std::vector<double> interior_;
};

namespace detail {

/// log of sum_{j'<j} (pi_j' - pi_j) exp(gamma_j' - alpha p_j') minus log pi_j.
/// Strictly decreasing in alpha; its root is the cutoff c_{j-1,j}.
inline double cutoff_gap(std::span<const double> gamma, const ProductLine& line, std::size_t j,
                         double alpha) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < j; ++k) top = std::max(top, gamma[k] - alpha * line.price(k));
    double sum = 0.0;
    for (std::size_t k = 0; k < j; ++k) {
        sum += (line.margin(k) - line.margin(j)) * std::exp(gamma[k] - alpha * line.price(k) - top);
    }
    return top + std::log(sum) - std::log(line.margin(j));
}

inline constexpr double kCutoffTolerance = 1e-12;
inline constexpr int kCutoffMaxIterations = 200;

inline double solve_one_cutoff(std::span<const double> gamma, const ProductLine& line,
                               std::size_t j) {
    if (line.margin(j) <= 0.0) return std::numeric_limits<double>::infinity();
    auto gap = [&](double a) { return cutoff_gap(gamma, line, j, a); };

    double lo = -1.0;
    double hi = 1.0;
    double width = 2.0;
    int guard = 0;
    while (gap(lo) <= 0.0) {
        hi = lo;
        lo -= width;
        width *= 2.0;
        if (++guard > 2000 || !std::isfinite(lo)) throw NumericalError("cutoff bracket expansion failed");
    }
    width = 2.0;
    while (gap(hi) >= 0.0) {
        lo = std::max(lo, hi);
        hi += width;
        width *= 2.0;
        if (++guard > 2000 || !std::isfinite(hi)) throw NumericalError("cutoff bracket expansion failed");
    }
    for (int it = 0; it < kCutoffMaxIterations && hi - lo > kCutoffTolerance; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (gap(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Cutoffs at which the seller is indifferent between depths j-1 and j:
/// pi_j equals the expected profit of the top j-1 products. Requires
/// strictly descending margins. A zero margin yields a +inf cutoff.
inline CutoffVector solve_cutoffs(std::span<const double> gamma, const ProductLine& line) {
    detail::require(!line.empty(), "solve_cutoffs: empty product line");
    detail::require(gamma.size() == line.size(), "solve_cutoffs: utility vector has wrong length");
    line.require_strict();
    std::vector<double> cuts;
    cuts.reserve(line.size() - 1);
    for (std::size_t j = 1; j < line.size(); ++j) cuts.push_back(detail::solve_one_cutoff(gamma, line, j));
    return CutoffVector(std::move(cuts));
}

/// Depth j with alpha in (c_{j-1,j}, c_{j,j+1}].
inline FoldableAssortment assortment_for_alpha(double alpha, const CutoffVector& cuts) {
    const std::size_t n = cuts.depth_count();
    for (std::size_t j = 1; j < n; ++j) {
        if (alpha <= cuts.boundary(j)) return {j};
    }
    return {n};
}

}  // namespace foldmenu

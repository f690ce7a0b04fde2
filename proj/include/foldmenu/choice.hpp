#pragma once

// Logit choice kernel: products, tastes, assortments, choice probabilities
// and expected per-consumer profit.

#include "foldmenu/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace foldmenu {

struct Product {
    std::string id;
    double unit_margin = 0.0;   // profit per unit sold
    double retail_price = 1.0;  // fixed (regulated) price
};

/// Products ordered by unit margin, highest first.
///
/// Weak descent is enforced on construction. Operations that need a unique
/// cutoff between consecutive depths call `require_strict()` themselves.
class ProductLine {
public:
    ProductLine() = default;

    explicit ProductLine(std::vector<Product> products) : products_(std::move(products)) {
        for (std::size_t j = 0; j < products_.size(); ++j) {
            const auto& p = products_[j];
            detail::require(p.unit_margin >= 0.0 && std::isfinite(p.unit_margin),
                            "product '" + p.id + "': unit margin must be finite and >= 0");
            detail::require(p.retail_price > 0.0 && std::isfinite(p.retail_price),
                            "product '" + p.id + "': retail price must be finite and > 0");
            if (j > 0) {
                detail::require(products_[j - 1].unit_margin >= p.unit_margin,
                                "product line must be sorted by unit margin, descending");
            }
        }
    }

    /// Builds a line from parallel margin/price vectors with ids "1".."J".
    static ProductLine from_vectors(std::span<const double> margins,
                                    std::span<const double> prices) {
        detail::require(margins.size() == prices.size(), "margin and price vectors differ in length");
        std::vector<Product> out;
        out.reserve(margins.size());
        for (std::size_t j = 0; j < margins.size(); ++j) {
            out.push_back({std::to_string(j + 1), margins[j], prices[j]});
        }
        return ProductLine(std::move(out));
    }

    [[nodiscard]] std::size_t size() const noexcept { return products_.size(); }
    [[nodiscard]] bool empty() const noexcept { return products_.empty(); }
    [[nodiscard]] const Product& operator[](std::size_t j) const { return products_[j]; }
    [[nodiscard]] double margin(std::size_t j) const { return products_[j].unit_margin; }
    [[nodiscard]] double price(std::size_t j) const { return products_[j].retail_price; }
    [[nodiscard]] const std::vector<Product>& products() const noexcept { return products_; }

    [[nodiscard]] bool strictly_descending() const noexcept {
        for (std::size_t j = 1; j < products_.size(); ++j) {
            if (!(products_[j - 1].unit_margin > products_[j].unit_margin)) return false;
        }
        return true;
    }

    void require_strict() const {
        detail::require(strictly_descending(),
                        "cutoffs need strictly descending unit margins (tied margins found)");
    }

    /// Copy with every retail price multiplied by `factor[j]`.
    [[nodiscard]] ProductLine with_price_factors(std::span<const double> factor) const {
        detail::require(factor.size() == size(), "price factor vector has wrong length");
        auto out = products_;
        for (std::size_t j = 0; j < out.size(); ++j) out[j].retail_price *= factor[j];
        return ProductLine(std::move(out));
    }

private:
    std::vector<Product> products_;
};

struct ConsumerTaste {
    double alpha = 0.0;          // utility per currency unit
    std::vector<double> gamma;   // consumption utility, one per product
};

/// Set of product indices (0-based into a ProductLine). The outside option
/// is always available and never listed.
struct Assortment {
    std::vector<std::size_t> member_ids;

    static Assortment top(std::size_t depth) {
        Assortment a;
        for (std::size_t j = 0; j < depth; ++j) a.member_ids.push_back(j);
        return a;
    }

    static Assortment from_mask(std::uint64_t mask) {
        Assortment a;
        for (std::size_t j = 0; mask != 0; ++j, mask >>= 1) {
            if (mask & 1u) a.member_ids.push_back(j);
        }
        return a;
    }

    [[nodiscard]] bool empty() const noexcept { return member_ids.empty(); }
    friend bool operator==(const Assortment&, const Assortment&) = default;
};

/// The nested set {1, ..., depth} of the highest-margin products.
struct FoldableAssortment {
    std::size_t depth = 1;

    [[nodiscard]] Assortment assortment() const { return Assortment::top(depth); }
    friend auto operator<=>(const FoldableAssortment&, const FoldableAssortment&) = default;
};

namespace detail {

inline void check_taste(const ConsumerTaste& taste, const ProductLine& line) {
    require(taste.gamma.size() == line.size(),
            "taste has " + std::to_string(taste.gamma.size()) + " utilities for a line of " +
                std::to_string(line.size()) + " products");
}

inline void check_assortment(const Assortment& a, const ProductLine& line) {
    std::vector<bool> seen(line.size(), false);
    for (auto j : a.member_ids) {
        require(j < line.size(), "assortment references product index out of range");
        require(!seen[j], "assortment lists a product twice");
        seen[j] = true;
    }
}

/// Profit from one logit consumer facing products with mean utilities
/// `delta` (exponentiated weights `w = exp(delta - shift)`), given extra
/// outside mass `outside_w`. Shared by the monopoly and competition paths.
inline double logit_profit(std::span<const double> w, std::span<const double> margins,
                           double outside_w) {
    double num = 0.0;
    double den = outside_w;
    for (std::size_t k = 0; k < w.size(); ++k) {
        num += margins[k] * w[k];
        den += w[k];
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace detail

/// Mean utility of product j: gamma_j - alpha * p_j.
inline double mean_utility(const ConsumerTaste& taste, const ProductLine& line, std::size_t j) {
    return taste.gamma[j] - taste.alpha * line.price(j);
}

/// Logit choice probabilities; index 0 is the outside option, index j+1 is
/// product j of the line. Products outside `a` get probability 0.
inline std::vector<double> choice_probabilities(const ConsumerTaste& taste, const ProductLine& line,
                                                const Assortment& a) {
    detail::check_taste(taste, line);
    detail::check_assortment(a, line);

    std::vector<double> prob(line.size() + 1, 0.0);
    double shift = 0.0;  // outside utility
    for (auto j : a.member_ids) shift = std::max(shift, mean_utility(taste, line, j));

    double den = std::exp(-shift);
    for (auto j : a.member_ids) {
        prob[j + 1] = std::exp(mean_utility(taste, line, j) - shift);
        den += prob[j + 1];
    }
    prob[0] = std::exp(-shift) / den;
    for (auto j : a.member_ids) prob[j + 1] /= den;
    return prob;
}

/// Sum over the assortment of margin times choice probability.
inline double expected_profit(const ConsumerTaste& taste, const ProductLine& line,
                              const Assortment& a) {
    if (a.empty()) {
        detail::check_taste(taste, line);
        return 0.0;
    }
    const auto prob = choice_probabilities(taste, line, a);
    double total = 0.0;
    for (auto j : a.member_ids) total += line.margin(j) * prob[j + 1];
    return total;
}

}  // namespace foldmenu

#pragma once

// Smooth simulated market shares when each consumer's menu depth is set by
// where the consumer's price sensitivity falls among the cutoffs. Price sensitivity is
// alpha = theta / income with lognormal income, so log alpha is normal with
// mean log(theta) - mu and sd sigma. Each depth interval is sampled through
// its conditional quantile function with one shared set of uniforms, which
// keeps shares smooth in the parameters.

#include "foldmenu/assortment.hpp"
#include "foldmenu/normal.hpp"
#include "foldmenu/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace foldmenu {

inline constexpr std::size_t kDefaultSimDraws = 2000;
inline constexpr std::size_t kDefaultStandardLogitDraws = 10000;

struct TasteDistribution {
    double theta = 1.0;            // price-sensitivity scale
    double income_log_mean = 0.0;  // mean of log income
    double income_log_sd = 1.0;    // sd of log income

    void validate() const {
        detail::require(theta > 0.0 && std::isfinite(theta), "taste distribution: theta must be > 0");
        detail::require(income_log_sd > 0.0 && std::isfinite(income_log_sd),
                        "taste distribution: income log-sd must be > 0");
        detail::require(std::isfinite(income_log_mean), "taste distribution: income log-mean must be finite");
    }

    /// Mean of log alpha.
    [[nodiscard]] double log_alpha_mean() const { return std::log(theta) - income_log_mean; }

    /// Position of alpha on the standard normal scale of log alpha.
    [[nodiscard]] double z_of(double alpha) const {
        if (alpha <= 0.0) return -std::numeric_limits<double>::infinity();
        if (alpha == std::numeric_limits<double>::infinity()) return alpha;
        return (std::log(alpha) - log_alpha_mean()) / income_log_sd;
    }

    [[nodiscard]] double alpha_of(double z) const {
        return std::exp(log_alpha_mean() + income_log_sd * z);
    }
};

/// Simulation draws fixed for a whole run: uniforms for the conditional
/// interval sampler and standard normals for the full-availability logit.
struct DrawSet {
    std::vector<double> uniforms;
    std::vector<double> normals;
    std::uint64_t seed = 0;

    static DrawSet make(std::uint64_t seed, std::size_t n_uniform = kDefaultSimDraws,
                        std::size_t n_normal = kDefaultStandardLogitDraws) {
        detail::require(n_uniform > 0, "draw set needs at least one uniform draw");
        Rng rng(seed);
        DrawSet d;
        d.seed = seed;
        d.uniforms = rng.uniforms(n_uniform);
        d.normals = rng.normals(n_normal);
        return d;
    }
};

struct MarketShares {
    std::vector<double> inside;  // one per product, line order
    double outside = 0.0;

    [[nodiscard]] double total() const {
        return std::accumulate(inside.begin(), inside.end(), outside);
    }
};

/// P(alpha' <= alpha); zero on the non-positive half line.
inline double alpha_cdf(const TasteDistribution& dist, double alpha) {
    return normal::cdf(dist.z_of(alpha));
}

struct ConditionalSample {
    std::vector<double> alpha;
    double mass = 0.0;  // probability of the interval

    [[nodiscard]] bool empty() const noexcept { return alpha.empty(); }
};

namespace detail {

/// Conditional quantile sampler for alpha restricted to (lo, hi].
class IntervalSampler {
public:
    IntervalSampler(const TasteDistribution& dist, double lo, double hi)
        : dist_(dist), lo_(lo), hi_(hi) {
        const double z_lo = dist.z_of(lo);
        const double z_hi = dist.z_of(hi);
        upper_tail_ = z_lo > 0.0;
        if (upper_tail_) {
            a_ = normal::survival(z_lo);
            b_ = normal::survival(z_hi);
            mass_ = a_ - b_;
        } else {
            a_ = normal::cdf(z_lo);
            b_ = normal::cdf(z_hi);
            mass_ = b_ - a_;
        }
        if (!(mass_ > 0.0)) mass_ = 0.0;
    }

    [[nodiscard]] double mass() const noexcept { return mass_; }

    [[nodiscard]] double operator()(double u) const {
        double z;
        if (upper_tail_) {
            z = -normal::quantile(a_ - u * (a_ - b_));
        } else {
            z = normal::quantile(a_ + u * (b_ - a_));
        }
        double alpha = dist_.alpha_of(z);
        if (alpha > hi_) alpha = hi_;
        if (!(alpha > lo_)) alpha = std::nextafter(std::max(lo_, 0.0), hi_);
        return alpha;
    }

private:
    const TasteDistribution& dist_;
    double lo_;
    double hi_;
    bool upper_tail_ = false;
    double a_ = 0.0;
    double b_ = 0.0;
    double mass_ = 0.0;
};

}  // namespace detail

/// alpha_i = Phi^-1(Phi(lo) + u_i (Phi(hi) - Phi(lo))) for every uniform
/// draw. An interval without probability mass yields an empty sample.
inline ConditionalSample conditional_alpha_sample(const TasteDistribution& dist, double lo, double hi,
                                                  const DrawSet& draws) {
    dist.validate();
    detail::require(!(hi < lo), "conditional_alpha_sample: interval upper end below lower end");
    detail::IntervalSampler sampler(dist, lo, hi);
    ConditionalSample out;
    out.mass = sampler.mass();
    if (out.mass == 0.0) return out;
    out.alpha.reserve(draws.uniforms.size());
    for (double u : draws.uniforms) out.alpha.push_back(sampler(u));
    return out;
}

/// Probability mass of each foldable depth 1..J (index depth-1). Cutoffs at
/// or below zero carry no mass because alpha is positive.
inline std::vector<double> depth_masses(const CutoffVector& cuts, const TasteDistribution& dist) {
    const std::size_t n = cuts.depth_count();
    std::vector<double> out(n);
    double prev = 0.0;
    for (std::size_t d = 1; d <= n; ++d) {
        const double next = normal::cdf(dist.z_of(cuts.boundary(d)));
        out[d - 1] = std::max(0.0, next - prev);
        prev = std::max(prev, next);
    }
    return out;
}

/// Which menu a consumer in depth interval d is assumed to face.
enum class MenuRule {
    kFoldable,  // the top-d products (the model's optimal assortment)
    kFullLine,  // every product, keeping the same stratified alpha sample
};

/// Shares for a given partition of alpha. `cuts` may be stale relative to
/// `line` (fixed-assortment counterfactuals) or freshly solved.
inline MarketShares shares_given_cutoffs(std::span<const double> gamma, const ProductLine& line,
                                         const TasteDistribution& dist, const DrawSet& draws,
                                         const CutoffVector& cuts,
                                         MenuRule rule = MenuRule::kFoldable) {
    const std::size_t n = line.size();
    detail::require(gamma.size() == n, "shares: utility vector has wrong length");
    detail::require(cuts.depth_count() == n, "shares: cutoff vector does not match the line");
    detail::require(!draws.uniforms.empty(), "shares: empty draw set");
    dist.validate();

    MarketShares out;
    out.inside.assign(n, 0.0);
    std::vector<double> acc(n);
    std::vector<double> w(n);
    const double inv_draws = 1.0 / static_cast<double>(draws.uniforms.size());

    for (std::size_t d = 1; d <= n; ++d) {
        detail::IntervalSampler sampler(dist, cuts.boundary(d - 1), cuts.boundary(d));
        const double mass = sampler.mass();
        if (mass == 0.0) continue;
        const std::size_t menu = rule == MenuRule::kFoldable ? d : n;
        std::fill(acc.begin(), acc.begin() + static_cast<std::ptrdiff_t>(menu), 0.0);
        double acc_out = 0.0;
        for (double u : draws.uniforms) {
            const double alpha = sampler(u);
            double shift = 0.0;
            for (std::size_t k = 0; k < menu; ++k) {
                w[k] = gamma[k] - alpha * line.price(k);
                shift = std::max(shift, w[k]);
            }
            double den = std::exp(-shift);
            const double out_w = den;
            for (std::size_t k = 0; k < menu; ++k) {
                w[k] = std::exp(w[k] - shift);
                den += w[k];
            }
            const double inv = 1.0 / den;
            for (std::size_t k = 0; k < menu; ++k) acc[k] += w[k] * inv;
            acc_out += out_w * inv;
        }
        for (std::size_t k = 0; k < menu; ++k) out.inside[k] += mass * acc[k] * inv_draws;
        out.outside += mass * acc_out * inv_draws;
    }
    return out;
}

/// Shares with endogenous menus: solve the cutoffs, then integrate logit
/// probabilities over each depth interval.
inline MarketShares predicted_shares(std::span<const double> gamma, const ProductLine& line,
                                     const TasteDistribution& dist, const DrawSet& draws) {
    return shares_given_cutoffs(gamma, line, dist, draws, solve_cutoffs(gamma, line));
}

/// Full-availability logit with alpha_i = theta / exp(mu + sigma v_i). The
/// draw-level terms exp(-alpha_i p_k) do not depend on the utilities, so they
/// are computed once; each evaluation is then exp-free apart from J terms.
class StandardLogitKernel {
public:
    StandardLogitKernel(const ProductLine& line, const TasteDistribution& dist,
                        std::span<const double> normal_draws)
        : n_(line.size()), draws_(normal_draws.size()) {
        detail::require(!normal_draws.empty(), "standard_logit_shares: no draws");
        dist.validate();
        price_weight_.resize(n_ * draws_);
        const double log_theta = std::log(dist.theta);
        for (std::size_t i = 0; i < draws_; ++i) {
            const double alpha = std::exp(log_theta - dist.income_log_mean - dist.income_log_sd * normal_draws[i]);
            for (std::size_t k = 0; k < n_; ++k) price_weight_[i * n_ + k] = std::exp(-alpha * line.price(k));
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }

    [[nodiscard]] MarketShares operator()(std::span<const double> gamma) const {
        detail::require(gamma.size() == n_, "standard_logit_shares: utility vector has wrong length");
        // Shift by max(0, gamma) so no weight exceeds one.
        double shift = 0.0;
        for (double g : gamma) shift = std::max(shift, g);
        std::vector<double> eg(n_);
        for (std::size_t k = 0; k < n_; ++k) eg[k] = std::exp(gamma[k] - shift);
        const double out_w = std::exp(-shift);

        MarketShares out;
        out.inside.assign(n_, 0.0);
        std::vector<double> w(n_);
        for (std::size_t i = 0; i < draws_; ++i) {
            const double* pw = price_weight_.data() + i * n_;
            double den = out_w;
            for (std::size_t k = 0; k < n_; ++k) {
                w[k] = eg[k] * pw[k];
                den += w[k];
            }
            const double inv = 1.0 / den;
            for (std::size_t k = 0; k < n_; ++k) out.inside[k] += w[k] * inv;
            out.outside += out_w * inv;
        }
        const double inv = 1.0 / static_cast<double>(draws_);
        for (auto& v : out.inside) v *= inv;
        out.outside *= inv;
        return out;
    }

private:
    std::size_t n_;
    std::size_t draws_;
    std::vector<double> price_weight_;  // draw-major, exp(-alpha_i p_k)
};

inline MarketShares standard_logit_shares(std::span<const double> gamma, const ProductLine& line,
                                          const TasteDistribution& dist,
                                          std::span<const double> normal_draws) {
    detail::require(gamma.size() == line.size(), "standard_logit_shares: utility vector has wrong length");
    return StandardLogitKernel(line, dist, normal_draws)(gamma);
}

}  // namespace foldmenu

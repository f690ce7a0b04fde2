#pragma once

// Assortment competition between firms that each offer a foldable menu of
// their own margin-ranked products, and the cost of that restriction when
// consumers at a point of sale have random tastes.

#include "foldmenu/analysis.hpp"
#include "foldmenu/assortment.hpp"
#include "foldmenu/rng.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace foldmenu {

struct FirmProfile {
    std::string firm_id;
    ProductLine owned;  // margin-descending
};

/// Firms with their consumption utilities and a common price sensitivity.
struct CompetitionInstance {
    std::vector<FirmProfile> firms;
    std::vector<std::vector<double>> gamma;  // [firm][product]
    double alpha = 1.0;

    void validate() const {
        detail::require(!firms.empty(), "competition: need at least one firm");
        detail::require(gamma.size() == firms.size(), "competition: one utility vector per firm required");
        std::set<std::string> firm_ids, product_ids;
        for (std::size_t n = 0; n < firms.size(); ++n) {
            const auto& f = firms[n];
            detail::require(firm_ids.insert(f.firm_id).second, "competition: duplicate firm id '" + f.firm_id + "'");
            detail::require(!f.owned.empty(), "competition: firm '" + f.firm_id + "' owns no products");
            detail::require(gamma[n].size() == f.owned.size(),
                            "competition: utilities of firm '" + f.firm_id + "' have wrong length");
            for (const auto& p : f.owned.products()) {
                detail::require(product_ids.insert(p.id).second,
                                "competition: product '" + p.id + "' owned by more than one firm");
            }
            for (double g : gamma[n]) detail::require(std::isfinite(g), "competition: utilities must be finite");
        }
        detail::require(std::isfinite(alpha), "competition: alpha must be finite");
    }

    [[nodiscard]] std::size_t firm_count() const noexcept { return firms.size(); }
};

/// One foldable depth per firm; ordered component-wise.
struct LatticePoint {
    std::vector<std::size_t> depths;

    [[nodiscard]] bool leq(const LatticePoint& other) const {
        for (std::size_t n = 0; n < depths.size(); ++n) {
            if (depths[n] > other.depths[n]) return false;
        }
        return true;
    }

    friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
};

struct RandomCoefSpec {
    std::size_t n_draws = 1000;    // consumers per point of sale
    double taste_dispersion = 0.0; // a: sd of each taste relative to its mean
    std::uint64_t seed = 1;

    void validate() const {
        detail::require(n_draws >= 1, "random coefficients: need at least one draw");
        detail::require(taste_dispersion >= 0.0, "random coefficients: dispersion must be >= 0");
    }
};

/// Exponentiated utilities of every product for every consumer, shifted per
/// consumer so that no weight exceeds one.
class ConsumerPopulation {
public:
    /// A single representative consumer.
    static ConsumerPopulation representative(const CompetitionInstance& inst) {
        return build(inst, 1, [](std::size_t, std::size_t, std::size_t) { return 0.0; }, {0.0}, 0.0);
    }

    /// n consumers with alpha_d = alpha (1 + a v_d) and
    /// gamma_jd = gamma_j (1 + a e_jd), v and e standard normal.
    static ConsumerPopulation random_coef(const CompetitionInstance& inst, const RandomCoefSpec& spec) {
        spec.validate();
        Rng rng(spec.seed);
        std::size_t total = 0;
        for (const auto& f : inst.firms) total += f.owned.size();
        std::vector<double> v(spec.n_draws);
        std::vector<double> e(spec.n_draws * total);
        for (std::size_t d = 0; d < spec.n_draws; ++d) {
            v[d] = rng.normal();
            for (std::size_t k = 0; k < total; ++k) e[d * total + k] = rng.normal();
        }
        std::vector<std::size_t> offset(inst.firms.size(), 0);
        for (std::size_t n = 1; n < inst.firms.size(); ++n) offset[n] = offset[n - 1] + inst.firms[n - 1].owned.size();
        return build(
            inst, spec.n_draws,
            [&](std::size_t d, std::size_t n, std::size_t j) { return e[d * total + offset[n] + j]; }, v,
            spec.taste_dispersion);
    }

    [[nodiscard]] std::size_t firm_count() const noexcept { return sizes_.size(); }
    [[nodiscard]] std::size_t product_count(std::size_t n) const { return sizes_[n]; }
    [[nodiscard]] std::size_t consumers() const noexcept { return consumers_; }
    [[nodiscard]] double margin(std::size_t n, std::size_t j) const { return margins_[n][j]; }

    /// Mean profit of firm n offering the products in `mask` (bit j = its
    /// j-th product) while every other firm m offers its top depths[m].
    [[nodiscard]] double profit(std::size_t n, std::uint64_t mask, const LatticePoint& point) const {
        double total = 0.0;
        for (std::size_t d = 0; d < consumers_; ++d) {
            double den = outside_[d];
            for (std::size_t m = 0; m < sizes_.size(); ++m) {
                if (m != n) den += prefix(d, m, point.depths[m]);
            }
            double num = 0.0;
            const double* w = weight(d, n);
            for (std::size_t j = 0; j < sizes_[n]; ++j) {
                if ((mask >> j) & 1U) {
                    num += margins_[n][j] * w[j];
                    den += w[j];
                }
            }
            total += num / den;
        }
        return total / static_cast<double>(consumers_);
    }

    /// Mean profit of every own subset (index = mask), competitors fixed.
    /// Foldable menus are the masks 2^k - 1, so they share one summation
    /// order with the other subsets.
    [[nodiscard]] std::vector<double> subset_profits(std::size_t n, const LatticePoint& point) const {
        const std::size_t J = sizes_[n];
        detail::require(J <= kMaxBruteForceProducts, "subset enumeration limited to 20 products per firm");
        const std::uint64_t count = std::uint64_t{1} << J;
        std::vector<double> total(count, 0.0);
        std::vector<double> num(count), den(count);
        for (std::size_t d = 0; d < consumers_; ++d) {
            double base = outside_[d];
            for (std::size_t m = 0; m < sizes_.size(); ++m) {
                if (m != n) base += prefix(d, m, point.depths[m]);
            }
            const double* w = weight(d, n);
            num[0] = 0.0;
            den[0] = base;
            for (std::uint64_t mask = 1; mask < count; ++mask) {
                // Extend the subset without its highest bit.
                const auto j = static_cast<std::size_t>(std::bit_width(mask) - 1);
                const std::uint64_t rest = mask & ~(std::uint64_t{1} << j);
                num[mask] = num[rest] + margins_[n][j] * w[j];
                den[mask] = den[rest] + w[j];
                total[mask] += num[mask] / den[mask];
            }
        }
        for (auto& v : total) v /= static_cast<double>(consumers_);
        return total;
    }

private:
    template <typename Noise>
    static ConsumerPopulation build(const CompetitionInstance& inst, std::size_t consumers, Noise&& noise,
                                    const std::vector<double>& alpha_noise, double a) {
        inst.validate();
        ConsumerPopulation pop;
        pop.consumers_ = consumers;
        for (const auto& f : inst.firms) {
            pop.sizes_.push_back(f.owned.size());
            std::vector<double> m;
            for (std::size_t j = 0; j < f.owned.size(); ++j) m.push_back(f.owned.margin(j));
            pop.margins_.push_back(std::move(m));
        }
        std::size_t stride = 0;
        for (auto s : pop.sizes_) stride += s;
        pop.stride_ = stride;
        pop.offset_.assign(pop.sizes_.size(), 0);
        for (std::size_t n = 1; n < pop.sizes_.size(); ++n) pop.offset_[n] = pop.offset_[n - 1] + pop.sizes_[n - 1];

        pop.w_.resize(consumers * stride);
        pop.outside_.resize(consumers);
        pop.prefix_.resize(consumers * stride);
        std::vector<double> delta(stride);
        for (std::size_t d = 0; d < consumers; ++d) {
            const double alpha = inst.alpha * (1.0 + a * alpha_noise[d]);
            double shift = 0.0;
            for (std::size_t n = 0; n < inst.firms.size(); ++n) {
                for (std::size_t j = 0; j < pop.sizes_[n]; ++j) {
                    const double g = inst.gamma[n][j] * (1.0 + a * noise(d, n, j));
                    const double v = g - alpha * inst.firms[n].owned.price(j);
                    delta[pop.offset_[n] + j] = v;
                    shift = std::max(shift, v);
                }
            }
            pop.outside_[d] = std::exp(-shift);
            for (std::size_t k = 0; k < stride; ++k) pop.w_[d * stride + k] = std::exp(delta[k] - shift);
            for (std::size_t n = 0; n < pop.sizes_.size(); ++n) {
                double s = 0.0;
                for (std::size_t j = 0; j < pop.sizes_[n]; ++j) {
                    s += pop.w_[d * stride + pop.offset_[n] + j];
                    pop.prefix_[d * stride + pop.offset_[n] + j] = s;
                }
            }
        }
        return pop;
    }

    [[nodiscard]] const double* weight(std::size_t d, std::size_t n) const {
        return w_.data() + d * stride_ + offset_[n];
    }

    /// Sum of the top `depth` weights of firm m for consumer d.
    [[nodiscard]] double prefix(std::size_t d, std::size_t m, std::size_t depth) const {
        return depth == 0 ? 0.0 : prefix_[d * stride_ + offset_[m] + depth - 1];
    }

    std::size_t consumers_ = 0;
    std::size_t stride_ = 0;
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offset_;
    std::vector<std::vector<double>> margins_;
    std::vector<double> w_;
    std::vector<double> outside_;
    std::vector<double> prefix_;
};

inline std::uint64_t foldable_mask(std::size_t depth) {
    return depth >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << depth) - 1;
}

/// Firm n's profit-maximizing foldable depth against the other firms'
/// depths in `point`; ties go to the smaller depth.
inline std::size_t best_response(const ConsumerPopulation& pop, std::size_t n, const LatticePoint& point) {
    std::size_t best = 1;
    double best_profit = pop.profit(n, foldable_mask(1), point);
    for (std::size_t k = 2; k <= pop.product_count(n); ++k) {
        const double p = pop.profit(n, foldable_mask(k), point);
        if (detail::strictly_better(p, best_profit)) {
            best = k;
            best_profit = p;
        }
    }
    return best;
}

struct EquilibriumResult {
    LatticePoint point;
    std::vector<LatticePoint> trajectory;  // starting point first
    std::size_t rounds = 0;
    bool monotone = true;                  // depths never fell between rounds
};

/// Simultaneous best-response sweeps from every firm offering only its top
/// product. With monotone best responses the depths rise to the smallest
/// equilibrium. Throws if no fixed point is reached within `max_rounds`
/// (possible only when best responses are not monotone).
inline EquilibriumResult find_equilibrium(const ConsumerPopulation& pop, std::size_t max_rounds = 1000) {
    const std::size_t N = pop.firm_count();
    EquilibriumResult r;
    r.point.depths.assign(N, 1);
    r.trajectory.push_back(r.point);
    for (; r.rounds < max_rounds; ++r.rounds) {
        LatticePoint next;
        next.depths.resize(N);
        for (std::size_t n = 0; n < N; ++n) next.depths[n] = best_response(pop, n, r.point);
        if (next == r.point) return r;
        if (!r.point.leq(next)) r.monotone = false;
        r.point = std::move(next);
        r.trajectory.push_back(r.point);
    }
    throw NumericalError("best-response iteration did not reach a fixed point in " +
                         std::to_string(max_rounds) + " rounds");
}

inline EquilibriumResult find_equilibrium(const CompetitionInstance& inst) {
    return find_equilibrium(ConsumerPopulation::representative(inst));
}

struct Deviation {
    std::size_t firm = 0;
    std::uint64_t mask = 0;  // deviating own subset
    bool foldable = false;
    double gain = 0.0;       // profit increase over the candidate point
};

struct NashReport {
    bool is_nash = true;
    std::vector<Deviation> deviations;  // the most profitable deviation per firm, if any
};

inline constexpr std::size_t kMaxSubsetCheckProducts = 12;

/// Checks unilateral foldable deviations for every firm; with `all_subsets`,
/// every own subset as well (firms with at most 12 products).
inline NashReport is_nash(const ConsumerPopulation& pop, const LatticePoint& point, bool all_subsets = false) {
    detail::require(point.depths.size() == pop.firm_count(), "is_nash: one depth per firm required");
    NashReport rep;
    for (std::size_t n = 0; n < pop.firm_count(); ++n) {
        detail::require(point.depths[n] >= 1 && point.depths[n] <= pop.product_count(n),
                        "is_nash: depth out of range");
        const double current = pop.profit(n, foldable_mask(point.depths[n]), point);
        Deviation best{n, 0, false, 0.0};
        auto consider = [&](std::uint64_t mask, double profit, bool foldable) {
            if (detail::strictly_better(profit, current) && profit - current > best.gain) {
                best = {n, mask, foldable, profit - current};
            }
        };
        for (std::size_t k = 1; k <= pop.product_count(n); ++k) {
            consider(foldable_mask(k), pop.profit(n, foldable_mask(k), point), true);
        }
        if (all_subsets) {
            detail::require(pop.product_count(n) <= kMaxSubsetCheckProducts,
                            "is_nash: all-subset check limited to 12 products per firm");
            const auto profits = pop.subset_profits(n, point);
            for (std::uint64_t mask = 1; mask < profits.size(); ++mask) {
                const bool foldable = (mask & (mask + 1)) == 0;
                if (!foldable) consider(mask, profits[mask], false);
            }
        }
        if (best.gain > 0.0) {
            rep.is_nash = false;
            rep.deviations.push_back(best);
        }
    }
    return rep;
}

/// Every lattice point passing the foldable Nash check, in lexicographic
/// order. Exhaustive; meant for small instances.
inline std::vector<LatticePoint> nash_points(const ConsumerPopulation& pop) {
    const std::size_t N = pop.firm_count();
    std::vector<LatticePoint> out;
    LatticePoint p;
    p.depths.assign(N, 1);
    while (true) {
        if (is_nash(pop, p).is_nash) out.push_back(p);
        std::size_t n = N;
        while (n > 0) {
            --n;
            if (p.depths[n] < pop.product_count(n)) {
                ++p.depths[n];
                break;
            }
            p.depths[n] = 1;
            if (n == 0) return out;
        }
        if (N == 0) return out;
    }
}

struct RandomCoefLoss {
    EquilibriumResult equilibrium;       // foldable-restricted equilibrium
    std::vector<double> foldable_best;   // per firm
    std::vector<double> overall_best;    // per firm, all own subsets
    std::vector<double> loss;            // 1 - foldable_best / overall_best
    std::vector<bool> best_has_top;      // best subset contains the top-margin product
};

/// Per-firm profit loss from restricting to foldable menus when consumers
/// draw random tastes; competitors sit at the foldable-restricted
/// equilibrium. A subset only counts as better when it beats the foldable
/// best by more than the profit tie tolerance.
inline RandomCoefLoss foldable_loss_random_coef(const CompetitionInstance& inst, const RandomCoefSpec& spec) {
    const auto pop = ConsumerPopulation::random_coef(inst, spec);
    RandomCoefLoss out;
    out.equilibrium = find_equilibrium(pop);
    for (std::size_t n = 0; n < pop.firm_count(); ++n) {
        detail::require(pop.product_count(n) <= kMaxSubsetCheckProducts,
                        "random-coefficient loss needs at most 12 products per firm");
        const auto profits = pop.subset_profits(n, out.equilibrium.point);
        double fold = 0.0, all = 0.0;
        std::uint64_t all_mask = 0;
        for (std::uint64_t mask = 1; mask < profits.size(); ++mask) {
            if ((mask & (mask + 1)) == 0) fold = std::max(fold, profits[mask]);
            if (profits[mask] > all) {
                all = profits[mask];
                all_mask = mask;
            }
        }
        double loss = 0.0;
        if (detail::strictly_better(all, fold) && all > 0.0) loss = std::clamp(1.0 - fold / all, 0.0, 1.0);
        out.foldable_best.push_back(fold);
        out.overall_best.push_back(std::max(all, fold));
        out.loss.push_back(loss);
        out.best_has_top.push_back((all_mask & 1U) != 0 || all == 0.0);
    }
    return out;
}

/// Monopoly points of sale drawn from a fitted panel: each market gets
/// `points_per_market` outlets whose income is drawn from the market's
/// lognormal, alpha_i = theta / income_i, and the fitted utilities.
struct PointOfSaleConfig {
    std::vector<double> dispersions{0.0, 0.5, 1.0, 2.0, 5.0};
    std::vector<std::size_t> draw_counts{1000, 2000};
    std::size_t points_per_market = 20;
    std::uint64_t seed = 11;
    std::size_t threads = 1;
};

struct LossSweepRow {
    double dispersion = 0.0;
    std::size_t draws = 0;
    std::size_t points = 0;
    double mean_ratio = 1.0;   // mean of foldable best / overall best
    double loss = 0.0;         // 1 - mean_ratio
    double max_loss = 0.0;     // worst single point of sale
    double share_foldable_optimal = 1.0;
};

inline std::vector<LossSweepRow> point_of_sale_loss_sweep(const FittedModel& fm, const Panel& panel,
                                                          const PointOfSaleConfig& cfg) {
    panel.validate();
    fm.check(panel);
    detail::require(cfg.points_per_market >= 1, "loss sweep: need at least one point of sale per market");
    // Outlet incomes are drawn once and shared by every sweep cell.
    Rng rng(cfg.seed);
    struct Outlet {
        std::size_t market;
        double alpha;
        std::uint64_t seed;
    };
    std::vector<Outlet> outlets;
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        for (std::size_t i = 0; i < cfg.points_per_market; ++i) {
            const double income = std::exp(m.income_log_mean + m.income_log_sd * rng.normal());
            outlets.push_back({t, fm.theta / income, rng.derive_seed()});
        }
    }

    std::vector<LossSweepRow> rows;
    for (double a : cfg.dispersions) {
        for (std::size_t n : cfg.draw_counts) {
            std::vector<double> ratio(outlets.size()), loss(outlets.size());
            parallel_for(outlets.size(), cfg.threads, [&](std::size_t i) {
                const auto& o = outlets[i];
                const auto& m = panel.markets[o.market];
                CompetitionInstance inst{{FirmProfile{"seller", m.line}}, {fm.gamma[o.market]}, o.alpha};
                const auto r = foldable_loss_random_coef(inst, {n, a, o.seed});
                ratio[i] = r.overall_best[0] > 0.0 ? r.foldable_best[0] / r.overall_best[0] : 1.0;
                loss[i] = r.loss[0];
            });
            LossSweepRow row;
            row.dispersion = a;
            row.draws = n;
            row.points = outlets.size();
            double sum = 0.0;
            std::size_t optimal = 0;
            for (std::size_t i = 0; i < outlets.size(); ++i) {
                sum += ratio[i];
                row.max_loss = std::max(row.max_loss, loss[i]);
                if (loss[i] == 0.0) ++optimal;
            }
            row.mean_ratio = sum / static_cast<double>(outlets.size());
            row.loss = std::clamp(1.0 - row.mean_ratio, 0.0, 1.0);
            row.share_foldable_optimal = static_cast<double>(optimal) / static_cast<double>(outlets.size());
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace foldmenu

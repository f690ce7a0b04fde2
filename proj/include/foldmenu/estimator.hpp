#pragma once

// Nested fixed-point GMM: for each trial theta, invert observed shares to
// mean utilities, project them on fixed-utility dummies, and square the
// single moment between the residual demand shocks and real prices.

#include "foldmenu/panel.hpp"
#include "foldmenu/parallel.hpp"
#include "foldmenu/rng.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace foldmenu {

enum class DemandModel {
    kFoldable,       // endogenous menus via cutoffs
    kStandardLogit,  // every consumer sees the full line
};

enum class DummyStructure {
    kTier,       // one fixed utility per tier
    kTierGroup,  // one per (tier, group) cell
};

inline std::string to_string(DemandModel m) {
    return m == DemandModel::kFoldable ? "foldable" : "standard";
}

inline std::string to_string(DummyStructure d) {
    return d == DummyStructure::kTier ? "tier" : "tier_group";
}

struct EstimationConfig {
    double contraction_tol = 1e-6;
    int max_contraction_iter = 1000;
    double theta_lo = 0.2;
    double theta_hi = 10.0;
    DummyStructure dummy_structure = DummyStructure::kTier;
    std::size_t bootstrap_reps = 0;
    std::uint64_t seed = 7;
    std::size_t n_draws = kDefaultSimDraws;
    std::size_t n_normal_draws = kDefaultStandardLogitDraws;
    std::size_t grid_points = 10;      // coarse log-spaced scan before the local search
    int search_bits = 16;              // relative precision of the local search, in bits
    bool anderson = true;              // accelerate the share contraction
    std::size_t anderson_memory = 5;
    double divergence_bound = 40.0;    // plain iterates this far from the start count as diverged
    int stall_window = 60;             // iterations without a new best residual before giving up
    std::size_t threads = 1;

    void validate() const {
        detail::require(contraction_tol > 0.0, "estimation: contraction tolerance must be > 0");
        detail::require(max_contraction_iter > 0, "estimation: need at least one contraction iteration");
        detail::require(theta_lo > 0.0 && theta_lo < theta_hi, "estimation: need 0 < theta_lo < theta_hi");
        detail::require(n_draws > 0 && n_normal_draws > 0, "estimation: draw counts must be positive");
        detail::require(grid_points >= 3, "estimation: need at least 3 grid points");
    }

    [[nodiscard]] DrawSet draws() const { return DrawSet::make(seed, n_draws, n_normal_draws); }
};

/// Inversion did not converge for some markets at a given theta.
class InversionFailure : public NumericalError {
public:
    InversionFailure(double theta, std::vector<std::string> markets)
        : NumericalError(describe(theta, markets)), theta_(theta), markets_(std::move(markets)) {}

    [[nodiscard]] double theta() const noexcept { return theta_; }
    [[nodiscard]] const std::vector<std::string>& markets() const noexcept { return markets_; }

private:
    static std::string describe(double theta, const std::vector<std::string>& markets) {
        std::ostringstream os;
        os << "share inversion failed at theta=" << theta << " in " << markets.size() << " market(s):";
        for (std::size_t k = 0; k < markets.size() && k < 10; ++k) os << ' ' << markets[k];
        if (markets.size() > 10) os << " ...";
        return os.str();
    }

    double theta_;
    std::vector<std::string> markets_;
};

/// Model-implied shares of one market at (gamma, theta).
inline MarketShares model_shares(DemandModel model, std::span<const double> gamma, const Market& m,
                                 double theta, const DrawSet& draws) {
    if (model == DemandModel::kFoldable) return predicted_shares(gamma, m.line, m.taste(theta), draws);
    return standard_logit_shares(gamma, m.line, m.taste(theta), draws.normals);
}

struct MarketInversion {
    std::vector<double> gamma;
    int iterations = 0;
    double last_step = 0.0;  // sup-norm of the final update
    bool converged = false;
};

struct InversionResult {
    std::vector<std::vector<double>> gamma;  // per market
    std::vector<int> iterations;
    std::vector<double> last_step;

    [[nodiscard]] int max_iterations() const {
        return iterations.empty() ? 0 : *std::max_element(iterations.begin(), iterations.end());
    }
    [[nodiscard]] long total_iterations() const {
        long s = 0;
        for (int k : iterations) s += k;
        return s;
    }
};

namespace detail {

/// The update map gamma -> gamma + ln s_obs - ln s(gamma). Returns false if
/// a predicted share is zero or non-finite.
using ShareFn = std::function<MarketShares(std::span<const double>)>;

inline bool contraction_step(const ShareFn& shares, std::span<const double> log_obs,
                             const Eigen::VectorXd& gamma, Eigen::VectorXd& image) {
    const auto s = shares(std::span<const double>(gamma.data(), gamma.size()));
    for (std::size_t j = 0; j < log_obs.size(); ++j) {
        const double ls = std::log(s.inside[j]);
        if (!std::isfinite(ls)) return false;
        image[static_cast<Eigen::Index>(j)] = gamma[static_cast<Eigen::Index>(j)] + log_obs[j] - ls;
    }
    return image.allFinite();
}

/// Iterates the contraction from `start` until the sup-norm update falls
/// below tolerance; returns the image of the last accepted point. With
/// `anderson`, each new point mixes recent images (type-II Anderson
/// mixing), falling back to the plain update if the residual grows.
inline MarketInversion iterate_contraction(const ShareFn& shares, const Market& m,
                                           const EstimationConfig& cfg, std::span<const double> start,
                                           bool anderson) {
    const auto n = static_cast<Eigen::Index>(m.size());
    std::vector<double> log_obs(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) log_obs[j] = std::log(m.observed_shares[j]);

    Eigen::VectorXd x(n);
    for (Eigen::Index j = 0; j < n; ++j) x[j] = start[static_cast<std::size_t>(j)];
    const Eigen::VectorXd x0 = x;
    Eigen::VectorXd gx(n);

    const auto memory = static_cast<Eigen::Index>(std::max<std::size_t>(1, cfg.anderson_memory));
    std::vector<Eigen::VectorXd> dx_hist, df_hist;
    Eigen::VectorXd prev_x, prev_f;
    double best_norm = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x = x;
    int best_it = 0;

    MarketInversion out;
    for (int it = 1; it <= cfg.max_contraction_iter; ++it) {
        out.iterations = it;
        bool ok = contraction_step(shares, log_obs, x, gx);
        Eigen::VectorXd f = gx - x;
        double norm = ok ? f.lpNorm<Eigen::Infinity>() : std::numeric_limits<double>::infinity();

        const bool wild = !(norm < 10.0 * best_norm) ||
                          (x - x0).lpNorm<Eigen::Infinity>() > cfg.divergence_bound;
        if (anderson && it > 1 && wild) {
            // Mixing overshot: restart the history from the best point.
            dx_hist.clear();
            df_hist.clear();
            prev_x.resize(0);
            x = best_x;
            ok = contraction_step(shares, log_obs, x, gx);
            f = gx - x;
            norm = ok ? f.lpNorm<Eigen::Infinity>() : std::numeric_limits<double>::infinity();
        }
        if (!ok) return out;

        out.last_step = norm;
        if (norm < cfg.contraction_tol) {
            out.gamma.assign(gx.data(), gx.data() + n);
            out.converged = true;
            return out;
        }
        if ((x - x0).lpNorm<Eigen::Infinity>() > cfg.divergence_bound) return out;
        if (norm < best_norm) {
            best_norm = norm;
            best_x = x;
            best_it = it;
        } else if (it - best_it > cfg.stall_window) {
            return out;
        }

        if (!anderson) {
            x = gx;
            continue;
        }
        if (prev_x.size() == n) {
            dx_hist.push_back(x - prev_x);
            df_hist.push_back(f - prev_f);
            if (static_cast<Eigen::Index>(dx_hist.size()) > memory) {
                dx_hist.erase(dx_hist.begin());
                df_hist.erase(df_hist.begin());
            }
        }
        prev_x = x;
        prev_f = f;
        if (dx_hist.empty()) {
            x = gx;
            continue;
        }
        const auto k = static_cast<Eigen::Index>(df_hist.size());
        Eigen::MatrixXd dF(n, k), dG(n, k);
        for (Eigen::Index c = 0; c < k; ++c) {
            dF.col(c) = df_hist[static_cast<std::size_t>(c)];
            dG.col(c) = dx_hist[static_cast<std::size_t>(c)] + df_hist[static_cast<std::size_t>(c)];
        }
        const Eigen::VectorXd coef = dF.colPivHouseholderQr().solve(f);
        Eigen::VectorXd next = gx - dG * coef;
        x = next.allFinite() ? next : gx;
    }
    return out;
}

/// Anderson mixing can stall where the plain map still converges (the
/// residual of the plain map is not monotone); retry without it then.
inline MarketInversion invert_market(DemandModel model, const Market& m, double theta,
                                     const DrawSet& draws, const EstimationConfig& cfg,
                                     std::span<const double> start) {
    ShareFn shares;
    std::optional<StandardLogitKernel> kernel;
    if (model == DemandModel::kFoldable) {
        shares = [&](std::span<const double> g) { return predicted_shares(g, m.line, m.taste(theta), draws); };
    } else {
        kernel.emplace(m.line, m.taste(theta), draws.normals);
        shares = [&](std::span<const double> g) { return (*kernel)(g); };
    }
    auto out = iterate_contraction(shares, m, cfg, start, cfg.anderson);
    if (out.converged || !cfg.anderson) return out;
    const int spent = out.iterations;
    out = iterate_contraction(shares, m, cfg, start, false);
    out.iterations += spent;
    return out;
}

}  // namespace detail

/// Recovers per-market mean utilities matching observed shares at `theta`.
/// `warm_start`, when given, replaces the log(s_j) - log(s_0) starting
/// point market by market. Throws InversionFailure naming the markets that
/// did not converge; with `fail_fast` the remaining markets are skipped
/// after the first failure, so the list may be incomplete.
inline InversionResult invert_shares(const Panel& panel, double theta, const DrawSet& draws,
                                     const EstimationConfig& cfg,
                                     DemandModel model = DemandModel::kFoldable,
                                     const std::vector<std::vector<double>>* warm_start = nullptr,
                                     bool fail_fast = false) {
    panel.validate();
    cfg.validate();
    detail::require(theta > 0.0, "invert_shares: theta must be > 0");
    if (model == DemandModel::kFoldable) {
        for (const auto& m : panel.markets) m.line.require_strict();
    }

    const std::size_t n = panel.size();
    std::vector<MarketInversion> per(n);
    std::vector<char> attempted(n, 0);
    std::atomic<bool> abort{false};
    parallel_for(n, cfg.threads, [&](std::size_t t) {
        if (abort.load(std::memory_order_relaxed)) return;
        attempted[t] = 1;
        const auto& m = panel.markets[t];
        std::vector<double> start(m.size());
        const double log_out = std::log(m.outside_share());
        for (std::size_t j = 0; j < m.size(); ++j) start[j] = std::log(m.observed_shares[j]) - log_out;
        if (warm_start != nullptr && t < warm_start->size() && (*warm_start)[t].size() == m.size()) {
            per[t] = detail::invert_market(model, m, theta, draws, cfg, (*warm_start)[t]);
            // A warm start far from the new fixed point can stall; fall back
            // to the default start before declaring failure.
            if (per[t].converged) return;
        }
        per[t] = detail::invert_market(model, m, theta, draws, cfg, start);
        if (fail_fast && !per[t].converged) abort.store(true, std::memory_order_relaxed);
    });

    std::vector<std::string> failed;
    InversionResult out;
    for (std::size_t t = 0; t < n; ++t) {
        if (attempted[t] && !per[t].converged) failed.push_back(panel.markets[t].id);
        out.gamma.push_back(std::move(per[t].gamma));
        out.iterations.push_back(per[t].iterations);
        out.last_step.push_back(per[t].last_step);
    }
    if (!failed.empty() || abort.load()) throw InversionFailure(theta, std::move(failed));
    return out;
}

/// One fixed-utility dummy coefficient.
struct FixedUtility {
    std::string tier;
    std::string group;  // empty under tier-only dummies
    double value = 0.0;
};

struct GmmEvaluation {
    double theta = 0.0;
    double moment = 0.0;
    double objective = 0.0;
    std::vector<FixedUtility> xi;
    std::vector<std::vector<double>> gamma;     // per market, line order
    std::vector<std::vector<double>> delta_xi;  // per market, line order
    InversionResult inversion;
};

namespace detail {

inline std::pair<std::string, std::string> cell_of(const Market& m, std::size_t j, DummyStructure d) {
    return {m.line[j].id, d == DummyStructure::kTierGroup ? m.group : std::string{}};
}

}  // namespace detail

/// Least squares on a saturated set of cell dummies: the coefficients are
/// cell means and the residuals are the demand shocks.
inline void project_on_dummies(const Panel& panel, DummyStructure dummies, GmmEvaluation& ev) {
    std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> cells;
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        for (std::size_t j = 0; j < m.size(); ++j) {
            auto& c = cells[detail::cell_of(m, j, dummies)];
            c.first += ev.gamma[t][j];
            c.second += 1;
        }
    }
    std::map<std::pair<std::string, std::string>, double> mean;
    ev.xi.clear();
    for (const auto& [key, acc] : cells) {
        mean[key] = acc.first / static_cast<double>(acc.second);
        ev.xi.push_back({key.first, key.second, mean[key]});
    }
    ev.delta_xi.assign(panel.size(), {});
    ev.moment = 0.0;
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        ev.delta_xi[t].resize(m.size());
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double r = ev.gamma[t][j] - mean[detail::cell_of(m, j, dummies)];
            ev.delta_xi[t][j] = r;
            ev.moment += r * m.line.price(j);
        }
    }
    ev.objective = ev.moment * ev.moment;
}

/// Full objective evaluation: inversion, dummy projection, squared moment.
inline GmmEvaluation evaluate_gmm(double theta, const Panel& panel, const EstimationConfig& cfg,
                                  const DrawSet& draws, DemandModel model = DemandModel::kFoldable,
                                  const std::vector<std::vector<double>>* warm_start = nullptr,
                                  bool fail_fast = false) {
    GmmEvaluation ev;
    ev.theta = theta;
    ev.inversion = invert_shares(panel, theta, draws, cfg, model, warm_start, fail_fast);
    ev.gamma = ev.inversion.gamma;
    project_on_dummies(panel, cfg.dummy_structure, ev);
    return ev;
}

/// (sum over market-tiers of delta_xi * real price)^2.
inline double gmm_objective(double theta, const Panel& panel, const EstimationConfig& cfg,
                            const DrawSet& draws, DemandModel model = DemandModel::kFoldable) {
    return evaluate_gmm(theta, panel, cfg, draws, model).objective;
}

struct BootstrapSummary {
    std::size_t reps = 0;
    std::size_t failed = 0;
    double theta_se = 0.0;
    std::vector<double> theta_draws;
    std::vector<FixedUtility> xi_se;  // standard deviation per dummy cell
};

struct EstimationResult {
    DemandModel model = DemandModel::kFoldable;
    double theta_hat = 0.0;
    std::vector<FixedUtility> xi_hat;
    std::vector<std::vector<double>> gamma;
    std::vector<std::vector<double>> delta_xi;
    double objective_value = 0.0;
    double moment = 0.0;
    int contraction_iterations = 0;  // max over markets at theta_hat
    std::size_t objective_evaluations = 0;
    std::size_t failed_evaluations = 0;
    bool at_bracket_edge = false;
    std::vector<std::pair<double, double>> trace;  // (theta, objective); failures as +inf
    std::optional<BootstrapSummary> bootstrap;
};

namespace detail {

/// Objective with failures mapped to +inf and warm starts from the nearest
/// converged theta.
inline constexpr double kWarmStartRange = 0.1;  // in log theta

class ObjectiveCache {
public:
    ObjectiveCache(const Panel& panel, const EstimationConfig& cfg, const DrawSet& draws, DemandModel model)
        : panel_(panel), cfg_(cfg), draws_(draws), model_(model) {}

    double operator()(double theta) {
        for (const auto& [th, v] : trace_) {
            if (th == theta) return v;
        }
        // Warm starts only pay off close by; from a distant theta the
        // contraction can stall and then has to be restarted cold.
        const std::vector<std::vector<double>>* warm = nullptr;
        double best_gap = kWarmStartRange;
        for (const auto& [th, gamma] : solved_) {
            const double gap = std::abs(std::log(th / theta));
            if (gap < best_gap) {
                best_gap = gap;
                warm = &gamma;
            }
        }
        ++evaluations_;
        double value;
        try {
            auto ev = evaluate_gmm(theta, panel_, cfg_, draws_, model_, warm, /*fail_fast=*/true);
            value = ev.objective;
            solved_.emplace_back(theta, ev.gamma);
            if (!best_ || value < best_->objective) best_ = std::move(ev);
        } catch (const InversionFailure&) {
            ++failures_;
            value = std::numeric_limits<double>::infinity();
        }
        trace_.emplace_back(theta, value);
        return value;
    }

    [[nodiscard]] const std::optional<GmmEvaluation>& best() const { return best_; }
    [[nodiscard]] std::size_t evaluations() const { return evaluations_; }
    [[nodiscard]] std::size_t failures() const { return failures_; }
    [[nodiscard]] const std::vector<std::pair<double, double>>& trace() const { return trace_; }

private:
    const Panel& panel_;
    const EstimationConfig& cfg_;
    const DrawSet& draws_;
    DemandModel model_;
    std::vector<std::pair<double, std::vector<std::vector<double>>>> solved_;
    std::optional<GmmEvaluation> best_;
    std::size_t evaluations_ = 0;
    std::size_t failures_ = 0;
    std::vector<std::pair<double, double>> trace_;
};

inline constexpr double kFailurePenalty = 1e100;

}  // namespace detail

/// Minimizes the GMM objective over [theta_lo, theta_hi]: a log-spaced grid
/// locates the best basin (θ values where inversion fails score +inf), then
/// Brent's method refines inside the neighbouring grid cells.
inline EstimationResult estimate(const Panel& panel, const EstimationConfig& cfg,
                                 DemandModel model = DemandModel::kFoldable) {
    panel.validate();
    cfg.validate();
    const DrawSet draws = cfg.draws();
    detail::ObjectiveCache objective(panel, cfg, draws, model);

    const std::size_t g = cfg.grid_points;
    std::vector<double> grid(g), value(g);
    const double step = std::log(cfg.theta_hi / cfg.theta_lo) / static_cast<double>(g - 1);
    for (std::size_t k = 0; k < g; ++k) {
        grid[k] = k + 1 == g ? cfg.theta_hi : cfg.theta_lo * std::exp(step * static_cast<double>(k));
    }
    // Scan from the top: inversion is most reliable at large theta, and the
    // warm starts then walk down towards the failure region.
    for (std::size_t k = g; k-- > 0;) value[k] = objective(grid[k]);

    const auto best_k = static_cast<std::size_t>(std::min_element(value.begin(), value.end()) - value.begin());
    if (!std::isfinite(value[best_k])) {
        throw NumericalError("share inversion failed at every grid point in [" + std::to_string(cfg.theta_lo) +
                             ", " + std::to_string(cfg.theta_hi) + "]");
    }
    const double lo = grid[best_k == 0 ? 0 : best_k - 1];
    const double hi = grid[std::min(best_k + 1, g - 1)];
    auto finite = [&](double th) {
        const double v = objective(th);
        return std::isfinite(v) ? v : detail::kFailurePenalty;
    };
    std::uintmax_t max_iter = 100;
    boost::math::tools::brent_find_minima(finite, lo, hi, cfg.search_bits, max_iter);

    const auto& best = objective.best();
    EstimationResult r;
    r.model = model;
    r.theta_hat = best->theta;
    r.xi_hat = best->xi;
    r.gamma = best->gamma;
    r.delta_xi = best->delta_xi;
    r.objective_value = best->objective;
    r.moment = best->moment;
    r.contraction_iterations = best->inversion.max_iterations();
    r.objective_evaluations = objective.evaluations();
    r.failed_evaluations = objective.failures();
    r.trace = objective.trace();
    const double edge_tol = 1e-3 * r.theta_hat;
    r.at_bracket_edge = r.theta_hat - cfg.theta_lo < edge_tol || cfg.theta_hi - r.theta_hat < edge_tol;
    return r;
}

inline EstimationResult estimate_standard_logit(const Panel& panel, const EstimationConfig& cfg) {
    return estimate(panel, cfg, DemandModel::kStandardLogit);
}

/// Market-level bootstrap: resample whole markets with replacement,
/// re-estimate, and report the spread of the estimates. Replications whose
/// search fails are dropped and counted.
inline BootstrapSummary bootstrap_se(const Panel& panel, const EstimationConfig& cfg,
                                     DemandModel model = DemandModel::kFoldable) {
    detail::require(cfg.bootstrap_reps > 0, "bootstrap needs at least one replication");
    panel.validate();
    Rng rng(cfg.seed ^ 0xb0075724a9ULL);
    BootstrapSummary out;
    out.reps = cfg.bootstrap_reps;
    std::map<std::pair<std::string, std::string>, std::vector<double>> xi_draws;

    for (std::size_t r = 0; r < cfg.bootstrap_reps; ++r) {
        Panel sample;
        sample.markets.reserve(panel.size());
        for (std::size_t t = 0; t < panel.size(); ++t) {
            Market m = panel.markets[rng.index(panel.size())];
            m.id += "#" + std::to_string(t);
            sample.markets.push_back(std::move(m));
        }
        try {
            const auto est = estimate(sample, cfg, model);
            out.theta_draws.push_back(est.theta_hat);
            for (const auto& x : est.xi_hat) xi_draws[{x.tier, x.group}].push_back(x.value);
        } catch (const NumericalError&) {
            ++out.failed;
        }
    }

    auto sd = [](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::sqrt(ss / static_cast<double>(v.size() - 1));
    };
    out.theta_se = sd(out.theta_draws);
    for (const auto& [key, v] : xi_draws) out.xi_se.push_back({key.first, key.second, sd(v)});
    return out;
}

}  // namespace foldmenu

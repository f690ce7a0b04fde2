// foldmenu: simulate | estimate | analyze | compete
//
// Every subcommand reads an optional JSON config, lets flags override it,
// writes its outputs plus the resolved config (run_config.json) into --out.
// Exit codes: 0 success, 1 input error, 2 numerical failure (see
// diagnostics.json in the output directory).

#include "foldmenu/competition.hpp"
#include "foldmenu/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using foldmenu::io::json;

namespace {

struct Common {
    std::string config_path;
    std::string out_dir = "out";
    std::size_t threads = 1;
};

json load_config(const Common& c) {
    if (c.config_path.empty()) return json::object();
    auto j = foldmenu::io::read_json_file(c.config_path);
    if (!j.is_object()) throw foldmenu::InputError(c.config_path + ": config must be a JSON object");
    return j;
}

json block(const json& cfg, const char* name) {
    if (!cfg.contains(name)) return json::object();
    const auto& b = cfg.at(name);
    if (!b.is_object()) throw foldmenu::InputError(std::string("config block '") + name + "' must be an object");
    return b;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const double v = foldmenu::io::parse_double(foldmenu::io::detail::trim(item), what);
        out.push_back(static_cast<T>(v));
    }
    if (out.empty()) throw foldmenu::InputError(std::string(what) + ": empty list");
    return out;
}

void write_run_config(const Common& c, const std::string& command, json resolved) {
    resolved["command"] = command;
    resolved["threads"] = c.threads;
    foldmenu::io::write_json_file(fs::path(c.out_dir) / "run_config.json", resolved);
}

// ---------------------------------------------------------------------------

struct SimulateOpts {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> markets;
    std::optional<double> theta;
};

void cmd_simulate(const Common& c, const SimulateOpts& o) {
    const auto cfg = load_config(c);
    foldmenu::DgpConfig dgp;
    foldmenu::io::from_json(block(cfg, "dgp"), dgp);
    if (o.seed) dgp.seed = *o.seed;
    if (o.markets) dgp.n_markets = *o.markets;
    if (o.theta) dgp.theta_true = *o.theta;

    const auto sp = foldmenu::generate_panel(dgp);
    const fs::path out(c.out_dir);
    foldmenu::io::write_panel_file(out / "panel.csv", sp.panel);
    foldmenu::io::write_json_file(out / "truth.json", foldmenu::io::truth_to_json(sp));
    write_run_config(c, "simulate", {{"dgp", foldmenu::io::to_json(dgp)}});
    std::cout << "wrote " << sp.panel.size() << " markets to " << (out / "panel.csv").string() << '\n';
}

// ---------------------------------------------------------------------------

struct EstimateOpts {
    std::string panel;
    std::string model = "foldable";
    std::optional<std::size_t> bootstrap;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> dummies;
};

void cmd_estimate(const Common& c, const EstimateOpts& o) {
    const auto cfg = load_config(c);
    foldmenu::EstimationConfig ec;
    foldmenu::io::from_json(block(cfg, "estimation"), ec);
    if (o.bootstrap) ec.bootstrap_reps = *o.bootstrap;
    if (o.seed) ec.seed = *o.seed;
    if (o.dummies) ec.dummy_structure = foldmenu::io::parse_dummy_structure(*o.dummies);
    ec.threads = c.threads;
    ec.validate();

    std::string panel_path = o.panel;
    if (panel_path.empty()) panel_path = block(cfg, "io").value("panel", std::string());
    if (panel_path.empty()) throw foldmenu::InputError("estimate: no panel given (--panel or io.panel)");
    const auto panel = foldmenu::io::read_panel_file(panel_path);

    foldmenu::DemandModel model;
    if (o.model == "foldable") {
        model = foldmenu::DemandModel::kFoldable;
    } else if (o.model == "standard") {
        model = foldmenu::DemandModel::kStandardLogit;
    } else {
        throw foldmenu::InputError("estimate: --model must be foldable or standard");
    }

    auto result = foldmenu::estimate(panel, ec, model);
    if (ec.bootstrap_reps > 0) result.bootstrap = foldmenu::bootstrap_se(panel, ec, model);

    const fs::path out(c.out_dir);
    foldmenu::io::write_json_file(out / "result.json", foldmenu::io::result_to_json(result, ec, panel));
    write_run_config(c, "estimate",
                     {{"estimation", foldmenu::io::to_json(ec)}, {"model", o.model}, {"panel", panel_path}});
    std::cout << "theta_hat " << result.theta_hat << (result.at_bracket_edge ? " (at bracket edge)" : "") << '\n';
    for (const auto& x : result.xi_hat) {
        std::cout << "xi[" << x.tier << (x.group.empty() ? "" : "/" + x.group) << "] " << x.value << '\n';
    }
    if (result.bootstrap) std::cout << "theta_se " << result.bootstrap->theta_se << '\n';
}

// ---------------------------------------------------------------------------

struct AnalyzeOpts {
    std::string panel;
    std::string result;
    bool elasticities = false;
    std::string tax;
    bool full_availability = false;
    bool assortment_dist = false;
    std::optional<double> price_pct;
};

void cmd_analyze(const Common& c, const AnalyzeOpts& o) {
    const auto cfg = load_config(c);
    const auto ab = block(cfg, "analysis");
    const auto iob = block(cfg, "io");
    const std::string panel_path = o.panel.empty() ? iob.value("panel", std::string()) : o.panel;
    const std::string result_path = o.result.empty() ? iob.value("result", std::string()) : o.result;
    if (panel_path.empty()) throw foldmenu::InputError("analyze: no panel given (--panel or io.panel)");
    if (result_path.empty() || !fs::exists(result_path)) {
        throw foldmenu::InputError("analyze: estimation result not found ('" + result_path +
                                   "'); run 'estimate' first");
    }
    const auto panel = foldmenu::io::read_panel_file(panel_path);
    auto loaded = foldmenu::io::load_result(foldmenu::io::read_json_file(result_path), panel);
    loaded.fitted.threads = c.threads;
    const auto& fm = loaded.fitted;
    const bool standard = loaded.model == foldmenu::to_string(foldmenu::DemandModel::kStandardLogit);
    const auto mode = standard ? foldmenu::ResponseMode::kStandardLogit : foldmenu::ResponseMode::kAdjusted;
    const double pct = o.price_pct.value_or(ab.value("price_change_pct", 1.0));

    std::vector<double> rates;
    if (!o.tax.empty()) {
        for (double r : parse_list<double>(o.tax, "--tax")) rates.push_back(r / 100.0);
    } else if (ab.contains("tax_rates_pct")) {
        for (double r : ab.at("tax_rates_pct").get<std::vector<double>>()) rates.push_back(r / 100.0);
    }
    std::optional<std::vector<double>> unit_tax;
    if (ab.contains("baseline_unit_tax")) unit_tax = ab.at("baseline_unit_tax").get<std::vector<double>>();

    const bool any = o.elasticities || !rates.empty() || o.full_availability || o.assortment_dist;
    if (!any) throw foldmenu::InputError("analyze: choose at least one of --elasticities, --tax, "
                                         "--full-availability, --assortment-dist");
    const fs::path out(c.out_dir);

    if (o.elasticities) {
        foldmenu::io::TidyTable t;
        if (standard) {
            const auto e = foldmenu::elasticities(fm, panel, mode, pct);
            t.add_matrix("elasticity_standard_logit", e.tiers, e.entries, "elasticity");
        } else {
            const auto d = foldmenu::decompose_elasticities(fm, panel, pct);
            t.add_matrix("elasticity_adjusted", d.adjusted.tiers, d.adjusted.entries, "elasticity");
            t.add_matrix("elasticity_fixed", d.fixed.tiers, d.fixed.entries, "elasticity");
            t.add_matrix("elasticity_adjustment", d.adjusted.tiers, d.adjustment, "elasticity");
            t.add_matrix("elasticity_closure", d.adjusted.tiers, d.closure, "closure");
            std::cout << "elasticity decomposition max |closure| " << d.max_abs_closure() << '\n';
        }
        t.write_file(out / "elasticities.csv");
    }
    if (!rates.empty()) {
        foldmenu::io::TidyTable t;
        for (double r : rates) {
            const auto rep = foldmenu::tax_counterfactual(fm, panel, r, mode, unit_tax ? &*unit_tax : nullptr);
            t.add_report(rep);
            std::cout << rep.scenario << ": total sales " << rep.total_sales_change_pct << "%, profit "
                      << rep.total_profit_change_pct << "%";
            if (rep.total_revenue_change_pct) std::cout << ", tax revenue " << *rep.total_revenue_change_pct << "%";
            std::cout << '\n';
            if (!rep.notice.empty()) std::cout << "  note: " << rep.notice << '\n';
        }
        t.write_file(out / "tax.csv");
    }
    if (o.full_availability) {
        if (standard) throw foldmenu::InputError("analyze: --full-availability needs a foldable-model result");
        foldmenu::io::TidyTable t;
        const auto rep = foldmenu::full_availability(fm, panel);
        t.add_report(rep);
        t.write_file(out / "full_availability.csv");
        std::cout << rep.scenario << ": total profit " << rep.total_profit_change_pct << "%, sales "
                  << rep.total_sales_change_pct << "%\n";
    }
    if (o.assortment_dist) {
        if (standard) throw foldmenu::InputError("analyze: --assortment-dist needs a foldable-model result");
        const auto d = foldmenu::assortment_distribution(fm, panel);
        auto f = foldmenu::io::open_output(out / "assortment_distribution.csv");
        f << "market_id,depth,mass\n";
        for (std::size_t t = 0; t < d.market_ids.size(); ++t) {
            for (std::size_t k = 0; k < d.mass[t].size(); ++k) {
                f << d.market_ids[t] << ',' << k + 1 << ',' << foldmenu::io::format_double(d.mass[t][k]) << '\n';
            }
        }
        for (std::size_t k = 0; k < d.mean_mass.size(); ++k) {
            f << "all," << k + 1 << ',' << foldmenu::io::format_double(d.mean_mass[k]) << '\n';
        }
    }
    json resolved{{"panel", panel_path},
                  {"result", result_path},
                  {"model", loaded.model},
                  {"price_change_pct", pct},
                  {"elasticities", o.elasticities},
                  {"full_availability", o.full_availability},
                  {"assortment_dist", o.assortment_dist}};
    json pr = json::array();
    for (double r : rates) pr.push_back(r * 100.0);
    resolved["tax_rates_pct"] = pr;
    if (unit_tax) resolved["baseline_unit_tax"] = *unit_tax;
    write_run_config(c, "analyze", {{"analysis", resolved}, {"estimation", foldmenu::io::to_json(loaded.config)}});
}

// ---------------------------------------------------------------------------

struct CompeteOpts {
    std::string random_coef;
    std::string panel;
    std::string result;
    std::optional<std::uint64_t> seed;
};

foldmenu::CompetitionInstance parse_instance(const json& cb) {
    foldmenu::CompetitionInstance inst;
    try {
        inst.alpha = cb.value("alpha", 1.0);
        for (const auto& f : cb.at("firms")) {
            std::vector<foldmenu::Product> products;
            std::vector<double> gamma;
            for (const auto& p : f.at("products")) {
                products.push_back({p.at("id").get<std::string>(), p.at("margin").get<double>(),
                                    p.at("price").get<double>()});
                gamma.push_back(p.at("gamma").get<double>());
            }
            // Order by margin, carrying utilities along.
            std::vector<std::size_t> idx(products.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return products[a].unit_margin > products[b].unit_margin;
            });
            std::vector<foldmenu::Product> sorted;
            std::vector<double> g;
            for (auto i : idx) {
                sorted.push_back(products[i]);
                g.push_back(gamma[i]);
            }
            inst.firms.push_back({f.at("id").get<std::string>(), foldmenu::ProductLine(std::move(sorted))});
            inst.gamma.push_back(std::move(g));
        }
    } catch (const json::exception& e) {
        throw foldmenu::InputError(std::string("competition config: ") + e.what());
    }
    inst.validate();
    return inst;
}

json point_json(const foldmenu::LatticePoint& p) { return p.depths; }

void cmd_compete(const Common& c, const CompeteOpts& o) {
    const auto cfg = load_config(c);
    const auto cb = block(cfg, "competition");
    const fs::path out(c.out_dir);
    json resolved = cb;
    bool did_something = false;

    if (cb.contains("firms")) {
        did_something = true;
        const auto inst = parse_instance(cb);
        const auto pop = foldmenu::ConsumerPopulation::representative(inst);
        const auto eq = foldmenu::find_equilibrium(pop);
        bool small = true;
        for (const auto& f : inst.firms) small = small && f.owned.size() <= foldmenu::kMaxSubsetCheckProducts;
        const auto nash = foldmenu::is_nash(pop, eq.point, small);
        json traj = json::array();
        for (const auto& p : eq.trajectory) traj.push_back(point_json(p));
        json firms = json::array();
        for (std::size_t n = 0; n < inst.firms.size(); ++n) {
            firms.push_back({{"firm_id", inst.firms[n].firm_id},
                             {"depth", eq.point.depths[n]},
                             {"profit", pop.profit(n, foldmenu::foldable_mask(eq.point.depths[n]), eq.point)}});
        }
        json devs = json::array();
        for (const auto& d : nash.deviations) {
            devs.push_back({{"firm", d.firm}, {"mask", d.mask}, {"foldable", d.foldable}, {"gain", d.gain}});
        }
        json eqj{{"equilibrium", point_json(eq.point)},
                 {"firms", firms},
                 {"rounds", eq.rounds},
                 {"monotone", eq.monotone},
                 {"trajectory", traj},
                 {"nash", {{"is_nash", nash.is_nash}, {"all_subsets_checked", small}, {"deviations", devs}}}};

        if (!o.random_coef.empty() || cb.contains("random_coef")) {
            foldmenu::RandomCoefSpec spec;
            if (cb.contains("random_coef")) {
                const auto& rc = cb.at("random_coef");
                spec.taste_dispersion = rc.value("a", spec.taste_dispersion);
                spec.n_draws = rc.value("n", spec.n_draws);
                spec.seed = rc.value("seed", spec.seed);
            }
            if (!o.random_coef.empty()) {
                const auto v = parse_list<double>(o.random_coef, "--random-coef");
                if (v.size() != 2) throw foldmenu::InputError("--random-coef expects a,n");
                spec.taste_dispersion = v[0];
                spec.n_draws = static_cast<std::size_t>(v[1]);
            }
            if (o.seed) spec.seed = *o.seed;
            const auto rc = foldmenu::foldable_loss_random_coef(inst, spec);
            json lr = json::array();
            for (std::size_t n = 0; n < rc.loss.size(); ++n) {
                lr.push_back({{"firm_id", inst.firms[n].firm_id},
                              {"foldable_best", rc.foldable_best[n]},
                              {"overall_best", rc.overall_best[n]},
                              {"loss", rc.loss[n]},
                              {"best_has_top", static_cast<bool>(rc.best_has_top[n])}});
            }
            eqj["random_coef"] = {{"a", spec.taste_dispersion},
                                  {"n", spec.n_draws},
                                  {"seed", spec.seed},
                                  {"equilibrium", point_json(rc.equilibrium.point)},
                                  {"firms", lr}};
            resolved["random_coef"] = {{"a", spec.taste_dispersion}, {"n", spec.n_draws}, {"seed", spec.seed}};
        }
        foldmenu::io::write_json_file(out / "equilibrium.json", eqj);
        std::cout << "equilibrium depths";
        for (auto d : eq.point.depths) std::cout << ' ' << d;
        std::cout << (nash.is_nash ? " (Nash verified)" : " (NOT Nash)") << '\n';
    }

    const auto iob = block(cfg, "io");
    const std::string panel_path = o.panel.empty() ? iob.value("panel", std::string()) : o.panel;
    const std::string result_path = o.result.empty() ? iob.value("result", std::string()) : o.result;
    if (!panel_path.empty() && !result_path.empty()) {
        did_something = true;
        const auto panel = foldmenu::io::read_panel_file(panel_path);
        const auto loaded = foldmenu::io::load_result(foldmenu::io::read_json_file(result_path), panel);
        foldmenu::PointOfSaleConfig pc;
        if (cb.contains("sweep")) {
            const auto& s = cb.at("sweep");
            pc.dispersions = s.value("dispersions", pc.dispersions);
            pc.draw_counts = s.value("draw_counts", pc.draw_counts);
            pc.points_per_market = s.value("points_per_market", pc.points_per_market);
            pc.seed = s.value("seed", pc.seed);
        }
        if (o.seed) pc.seed = *o.seed;
        pc.threads = c.threads;
        const auto rows = foldmenu::point_of_sale_loss_sweep(loaded.fitted, panel, pc);
        auto f = foldmenu::io::open_output(out / "loss_sweep.csv");
        f << "a,n,points,mean_ratio,loss,max_loss,share_foldable_optimal\n";
        for (const auto& r : rows) {
            f << foldmenu::io::format_double(r.dispersion) << ',' << r.draws << ',' << r.points << ','
              << foldmenu::io::format_double(r.mean_ratio) << ',' << foldmenu::io::format_double(r.loss) << ','
              << foldmenu::io::format_double(r.max_loss) << ','
              << foldmenu::io::format_double(r.share_foldable_optimal) << '\n';
            std::cout << "a=" << r.dispersion << " n=" << r.draws << " loss " << r.loss * 100.0 << "%\n";
        }
        resolved["sweep"] = {{"dispersions", pc.dispersions},
                             {"draw_counts", pc.draw_counts},
                             {"points_per_market", pc.points_per_market},
                             {"seed", pc.seed},
                             {"panel", panel_path},
                             {"result", result_path}};
    }
    if (!did_something) {
        throw foldmenu::InputError("compete: need competition.firms in the config and/or --panel with --result");
    }
    write_run_config(c, "compete", {{"competition", resolved}});
}

void write_diagnostics(const Common& c, const std::string& command, const std::exception& e) {
    json d{{"command", command}, {"error", e.what()}};
    if (const auto* f = dynamic_cast<const foldmenu::InversionFailure*>(&e)) {
        d["theta"] = f->theta();
        d["failed_markets"] = f->markets();
    }
    try {
        foldmenu::io::write_json_file(fs::path(c.out_dir) / "diagnostics.json", d);
    } catch (const std::exception&) {
        // the error itself is already on stderr
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Demand estimation and counterfactuals under rigid prices and foldable menus"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", common.out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", common.threads, "worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();

    SimulateOpts so;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic panel and its truth file");
    sim->add_option("--seed", so.seed, "DGP seed");
    sim->add_option("--markets", so.markets, "number of markets");
    sim->add_option("--theta", so.theta, "true price-sensitivity scale");

    EstimateOpts eo;
    auto* est = app.add_subcommand("estimate", "estimate theta and fixed utilities from a panel");
    est->add_option("--panel", eo.panel, "panel CSV");
    est->add_option("--model", eo.model, "foldable|standard")->check(CLI::IsMember({"foldable", "standard"}));
    est->add_option("--bootstrap", eo.bootstrap, "bootstrap replications");
    est->add_option("--seed", eo.seed, "simulation-draw seed");
    est->add_option("--dummies", eo.dummies, "tier|tier_group");

    AnalyzeOpts ao;
    auto* ana = app.add_subcommand("analyze", "elasticities and counterfactuals from an estimation result");
    ana->add_option("--panel", ao.panel, "panel CSV");
    ana->add_option("--result", ao.result, "result.json from estimate");
    ana->add_flag("--elasticities", ao.elasticities, "elasticity matrix and its decomposition");
    ana->add_option("--tax", ao.tax, "comma-separated ad valorem tax increases in percent, e.g. 5,10,15,20");
    ana->add_flag("--full-availability", ao.full_availability, "every product offered to every consumer");
    ana->add_flag("--assortment-dist", ao.assortment_dist, "distribution of offered menu depths");
    ana->add_option("--price-pct", ao.price_pct, "price change (percent) used for elasticities");

    CompeteOpts co;
    auto* cmp = app.add_subcommand("compete", "assortment competition equilibrium and foldable-menu loss");
    cmp->add_option("--random-coef", co.random_coef, "a,n: taste dispersion and consumer draws");
    cmp->add_option("--panel", co.panel, "panel CSV for the point-of-sale loss sweep");
    cmp->add_option("--result", co.result, "result.json for the point-of-sale loss sweep");
    cmp->add_option("--seed", co.seed, "random-coefficient seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*sim) cmd_simulate(common, so);
        if (*est) cmd_estimate(common, eo);
        if (*ana) cmd_analyze(common, ao);
        if (*cmp) cmd_compete(common, co);
    } catch (const foldmenu::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 1;
    } catch (const foldmenu::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        write_diagnostics(common, command, e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

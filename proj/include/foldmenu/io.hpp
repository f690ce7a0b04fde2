#pragma once

// File formats: the panel CSV (one row per market x tier), quintile CSV,
// truth and estimation-result JSON, and tidy report tables.

#include "foldmenu/analysis.hpp"
#include "foldmenu/dgp.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace foldmenu::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV primitives. Fields are plain (no embedded commas or quotes); surrounding
// double quotes and whitespace are stripped on read.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based file line of each row
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    if (e - b >= 2 && s[b] == '"' && s[e - 1] == '"') {
        ++b;
        --e;
    }
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw InputError(source + ": row " + std::to_string(number) + " has " + std::to_string(fields.size()) +
                             " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(number);
    }
    if (t.header.empty()) throw InputError(source + ": empty file");
    return t;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_csv(in, path.string());
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end || s.empty()) {
        throw InputError(where + ": '" + s + "' is not a number");
    }
    return v;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& row(std::initializer_list<std::string> fields) {
        bool first = true;
        for (const auto& f : fields) {
            if (!first) out_ << ',';
            out_ << f;
            first = false;
        }
        out_ << '\n';
        return *this;
    }

private:
    std::ostream& out_;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Panel CSV.

inline const std::vector<std::string>& panel_required_columns() {
    static const std::vector<std::string> cols{"market_id",  "tier",           "observed_share",
                                               "real_price", "real_margin",    "income_log_mean",
                                               "income_log_sd", "cpi"};
    return cols;
}

/// Reads a panel. Rows of one market need not be adjacent or sorted; each
/// market's products are ordered by real margin, highest first. Market-level
/// columns must agree across a market's rows. Errors name the file line.
inline Panel read_panel(std::istream& in, const std::string& source = "panel") {
    const auto table = read_csv(in, source);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < table.header.size(); ++c) col[table.header[c]] = c;
    for (const auto& name : panel_required_columns()) {
        if (!col.count(name)) throw InputError(source + ": missing required column '" + name + "'");
    }
    const bool has_group = col.count("group") > 0;
    const bool has_size = col.count("market_size") > 0;

    struct Row {
        Product product;
        double share;
        std::size_t line;
    };
    std::vector<std::string> order;
    std::map<std::string, Market> markets;
    std::map<std::string, std::vector<Row>> rows;

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        const std::string where = source + ": row " + std::to_string(table.line_numbers[r]);
        auto num = [&](const char* name) { return parse_double(f[col.at(name)], where + ", column " + name); };
        const auto& id = f[col.at("market_id")];
        const auto& tier = f[col.at("tier")];
        if (id.empty()) throw InputError(where + ": empty market_id");
        if (tier.empty()) throw InputError(where + ": empty tier");

        Market m;
        m.id = id;
        m.income_log_mean = num("income_log_mean");
        m.income_log_sd = num("income_log_sd");
        m.cpi = num("cpi");
        if (has_group) m.group = f[col.at("group")];
        if (has_size) m.market_size = num("market_size");
        const double share = num("observed_share");
        const double price = num("real_price");
        const double margin = num("real_margin");
        if (!(share > 0.0 && share < 1.0)) throw InputError(where + ": observed_share must lie strictly in (0, 1)");
        if (!(price > 0.0)) throw InputError(where + ": real_price must be > 0");
        if (!(margin >= 0.0)) throw InputError(where + ": real_margin must be >= 0");
        if (!(m.income_log_sd > 0.0)) throw InputError(where + ": income_log_sd must be > 0");
        if (!(m.cpi > 0.0)) throw InputError(where + ": cpi must be > 0");
        if (!(m.market_size > 0.0)) throw InputError(where + ": market_size must be > 0");

        auto it = markets.find(id);
        if (it == markets.end()) {
            order.push_back(id);
            markets.emplace(id, m);
        } else {
            const auto& ref = it->second;
            if (ref.income_log_mean != m.income_log_mean || ref.income_log_sd != m.income_log_sd ||
                ref.cpi != m.cpi || ref.group != m.group || ref.market_size != m.market_size) {
                throw InputError(where + ": market-level columns differ from earlier rows of market '" + id + "'");
            }
        }
        for (const auto& prev : rows[id]) {
            if (prev.product.id == tier) {
                throw InputError(where + ": tier '" + tier + "' repeated in market '" + id + "' (first at row " +
                                 std::to_string(prev.line) + ")");
            }
        }
        rows[id].push_back({{tier, margin, price}, share, table.line_numbers[r]});
    }
    if (order.empty()) throw InputError(source + ": no data rows");

    Panel panel;
    for (const auto& id : order) {
        auto m = markets.at(id);
        auto& rs = rows.at(id);
        std::stable_sort(rs.begin(), rs.end(),
                         [](const Row& a, const Row& b) { return a.product.unit_margin > b.product.unit_margin; });
        std::vector<Product> products;
        for (const auto& r : rs) {
            products.push_back(r.product);
            m.observed_shares.push_back(r.share);
        }
        m.line = ProductLine(std::move(products));
        panel.markets.push_back(std::move(m));
    }
    panel.validate();
    return panel;
}

inline Panel read_panel_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_panel(in, path.string());
}

inline void write_panel(std::ostream& out, const Panel& panel) {
    bool groups = false, sizes = false;
    for (const auto& m : panel.markets) {
        groups = groups || !m.group.empty();
        sizes = sizes || m.market_size != 1.0;
    }
    out << "market_id,tier,observed_share,real_price,real_margin,income_log_mean,income_log_sd,cpi";
    if (groups) out << ",group";
    if (sizes) out << ",market_size";
    out << '\n';
    for (const auto& m : panel.markets) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            out << m.id << ',' << m.line[j].id << ',' << format_double(m.observed_shares[j]) << ','
                << format_double(m.line.price(j)) << ',' << format_double(m.line.margin(j)) << ','
                << format_double(m.income_log_mean) << ',' << format_double(m.income_log_sd) << ','
                << format_double(m.cpi);
            if (groups) out << ',' << m.group;
            if (sizes) out << ',' << format_double(m.market_size);
            out << '\n';
        }
    }
}

inline void write_panel_file(const std::filesystem::path& path, const Panel& panel) {
    auto out = open_output(path);
    write_panel(out, panel);
}

// ---------------------------------------------------------------------------
// Quintile CSV: market_id, q1..q5 (nominal quintile mean incomes).

struct QuintileRow {
    std::string market_id;
    std::array<double, 5> means{};
};

inline std::vector<QuintileRow> read_quintiles(std::istream& in, const std::string& source = "quintiles") {
    const auto table = read_csv(in, source);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < table.header.size(); ++c) col[table.header[c]] = c;
    const std::array<std::string, 6> need{"market_id", "q1", "q2", "q3", "q4", "q5"};
    for (const auto& name : need) {
        if (!col.count(name)) throw InputError(source + ": missing required column '" + name + "'");
    }
    std::vector<QuintileRow> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = source + ": row " + std::to_string(table.line_numbers[r]);
        QuintileRow q;
        q.market_id = table.rows[r][col.at("market_id")];
        for (std::size_t k = 0; k < 5; ++k) {
            q.means[k] = parse_double(table.rows[r][col.at(need[k + 1])], where + ", column " + need[k + 1]);
        }
        out.push_back(q);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON documents.

inline json to_json(const DgpConfig& c) {
    return {{"n_markets", c.n_markets},   {"xi", c.xi},
            {"nominal_prices", c.nominal_prices}, {"nominal_margins", c.nominal_margins},
            {"theta_true", c.theta_true}, {"shock_scale", c.shock_scale},
            {"seed", c.seed},             {"n_draws", c.n_draws}};
}

inline void from_json(const json& j, DgpConfig& c) {
    c.n_markets = j.value("n_markets", c.n_markets);
    c.xi = j.value("xi", c.xi);
    c.nominal_prices = j.value("nominal_prices", c.nominal_prices);
    c.nominal_margins = j.value("nominal_margins", c.nominal_margins);
    c.theta_true = j.value("theta_true", c.theta_true);
    c.shock_scale = j.value("shock_scale", c.shock_scale);
    c.seed = j.value("seed", c.seed);
    c.n_draws = j.value("n_draws", c.n_draws);
}

inline json to_json(const EstimationConfig& c) {
    return {{"contraction_tol", c.contraction_tol},
            {"max_contraction_iter", c.max_contraction_iter},
            {"theta_bracket", {c.theta_lo, c.theta_hi}},
            {"dummy_structure", to_string(c.dummy_structure)},
            {"bootstrap_reps", c.bootstrap_reps},
            {"seed", c.seed},
            {"n_draws", c.n_draws},
            {"n_normal_draws", c.n_normal_draws},
            {"grid_points", c.grid_points},
            {"search_bits", c.search_bits},
            {"anderson", c.anderson},
            {"anderson_memory", c.anderson_memory},
            {"divergence_bound", c.divergence_bound},
            {"stall_window", c.stall_window},
            {"threads", c.threads},
            {"moment_weighting", "equal weight on every market-tier"}};
}

inline DummyStructure parse_dummy_structure(const std::string& s) {
    if (s == "tier") return DummyStructure::kTier;
    if (s == "tier_group" || s == "tier×group" || s == "tier_x_group") return DummyStructure::kTierGroup;
    throw InputError("unknown dummy structure '" + s + "' (expected tier or tier_group)");
}

inline void from_json(const json& j, EstimationConfig& c) {
    c.contraction_tol = j.value("contraction_tol", c.contraction_tol);
    c.max_contraction_iter = j.value("max_contraction_iter", c.max_contraction_iter);
    if (j.contains("theta_bracket")) {
        const auto& b = j.at("theta_bracket");
        if (!b.is_array() || b.size() != 2) throw InputError("theta_bracket must be a two-element array");
        c.theta_lo = b[0].get<double>();
        c.theta_hi = b[1].get<double>();
    }
    if (j.contains("dummy_structure")) c.dummy_structure = parse_dummy_structure(j.at("dummy_structure"));
    c.bootstrap_reps = j.value("bootstrap_reps", c.bootstrap_reps);
    c.seed = j.value("seed", c.seed);
    c.n_draws = j.value("n_draws", c.n_draws);
    c.n_normal_draws = j.value("n_normal_draws", c.n_normal_draws);
    c.grid_points = j.value("grid_points", c.grid_points);
    c.search_bits = j.value("search_bits", c.search_bits);
    c.anderson = j.value("anderson", c.anderson);
    c.anderson_memory = j.value("anderson_memory", c.anderson_memory);
    c.divergence_bound = j.value("divergence_bound", c.divergence_bound);
    c.stall_window = j.value("stall_window", c.stall_window);
    c.threads = j.value("threads", c.threads);
}

inline json truth_to_json(const SyntheticPanel& sp) {
    json markets = json::array();
    for (std::size_t t = 0; t < sp.panel.size(); ++t) {
        markets.push_back({{"market_id", sp.panel.markets[t].id}, {"gamma", sp.truth.gamma[t]}});
    }
    return {{"theta", sp.truth.theta}, {"xi", sp.truth.xi}, {"markets", markets}};
}

inline json xi_to_json(const std::vector<FixedUtility>& xi) {
    json out = json::array();
    for (const auto& x : xi) {
        json e{{"tier", x.tier}, {"value", x.value}};
        if (!x.group.empty()) e["group"] = x.group;
        out.push_back(e);
    }
    return out;
}

/// Full estimation report: parameters, diagnostics, search trace and the
/// per-market utilities needed to rerun counterfactuals.
inline json result_to_json(const EstimationResult& r, const EstimationConfig& cfg, const Panel& panel) {
    json trace = json::array();
    for (const auto& [th, v] : r.trace) {
        trace.push_back({{"theta", th}, {"objective", std::isfinite(v) ? json(v) : json(nullptr)}});
    }
    json markets = json::array();
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& m = panel.markets[t];
        json tiers = json::array();
        for (std::size_t j = 0; j < m.size(); ++j) tiers.push_back(m.line[j].id);
        markets.push_back(
            {{"market_id", m.id}, {"tiers", tiers}, {"gamma", r.gamma[t]}, {"delta_xi", r.delta_xi[t]}});
    }
    json out{{"model", to_string(r.model)},
             {"theta_hat", r.theta_hat},
             {"xi_hat", xi_to_json(r.xi_hat)},
             {"objective_value", r.objective_value},
             {"moment", r.moment},
             {"diagnostics",
              {{"contraction_iterations", r.contraction_iterations},
               {"objective_evaluations", r.objective_evaluations},
               {"failed_evaluations", r.failed_evaluations},
               {"at_bracket_edge", r.at_bracket_edge}}},
             {"config", to_json(cfg)},
             {"search_trace", trace},
             {"markets", markets}};
    if (r.bootstrap) {
        const auto& b = *r.bootstrap;
        out["bootstrap"] = {{"reps", b.reps},
                            {"failed", b.failed},
                            {"theta_se", b.theta_se},
                            {"theta_draws", b.theta_draws},
                            {"xi_se", xi_to_json(b.xi_se)}};
    }
    return out;
}

/// Utilities, theta and draw configuration of a saved result, matched to
/// `panel` by market id and tier.
struct LoadedResult {
    std::string model;
    EstimationConfig config;
    FittedModel fitted;
};

inline LoadedResult load_result(const json& j, const Panel& panel) {
    LoadedResult out;
    try {
        out.model = j.at("model").get<std::string>();
        from_json(j.at("config"), out.config);
        out.fitted.theta = j.at("theta_hat").get<double>();
        std::map<std::string, const json*> by_id;
        for (const auto& m : j.at("markets")) by_id[m.at("market_id").get<std::string>()] = &m;
        for (const auto& m : panel.markets) {
            const auto it = by_id.find(m.id);
            if (it == by_id.end()) throw InputError("estimation result has no market '" + m.id + "'");
            const auto tiers = it->second->at("tiers").get<std::vector<std::string>>();
            const auto gamma = it->second->at("gamma").get<std::vector<double>>();
            if (tiers.size() != m.size() || gamma.size() != m.size()) {
                throw InputError("estimation result: market '" + m.id + "' has a different tier count");
            }
            std::vector<double> g(m.size());
            for (std::size_t j2 = 0; j2 < m.size(); ++j2) {
                const auto pos = std::find(tiers.begin(), tiers.end(), m.line[j2].id);
                if (pos == tiers.end()) {
                    throw InputError("estimation result: market '" + m.id + "' lacks tier '" + m.line[j2].id + "'");
                }
                g[j2] = gamma[static_cast<std::size_t>(pos - tiers.begin())];
            }
            out.fitted.gamma.push_back(std::move(g));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed estimation result: ") + e.what());
    }
    out.fitted.draws = out.config.draws();
    return out;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Tidy tables: scenario, tier, metric, value.

class TidyTable {
public:
    void add(const std::string& scenario, const std::string& tier, const std::string& metric, double value) {
        rows_.push_back({scenario, tier, metric, value});
    }

    void add_report(const CounterfactualReport& r) {
        for (std::size_t k = 0; k < r.tiers.size(); ++k) {
            add(r.scenario, r.tiers[k], "sales_base", r.sales_base[k]);
            add(r.scenario, r.tiers[k], "sales_new", r.sales_new[k]);
            add(r.scenario, r.tiers[k], "sales_change_pct", r.sales_change_pct[k]);
            add(r.scenario, r.tiers[k], "profit_base", r.profit_base[k]);
            add(r.scenario, r.tiers[k], "profit_new", r.profit_new[k]);
            if (r.revenue_change_pct) {
                add(r.scenario, r.tiers[k], "revenue_base", (*r.revenue_base)[k]);
                add(r.scenario, r.tiers[k], "revenue_new", (*r.revenue_new)[k]);
                add(r.scenario, r.tiers[k], "revenue_change_pct", (*r.revenue_change_pct)[k]);
            }
        }
        add(r.scenario, "total", "sales_change_pct", r.total_sales_change_pct);
        add(r.scenario, "total", "profit_change_pct", r.total_profit_change_pct);
        if (r.total_revenue_change) {
            add(r.scenario, "total", "revenue_change", *r.total_revenue_change);
            add(r.scenario, "total", "revenue_change_pct", *r.total_revenue_change_pct);
        }
    }

    /// Rows "price_<j>" x tier k per matrix entry.
    void add_matrix(const std::string& scenario, const std::vector<std::string>& tiers,
                    const std::vector<std::vector<double>>& entries, const std::string& metric) {
        for (std::size_t j = 0; j < tiers.size(); ++j) {
            for (std::size_t k = 0; k < tiers.size(); ++k) {
                add(scenario, tiers[k], metric + "_price_" + tiers[j], entries[j][k]);
            }
        }
    }

    void write(std::ostream& out) const {
        out << "scenario,tier,metric,value\n";
        for (const auto& r : rows_) {
            out << r.scenario << ',' << r.tier << ',' << r.metric << ',' << format_double(r.value) << '\n';
        }
    }

    void write_file(const std::filesystem::path& path) const {
        auto out = open_output(path);
        write(out);
    }

    [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }

private:
    struct Row {
        std::string scenario, tier, metric;
        double value;
    };
    std::vector<Row> rows_;
};

}  // namespace foldmenu::io

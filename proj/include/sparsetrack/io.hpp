#pragma once

// Ingestion and reporting: price CSV loading with forward-fill, returns
// conversion, flat key=value run configuration, and result serialization
// (weights/tracking CSVs plus a summary.json).

#include "sparsetrack/backtest.hpp"
#include "sparsetrack/dcc.hpp"
#include "sparsetrack/model.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sparsetrack {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Price table loading

struct LoadReport {
    std::vector<std::pair<std::string, std::string>> fills;  // (date, ticker)
    std::vector<std::string> dropped_rows;                   // leading dates removed
};

struct PriceTable {
    std::vector<std::string> dates;
    std::vector<std::string> tickers;
    Matrix values;  // rows x tickers
    LoadReport report;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (const char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline bool looks_like_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (const size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

inline double parse_price(const std::string& field, int line, int column) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw ParseError("bad numeric field '" + field + "' at line " +
                         std::to_string(line) + ", column " + std::to_string(column));
    return value;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Loads a `date,TICKER1,TICKER2,...` CSV. Mid-series blanks forward-fill from
// the previous row; leading rows that cannot be completed are dropped. Every
// fill and drop is recorded in the load report.
inline PriceTable load_prices_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile("'" + path.string() + "' is empty");
    const std::vector<std::string> header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "date")
        throw ParseError("header must start with 'date' and name at least one ticker");

    PriceTable table;
    table.tickers.assign(header.begin() + 1, header.end());
    const size_t n = table.tickers.size();

    std::vector<std::string> dates;
    std::vector<std::vector<std::optional<double>>> cells;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != n + 1)
            throw ParseError("expected " + std::to_string(n + 1) + " fields at line " +
                             std::to_string(line_no) + ", got " +
                             std::to_string(fields.size()));
        if (!detail::looks_like_iso_date(fields[0]))
            throw ParseError("bad ISO-8601 date '" + fields[0] + "' at line " +
                             std::to_string(line_no) + ", column 1");
        dates.push_back(fields[0]);
        std::vector<std::optional<double>> row(n);
        for (size_t j = 0; j < n; ++j) {
            if (fields[j + 1].empty()) continue;
            row[j] = detail::parse_price(fields[j + 1], line_no, static_cast<int>(j + 2));
        }
        cells.push_back(std::move(row));
    }
    if (cells.empty()) throw EmptyFile("'" + path.string() + "' has a header but no rows");

    // First row from which every ticker has been observed at least once.
    std::vector<std::optional<double>> last_seen(n);
    size_t first_complete = cells.size();
    for (size_t t = 0; t < cells.size() && first_complete == cells.size(); ++t) {
        for (size_t j = 0; j < n; ++j)
            if (cells[t][j]) last_seen[j] = cells[t][j];
        bool all = true;
        for (size_t j = 0; j < n; ++j) all = all && last_seen[j].has_value();
        if (all) first_complete = t;
    }
    if (first_complete == cells.size()) {
        for (size_t j = 0; j < n; ++j)
            if (!last_seen[j])
                throw UnfixableLeadingGap("ticker '" + table.tickers[j] +
                                          "' has no value anywhere in '" +
                                          path.string() + "'");
    }
    for (size_t t = 0; t < first_complete; ++t)
        table.report.dropped_rows.push_back(dates[t]);

    const size_t rows = cells.size() - first_complete;
    table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    table.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(first_complete),
                       dates.end());
    std::fill(last_seen.begin(), last_seen.end(), std::nullopt);
    for (size_t t = 0; t < first_complete; ++t)
        for (size_t j = 0; j < n; ++j)
            if (cells[t][j]) last_seen[j] = cells[t][j];
    for (size_t t = 0; t < rows; ++t) {
        const auto& row = cells[t + first_complete];
        for (size_t j = 0; j < n; ++j) {
            if (row[j]) {
                last_seen[j] = row[j];
            } else {
                table.report.fills.emplace_back(table.dates[t], table.tickers[j]);
            }
            table.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                *last_seen[j];
        }
    }
    return table;
}

// Simple returns r_t = p_t / p_{t-1} - 1 for every stock and for the target
// column, which is removed from the stock universe.
inline ReturnsPanel to_returns(const PriceTable& prices, const std::string& target_column) {
    if (prices.values.rows() < 2)
        throw InsufficientData("need at least two price rows to form returns");
    Eigen::Index target_col = -1;
    for (size_t j = 0; j < prices.tickers.size(); ++j)
        if (prices.tickers[j] == target_column) target_col = static_cast<Eigen::Index>(j);
    if (target_col < 0)
        throw ConfigError("target column '" + target_column + "' not present");

    for (Eigen::Index t = 0; t < prices.values.rows(); ++t)
        for (Eigen::Index j = 0; j < prices.values.cols(); ++j)
            if (!(prices.values(t, j) > 0.0))
                throw NonPositivePrice("price " + std::to_string(prices.values(t, j)) +
                                       " for '" + prices.tickers[static_cast<size_t>(j)] +
                                       "' on " + prices.dates[static_cast<size_t>(t)]);

    const Eigen::Index d = prices.values.rows() - 1;
    const Eigen::Index n = prices.values.cols() - 1;
    ReturnsPanel panel;
    panel.returns.resize(d, n);
    panel.target.resize(d);
    Eigen::Index out_col = 0;
    for (Eigen::Index j = 0; j < prices.values.cols(); ++j) {
        if (j == target_col) continue;
        for (Eigen::Index t = 0; t < d; ++t)
            panel.returns(t, out_col) =
                prices.values(t + 1, j) / prices.values(t, j) - 1.0;
        panel.tickers.push_back(prices.tickers[static_cast<size_t>(j)]);
        ++out_col;
    }
    for (Eigen::Index t = 0; t < d; ++t)
        panel.target(t) = prices.values(t + 1, target_col) / prices.values(t, target_col) - 1.0;
    panel.dates.assign(prices.dates.begin() + 1, prices.dates.end());
    return validate_panel(panel);
}

// ---------------------------------------------------------------------------
// Run configuration: flat key = value text, '#' comments, all keys optional.

struct RunConfig {
    std::string data_path;
    std::string target = "INDEX";
    std::string method = "dcc";
    int k = 10;
    std::string a = "auto";          // steepness, or "auto" for min_a_search
    double eps = kDefaultCutoff;
    int lookback_days = 252;
    int rebalance_days = 63;
    int max_iterations = 500;
    double tol_objective = 1e-9;
    double tol_feasibility = 1e-8;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    int jobs = 1;
};

inline RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
        while (!s.empty() && is_space(s.front())) s.erase(s.begin());
        while (!s.empty() && is_space(s.back())) s.pop_back();
        return s;
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "data_path") cfg.data_path = value;
            else if (key == "target") cfg.target = value;
            else if (key == "method") cfg.method = value;
            else if (key == "k") cfg.k = std::stoi(value);
            else if (key == "a") cfg.a = value;
            else if (key == "eps") cfg.eps = std::stod(value);
            else if (key == "lookback_days") cfg.lookback_days = std::stoi(value);
            else if (key == "rebalance_days") cfg.rebalance_days = std::stoi(value);
            else if (key == "max_iterations") cfg.max_iterations = std::stoi(value);
            else if (key == "tol_objective") cfg.tol_objective = std::stod(value);
            else if (key == "tol_feasibility") cfg.tol_feasibility = std::stod(value);
            else if (key == "output_dir") cfg.output_dir = value;
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "jobs") cfg.jobs = std::stoi(value);
            else throw ConfigError("unknown config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value '" + value + "' for key '" + key + "' at line " +
                              std::to_string(line_no));
        }
    }
    if (!cfg.data_path.empty() && !fs::exists(cfg.data_path))
        throw ConfigError("data_path '" + cfg.data_path + "' does not exist");
    return cfg;
}

// ---------------------------------------------------------------------------
// Result serialization

struct ReportContext {
    std::map<std::string, std::string> config_echo;
    std::optional<ConditionReport> conditions;
    bool include_wall_times = true;  // wall clocks are the one environmental field
};

namespace detail {

// One row per held position: weights below the vector's cutoff count as zero
// and are not listed.
inline void write_weights_csv(const fs::path& file, const std::vector<std::string>& tickers,
                              const WeightVector& weights) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write '" + file.string() + "'");
    out << "ticker,weight\n";
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        if (weights[i] >= weights.eps())
            out << tickers[static_cast<size_t>(i)] << ',' << format_double(weights[i])
                << '\n';
}

inline void write_tracking_csv(const fs::path& file, const std::vector<std::string>& dates,
                               const Vector& tracking_returns, const Vector& target_returns) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write '" + file.string() + "'");
    out << "date,tracking_level,target_level,abs_error\n";
    const Vector tr = levels_from_returns(tracking_returns);
    const Vector tg = levels_from_returns(target_returns);
    for (Eigen::Index t = 0; t < tracking_returns.size(); ++t)
        out << dates[static_cast<size_t>(t)] << ',' << format_double(tr(t + 1)) << ','
            << format_double(tg(t + 1)) << ','
            << format_double(std::abs(tr(t + 1) - tg(t + 1))) << '\n';
}

inline nlohmann::ordered_json metrics_json(const Metrics& m) {
    nlohmann::ordered_json j;
    j["cumulative_return"] = m.cumulative_return;
    j["volatility"] = m.volatility;
    if (m.sharpe)
        j["sharpe"] = *m.sharpe;
    else
        j["sharpe"] = nullptr;
    j["mdd"] = m.mdd;
    return j;
}

inline nlohmann::ordered_json conditions_json(const ConditionReport& c) {
    nlohmann::ordered_json j;
    j["c0"] = c.c0;
    j["c1"] = c.c1;
    j["c2"] = c.c2;
    j["error_integral"] = c.error_integral;
    j["n_times_e"] = c.n_times_e;
    if (c.min_a_overall)
        j["min_a_overall"] = *c.min_a_overall;
    else
        j["min_a_overall"] = nullptr;
    return j;
}

inline void append_context(nlohmann::ordered_json& j, const ReportContext& ctx) {
    if (!ctx.config_echo.empty()) {
        nlohmann::ordered_json echo;
        for (const auto& [k, v] : ctx.config_echo) echo[k] = v;
        j["config"] = echo;
    }
    if (ctx.conditions) j["conditions"] = conditions_json(*ctx.conditions);
}

inline void write_json(const fs::path& file, const nlohmann::ordered_json& j) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write '" + file.string() + "'");
    out << j.dump(2) << '\n';
}

}  // namespace detail

// Single-solve artifacts: weights on the last panel date, the in-sample
// tracking series, and a summary.json.
inline std::vector<fs::path> write_report(const SolveReport& report,
                                          const ReturnsPanel& panel,
                                          const fs::path& output_dir,
                                          const ReportContext& ctx = {}) {
    fs::create_directories(output_dir);
    std::vector<fs::path> written;

    const fs::path weights_file = output_dir / ("weights_" + panel.dates.back() + ".csv");
    detail::write_weights_csv(weights_file, panel.tickers, report.weights);
    written.push_back(weights_file);

    const fs::path tracking_file = output_dir / "tracking.csv";
    const Vector tracking = panel.returns * report.weights.values();
    detail::write_tracking_csv(tracking_file, panel.dates, tracking, panel.target);
    written.push_back(tracking_file);

    nlohmann::ordered_json j;
    j["objective"] = report.objective;
    j["kkt_residual"] = report.kkt_residual;
    j["iterations"] = report.iterations;
    if (report.smooth_cardinality)
        j["smooth_cardinality"] = *report.smooth_cardinality;
    else
        j["smooth_cardinality"] = nullptr;
    j["exact_cardinality"] = report.exact_cardinality;
    j["mae"] = mae(levels_from_returns(tracking), levels_from_returns(panel.target));
    if (ctx.include_wall_times) j["wall_time_seconds"] = report.wall_time_seconds;
    detail::append_context(j, ctx);
    const fs::path summary_file = output_dir / "summary.json";
    detail::write_json(summary_file, j);
    written.push_back(summary_file);
    return written;
}

// Backtest artifacts: one weights CSV per rebalance, the out-of-sample
// tracking series, and a summary.json.
inline std::vector<fs::path> write_report(const BacktestResult& result,
                                          const std::vector<std::string>& tickers,
                                          const fs::path& output_dir,
                                          const ReportContext& ctx = {}) {
    fs::create_directories(output_dir);
    std::vector<fs::path> written;

    for (size_t i = 0; i < result.weights_per_rebalance.size(); ++i) {
        const fs::path file =
            output_dir / ("weights_" + result.rebalance_dates[i] + ".csv");
        detail::write_weights_csv(file, tickers, result.weights_per_rebalance[i]);
        written.push_back(file);
    }

    const fs::path tracking_file = output_dir / "tracking.csv";
    detail::write_tracking_csv(tracking_file, result.eval_dates, result.tracking,
                               result.target);
    written.push_back(tracking_file);

    nlohmann::ordered_json j;
    j["mae"] = result.mae_value;
    j["metrics"] = detail::metrics_json(result.tracking_metrics);
    j["rebalances"] = result.weights_per_rebalance.size();
    j["lookback_days"] = result.schedule.lookback_days;
    j["rebalance_days"] = result.schedule.rebalance_days;
    if (ctx.include_wall_times) {
        j["per_rebalance_wall_time"] = result.per_rebalance_wall_time;
        double total = 0.0;
        for (const double t : result.per_rebalance_wall_time) total += t;
        j["total_fit_wall_time"] = total;
    }
    detail::append_context(j, ctx);
    const fs::path summary_file = output_dir / "summary.json";
    detail::write_json(summary_file, j);
    written.push_back(summary_file);
    return written;
}

// Reads back a tracking.csv written by write_report; used for round-trips.
struct TrackingSeries {
    std::vector<std::string> dates;
    Vector tracking_level;
    Vector target_level;
};

inline TrackingSeries read_tracking_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw EmptyFile("'" + path.string() + "' is empty");
    TrackingSeries series;
    std::vector<double> tr, tg;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 4)
            throw ParseError("expected 4 fields at line " + std::to_string(line_no));
        series.dates.push_back(fields[0]);
        tr.push_back(detail::parse_price(fields[1], line_no, 2));
        tg.push_back(detail::parse_price(fields[2], line_no, 3));
    }
    series.tracking_level = Eigen::Map<Vector>(tr.data(), static_cast<Eigen::Index>(tr.size()));
    series.target_level = Eigen::Map<Vector>(tg.data(), static_cast<Eigen::Index>(tg.size()));
    return series;
}

// Writes a synthetic price CSV (and the planted weights alongside) in the
// exact schema load_prices_csv expects; the target column is named INDEX.
inline std::pair<fs::path, fs::path> write_synth_csv(const fs::path& out_path,
                                                     const Matrix& prices,
                                                     const Vector& index_prices,
                                                     const std::vector<std::string>& dates,
                                                     const std::vector<std::string>& tickers,
                                                     const Vector& truth) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write '" + out_path.string() + "'");
    out << "date,INDEX";
    for (const auto& t : tickers) out << ',' << t;
    out << '\n';
    for (Eigen::Index r = 0; r < prices.rows(); ++r) {
        out << dates[static_cast<size_t>(r)] << ',' << detail::format_double(index_prices(r));
        for (Eigen::Index j = 0; j < prices.cols(); ++j)
            out << ',' << detail::format_double(prices(r, j));
        out << '\n';
    }

    fs::path truth_path = out_path;
    truth_path.replace_filename(out_path.stem().string() + "_truth.csv");
    std::ofstream tout(truth_path);
    if (!tout) throw IoError("cannot write '" + truth_path.string() + "'");
    tout << "ticker,weight\n";
    for (Eigen::Index i = 0; i < truth.size(); ++i)
        if (truth(i) != 0.0)
            tout << tickers[static_cast<size_t>(i)] << ',' << detail::format_double(truth(i))
                 << '\n';
    return {out_path, truth_path};
}

}  // namespace sparsetrack

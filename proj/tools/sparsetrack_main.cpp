// sparsetrack command-line tool: single solves, sliding-window backtests,
// steepness condition checks, and synthetic data generation.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 numerical
// failure. Failures print a machine-readable `error_code=<name>` line on
// stderr in addition to the human-readable message.

#include "sparsetrack/backtest.hpp"
#include "sparsetrack/baselines.hpp"
#include "sparsetrack/dcc.hpp"
#include "sparsetrack/io.hpp"
#include "sparsetrack/solver.hpp"
#include "sparsetrack/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

using namespace sparsetrack;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int fail(const Error& e, int code) {
    std::cerr << "error_code=" << e.code() << "\n" << e.what() << "\n";
    return code;
}

bool is_config_error(const Error& e) {
    static const char* kConfigCodes[] = {
        "ConfigError",     "DomainError",        "InfeasibleConstraintConfig",
        "ParseError",      "EmptyFile",          "UnfixableLeadingGap",
        "NonPositivePrice", "DimensionMismatch", "NonMonotonicDates",
        "NonFiniteEntry",  "InsufficientData",   "LengthMismatch",
        "IoError"};
    for (const char* c : kConfigCodes)
        if (e.code() == c) return true;
    return false;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const Error& e) {
        return fail(e, is_config_error(e) ? kExitConfig : kExitNumerical);
    } catch (const std::exception& e) {
        std::cerr << "error_code=Internal\n" << e.what() << "\n";
        return kExitNumerical;
    }
}

double resolve_steepness(const std::string& a_flag, int n_stocks, double eps,
                         ConditionReport* conditions) {
    double a = 0.0;
    if (a_flag == "auto") {
        a = min_a_search(n_stocks, eps);
    } else {
        try {
            a = std::stod(a_flag);
        } catch (const std::exception&) {
            throw ConfigError("--a expects a number or 'auto', got '" + a_flag + "'");
        }
    }
    if (conditions) {
        *conditions = check_conditions(n_stocks, DccParams(a, eps, 1));
        conditions->min_a_overall = a_flag == "auto"
                                        ? std::optional<double>(a)
                                        : std::optional<double>(std::nullopt);
    }
    return a;
}

std::map<std::string, std::string> echo_common(const std::string& data,
                                               const std::string& target,
                                               const std::string& method, int k,
                                               double a, double eps,
                                               std::uint64_t seed) {
    std::map<std::string, std::string> echo;
    echo["data_path"] = data;
    echo["target"] = target;
    echo["method"] = method;
    echo["k"] = std::to_string(k);
    echo["a"] = detail::format_double(a);
    echo["eps"] = detail::format_double(eps);
    echo["seed"] = std::to_string(seed);
    return echo;
}

SolveReport dispatch_solve(const ReturnsPanel& panel, const std::string& method, int k,
                           double a, double eps, const SolverOptions& opts) {
    if (method == "dcc")
        return partial_replication_dcc(panel, DccParams(a, eps, k), opts);
    if (method == "forward") return forward_selection(panel, k, opts);
    if (method == "backward") return backward_selection(panel, k, opts);
    if (method == "full") return full_replication(panel, opts);
    throw ConfigError("unknown method '" + method + "'");
}

int cmd_solve(const std::string& data, const std::string& target,
              const std::string& method, int k, const std::string& a_flag, double eps,
              const std::string& out_dir, int max_iterations) {
    if (method != "full" && k < 1)
        throw InfeasibleConstraintConfig("cardinality bound K must be >= 1, got " +
                                         std::to_string(k));
    const PriceTable prices = load_prices_csv(data);
    const ReturnsPanel panel = to_returns(prices, target);

    SolverOptions opts;
    opts.max_iterations = max_iterations;
    ConditionReport conditions;
    const double a = method == "dcc"
                         ? resolve_steepness(a_flag, static_cast<int>(panel.stocks()),
                                             eps, &conditions)
                         : 0.0;
    const SolveReport report = dispatch_solve(panel, method, k, a, eps, opts);

    ReportContext ctx;
    ctx.config_echo = echo_common(data, target, method, k, a, eps, 0);
    if (method == "dcc") ctx.conditions = conditions;
    write_report(report, panel, out_dir, ctx);

    std::printf("objective %.12g\n", report.objective);
    std::printf("exact_cardinality %d\n", report.exact_cardinality);
    std::printf("wall_time_seconds %.6f\n", report.wall_time_seconds);
    return kExitOk;
}

int cmd_backtest(const RunConfig& cfg) {
    if (cfg.data_path.empty()) throw ConfigError("data_path is required");
    if (cfg.method != "full" && cfg.k < 1)
        throw InfeasibleConstraintConfig("cardinality bound K must be >= 1, got " +
                                         std::to_string(cfg.k));
    const PriceTable prices = load_prices_csv(cfg.data_path);
    const ReturnsPanel panel = to_returns(prices, cfg.target);
    const Schedule schedule =
        make_schedule(panel.days(), cfg.lookback_days, cfg.rebalance_days);

    SolverOptions opts;
    opts.max_iterations = cfg.max_iterations;
    opts.tol_objective = cfg.tol_objective;
    opts.tol_feasibility = cfg.tol_feasibility;

    std::vector<std::string> methods;
    if (cfg.method == "all")
        methods = {"dcc", "forward", "backward", "full"};
    else
        methods = {cfg.method};

    for (const std::string& method : methods) {
        ConditionReport conditions;
        double a = 0.0;
        if (method == "dcc")
            a = resolve_steepness(cfg.a, static_cast<int>(panel.stocks()), cfg.eps,
                                  &conditions);
        BacktestParams params;
        params.method = method_from_string(method);
        params.solver = opts;
        params.jobs = cfg.jobs;
        params.k = cfg.k;
        if (params.method == Method::dcc)
            params.dcc = DccParams(a, cfg.eps, cfg.k);

        const BacktestResult result = run_backtest(panel, params, schedule);

        ReportContext ctx;
        ctx.config_echo =
            echo_common(cfg.data_path, cfg.target, method, cfg.k, a, cfg.eps, cfg.seed);
        ctx.config_echo["lookback_days"] = std::to_string(cfg.lookback_days);
        ctx.config_echo["rebalance_days"] = std::to_string(cfg.rebalance_days);
        if (method == "dcc") ctx.conditions = conditions;
        const fs::path out = methods.size() == 1 ? fs::path(cfg.output_dir)
                                                 : fs::path(cfg.output_dir) / method;
        write_report(result, panel.tickers, out, ctx);

        const Metrics& m = result.tracking_metrics;
        std::printf("%-8s mae %.6f cumulative %.6f volatility %.6f sharpe %s mdd %.6f\n",
                    method.c_str(), result.mae_value, m.cumulative_return, m.volatility,
                    m.sharpe ? detail::format_double(*m.sharpe).c_str() : "n/a", m.mdd);
    }
    return kExitOk;
}

int cmd_check_conditions(int n, double eps, const std::string& a_flag,
                         const std::string& scan, const std::string& out_csv) {
    if (!scan.empty()) {
        double lo = 0.0, hi = 0.0;
        int steps = 0;
        if (std::sscanf(scan.c_str(), "%lf:%lf:%d", &lo, &hi, &steps) != 3 || lo <= 0.0 ||
            hi <= lo || steps < 2)
            throw ConfigError("--scan expects lo:hi:steps with 0 < lo < hi, steps >= 2");
        std::ofstream out(out_csv);
        if (!out) throw IoError("cannot write '" + out_csv + "'");
        out << "a,c0,c1,c2,e\n";
        const double ratio = std::pow(hi / lo, 1.0 / static_cast<double>(steps - 1));
        double a = lo;
        for (int i = 0; i < steps; ++i, a *= ratio) {
            const ConditionReport r = check_conditions(n, DccParams(a, eps, 1));
            out << detail::format_double(a) << ',' << r.c0 << ',' << r.c1 << ',' << r.c2
                << ',' << detail::format_double(r.error_integral) << '\n';
        }
        std::printf("wrote %s (%d rows)\n", out_csv.c_str(), steps);
        return kExitOk;
    }
    if (!a_flag.empty()) {
        const double a = std::stod(a_flag);
        const ConditionReport r = check_conditions(n, DccParams(a, eps, 1));
        std::printf("a %.12g\nc0 %s\nc1 %s\nc2 %s\nerror_integral %.12g\nn_times_e %.12g\n",
                    a, r.c0 ? "true" : "false", r.c1 ? "true" : "false",
                    r.c2 ? "true" : "false", r.error_integral, r.n_times_e);
        return kExitOk;
    }
    const double a_min = min_a_search(n, eps);
    const ConditionReport r = check_conditions(n, DccParams(a_min, eps, 1));
    std::printf("min_a %.12g\nc0 %s\nc1 %s\nc2 %s\nerror_integral %.12g\nn_times_e %.12g\n",
                a_min, r.c0 ? "true" : "false", r.c1 ? "true" : "false",
                r.c2 ? "true" : "false", r.error_integral, r.n_times_e);
    return kExitOk;
}

int cmd_synth(int n, int d, int sparse_k, double noise, std::uint64_t seed,
              const std::string& out) {
    SynthSpec spec;
    spec.n_stocks = n;
    spec.n_days = d;
    spec.sparse_k = sparse_k;
    spec.noise = noise;
    spec.seed = seed;
    const SynthPanel panel = make_synth_panel(spec);
    const auto [prices_path, truth_path] =
        write_synth_csv(out, panel.prices, panel.index_prices, panel.price_dates,
                        panel.panel.tickers, panel.truth);
    std::printf("wrote %s and %s\n", prices_path.string().c_str(),
                truth_path.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse index tracking with a smooth cardinality constraint"};
    app.require_subcommand(1);

    // solve
    auto* solve = app.add_subcommand("solve", "fit one portfolio on the full data span");
    std::string s_data, s_target, s_method = "dcc", s_a = "auto", s_out = "out";
    int s_k = 10, s_maxit = 500;
    double s_eps = kDefaultCutoff;
    solve->add_option("--data", s_data, "price CSV path")->required();
    solve->add_option("--target", s_target, "target index column name")->required();
    solve->add_option("--method", s_method, "dcc|forward|backward|full")
        ->check(CLI::IsMember({"dcc", "forward", "backward", "full"}));
    solve->add_option("--k", s_k, "cardinality bound K");
    solve->add_option("--a", s_a, "sigmoid steepness, or 'auto' for the minimal value");
    solve->add_option("--eps", s_eps, "weight cutoff threshold");
    solve->add_option("--out", s_out, "output directory");
    solve->add_option("--max-iterations", s_maxit, "solver iteration cap");

    // backtest
    auto* backtest = app.add_subcommand("backtest", "sliding-window backtest");
    std::string b_config;
    RunConfig b_cfg;
    std::string b_method;
    backtest->add_option("--config", b_config, "key = value config file");
    backtest->add_option("--data", b_cfg.data_path, "price CSV path (overrides config)");
    backtest->add_option("--target", b_cfg.target, "target index column");
    backtest->add_option("--method", b_method, "dcc|forward|backward|full|all");
    backtest->add_option("--k", b_cfg.k, "cardinality bound K");
    backtest->add_option("--a", b_cfg.a, "sigmoid steepness or 'auto'");
    backtest->add_option("--eps", b_cfg.eps, "weight cutoff threshold");
    backtest->add_option("--lookback", b_cfg.lookback_days, "fit window rows");
    backtest->add_option("--rebalance", b_cfg.rebalance_days, "rows between refits");
    backtest->add_option("--out", b_cfg.output_dir, "output directory");
    backtest->add_option("--jobs", b_cfg.jobs, "parallel window fits");
    backtest->add_option("--seed", b_cfg.seed, "seed echoed into the summary");

    // check-conditions
    auto* check = app.add_subcommand("check-conditions",
                                     "test the steepness validity conditions");
    int c_n = 100;
    double c_eps = kDefaultCutoff;
    std::string c_a, c_scan, c_out = "conditions.csv";
    check->add_option("--n", c_n, "number of stocks N")->required();
    check->add_option("--eps", c_eps, "weight cutoff threshold");
    check->add_option("--a", c_a, "steepness to test (omit to search the minimum)");
    check->add_option("--scan", c_scan, "lo:hi:steps geometric steepness scan");
    check->add_option("--scan-out", c_out, "CSV path for --scan output");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic price CSV");
    int y_n = 20, y_d = 252, y_k = 5;
    double y_noise = 0.0;
    std::uint64_t y_seed = 0;
    std::string y_out = "synth_prices.csv";
    synth->add_option("--n", y_n, "number of stocks")->required();
    synth->add_option("--d", y_d, "number of return rows")->required();
    synth->add_option("--sparse-k", y_k, "planted support size")->required();
    synth->add_option("--noise", y_noise, "index noise stddev");
    synth->add_option("--seed", y_seed, "RNG seed");
    synth->add_option("--out", y_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    if (solve->parsed())
        return run_guarded([&] {
            return cmd_solve(s_data, s_target, s_method, s_k, s_a, s_eps, s_out, s_maxit);
        });
    if (backtest->parsed())
        return run_guarded([&] {
            RunConfig cfg = b_config.empty() ? RunConfig{} : load_config(b_config);
            // Direct flags override the file.
            for (const auto* opt : backtest->get_options()) {
                if (opt->count() == 0) continue;
                const std::string name = opt->get_name();
                if (name == "--data") cfg.data_path = b_cfg.data_path;
                else if (name == "--target") cfg.target = b_cfg.target;
                else if (name == "--method") cfg.method = b_method;
                else if (name == "--k") cfg.k = b_cfg.k;
                else if (name == "--a") cfg.a = b_cfg.a;
                else if (name == "--eps") cfg.eps = b_cfg.eps;
                else if (name == "--lookback") cfg.lookback_days = b_cfg.lookback_days;
                else if (name == "--rebalance") cfg.rebalance_days = b_cfg.rebalance_days;
                else if (name == "--out") cfg.output_dir = b_cfg.output_dir;
                else if (name == "--jobs") cfg.jobs = b_cfg.jobs;
                else if (name == "--seed") cfg.seed = b_cfg.seed;
            }
            if (cfg.data_path.empty()) throw ConfigError("data_path is required");
            return cmd_backtest(cfg);
        });
    if (check->parsed())
        return run_guarded([&] { return cmd_check_conditions(c_n, c_eps, c_a, c_scan, c_out); });
    if (synth->parsed())
        return run_guarded([&] { return cmd_synth(y_n, y_d, y_k, y_noise, y_seed, y_out); });
    return kExitConfig;
}

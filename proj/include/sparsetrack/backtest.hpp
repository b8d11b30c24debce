#pragma once

// Sliding-window backtesting: fit weights on a trailing lookback window at
// every rebalance, hold them through the next rebalance interval, and score
// the concatenated tracking series against the target (MAE on rebased levels
// plus the usual portfolio metrics).

#include "sparsetrack/baselines.hpp"
#include "sparsetrack/model.hpp"
#include "sparsetrack/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sparsetrack {

// One fit/hold window, all values row indices into the panel.
struct Window {
    Eigen::Index fit_start;
    Eigen::Index fit_end;    // exclusive
    Eigen::Index hold_start;
    Eigen::Index hold_end;   // exclusive
};

struct Schedule {
    std::vector<Window> windows;
    int lookback_days = 0;
    int rebalance_days = 0;

    Eigen::Index eval_start() const { return windows.front().hold_start; }
    Eigen::Index eval_end() const { return windows.back().hold_end; }
};

// Builds the rebalance schedule: first fit uses rows [0, lookback), weights
// hold for rebalance_days rows, then the window slides. Hold spans partition
// the post-lookback range exactly.
inline Schedule make_schedule(Eigen::Index n_days, int lookback_days,
                              int rebalance_days) {
    if (lookback_days < 2 || rebalance_days < 1)
        throw DomainError("lookback_days must be >= 2 and rebalance_days >= 1");
    if (n_days <= lookback_days)
        throw InsufficientData("need more than lookback_days=" +
                               std::to_string(lookback_days) + " rows, got " +
                               std::to_string(n_days));
    Schedule schedule;
    schedule.lookback_days = lookback_days;
    schedule.rebalance_days = rebalance_days;
    for (Eigen::Index t = lookback_days; t < n_days; t += rebalance_days) {
        Window w;
        w.fit_start = t - lookback_days;
        w.fit_end = t;
        w.hold_start = t;
        w.hold_end = std::min<Eigen::Index>(t + rebalance_days, n_days);
        schedule.windows.push_back(w);
    }
    return schedule;
}

inline Schedule make_schedule(const std::vector<std::string>& dates, int lookback_days,
                              int rebalance_days) {
    return make_schedule(static_cast<Eigen::Index>(dates.size()), lookback_days,
                         rebalance_days);
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    double cumulative_return = 0.0;
    double volatility = 0.0;
    std::optional<double> sharpe;  // absent when volatility is zero
    double mdd = 0.0;
};

inline constexpr double kTradingDaysPerYear = 252.0;

// Cumulative level series from daily returns, including the base point.
inline Vector levels_from_returns(const Vector& returns, double base = 100.0) {
    Vector levels(returns.size() + 1);
    levels(0) = base;
    for (Eigen::Index t = 0; t < returns.size(); ++t)
        levels(t + 1) = levels(t) * (1.0 + returns(t));
    return levels;
}

// Mean absolute deviation between two equal-length series. The backtester
// feeds it cumulative index levels rebased to 100 at evaluation start.
inline double mae(const Vector& tracking, const Vector& target) {
    if (tracking.size() != target.size())
        throw LengthMismatch("mae: series lengths " + std::to_string(tracking.size()) +
                             " vs " + std::to_string(target.size()));
    if (tracking.size() < 1) throw LengthMismatch("mae: empty series");
    return (tracking - target).cwiseAbs().mean();
}

// Annualized metrics of a daily return series. Volatility uses the sample
// standard deviation; Sharpe assumes a zero risk-free rate; the maximum
// drawdown is measured on the cumulative level path (base included).
inline Metrics metrics(const Vector& returns) {
    if (returns.size() < 1) throw LengthMismatch("metrics: empty return series");
    Metrics m;
    const double n = static_cast<double>(returns.size());
    const double mean = returns.mean();
    double var = 0.0;
    if (returns.size() > 1) {
        var = (returns.array() - mean).square().sum() / (n - 1.0);
    }
    const double sd = std::sqrt(var);
    m.volatility = sd * std::sqrt(kTradingDaysPerYear);
    if (sd > 0.0) m.sharpe = mean * kTradingDaysPerYear / m.volatility;

    double level = 1.0, peak = 1.0, cum_max_dd = 0.0;
    for (Eigen::Index t = 0; t < returns.size(); ++t) {
        level *= 1.0 + returns(t);
        peak = std::max(peak, level);
        cum_max_dd = std::max(cum_max_dd, (peak - level) / peak);
    }
    m.cumulative_return = level - 1.0;
    m.mdd = cum_max_dd;
    return m;
}

// Upper bound on the tracking error of a sparse portfolio: for each stock,
// the worst mean-return gap to any selected stock, weighted by its holding.
inline double tracking_error_upper_bound(const ReturnsPanel& panel,
                                         const WeightVector& w) {
    if (w.size() != panel.stocks())
        throw DimensionMismatch("weights length does not match panel");
    const Vector mean_returns = panel.returns.colwise().mean();
    std::vector<Eigen::Index> selected;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) selected.push_back(i);
    double bound = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] == 0.0) continue;
        double worst = 0.0;
        for (const Eigen::Index j : selected)
            worst = std::max(worst, std::abs(mean_returns(i) - mean_returns(j)));
        bound += worst * w[i];
    }
    return bound;
}

// ---------------------------------------------------------------------------
// Backtest runner

enum class Method { dcc, forward, backward, full };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::dcc: return "dcc";
        case Method::forward: return "forward";
        case Method::backward: return "backward";
        default: return "full";
    }
}

inline Method method_from_string(const std::string& s) {
    if (s == "dcc") return Method::dcc;
    if (s == "forward") return Method::forward;
    if (s == "backward") return Method::backward;
    if (s == "full") return Method::full;
    throw ConfigError("unknown method '" + s + "'");
}

struct BacktestParams {
    Method method = Method::dcc;
    std::optional<DccParams> dcc;  // required for Method::dcc
    int k = 0;                     // required for the selection baselines
    SolverOptions solver;
    int jobs = 1;                  // parallel window fits; 1 keeps timings exact
};

struct BacktestResult {
    Vector tracking;                        // daily tracking returns, eval span
    Vector target;                          // matching target returns
    std::vector<WeightVector> weights_per_rebalance;
    std::vector<std::string> rebalance_dates;
    std::vector<std::string> eval_dates;
    Schedule schedule;
    double mae_value = 0.0;                 // on levels rebased to 100
    Metrics tracking_metrics;
    std::vector<double> per_rebalance_wall_time;
};

// Fits each window with the chosen method, then scores daily tracking returns
// built from the most recent rebalance weights. A window failure aborts the
// whole run with the window index attached.
inline BacktestResult run_backtest(const ReturnsPanel& panel, const BacktestParams& params,
                                   const Schedule& schedule) {
    validate_panel(panel);
    if (schedule.windows.empty()) throw InsufficientData("empty schedule");
    if (schedule.eval_end() > panel.days())
        throw DimensionMismatch("schedule extends past the panel");
    if (params.method == Method::dcc && !params.dcc)
        throw ConfigError("dcc method requires DccParams");

    const auto n_windows = schedule.windows.size();
    std::vector<std::optional<SolveReport>> fits(n_windows);
    std::vector<std::string> failures(n_windows);

    auto fit_window = [&](size_t idx) {
        const Window& win = schedule.windows[idx];
        const ReturnsPanel sub = slice_panel(panel, win.fit_start, win.fit_end);
        try {
            switch (params.method) {
                case Method::dcc:
                    fits[idx] = partial_replication_dcc(sub, *params.dcc, params.solver);
                    break;
                case Method::forward:
                    fits[idx] = forward_selection(sub, params.k, params.solver);
                    break;
                case Method::backward:
                    fits[idx] = backward_selection(sub, params.k, params.solver);
                    break;
                case Method::full:
                    fits[idx] = full_replication(sub, params.solver);
                    break;
            }
        } catch (const Error& e) {
            failures[idx] = e.what();
        }
    };

    const int jobs = std::max(1, params.jobs);
    if (jobs == 1 || n_windows <= 1) {
        for (size_t i = 0; i < n_windows; ++i) fit_window(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        const auto workers = static_cast<size_t>(std::min<size_t>(
            static_cast<size_t>(jobs), n_windows));
        pool.reserve(workers);
        for (size_t t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (size_t i = next++; i < n_windows; i = next++) fit_window(i);
            });
        for (auto& th : pool) th.join();
    }

    for (size_t i = 0; i < n_windows; ++i)
        if (!fits[i])
            throw Error("WindowFitFailed", "window " + std::to_string(i) +
                                               " failed: " + failures[i]);

    BacktestResult result;
    result.schedule = schedule;
    const Eigen::Index eval_len = schedule.eval_end() - schedule.eval_start();
    result.tracking.resize(eval_len);
    result.target.resize(eval_len);
    result.eval_dates.reserve(static_cast<size_t>(eval_len));

    Eigen::Index out = 0;
    for (size_t i = 0; i < n_windows; ++i) {
        const Window& win = schedule.windows[i];
        const Vector& w = fits[i]->weights.values();
        for (Eigen::Index t = win.hold_start; t < win.hold_end; ++t, ++out) {
            result.tracking(out) = panel.returns.row(t).dot(w);
            result.target(out) = panel.target(t);
            result.eval_dates.push_back(panel.dates[static_cast<size_t>(t)]);
        }
        result.weights_per_rebalance.push_back(fits[i]->weights);
        result.rebalance_dates.push_back(panel.dates[static_cast<size_t>(win.hold_start)]);
        result.per_rebalance_wall_time.push_back(fits[i]->wall_time_seconds);
    }

    result.mae_value = mae(levels_from_returns(result.tracking),
                           levels_from_returns(result.target));
    result.tracking_metrics = metrics(result.tracking);
    return result;
}

}  // namespace sparsetrack

#pragma once

// Greedy selection baselines built on repeated full replication: forward
// selection adds the highest-weight unselected stock K times (K+1 solves in
// total), backward selection drops the smallest-weight stock until K remain
// (N-K+1 solves in total). Tie-breaking is deterministic: forward prefers the
// lower column index, backward removes the higher column index.

#include "sparsetrack/model.hpp"
#include "sparsetrack/solver.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <vector>

namespace sparsetrack {

namespace detail {

inline SolveReport report_from_restricted(const ReturnsPanel& panel,
                                          const RestrictedSolve& fit,
                                          int iterations, double seconds) {
    SolveReport report{WeightVector(fit.w, kDefaultCutoff)};
    report.objective = (panel.returns * fit.w - panel.target).squaredNorm();
    TrackingProblem prob(panel.returns, panel.target, std::nullopt);
    report.kkt_residual = kkt_residual(prob, fit.w, fit.lambda, fit.mu, 0.0);
    report.iterations = iterations;
    report.exact_cardinality = cardinality_exact(report.weights);
    report.wall_time_seconds = seconds;
    return report;
}

}  // namespace detail

// Optional probe so tests can count how many full replications a baseline ran.
struct SelectionTrace {
    int solve_count = 0;
    std::vector<Eigen::Index> picks;  // order of adds (forward) or drops (backward)
};

inline SolveReport forward_selection(const ReturnsPanel& panel, int k,
                                     const SolverOptions& opts = {},
                                     SelectionTrace* trace = nullptr) {
    validate_panel(panel);
    const Eigen::Index n = panel.stocks();
    if (k < 1 || k >= n)
        throw InfeasibleConstraintConfig("forward selection needs 1 <= K < N");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<char> selected(static_cast<size_t>(n), 0);
    std::vector<Eigen::Index> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});

    int iterations = 0;
    int solves = 0;
    for (int step = 0; step < k; ++step) {
        const detail::RestrictedSolve fit =
            detail::solve_on_support(panel.returns, panel.target, all, opts);
        ++solves;
        iterations += fit.iterations;
        // Highest-weight unselected stock; ties go to the lower index. Stocks
        // at zero weight rank below every positive weight.
        Eigen::Index best = -1;
        double best_w = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (selected[static_cast<size_t>(i)]) continue;
            if (fit.w(i) > best_w) {
                best_w = fit.w(i);
                best = i;
            }
        }
        selected[static_cast<size_t>(best)] = 1;
        if (trace) trace->picks.push_back(best);
    }

    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < n; ++i)
        if (selected[static_cast<size_t>(i)]) support.push_back(i);
    const detail::RestrictedSolve final_fit =
        detail::solve_on_support(panel.returns, panel.target, support, opts);
    ++solves;
    iterations += final_fit.iterations;
    if (trace) trace->solve_count = solves;

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return detail::report_from_restricted(panel, final_fit, iterations, seconds);
}

inline SolveReport backward_selection(const ReturnsPanel& panel, int k,
                                      const SolverOptions& opts = {},
                                      SelectionTrace* trace = nullptr) {
    validate_panel(panel);
    const Eigen::Index n = panel.stocks();
    if (k < 1 || k >= n)
        throw InfeasibleConstraintConfig("backward selection needs 1 <= K < N");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<Eigen::Index> support(static_cast<size_t>(n));
    std::iota(support.begin(), support.end(), Eigen::Index{0});

    int iterations = 0;
    int solves = 0;
    detail::RestrictedSolve fit =
        detail::solve_on_support(panel.returns, panel.target, support, opts);
    ++solves;
    iterations += fit.iterations;

    while (static_cast<Eigen::Index>(support.size()) > k) {
        // Smallest weight leaves; ties remove the higher column index.
        size_t drop_pos = 0;
        double drop_w = std::numeric_limits<double>::infinity();
        for (size_t pos = 0; pos < support.size(); ++pos) {
            const double wi = fit.w(support[pos]);
            if (wi < drop_w || (wi == drop_w && support[pos] > support[drop_pos])) {
                drop_w = wi;
                drop_pos = pos;
            }
        }
        if (trace) trace->picks.push_back(support[drop_pos]);
        support.erase(support.begin() + static_cast<std::ptrdiff_t>(drop_pos));
        fit = detail::solve_on_support(panel.returns, panel.target, support, opts);
        ++solves;
        iterations += fit.iterations;
    }
    if (trace) trace->solve_count = solves;

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return detail::report_from_restricted(panel, fit, iterations, seconds);
}

}  // namespace sparsetrack

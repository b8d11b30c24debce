#pragma once

// Core domain types shared by every sparsetrack module: the returns panel,
// portfolio weight vectors, smooth-cardinality parameters, and solve reports.
// Types are validated on construction (or via validate_panel for aggregates)
// and treated as immutable afterwards.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sparsetrack {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Feasibility slack for weight-vector invariants (nonnegativity, sum-to-one).
inline constexpr double kFeasibilityTol = 1e-8;

// Default weight cutoff threshold below which a holding counts as zero.
inline constexpr double kDefaultCutoff = 1e-4;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define SPARSETRACK_DEFINE_ERROR(Name)                                  \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    }

SPARSETRACK_DEFINE_ERROR(DimensionMismatch);
SPARSETRACK_DEFINE_ERROR(NonMonotonicDates);
SPARSETRACK_DEFINE_ERROR(DomainError);
SPARSETRACK_DEFINE_ERROR(SearchFailed);
SPARSETRACK_DEFINE_ERROR(MaxIterationsExceeded);
SPARSETRACK_DEFINE_ERROR(DegenerateProblem);
SPARSETRACK_DEFINE_ERROR(InfeasibleConstraintConfig);
SPARSETRACK_DEFINE_ERROR(SubproblemSingular);
SPARSETRACK_DEFINE_ERROR(AllBelowCutoff);
SPARSETRACK_DEFINE_ERROR(InsufficientData);
SPARSETRACK_DEFINE_ERROR(LengthMismatch);
SPARSETRACK_DEFINE_ERROR(ParseError);
SPARSETRACK_DEFINE_ERROR(EmptyFile);
SPARSETRACK_DEFINE_ERROR(UnfixableLeadingGap);
SPARSETRACK_DEFINE_ERROR(NonPositivePrice);
SPARSETRACK_DEFINE_ERROR(IoError);
SPARSETRACK_DEFINE_ERROR(ConfigError);

#undef SPARSETRACK_DEFINE_ERROR

class NonFiniteEntry : public Error {
public:
    // col == -1 flags the target series rather than a stock column.
    NonFiniteEntry(Eigen::Index row, Eigen::Index col)
        : Error("NonFiniteEntry",
                "non-finite entry at row " + std::to_string(row) + ", col " +
                    std::to_string(col)),
          row_(row), col_(col) {}

    Eigen::Index row() const noexcept { return row_; }
    Eigen::Index col() const noexcept { return col_; }

private:
    Eigen::Index row_;
    Eigen::Index col_;
};

class AssuranceViolated : public Error {
public:
    AssuranceViolated(std::string message, Vector witness)
        : Error("AssuranceViolated", message), witness_(std::move(witness)) {}

    const Vector& witness() const noexcept { return witness_; }

private:
    Vector witness_;
};

// ---------------------------------------------------------------------------
// ReturnsPanel

// D x N daily simple returns plus the matching target-index return series.
// Aggregate by design: raw panels are assembled by ingestion and must pass
// validate_panel before use.
struct ReturnsPanel {
    Matrix returns;                      // D x N
    Vector target;                       // length D
    std::vector<std::string> dates;      // length D, strictly increasing
    std::vector<std::string> tickers;    // length N

    Eigen::Index days() const { return returns.rows(); }
    Eigen::Index stocks() const { return returns.cols(); }
};

// Checks every ReturnsPanel invariant and returns the panel unchanged.
// Throws DimensionMismatch, NonFiniteEntry or NonMonotonicDates.
inline const ReturnsPanel& validate_panel(const ReturnsPanel& panel) {
    const Eigen::Index d = panel.returns.rows();
    const Eigen::Index n = panel.returns.cols();
    if (d < 2 || n < 2)
        throw DimensionMismatch("panel needs D >= 2 and N >= 2, got D=" +
                                std::to_string(d) + " N=" + std::to_string(n));
    if (panel.target.size() != d)
        throw DimensionMismatch("target length " + std::to_string(panel.target.size()) +
                                " != D=" + std::to_string(d));
    if (static_cast<Eigen::Index>(panel.dates.size()) != d)
        throw DimensionMismatch("dates length " + std::to_string(panel.dates.size()) +
                                " != D=" + std::to_string(d));
    if (static_cast<Eigen::Index>(panel.tickers.size()) != n)
        throw DimensionMismatch("tickers length " + std::to_string(panel.tickers.size()) +
                                " != N=" + std::to_string(n));
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            if (!std::isfinite(panel.returns(i, j))) throw NonFiniteEntry(i, j);
        if (!std::isfinite(panel.target(i))) throw NonFiniteEntry(i, -1);
    }
    for (Eigen::Index i = 1; i < d; ++i)
        if (!(panel.dates[i - 1] < panel.dates[i]))
            throw NonMonotonicDates("dates not strictly increasing at row " +
                                    std::to_string(i) + ": '" + panel.dates[i - 1] +
                                    "' then '" + panel.dates[i] + "'");
    return panel;
}

// Row subrange [first, last) of a panel; used by the backtester for fit windows.
inline ReturnsPanel slice_panel(const ReturnsPanel& panel, Eigen::Index first,
                                Eigen::Index last) {
    if (first < 0 || last > panel.days() || last - first < 2)
        throw DimensionMismatch("invalid panel slice [" + std::to_string(first) + ", " +
                                std::to_string(last) + ")");
    ReturnsPanel out;
    out.returns = panel.returns.middleRows(first, last - first);
    out.target = panel.target.segment(first, last - first);
    out.dates.assign(panel.dates.begin() + first, panel.dates.begin() + last);
    out.tickers = panel.tickers;
    return out;
}

// ---------------------------------------------------------------------------
// WeightVector

// Long-only portfolio weights with an attached sparsity cutoff. The
// constructor enforces elementwise nonnegativity and sum-to-one within
// kFeasibilityTol.
class WeightVector {
public:
    explicit WeightVector(Vector w, double eps = kDefaultCutoff)
        : w_(std::move(w)), eps_(eps) {
        if (w_.size() == 0) throw DimensionMismatch("empty weight vector");
        if (!(eps_ > 0.0 && eps_ < 0.5))
            throw DomainError("cutoff eps must lie in (0, 0.5), got " + std::to_string(eps_));
        for (Eigen::Index i = 0; i < w_.size(); ++i) {
            if (!std::isfinite(w_(i))) throw NonFiniteEntry(i, 0);
            if (w_(i) < -kFeasibilityTol)
                throw DomainError("weight " + std::to_string(i) + " = " +
                                  std::to_string(w_(i)) + " below -feasibility tol");
        }
        if (std::abs(w_.sum() - 1.0) > kFeasibilityTol)
            throw DomainError("weights sum to " + std::to_string(w_.sum()) +
                              ", expected 1 within feasibility tol");
    }

    const Vector& values() const noexcept { return w_; }
    double eps() const noexcept { return eps_; }
    Eigen::Index size() const noexcept { return w_.size(); }
    double operator[](Eigen::Index i) const { return w_(i); }

private:
    Vector w_;
    double eps_;
};

// ---------------------------------------------------------------------------
// DccParams

enum class DccVariant { rational, sigmoid };

inline const char* to_string(DccVariant v) {
    return v == DccVariant::rational ? "rational" : "sigmoid";
}

// Parameters of the smooth cardinality constraint: steepness a, cutoff eps,
// cardinality bound K and the approximation variant.
struct DccParams {
    double a;
    double eps;
    int k;
    DccVariant variant;

    DccParams(double a_, double eps_, int k_, DccVariant variant_ = DccVariant::sigmoid)
        : a(a_), eps(eps_), k(k_), variant(variant_) {
        if (!(a > 0.0) || !std::isfinite(a))
            throw DomainError("steepness a must be positive, got " + std::to_string(a));
        if (!(eps > 0.0 && eps < 0.5))
            throw DomainError("cutoff eps must lie in (0, 0.5), got " + std::to_string(eps));
        if (k < 1)
            throw InfeasibleConstraintConfig("cardinality bound K must be >= 1, got " +
                                             std::to_string(k));
    }

    // K < N can only be checked once the panel width is known.
    void validate_for(Eigen::Index n_stocks) const {
        if (k >= n_stocks)
            throw InfeasibleConstraintConfig(
                "cardinality bound K=" + std::to_string(k) +
                " must be < N=" + std::to_string(n_stocks));
    }
};

// ---------------------------------------------------------------------------
// Reports

// Outcome of the hyperparameter-condition check for a given (N, a, eps).
struct ConditionReport {
    bool c0 = false;                      // zero weights stay counted as ~0
    bool c1 = false;                      // unit weights are counted as ~1
    bool c2 = false;                      // error integral <= 1/N
    double error_integral = 0.0;          // e = int_0^1 |b - b_tilde| dw
    double n_times_e = 0.0;
    std::optional<double> min_a_overall;  // filled when a search was run

    bool all() const noexcept { return c0 && c1 && c2; }
};

// Result of one full or partial replication solve. `weights`, `objective` and
// `exact_cardinality` describe the final (post-threshold) portfolio;
// `smooth_cardinality` and `kkt_residual` describe the smooth pre-threshold
// iterate the solver converged to.
struct SolveReport {
    WeightVector weights;
    double objective = 0.0;               // ||Xw - y||^2 of the final weights
    double kkt_residual = 0.0;
    int iterations = 0;
    std::optional<double> smooth_cardinality;  // absent for plain full replication
    int exact_cardinality = 0;
    double wall_time_seconds = 0.0;
};

namespace detail {

// Internal SQP state: multipliers follow the Lagrangian
//   L(w, lambda, mu, nu) = f(w) + lambda (1 - sum w) - mu . w + nu (C~(w) - K).
struct SolverState {
    Vector w;
    double lambda = 0.0;
    Vector mu;                 // >= 0, one per nonnegativity bound
    double nu = 0.0;           // >= 0, smooth-cardinality multiplier
    Matrix hessian_approx;     // symmetric positive definite
    double penalty = 1.0;      // l1 merit penalty weight
};

}  // namespace detail

}  // namespace sparsetrack

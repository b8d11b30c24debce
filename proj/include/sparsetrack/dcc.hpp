#pragma once

// Smooth cardinality machinery: the rational and shifted-sigmoid binary
// approximations, their gradients, the approximation-error integral, the
// validity conditions C0/C1/C2 on the steepness constant, the minimal-a
// search, and a randomized assurance checker for the cardinality guarantee.

#include "sparsetrack/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sparsetrack {

// Exact selection indicator with cutoff: 0 if w < eps, 1 if w >= eps.
inline int b_exact(double w, double eps) {
    if (!(w >= 0.0 && w <= 1.0))
        throw DomainError("b_exact: weight " + std::to_string(w) + " outside [0, 1]");
    if (!(eps > 0.0 && eps < 0.5))
        throw DomainError("b_exact: eps " + std::to_string(eps) + " outside (0, 0.5)");
    return w >= eps ? 1 : 0;
}

// Rational indicator approximation 1 - 1/(a w + 1). Zero at the origin,
// increasing, asymptote at 1.
inline double b_rational(double w, double a) {
    if (w < 0.0)
        throw DomainError("b_rational: negative weight " + std::to_string(w));
    if (!(a > 0.0))
        throw DomainError("b_rational: steepness must be positive");
    return 1.0 - 1.0 / (a * w + 1.0);
}

// d/dw b_rational = a / (a w + 1)^2
inline double b_rational_grad(double w, double a) {
    const double t = a * w + 1.0;
    return a / (t * t);
}

// Shifted sigmoid indicator approximation 1 / (1 + exp(-a (w - eps))).
// Branch-free in the sense that no positive argument is ever exponentiated,
// so it saturates cleanly to 0.0 / 1.0 for |a (w - eps)| beyond ~745 instead
// of overflowing; steepness up to ~1e6 and beyond is safe.
inline double b_sigmoid(double w, double a, double eps) {
    const double x = a * (w - eps);
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

// d/dw b_sigmoid = a s (1 - s) with s = b_sigmoid(w). Strictly positive.
inline double b_sigmoid_grad(double w, double a, double eps) {
    const double s = b_sigmoid(w, a, eps);
    return a * s * (1.0 - s);
}

// Exact cardinality: number of weights at or above the cutoff.
inline int cardinality_exact(const Vector& w, double eps) {
    int count = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w(i) >= eps) ++count;
    return count;
}

inline int cardinality_exact(const WeightVector& w) {
    return cardinality_exact(w.values(), w.eps());
}

// Smooth cardinality: sum of per-weight indicator approximations.
inline double cardinality_smooth(const Vector& w, const DccParams& p) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        total += p.variant == DccVariant::sigmoid ? b_sigmoid(w(i), p.a, p.eps)
                                                  : b_rational(w(i), p.a);
    return total;
}

inline double cardinality_smooth(const WeightVector& w, const DccParams& p) {
    return cardinality_smooth(w.values(), p);
}

// Gradient of the smooth cardinality w.r.t. the weights.
inline Vector grad_cardinality_smooth(const Vector& w, const DccParams& p) {
    Vector g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        g(i) = p.variant == DccVariant::sigmoid ? b_sigmoid_grad(w(i), p.a, p.eps)
                                                : b_rational_grad(w(i), p.a);
    return g;
}

inline Vector grad_cardinality_smooth(const WeightVector& w, const DccParams& p) {
    return grad_cardinality_smooth(w.values(), p);
}

namespace detail {

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace detail

// Integral over [0, 1] of |b_exact - b_sigmoid| at cutoff eps, in closed form:
//   e = (1/a) [2 ln 2 - ln(1 + exp(-a eps)) - ln(1 + exp(-a (1 - eps)))].
// This is the constant bounding the aggregate cardinality error N * e.
inline double approx_error_integral(double a, double eps) {
    if (!(a > 0.0) || !std::isfinite(a))
        throw DomainError("approx_error_integral: steepness must be positive");
    if (!(eps > 0.0 && eps < 0.5))
        throw DomainError("approx_error_integral: eps outside (0, 0.5)");
    const double two_ln2 = 2.0 * std::log(2.0);
    return (two_ln2 - detail::softplus(-a * eps) - detail::softplus(-a * (1.0 - eps))) / a;
}

// Conditions on the steepness constant for a universe of N stocks:
//   C0: the all-zeros vector keeps an approximated count of at most eps,
//   C1: the all-ones vector keeps an approximated count of at least N - eps,
//   C2: the error integral is at most 1/N (assurance, Theorem-style bound).
inline ConditionReport check_conditions(int n_stocks, const DccParams& p,
                                        double tol = 0.0) {
    if (n_stocks < 2)
        throw DomainError("check_conditions: N must be >= 2");
    ConditionReport report;
    const double at_zero = static_cast<double>(n_stocks) * b_sigmoid(0.0, p.a, p.eps);
    const double at_one = static_cast<double>(n_stocks) * b_sigmoid(1.0, p.a, p.eps);
    report.c0 = at_zero <= p.eps + tol;
    report.c1 = at_one >= static_cast<double>(n_stocks) - p.eps - tol;
    report.error_integral = approx_error_integral(p.a, p.eps);
    report.n_times_e = static_cast<double>(n_stocks) * report.error_integral;
    report.c2 = report.error_integral <= 1.0 / static_cast<double>(n_stocks) + tol;
    return report;
}

namespace detail {

// Each condition is monotone in a; bisect for the smallest satisfying value.
template <typename Pred>
double bisect_min_a(Pred satisfied, double hi_cap) {
    double lo = 1e-8;
    if (satisfied(lo)) return lo;
    double hi = 1.0;
    while (!satisfied(hi)) {
        hi *= 2.0;
        if (hi > hi_cap)
            throw SearchFailed("no steepness a <= " + std::to_string(hi_cap) +
                               " satisfies all conditions");
    }
    lo = hi / 2.0;
    while ((hi - lo) > 1e-6 * hi) {
        const double mid = 0.5 * (lo + hi);
        (satisfied(mid) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace detail

// Smallest steepness a such that C0, C1 and C2 all hold for (N, eps).
// Bisection per condition (each is monotone in a), then the max of the three.
inline double min_a_search(int n_stocks, double eps) {
    if (n_stocks < 2) throw DomainError("min_a_search: N must be >= 2");
    if (!(eps > 0.0 && eps < 0.5)) throw DomainError("min_a_search: eps outside (0, 0.5)");
    constexpr double cap = 1e12;
    const double n = static_cast<double>(n_stocks);
    const double a0 = detail::bisect_min_a(
        [&](double a) { return n * b_sigmoid(0.0, a, eps) <= eps; }, cap);
    const double a1 = detail::bisect_min_a(
        [&](double a) { return n * b_sigmoid(1.0, a, eps) >= n - eps; }, cap);
    const double a2 = detail::bisect_min_a(
        [&](double a) { return approx_error_integral(a, eps) <= 1.0 / n; }, cap);
    return std::max({a0, a1, a2});
}

// ---------------------------------------------------------------------------
// Randomized assurance check

struct FuzzReport {
    long trials = 0;
    long smooth_within_bound = 0;   // vectors with smooth cardinality <= K
    long smooth_above_bound = 0;    // implication vacuous for these
    long boundary_vectors = 0;      // vectors containing entries exactly eps
    long counterexamples = 0;       // must stay 0 while N * e < 1
};

// Samples `trials` weight vectors in [0,1]^N -- uniform-simplex draws, sparse
// patterns, and vectors with entries pinned exactly at the cutoff -- and checks
// that smooth cardinality <= K always implies exact cardinality <= K.
// Requires N * e < 1; any counterexample under that precondition is an
// implementation bug and raises AssuranceViolated with the witness vector.
inline FuzzReport assurance_fuzz(int n_stocks, const DccParams& p, long trials,
                                 std::uint64_t seed) {
    if (n_stocks < 2) throw DomainError("assurance_fuzz: N must be >= 2");
    const double n_times_e =
        static_cast<double>(n_stocks) * approx_error_integral(p.a, p.eps);
    if (!(n_times_e < 1.0))
        throw DomainError("assurance_fuzz: precondition N * e < 1 fails (N*e = " +
                          std::to_string(n_times_e) + ")");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);

    FuzzReport report;
    Vector w(n_stocks);
    for (long t = 0; t < trials; ++t) {
        const int pattern = static_cast<int>(t % 4);
        bool has_boundary = false;
        switch (pattern) {
            case 0: {  // uniform on the simplex
                double s = 0.0;
                for (int i = 0; i < n_stocks; ++i) s += (w(i) = expo(rng));
                w /= s;
                break;
            }
            case 1: {  // sparse support with simplex weights on it
                std::uniform_int_distribution<int> size_dist(1, n_stocks);
                const int support = size_dist(rng);
                w.setZero();
                double s = 0.0;
                for (int i = 0; i < support; ++i) s += (w(i) = expo(rng));
                w.head(support) /= s;
                std::shuffle(w.data(), w.data() + n_stocks, rng);
                break;
            }
            case 2: {  // iid uniform in [0,1]^N, no simplex structure
                for (int i = 0; i < n_stocks; ++i) w(i) = unif(rng);
                break;
            }
            default: {  // entries pinned exactly at the cutoff
                std::uniform_int_distribution<int> count_dist(1, n_stocks);
                const int pinned = count_dist(rng);
                for (int i = 0; i < n_stocks; ++i)
                    w(i) = i < pinned ? p.eps : unif(rng);
                std::shuffle(w.data(), w.data() + n_stocks, rng);
                has_boundary = true;
                break;
            }
        }

        ++report.trials;
        if (has_boundary) ++report.boundary_vectors;
        const double smooth = cardinality_smooth(w, p);
        if (smooth <= static_cast<double>(p.k)) {
            ++report.smooth_within_bound;
            if (cardinality_exact(w, p.eps) > p.k) {
                ++report.counterexamples;
                throw AssuranceViolated(
                    "smooth cardinality " + std::to_string(smooth) + " <= K=" +
                        std::to_string(p.k) + " but exact cardinality " +
                        std::to_string(cardinality_exact(w, p.eps)) + " > K",
                    w);
            }
        } else {
            ++report.smooth_above_bound;
        }
    }
    return report;
}

}  // namespace sparsetrack

#pragma once

// Replication solvers. Full replication is constrained least squares over the
// probability simplex; partial replication adds the smooth cardinality
// constraint and is solved by a sequential quadratic Lagrangian method:
// at each iterate a convex QP models the Lagrangian locally (damped BFGS
// curvature started from X^T X), the QP multipliers update (lambda, mu, nu),
// and an l1 merit line search guarantees progress. Steep sigmoid targets are
// reached by continuation: solve at a mild steepness first, then re-solve
// warm-started while sharpening toward the requested value.

#include "sparsetrack/dcc.hpp"
#include "sparsetrack/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

namespace sparsetrack {

struct SolverOptions {
    int max_iterations = 500;          // per SQP run
    double tol_objective = 1e-9;       // relative objective stagnation
    double tol_feasibility = 1e-8;     // KKT / constraint tolerance
    std::optional<WeightVector> initial_weights;
    bool warn_on_condition_failure = true;

    void validate() const {
        if (max_iterations < 1) throw DomainError("max_iterations must be >= 1");
        if (!(tol_objective > 0.0) || !(tol_feasibility > 0.0))
            throw DomainError("solver tolerances must be positive");
    }
};

namespace detail {

// ---------------------------------------------------------------------------
// Active-set solver for the SQP subproblem
//   min 1/2 d^T B d + g^T d
//   s.t. sum(d) = delta,  d >= lb,  [c^T d <= r]
// B must be positive definite. Returns the step and KKT multipliers.

struct QpResult {
    Vector d;
    double lambda = 0.0;   // equality multiplier
    Vector mu;             // bound multipliers, >= 0
    double nu = 0.0;       // inequality multiplier, >= 0
    bool relaxed = false;  // inequality right-hand side was elastically shifted
    bool clean = true;     // false if the iteration cap was hit
};

class ActiveSetQp {
public:
    QpResult solve(const Matrix& B, const Vector& g, double delta, const Vector& lb,
                   const Vector* c, double r) const {
        const Eigen::Index n = g.size();
        QpResult res;
        res.mu = Vector::Zero(n);

        // Feasible start: least-norm point of {sum(d) = delta, d >= lb}.
        Vector d = knapsack_projection(delta, lb);
        std::vector<char> bound_active(static_cast<size_t>(n), 0);
        for (Eigen::Index i = 0; i < n; ++i)
            if (d(i) <= lb(i)) bound_active[static_cast<size_t>(i)] = 1;

        bool use_c = c != nullptr;
        bool c_active = false;
        double r_eff = r;
        if (use_c && c->lpNorm<Eigen::Infinity>() <= 1e-14) use_c = false;
        if (use_c) {
            const double cd0 = c->dot(d);
            if (cd0 > r_eff) {
                // Linearization infeasible at the projected start. Ask for a
                // fraction of the violation per step (elastic shift) and walk
                // toward the LP minimizer of c^T d just far enough to start on
                // the shifted boundary.
                Eigen::Index jmin = 0;
                c->minCoeff(&jmin);
                Vector d_lp = lb;
                d_lp(jmin) = delta - (lb.sum() - lb(jmin));
                const double lp_min = c->dot(d_lp);
                if (lp_min > r_eff) {
                    r_eff = std::max(r_eff, cd0 - 0.25 * (cd0 - lp_min));
                    res.relaxed = true;
                }
                if (cd0 > r_eff) {
                    const double t = (cd0 - r_eff) / (cd0 - lp_min);
                    d = (1.0 - t) * d + t * d_lp;
                    for (Eigen::Index i = 0; i < n; ++i)
                        if (d(i) <= lb(i) + 1e-14 * (1.0 + std::abs(lb(i)))) {
                            d(i) = lb(i);
                            bound_active[static_cast<size_t>(i)] = 1;
                        }
                    c_active = true;
                }
            }
        }

        const int max_iter = 40 + static_cast<int>(n);
        double lambda = 0.0, nu = 0.0;
        for (int iter = 0; iter < max_iter; ++iter) {
            // Free index set.
            std::vector<Eigen::Index> free;
            free.reserve(static_cast<size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i)
                if (!bound_active[static_cast<size_t>(i)]) free.push_back(i);

            if (free.empty()) {
                // Vertex: release the bound with the steepest descent direction.
                Vector grad_now = B * d + g;
                Eigen::Index drop = 0;
                grad_now.minCoeff(&drop);
                bound_active[static_cast<size_t>(drop)] = 0;
                continue;
            }

            const bool with_c = use_c && c_active;
            const auto nf = static_cast<Eigen::Index>(free.size());
            const Eigen::Index m = nf + 1 + (with_c ? 1 : 0);
            Matrix kkt = Matrix::Zero(m, m);
            Vector rhs = Vector::Zero(m);
            const Vector grad_now = B * d + g;
            for (Eigen::Index a = 0; a < nf; ++a) {
                for (Eigen::Index b = 0; b < nf; ++b) kkt(a, b) = B(free[a], free[b]);
                kkt(a, nf) = 1.0;
                kkt(nf, a) = 1.0;
                if (with_c) {
                    kkt(a, nf + 1) = (*c)(free[a]);
                    kkt(nf + 1, a) = (*c)(free[a]);
                }
                rhs(a) = -grad_now(free[a]);
            }

            Vector sol = kkt.partialPivLu().solve(rhs);
            if (!sol.allFinite() || (kkt * sol - rhs).lpNorm<Eigen::Infinity>() >
                                        1e-7 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
                sol = kkt.fullPivLu().solve(rhs);
                if (!sol.allFinite())
                    throw SubproblemSingular("QP subproblem KKT system is singular");
            }

            lambda = -sol(nf);
            nu = with_c ? -sol(nf + 1) : 0.0;
            Vector p = Vector::Zero(n);
            for (Eigen::Index a = 0; a < nf; ++a) p(free[a]) = sol(a);

            const double pnorm = p.lpNorm<Eigen::Infinity>();
            if (pnorm <= 1e-12 * (1.0 + d.lpNorm<Eigen::Infinity>())) {
                // Stationary on the working set; check dual feasibility.
                const Vector stat = B * d + g;
                double worst = -1e-12;
                Eigen::Index worst_bound = -1;
                bool worst_is_c = false;
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (!bound_active[static_cast<size_t>(i)]) continue;
                    const double mu_i =
                        stat(i) - lambda + (with_c ? nu * (*c)(i) : 0.0);
                    if (mu_i < worst) {
                        worst = mu_i;
                        worst_bound = i;
                        worst_is_c = false;
                    }
                }
                if (with_c && nu < worst) {
                    worst = nu;
                    worst_is_c = true;
                }
                if (worst_bound < 0 && !worst_is_c) {
                    finalize(res, d, lambda, nu, bound_active, with_c ? c : nullptr,
                             B, g);
                    return res;
                }
                if (worst_is_c)
                    c_active = false;
                else
                    bound_active[static_cast<size_t>(worst_bound)] = 0;
                continue;
            }

            // Ratio test against the inactive constraints.
            double alpha = 1.0;
            Eigen::Index blocking_bound = -1;
            bool blocking_c = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (bound_active[static_cast<size_t>(i)] || p(i) >= -1e-15) continue;
                const double step = (lb(i) - d(i)) / p(i);
                if (step < alpha) {
                    alpha = step;
                    blocking_bound = i;
                }
            }
            if (use_c && !c_active) {
                const double cp = c->dot(p);
                if (cp > 1e-15) {
                    const double step = (r_eff - c->dot(d)) / cp;
                    if (step < alpha) {
                        alpha = step;
                        blocking_bound = -1;
                        blocking_c = true;
                    }
                }
            }
            alpha = std::max(alpha, 0.0);
            d += alpha * p;
            if (blocking_c) {
                c_active = true;
            } else if (blocking_bound >= 0) {
                d(blocking_bound) = lb(blocking_bound);
                bound_active[static_cast<size_t>(blocking_bound)] = 1;
            }
        }

        finalize(res, d, lambda, nu, bound_active, (use_c && c_active) ? c : nullptr,
                 B, g);
        res.clean = false;
        return res;
    }

private:
    static Vector knapsack_projection(double delta, const Vector& lb) {
        const Eigen::Index n = lb.size();
        auto mass = [&](double theta) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) s += std::max(lb(i), theta);
            return s;
        };
        double lo = lb.minCoeff() - 1.0;
        double hi = lb.maxCoeff() + std::abs(delta) / static_cast<double>(n) + 1.0;
        while (mass(hi) < delta) hi = 2.0 * hi + 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (mass(mid) >= delta ? hi : lo) = mid;
        }
        Vector d(n);
        Eigen::Index n_free = 0;
        double clipped_sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (lb(i) >= hi) {
                d(i) = lb(i);
                clipped_sum += lb(i);
            } else {
                d(i) = hi;
                ++n_free;
            }
        }
        if (n_free > 0) {
            // Distribute the rounding slack so the equality holds exactly.
            const double level = (delta - clipped_sum) / static_cast<double>(n_free);
            for (Eigen::Index i = 0; i < n; ++i)
                if (lb(i) < hi) d(i) = std::max(lb(i), level);
        }
        return d;
    }

    static void finalize(QpResult& res, const Vector& d, double lambda, double nu,
                         const std::vector<char>& bound_active, const Vector* c,
                         const Matrix& B, const Vector& g) {
        res.d = d;
        res.lambda = lambda;
        res.nu = c != nullptr ? std::max(nu, 0.0) : 0.0;
        const Vector stat = B * d + g;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (!bound_active[static_cast<size_t>(i)]) continue;
            const double mu_i =
                stat(i) - lambda + (c != nullptr ? res.nu * (*c)(i) : 0.0);
            res.mu(i) = std::max(mu_i, 0.0);
        }
    }
};

// ---------------------------------------------------------------------------
// Tracking problem with cached Gram quantities

struct TrackingProblem {
    Matrix X;
    Vector y;
    Matrix XtX;
    Vector Xty;
    std::optional<DccParams> dcc;

    TrackingProblem(Matrix x, Vector y_, std::optional<DccParams> dcc_)
        : X(std::move(x)), y(std::move(y_)), dcc(std::move(dcc_)) {
        XtX = X.transpose() * X;
        Xty = X.transpose() * y;
    }

    Eigen::Index n() const { return X.cols(); }

    double half_objective(const Vector& w) const { return 0.5 * (X * w - y).squaredNorm(); }
    Vector gradient(const Vector& w) const { return XtX * w - Xty; }

    double constraint_value(const Vector& w) const {
        return cardinality_smooth(w, *dcc) - static_cast<double>(dcc->k);
    }
    Vector constraint_gradient(const Vector& w) const {
        return grad_cardinality_smooth(w, *dcc);
    }
    double violation(const Vector& w) const {
        return dcc ? std::max(0.0, constraint_value(w)) : 0.0;
    }
};

// Max-norm KKT residual of the Lagrangian
//   L = 1/2 ||Xw - y||^2 + lambda (1 - sum w) - mu . w + nu (C~(w) - K):
// stationarity, primal feasibility (sum-to-one, nonnegativity, smooth
// cardinality) and complementary slackness.
inline double kkt_residual(const TrackingProblem& prob, const Vector& w, double lambda,
                           const Vector& mu, double nu) {
    Vector stat = prob.gradient(w) - Vector::Constant(w.size(), lambda) - mu;
    double res = std::abs(w.sum() - 1.0);
    res = std::max(res, std::max(0.0, -w.minCoeff()));
    if (prob.dcc) {
        const double cval = prob.constraint_value(w);
        stat += nu * prob.constraint_gradient(w);
        res = std::max(res, std::max(0.0, cval));
        res = std::max(res, std::abs(nu * cval));
    }
    res = std::max(res, stat.lpNorm<Eigen::Infinity>());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        res = std::max(res, std::abs(mu(i) * w(i)));
    return res;
}

struct StepInfo {
    double step_norm = 0.0;
    double objective_change = 0.0;
    bool qp_relaxed = false;
};

// One sequential quadratic Lagrangian engine. Owns no global state; each
// solve constructs its own instance.
class SqpEngine {
public:
    SqpEngine(const TrackingProblem& prob, const SolverOptions& opts)
        : prob_(prob), opts_(opts) {}

    SolverState initial_state(const Vector& w0) const {
        SolverState s;
        s.w = w0;
        s.mu = Vector::Zero(prob_.n());
        s.hessian_approx = initial_hessian();
        s.penalty = 1.0 + prob_.gradient(w0).lpNorm<Eigen::Infinity>();
        return s;
    }

    Matrix initial_hessian() const {
        Matrix b = prob_.XtX;
        const double ridge =
            1e-10 * (b.trace() / static_cast<double>(prob_.n()) + 1.0);
        b.diagonal().array() += ridge;
        return b;
    }

    // One SQP iteration: QP step, multiplier update, merit line search,
    // damped BFGS update. Resets the Hessian to the identity and retries once
    // if the subproblem turns out singular.
    StepInfo step(SolverState& s) const {
        try {
            return step_impl(s);
        } catch (const SubproblemSingular&) {
            s.hessian_approx = Matrix::Identity(prob_.n(), prob_.n());
            return step_impl(s);
        }
    }

    double residual(const SolverState& s) const {
        return kkt_residual(prob_, s.w, s.lambda, s.mu, s.nu);
    }

    struct RunStatus {
        int iterations = 0;
        bool converged = false;  // KKT met, or objective and step both stagnant
    };

    // Runs SQP until the KKT residual drops below tol_feasibility or the
    // objective and step have stagnated. Steep sigmoid constraints can pin
    // iterates against an indicator cliff where steps shrink to ~1e-10
    // without the residual reaching zero; stagnation counts as convergence
    // there and the achieved residual stays in the state for reporting.
    RunStatus run(SolverState& s) const {
        RunStatus status;
        int stall = 0;
        int no_progress = 0;
        double best_residual = std::numeric_limits<double>::infinity();
        for (int iter = 1; iter <= opts_.max_iterations; ++iter) {
            const StepInfo info = step(s);
            status.iterations = iter;
            const double res = residual(s);
            if (res <= opts_.tol_feasibility) {
                status.converged = true;
                return status;
            }
            const double f_scale =
                std::max(1.0, std::abs(prob_.half_objective(s.w)));
            const bool tiny_obj = std::abs(info.objective_change) <=
                                  opts_.tol_objective * f_scale;
            const bool tiny_step =
                info.step_norm <= 1e-9 * (1.0 + s.w.lpNorm<Eigen::Infinity>());
            stall = (tiny_obj && tiny_step) ? stall + 1 : 0;
            if (res < 0.99 * best_residual) {
                best_residual = res;
                no_progress = 0;
            } else if (tiny_obj) {
                ++no_progress;
            }
            if (stall >= 4 || no_progress >= 12) {
                status.converged = true;
                return status;
            }
        }
        return status;
    }

private:
    StepInfo step_impl(SolverState& s) const {
        const Eigen::Index n = prob_.n();
        const Vector g = prob_.gradient(s.w);
        const double f0 = prob_.half_objective(s.w);
        const double delta = 1.0 - s.w.sum();
        const Vector lb = -s.w;

        Vector cgrad;
        double cval = 0.0;
        const Vector* c_ptr = nullptr;
        if (prob_.dcc) {
            cval = prob_.constraint_value(s.w);
            cgrad = prob_.constraint_gradient(s.w);
            if (cgrad.lpNorm<Eigen::Infinity>() > 1e-14) c_ptr = &cgrad;
        }

        ActiveSetQp qp;
        const QpResult sub = qp.solve(s.hessian_approx, g, delta, lb, c_ptr, -cval);

        StepInfo info;
        info.qp_relaxed = sub.relaxed;
        info.step_norm = sub.d.lpNorm<Eigen::Infinity>();
        if (info.step_norm <= 1e-13 * (1.0 + s.w.lpNorm<Eigen::Infinity>())) {
            s.lambda = sub.lambda;
            s.mu = sub.mu;
            s.nu = sub.nu;
            return info;
        }

        // l1 merit with penalty kept above the inequality multiplier.
        if (prob_.dcc) s.penalty = std::max(s.penalty, 1.5 * sub.nu + 1.0);
        const double viol0 = prob_.dcc ? std::max(0.0, cval) : 0.0;
        const double lin_after =
            prob_.dcc ? std::max(0.0, cval + (c_ptr ? cgrad.dot(sub.d) : 0.0)) : 0.0;
        const double quad = 0.5 * sub.d.dot(s.hessian_approx * sub.d);
        double predicted = -(g.dot(sub.d) + quad) + s.penalty * (viol0 - lin_after);
        predicted = std::max(predicted, 1e-16 * (1.0 + std::abs(f0)));

        // Quadratic objective along the ray: phi(alpha) in O(1) per trial.
        const Vector resid = prob_.X * s.w - prob_.y;
        const Vector xd = prob_.X * sub.d;
        const double rr = resid.squaredNorm(), rq = resid.dot(xd), qq = xd.squaredNorm();
        auto merit = [&](double alpha, const Vector& w_try) {
            const double f = 0.5 * (rr + 2.0 * alpha * rq + alpha * alpha * qq);
            return f + s.penalty * prob_.violation(w_try);
        };
        const double merit0 = f0 + s.penalty * viol0;

        double alpha = 1.0;
        Vector w_new = s.w + sub.d;
        for (int ls = 0; ls < 45; ++ls) {
            if (merit(alpha, w_new) <= merit0 - 1e-4 * alpha * predicted) break;
            alpha *= 0.5;
            w_new = s.w + alpha * sub.d;
        }

        // Damped BFGS on the Lagrangian gradient difference. The least-squares
        // block contributes XtX s exactly; the constraint curvature enters
        // through the new multiplier.
        const Vector step_vec = w_new - s.w;
        Vector y_vec = prob_.XtX * step_vec;
        if (prob_.dcc && sub.nu > 0.0)
            y_vec += sub.nu * (prob_.constraint_gradient(w_new) - cgrad);
        update_bfgs(s.hessian_approx, step_vec, y_vec);

        info.step_norm = step_vec.lpNorm<Eigen::Infinity>();
        info.objective_change = prob_.half_objective(w_new) - f0;
        s.w = w_new;
        s.lambda = sub.lambda;
        s.mu = sub.mu;
        s.nu = sub.nu;
        return info;
    }

    static void update_bfgs(Matrix& b, const Vector& s, Vector y) {
        const double ss = s.squaredNorm();
        if (ss <= 1e-30) return;
        const Vector bs = b * s;
        const double sbs = s.dot(bs);
        double sy = s.dot(y);
        if (sy < 0.2 * sbs) {
            // Powell damping keeps the update positive definite.
            const double theta = 0.8 * sbs / (sbs - sy);
            y = theta * y + (1.0 - theta) * bs;
            sy = s.dot(y);
        }
        if (sy <= 1e-14 * std::sqrt(ss) * y.norm() || sbs <= 0.0) return;
        b.noalias() -= (bs * bs.transpose()) / sbs;
        b.noalias() += (y * y.transpose()) / sy;
    }

    const TrackingProblem& prob_;
    const SolverOptions& opts_;
};

inline Vector uniform_weights(Eigen::Index n) {
    return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

// Full replication restricted to a column subset; weights embedded back into
// the full universe. Used by the repair step and the selection baselines.
struct RestrictedSolve {
    Vector w;        // full length, zeros off support
    double lambda = 0.0;
    Vector mu;       // full length
    int iterations = 0;
};

inline RestrictedSolve solve_on_support(const Matrix& X, const Vector& y,
                                        const std::vector<Eigen::Index>& support,
                                        const SolverOptions& opts) {
    const auto k = static_cast<Eigen::Index>(support.size());
    Matrix xs(X.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) xs.col(j) = X.col(support[j]);
    TrackingProblem sub(std::move(xs), y, std::nullopt);
    SqpEngine engine(sub, opts);
    SolverState state = engine.initial_state(uniform_weights(k));
    const SqpEngine::RunStatus status = engine.run(state);
    if (!status.converged)
        throw MaxIterationsExceeded(
            "restricted full replication did not converge in " +
            std::to_string(opts.max_iterations) + " iterations (kkt_residual=" +
            std::to_string(engine.residual(state)) + ")");
    RestrictedSolve out;
    out.iterations = status.iterations;
    out.w = Vector::Zero(X.cols());
    out.mu = Vector::Zero(X.cols());
    for (Eigen::Index j = 0; j < k; ++j) {
        out.w(support[j]) = std::max(state.w(j), 0.0);
        out.mu(support[j]) = state.mu(j);
    }
    out.lambda = state.lambda;
    return out;
}

}  // namespace detail

// Public KKT residual for the replication Lagrangian; nu and the smooth
// cardinality term participate only when dcc params are given.
inline double kkt_residual(const ReturnsPanel& panel, const Vector& w, double lambda,
                           const Vector& mu, double nu,
                           const std::optional<DccParams>& dcc = std::nullopt) {
    detail::TrackingProblem prob(panel.returns, panel.target, dcc);
    return detail::kkt_residual(prob, w, lambda, mu, nu);
}

// Zeroes every weight below the cutoff and renormalizes the survivors to sum
// exactly one. Weights exactly at the cutoff count as selected.
inline WeightVector threshold_project(const WeightVector& w, const DccParams& p) {
    Vector out = w.values();
    double kept = 0.0;
    int survivors = 0;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out(i) < p.eps) {
            out(i) = 0.0;
        } else {
            kept += out(i);
            ++survivors;
        }
    }
    if (survivors == 0)
        throw AllBelowCutoff("every weight lies below the cutoff " +
                             std::to_string(p.eps) + "; solve failed");
    out /= kept;
    return WeightVector(std::move(out), p.eps);
}

// Full replication: min ||Xw - y||^2 over the probability simplex.
inline SolveReport full_replication(const ReturnsPanel& panel,
                                    const SolverOptions& opts = {}) {
    opts.validate();
    if (panel.returns.cols() < 2)
        throw DegenerateProblem("full replication needs at least two stocks");
    validate_panel(panel);
    const auto t0 = std::chrono::steady_clock::now();

    detail::TrackingProblem prob(panel.returns, panel.target, std::nullopt);
    detail::SqpEngine engine(prob, opts);
    Vector w0 = opts.initial_weights ? opts.initial_weights->values()
                                     : detail::uniform_weights(prob.n());
    if (w0.size() != prob.n())
        throw DimensionMismatch("initial weights length does not match panel");
    detail::SolverState state = engine.initial_state(w0);
    const detail::SqpEngine::RunStatus status = engine.run(state);
    if (!status.converged) {
        std::ostringstream msg;
        msg << "full replication did not converge in " << opts.max_iterations
            << " iterations; best iterate: objective="
            << (panel.returns * state.w - panel.target).squaredNorm()
            << " kkt_residual=" << engine.residual(state);
        throw MaxIterationsExceeded(msg.str());
    }

    SolveReport report{WeightVector(state.w.cwiseMax(0.0), kDefaultCutoff)};
    report.objective = (panel.returns * state.w - panel.target).squaredNorm();
    report.kkt_residual = engine.residual(state);
    report.iterations = status.iterations;
    report.exact_cardinality = cardinality_exact(report.weights);
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Partial replication with the smooth cardinality constraint. Solves a short
// continuation sequence of SQP problems with increasing steepness (warm
// starts), repairs the support if the smooth solve left more than K weights
// above the cutoff, and finally projects to an exactly sparse portfolio.
// The report's smooth_cardinality and kkt_residual describe the pre-threshold
// iterate at the requested steepness.
inline SolveReport partial_replication_dcc(const ReturnsPanel& panel,
                                           const DccParams& p,
                                           const SolverOptions& opts = {}) {
    opts.validate();
    if (panel.returns.cols() < 2)
        throw DegenerateProblem("partial replication needs at least two stocks");
    validate_panel(panel);
    p.validate_for(panel.returns.cols());
    const auto t0 = std::chrono::steady_clock::now();
    const auto n = panel.returns.cols();

    if (opts.warn_on_condition_failure && p.variant == DccVariant::sigmoid) {
        const ConditionReport cond = check_conditions(static_cast<int>(n), p);
        if (!cond.all())
            std::cerr << "warning: conditions not satisfied for N=" << n
                      << " a=" << p.a << " eps=" << p.eps << " (c0=" << cond.c0
                      << " c1=" << cond.c1 << " c2=" << cond.c2
                      << "); cardinality enforcement is not guaranteed\n";
    }

    // Continuation schedule: mild steepness first so the indicator has usable
    // gradients at portfolio scale, sharpening geometrically to the target.
    // Intermediate stages widen the cutoff to keep the transition band at
    // ~kBandShift/a; zero weights then count as ~sigma(-kBandShift) ~ 0 at
    // every stage and the stage constraints stay feasible. The final stage
    // runs at the exact requested (a, eps).
    constexpr double kBandShift = 12.0;
    std::vector<double> steepness;
    const double a_start = std::max(50.0, 2.0 * static_cast<double>(n));
    if (p.a <= a_start) {
        steepness.push_back(p.a);
    } else {
        for (double a = a_start; a < p.a; a *= 3.0) steepness.push_back(a);
        steepness.push_back(p.a);
    }
    auto stage_eps = [&](size_t stage) {
        if (p.variant == DccVariant::rational) return p.eps;
        if (stage + 1 == steepness.size()) return p.eps;
        return std::min(0.49, std::max(p.eps, kBandShift / steepness[stage]));
    };

    Vector w = opts.initial_weights ? opts.initial_weights->values()
                                    : detail::uniform_weights(n);
    if (w.size() != n)
        throw DimensionMismatch("initial weights length does not match panel");

    int total_iters = 0;
    double lambda = 0.0;
    Vector mu = Vector::Zero(n);
    detail::TrackingProblem final_prob(panel.returns, panel.target, p);

    // The continuation stages pick the support; sub-cutoff dust they leave
    // behind is irrelevant after thresholding, so each stage gets a modest
    // iteration budget, a loose stagnation tolerance, and non-convergence
    // there is not a failure.
    SolverOptions stage_opts = opts;
    stage_opts.max_iterations = std::min(opts.max_iterations, 150);
    stage_opts.tol_objective = std::max(opts.tol_objective, 1e-6);
    for (size_t stage = 0; stage < steepness.size(); ++stage) {
        DccParams stage_params(steepness[stage], stage_eps(stage), p.k, p.variant);
        detail::TrackingProblem prob(panel.returns, panel.target, stage_params);
        detail::SqpEngine engine(prob, stage_opts);
        detail::SolverState state = engine.initial_state(w);
        state.lambda = lambda;
        state.mu = mu;
        total_iters += engine.run(state).iterations;
        w = state.w;
        lambda = state.lambda;
        mu = state.mu;
    }

    // Polish: refit on the selected support (the at-most-K largest weights at
    // or above the cutoff). This replaces any parked dust with the exact
    // constrained least-squares solution for the final portfolio.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w(i) >= p.eps) support.push_back(i);
    if (support.empty()) {
        Eigen::Index top = 0;
        w.maxCoeff(&top);
        support.push_back(top);
    }
    if (static_cast<int>(support.size()) > p.k) {
        std::stable_sort(support.begin(), support.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return w(a) > w(b); });
        support.resize(static_cast<size_t>(p.k));
        std::sort(support.begin(), support.end());
    }
    const detail::RestrictedSolve fix =
        detail::solve_on_support(panel.returns, panel.target, support, opts);
    total_iters += fix.iterations;
    w = fix.w;
    lambda = fix.lambda;
    mu = fix.mu;
    const double nu = 0.0;
    const Vector g = final_prob.gradient(w);
    for (Eigen::Index i = 0; i < n; ++i)
        if (w(i) == 0.0) mu(i) = std::max(0.0, g(i) - lambda);
    const double final_residual = detail::kkt_residual(final_prob, w, lambda, mu, nu);

    const double smooth_pre = cardinality_smooth(w, p);
    const WeightVector pre(w.cwiseMax(0.0), p.eps);
    WeightVector final_weights = threshold_project(pre, p);

    SolveReport report{final_weights};
    report.objective =
        (panel.returns * final_weights.values() - panel.target).squaredNorm();
    report.kkt_residual = final_residual;
    report.iterations = total_iters;
    report.smooth_cardinality = smooth_pre;
    report.exact_cardinality = cardinality_exact(final_weights);
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace sparsetrack

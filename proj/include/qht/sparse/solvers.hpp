#pragma once

// Solvers for  min_{theta in S} 1/2 theta^T Q theta - b^T theta + lambda ||theta||_1
// with S either R^d (ADMM, Q PSD) or an l1 ball (composite gradient, any Q).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qht/rng.hpp"
#include "qht/sparse/l1_ball.hpp"
#include "qht/sparse/surrogates.hpp"

namespace qht {

struct QcsSolverOptions {
    double lambda = 0.0;
    std::optional<double> l1Radius; // empty: S = R^d
    int maxIter = 20000;
    double tolPrimal = 1e-10;
    double tolDual = 1e-10;
    double tolStationarity = 1e-9;
    std::optional<double> stepSize; // empty: 1 / (||Q||_op + deltaBar^2 / 4)
    double rho = 1.0;               // initial ADMM penalty
    int multiStart = 0;             // extra random feasible starts (composite path)
    std::uint64_t multiStartSeed = 0x5eed;
};

struct QcsErrors {
    double l2 = 0.0;
    double l1 = 0.0;
};

struct QcsEstimate {
    Eigen::VectorXd thetaHat;
    int iterations = 0;
    double stationarityResidual = 0.0;
    double objective = 0.0;
    bool converged = false;
    std::optional<QcsErrors> errors;
};

inline QcsErrors qcs_errors(const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& thetaStar) {
    const Eigen::VectorXd D = thetaHat - thetaStar;
    return {D.norm(), D.lpNorm<1>()};
}

inline double qcs_objective(const SurrogatePair& p, const Eigen::VectorXd& theta, double lambda) {
    return 0.5 * theta.dot(p.Q * theta) - p.b.dot(theta) + lambda * theta.lpNorm<1>();
}

/// Gap of the variational inequality
///   <Q theta - b + lambda z, t - theta> >= 0  for all t in {||t||_1 <= R},
/// maximized over subgradients z of ||.||_1 at theta. The minimum of the
/// linear functional over the ball is attained at an extreme point +-R e_i,
/// so the gap R ||c||_inf + c^T theta is exact. Zero iff theta is stationary.
inline double stationarity_gap(const SurrogatePair& p, const Eigen::VectorXd& theta, double lambda, double R) {
    const Eigen::VectorXd g = p.Q * theta - p.b;
    Eigen::VectorXd c(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (theta[i] != 0.0)
            c[i] = g[i] + lambda * (theta[i] > 0.0 ? 1.0 : -1.0);
        else
            c[i] = soft_threshold(g[i], lambda);
    }
    return std::max(0.0, R * c.cwiseAbs().maxCoeff() + c.dot(theta));
}

/// Unit-step proximal-gradient residual ||theta - soft(theta - grad, lambda)||_inf.
inline double lasso_kkt_residual(const SurrogatePair& p, const Eigen::VectorXd& theta, double lambda) {
    const Eigen::VectorXd g = p.Q * theta - p.b;
    return (theta - soft_threshold(theta - g, lambda)).cwiseAbs().maxCoeff();
}

/// Spectral norm of a symmetric (possibly indefinite) matrix by power
/// iteration from a fixed pseudo-random start.
inline double power_iteration_norm(const Eigen::MatrixXd& Q, int iters = 50, double tol = 1e-8) {
    if (Q.size() == 0)
        return 0.0;
    Stream s(0x70e7ULL);
    Eigen::VectorXd v(Q.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = s.uniform(-1.0, 1.0);
    v.normalize();
    double est = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd w = Q * v;
        const double nw = w.norm();
        if (nw == 0.0)
            return 0.0;
        // Two steps at a time converge to |lambda_max| even when the extreme
        // eigenvalues have opposite signs.
        w = Q * (w / nw);
        const double next = std::sqrt(w.norm());
        v = w.normalized();
        if (std::abs(next - est) <= tol * std::max(1.0, next)) {
            est = next;
            break;
        }
        est = next;
    }
    return est;
}

namespace detail {

inline void check_pair(const SurrogatePair& p) {
    if (p.Q.rows() != p.Q.cols() || p.Q.rows() != p.b.size())
        throw std::invalid_argument("solver: Q must be d x d and b of length d");
}

} // namespace detail

/// Generalized Lasso over S = R^d by ADMM with residual balancing.
/// Requires Q positive semidefinite.
inline QcsEstimate solve_generalized_lasso(const SurrogatePair& p, const QcsSolverOptions& opts) {
    detail::check_pair(p);
    if (opts.l1Radius)
        throw std::invalid_argument("solve_generalized_lasso: S must be R^d; use solve_nonconvex_constrained "
                                    "for an l1-ball constraint");
    if (!(opts.lambda >= 0.0))
        throw std::invalid_argument("solve_generalized_lasso: lambda must be >= 0");
    const Eigen::Index d = p.Q.rows();
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.Q, Eigen::EigenvaluesOnly);
        if (d > 0 && es.eigenvalues().minCoeff() < -1e-10)
            throw std::invalid_argument("solve_generalized_lasso: Q is indefinite (min eigenvalue " +
                                        std::to_string(es.eigenvalues().minCoeff()) +
                                        "); use the composite-gradient path with a finite l1 radius");
    }

    double rho = opts.rho;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d), z = theta, u = theta, zOld;
    Eigen::MatrixXd M = p.Q;
    M.diagonal().array() += rho;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    const double sqd = std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1)));

    QcsEstimate est;
    int it = 0;
    for (; it < opts.maxIter; ++it) {
        theta = llt.solve(p.b + rho * (z - u));
        zOld = z;
        z = soft_threshold(theta + u, opts.lambda / rho);
        u += theta - z;

        const double r = (theta - z).norm();
        const double s = rho * (z - zOld).norm();
        const double epsPri = opts.tolPrimal * sqd + opts.tolPrimal * std::max(theta.norm(), z.norm());
        const double epsDual = opts.tolDual * sqd + opts.tolDual * rho * u.norm();
        if (r <= epsPri && s <= epsDual) {
            est.converged = true;
            ++it;
            break;
        }
        if (r > 10.0 * s || s > 10.0 * r) {
            const double f = r > 10.0 * s ? 2.0 : 0.5;
            rho *= f;
            u /= f;
            M.diagonal().array() += rho - rho / f;
            llt.compute(M);
        }
    }
    est.thetaHat = z;
    est.iterations = it;
    est.stationarityResidual = lasso_kkt_residual(p, z, opts.lambda);
    est.objective = qcs_objective(p, z, opts.lambda);
    return est;
}

namespace detail {

inline QcsEstimate composite_gradient_from(const SurrogatePair& p, const QcsSolverOptions& opts, double R,
                                           double step, Eigen::VectorXd theta) {
    const double lam = opts.lambda;
    Eigen::VectorXd g = p.Q * theta - p.b;
    double f = 0.5 * theta.dot(g - p.b) + lam * theta.lpNorm<1>();

    QcsEstimate est;
    double gap = stationarity_gap(p, theta, lam, R);
    int it = 0;
    while (gap > opts.tolStationarity && it < opts.maxIter) {
        Eigen::VectorXd next;
        Eigen::VectorXd gNext;
        double fNext = 0.0;
        for (int halvings = 0;; ++halvings) {
            next = project_l1_ball(soft_threshold(theta - step * g, step * lam), R);
            gNext = p.Q * next - p.b;
            fNext = 0.5 * next.dot(gNext - p.b) + lam * next.lpNorm<1>();
            // Guard against an underestimated Lipschitz constant.
            if (fNext <= f + 1e-13 * std::max(1.0, std::abs(f)) || halvings >= 30)
                break;
            step *= 0.5;
        }
        theta.swap(next);
        g.swap(gNext);
        f = fNext;
        ++it;
        gap = stationarity_gap(p, theta, lam, R);
    }
    est.thetaHat = std::move(theta);
    est.iterations = it;
    est.stationarityResidual = gap;
    est.objective = f;
    est.converged = gap <= opts.tolStationarity;
    return est;
}

inline double composite_step(const SurrogatePair& p, const QcsSolverOptions& opts) {
    if (opts.stepSize) {
        if (!(*opts.stepSize > 0.0))
            throw std::invalid_argument("composite gradient: step size must be > 0");
        return *opts.stepSize;
    }
    const double L = power_iteration_norm(p.Q) + 0.25 * p.deltaBar * p.deltaBar;
    return L > 0.0 ? 1.0 / L : 1.0;
}

inline double check_radius(const QcsSolverOptions& opts) {
    if (!opts.l1Radius)
        throw std::invalid_argument("solve_nonconvex_constrained: an l1 radius is required");
    const double R = *opts.l1Radius;
    if (!(R > 0.0) || !std::isfinite(R))
        throw std::invalid_argument("solve_nonconvex_constrained: l1 radius must be finite and > 0");
    if (!(opts.lambda >= 0.0))
        throw std::invalid_argument("solve_nonconvex_constrained: lambda must be >= 0");
    return R;
}

} // namespace detail

/// Projected composite gradient descent from theta0 = 0: gradient step on the
/// quadratic, soft threshold by lambda * step, projection onto the l1 ball.
/// Stops once the exact stationarity gap is below tolStationarity.
inline QcsEstimate solve_nonconvex_constrained(const SurrogatePair& p, const QcsSolverOptions& opts) {
    detail::check_pair(p);
    const double R = detail::check_radius(opts);
    const double step = detail::composite_step(p, opts);
    return detail::composite_gradient_from(p, opts, R, step, Eigen::VectorXd::Zero(p.Q.rows()));
}

/// The zero start followed by opts.multiStart random feasible starts; one
/// estimate per start.
inline std::vector<QcsEstimate> solve_nonconvex_multistart(const SurrogatePair& p, const QcsSolverOptions& opts) {
    detail::check_pair(p);
    const double R = detail::check_radius(opts);
    const double step = detail::composite_step(p, opts);
    const Eigen::Index d = p.Q.rows();
    std::vector<QcsEstimate> out;
    out.push_back(detail::composite_gradient_from(p, opts, R, step, Eigen::VectorXd::Zero(d)));
    for (int k = 0; k < opts.multiStart; ++k) {
        Stream s = Stream::keyed(opts.multiStartSeed, static_cast<std::uint64_t>(k));
        std::normal_distribution<double> z;
        Eigen::VectorXd t0(d);
        for (Eigen::Index i = 0; i < d; ++i)
            t0[i] = z(s);
        // Random point in the ball: random direction, random l1 radius.
        t0 *= R * s.uniform01() / std::max(t0.lpNorm<1>(), 1e-300);
        out.push_back(detail::composite_gradient_from(p, opts, R, step, std::move(t0)));
    }
    return out;
}

/// argmin_{||theta||_1 <= radius} (1/2n) ||ydot - X theta||^2 by projected
/// gradient descent.
template <class DX, class DY>
QcsEstimate solve_constrained_lasso(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& ydot, double radius,
                                    QcsSolverOptions opts = {}) {
    if (!(radius > 0.0))
        throw std::invalid_argument("solve_constrained_lasso: radius must be > 0");
    const SurrogatePair p = build_surrogates_full_covariate(X, ydot);
    opts.lambda = 0.0;
    opts.l1Radius = radius;
    return solve_nonconvex_constrained(p, opts);
}

/// Path selection: ADMM when S = R^d, composite gradient for a finite radius.
inline QcsEstimate solve_qcs(const SurrogatePair& p, const QcsSolverOptions& opts) {
    if (opts.l1Radius)
        return solve_nonconvex_constrained(p, opts);
    return solve_generalized_lasso(p, opts);
}

} // namespace qht

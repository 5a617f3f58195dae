#pragma once

// Reference implementations used only to cross-check the library. Each one
// takes a deliberately different route from the code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qht/randgen.hpp"

namespace oracle {

inline double soft(double v, double t) {
    if (v > t)
        return v - t;
    if (v < -t)
        return v + t;
    return 0.0;
}

/// Projection onto the l1 ball by bisection on the dual threshold t, where
/// the projection is soft(v, t) with sum |soft(v_i, t)| = R.
inline Eigen::VectorXd l1_projection_bisection(const Eigen::VectorXd& v, double R) {
    if (v.lpNorm<1>() <= R)
        return v;
    double lo = 0.0, hi = v.cwiseAbs().maxCoeff();
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double s = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            s += std::max(std::abs(v[i]) - mid, 0.0);
        (s > R ? lo : hi) = mid;
    }
    const double t = 0.5 * (lo + hi);
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[i] = soft(v[i], t);
    return out;
}

/// Cyclic coordinate descent for 1/2 t'Qt - b't + lambda |t|_1, Q PSD with
/// positive diagonal.
inline Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b, double lambda,
                                                int sweeps = 200000, double tol = 1e-15) {
    const Eigen::Index d = b.size();
    Eigen::VectorXd t = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd Qt = Eigen::VectorXd::Zero(d);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double maxChange = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            const double rest = b[i] - (Qt[i] - Q(i, i) * t[i]);
            const double next = soft(rest, lambda) / Q(i, i);
            const double delta = next - t[i];
            if (delta != 0.0) {
                Qt += delta * Q.col(i);
                t[i] = next;
                maxChange = std::max(maxChange, std::abs(delta));
            }
        }
        if (maxChange < tol)
            break;
    }
    return t;
}

inline double lasso_objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b, double lambda,
                              const Eigen::VectorXd& t) {
    return 0.5 * t.dot(Q * t) - b.dot(t) + lambda * t.lpNorm<1>();
}

/// Singular value soft thresholding through the symmetric eigenproblem of
/// [[0, M], [M^T, 0]], whose eigenpairs are (+-s_i, (u_i, +-v_i)/sqrt 2).
inline Eigen::MatrixXd svt_via_eigen(const Eigen::MatrixXd& M, double tau) {
    const Eigen::Index m = M.rows(), n = M.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + n, m + n);
    A.topRightCorner(m, n) = M;
    A.bottomLeftCorner(n, m) = M.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, n);
    for (Eigen::Index k = 0; k < m + n; ++k) {
        const double s = es.eigenvalues()[k];
        if (s <= tau)
            continue;
        const Eigen::VectorXd w = es.eigenvectors().col(k);
        const Eigen::VectorXd u = w.head(m).normalized();
        const Eigen::VectorXd v = w.tail(n).normalized();
        out += (s - tau) * u * v.transpose();
    }
    return out;
}

struct McEntry {
    Eigen::Index i, j;
    double y;
};

inline double mc_objective(const std::vector<McEntry>& obs, double lambda, const Eigen::MatrixXd& T) {
    double sq = 0.0;
    for (const auto& o : obs)
        sq += (o.y - T(o.i, o.j)) * (o.y - T(o.i, o.j));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(T);
    return 0.5 * sq / static_cast<double>(obs.size()) + lambda * svd.singularValues().sum();
}

/// prox of tau ||.||_nu + box indicator, by Dykstra alternation of the two
/// single-set proxes (the box prox is a clip, the nuclear prox is SVT).
inline Eigen::MatrixXd prox_nuclear_box(const Eigen::MatrixXd& V, double tau, double alpha) {
    Eigen::MatrixXd x = V, p = Eigen::MatrixXd::Zero(V.rows(), V.cols()), q = p;
    for (int it = 0; it < 2000; ++it) {
        const Eigen::MatrixXd y = svt_via_eigen(x + p, tau);
        p = x + p - y;
        const Eigen::MatrixXd xNew = (y + q).cwiseMax(-alpha).cwiseMin(alpha);
        q = y + q - xNew;
        const double change = (xNew - x).norm();
        x = xNew;
        if (change < 1e-14)
            break;
    }
    return x;
}

/// Accelerated proximal gradient on the matrix-completion objective; the
/// joint nuclear-plus-box prox comes from prox_nuclear_box.
inline Eigen::MatrixXd mc_fista(const std::vector<McEntry>& obs, Eigen::Index d, double lambda, double alpha,
                                int iters = 3000) {
    const double n = static_cast<double>(obs.size());
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, d);
    for (const auto& o : obs)
        W(o.i, o.j) += 1.0 / n;
    const double L = std::max(W.maxCoeff(), 1e-12);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(d, d), Y = X;
    double t = 1.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, d);
        for (const auto& o : obs)
            G(o.i, o.j) -= (o.y - Y(o.i, o.j)) / n;
        const Eigen::MatrixXd Xn = prox_nuclear_box(Y - G / L, lambda / L, alpha);
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        Y = Xn + ((t - 1.0) / tn) * (Xn - X);
        X = Xn;
        t = tn;
    }
    return X;
}

/// Two-sided Kolmogorov-Smirnov statistic of a sample against a CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double D = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double F = cdf(xs[k]);
        D = std::max({D, (static_cast<double>(k) + 1.0) / n - F, F - static_cast<double>(k) / n});
    }
    return D;
}

/// Midpoint-rule integral of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, int m = 200000) {
    const double h = (b - a) / m;
    double s = 0.0;
    for (int k = 0; k < m; ++k)
        s += f(a + (k + 0.5) * h);
    return s * h;
}

/// Random symmetric PSD matrix A^T A / m with m rows, plus a small ridge.
inline Eigen::MatrixXd random_psd(Eigen::Index d, Eigen::Index m, qht::Stream s, double ridge = 1e-3) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd A(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            A(i, j) = z(s);
    Eigen::MatrixXd Q = A.transpose() * A / static_cast<double>(m);
    Q.diagonal().array() += ridge;
    return 0.5 * (Q + Q.transpose());
}

} // namespace oracle

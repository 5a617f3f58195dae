#pragma once

// Matrix completion from dithered, quantized entries:
//   min_{||Theta||_inf <= alpha} (1/2n) sum_k (ydot_k - Theta(i_k, j_k))^2 + lambda ||Theta||_nu

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "qht/quantize.hpp"
#include "qht/randgen.hpp"
#include "qht/rng.hpp"

namespace qht {

/// Singular value soft thresholding U soft(S, tau) V^T.
inline Eigen::MatrixXd svt(const Eigen::MatrixXd& M, double tau) {
    if (!(tau >= 0.0))
        throw std::invalid_argument("svt: tau must be >= 0");
    if (tau == 0.0)
        return M;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw std::runtime_error("svt: SVD failed");
    const Eigen::VectorXd s = (svd.singularValues().array() - tau).max(0.0).matrix();
    Eigen::Index k = 0;
    while (k < s.size() && s[k] > 0.0)
        ++k;
    if (k == 0)
        return Eigen::MatrixXd::Zero(M.rows(), M.cols());
    return svd.matrixU().leftCols(k) * s.head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
}

inline double nuclear_norm(const Eigen::MatrixXd& M) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues().sum();
}

/// Truncate at zetaY then quantize each observation with `spec`; observation
/// k draws from stream.child(k).
inline std::vector<McObservation> quantize_mc_observations(const std::vector<McObservation>& raw,
                                                           const TruncationRule& zetaY, const QuantizerSpec& spec,
                                                           const Stream& stream) {
    spec.validate();
    std::vector<McObservation> out(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        Stream s = stream.child(k);
        out[k] = raw[k];
        out[k].y = uniform_quantize(truncate_scalar(raw[k].y, zetaY), spec, s);
    }
    return out;
}

struct QmcProblem {
    Eigen::Index d = 0;
    std::vector<McObservation> observations; // y holds the quantized value
    double alpha = 1.0;
    double lambda = 0.0;

    void validate() const {
        if (d < 1)
            throw std::invalid_argument("QmcProblem: d must be >= 1");
        if (!(alpha > 0.0))
            throw std::invalid_argument("QmcProblem: alpha must be > 0");
        if (!(lambda >= 0.0))
            throw std::invalid_argument("QmcProblem: lambda must be >= 0");
        if (observations.empty())
            throw std::invalid_argument("QmcProblem: need at least one observation");
        for (const auto& o : observations)
            if (o.i < 0 || o.i >= d || o.j < 0 || o.j >= d)
                throw std::invalid_argument("QmcProblem: observation index out of range");
    }
};

struct QmcSolverOptions {
    int maxIter = 5000;
    double tolAbs = 1e-7;
    double tolRel = 1e-6;
    std::optional<double> rho; // empty: 1 / d^2, the mean per-entry weight
};

struct QmcErrors {
    double frobeniusOverD = 0.0;
    double nuclearOverD = 0.0;
};

struct QmcEstimate {
    Eigen::MatrixXd thetaHat;
    int iterations = 0;
    double primalResidual = 0.0;
    double dualResidual = 0.0;
    double objective = 0.0;
    bool converged = false;
    std::optional<QmcErrors> errors;
};

inline QmcErrors qmc_errors(const Eigen::MatrixXd& thetaHat, const Eigen::MatrixXd& thetaStar) {
    const Eigen::MatrixXd D = thetaHat - thetaStar;
    const double d = static_cast<double>(thetaStar.rows());
    return {D.norm() / d, nuclear_norm(D) / d};
}

/// Per-entry observation counts and sums; the data term equals
/// (1/2n) sum_ij (count_ij Theta_ij^2 - 2 sum_ij Theta_ij) + const.
struct QmcSufficientStats {
    Eigen::MatrixXd count;
    Eigen::MatrixXd sum;
    double n = 0.0;

    explicit QmcSufficientStats(const QmcProblem& p)
        : count(Eigen::MatrixXd::Zero(p.d, p.d)), sum(Eigen::MatrixXd::Zero(p.d, p.d)),
          n(static_cast<double>(p.observations.size())) {
        for (const auto& o : p.observations) {
            count(o.i, o.j) += 1.0;
            sum(o.i, o.j) += o.y;
        }
    }
};

inline double qmc_objective(const QmcProblem& p, const Eigen::MatrixXd& T) {
    double sq = 0.0;
    for (const auto& o : p.observations) {
        const double r = o.y - T(o.i, o.j);
        sq += r * r;
    }
    return 0.5 * sq / static_cast<double>(p.observations.size()) + p.lambda * nuclear_norm(T);
}

/// ADMM on the split Theta = Z: the Theta block carries the entrywise data
/// term together with the box |Theta_ij| <= alpha (both separable, so the
/// prox is a clipped scalar solve), the Z block carries lambda ||Z||_nu (SVT).
/// The returned Theta is feasible by construction.
inline QmcEstimate solve_qmc(const QmcProblem& p, const QmcSolverOptions& opts = {}) {
    p.validate();
    const Eigen::Index d = p.d;
    const QmcSufficientStats st(p);
    const Eigen::ArrayXXd w = st.count.array() / st.n;
    const Eigen::ArrayXXd t = st.sum.array() / st.n;

    double rho = opts.rho.value_or(1.0 / static_cast<double>(d * d));
    if (!(rho > 0.0))
        throw std::invalid_argument("solve_qmc: rho must be > 0");

    Eigen::MatrixXd Theta = Eigen::MatrixXd::Zero(d, d), Z = Theta, U = Theta, Zold;
    const double dd = static_cast<double>(d);

    QmcEstimate est;
    int it = 0;
    double r = 0.0, s = 0.0;
    for (; it < opts.maxIter; ++it) {
        Theta = ((t + rho * (Z - U).array()) / (w + rho)).max(-p.alpha).min(p.alpha).matrix();
        Zold = Z;
        Z = svt(Theta + U, p.lambda / rho);
        U += Theta - Z;

        r = (Theta - Z).norm();
        s = rho * (Z - Zold).norm();
        const double epsPri = opts.tolAbs * dd + opts.tolRel * std::max(Theta.norm(), Z.norm());
        const double epsDual = opts.tolAbs * dd + opts.tolRel * rho * U.norm();
        if (r <= epsPri && s <= epsDual) {
            est.converged = true;
            ++it;
            break;
        }
        if (r > 10.0 * s) {
            rho *= 2.0;
            U /= 2.0;
        } else if (s > 10.0 * r) {
            rho /= 2.0;
            U *= 2.0;
        }
    }
    est.thetaHat = std::move(Theta);
    est.iterations = it;
    est.primalResidual = r;
    est.dualResidual = s;
    est.objective = qmc_objective(p, est.thetaHat);
    return est;
}

// Tuning rules, constants exposed as `c`.

/// lambda = c (sigma + Delta) sqrt(delta_p log d / (n d)), sub-exponential noise.
inline double lambda_qmc_subexp(double c, double sigma, double Delta, double n, double d, double deltaProb = 4.0) {
    return c * (sigma + Delta) * std::sqrt(deltaProb * std::log(d) / (n * d));
}

/// lambda = c (alpha + sqrt(M) + Delta) sqrt(delta_p log d / (n d)), heavy-tailed noise.
inline double lambda_qmc_heavy(double c, double alpha, double M, double Delta, double n, double d,
                               double deltaProb = 4.0) {
    return c * (alpha + std::sqrt(M) + Delta) * std::sqrt(deltaProb * std::log(d) / (n * d));
}

/// zeta_y = c (sqrt(M) + alpha) sqrt(n / (delta_p d log d)).
inline double zeta_qmc_heavy(double c, double alpha, double M, double n, double d, double deltaProb = 4.0) {
    return c * (std::sqrt(M) + alpha) * std::sqrt(n / (deltaProb * d * std::log(d)));
}

} // namespace qht

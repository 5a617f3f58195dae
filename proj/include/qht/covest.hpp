#pragma once

// Covariance estimation from truncated, triangular-dithered quantized samples.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "qht/quantize.hpp"
#include "qht/rng.hpp"

namespace qht {

struct CovEstimatorSpec {
    TruncationRule truncation;
    QuantizerSpec quantizer{0.0, Dither::Triangular};
    double mu = 0.0; // hard threshold; 0 disables

    void validate() const {
        quantizer.validate();
        if (quantizer.delta > 0.0 && quantizer.dither != Dither::Triangular)
            throw std::invalid_argument(
                "CovEstimatorSpec: covariance estimation needs triangular dither when delta > 0 "
                "(bias not removable otherwise)");
        if (!(mu >= 0.0))
            throw std::invalid_argument("CovEstimatorSpec: mu must be >= 0");
    }
};

struct CovErrors {
    double linf = 0.0;
    double op = 0.0;
};

struct CovEstimate {
    Eigen::MatrixXd sigmaHat;
    std::optional<CovErrors> errors;
};

/// Largest absolute eigenvalue of a symmetric matrix.
inline double symmetric_op_norm(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline CovErrors covariance_errors(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
    const Eigen::MatrixXd D = est - truth;
    return {D.cwiseAbs().maxCoeff(), symmetric_op_norm(D)};
}

/// (1/n) X^T X, assembled on the lower triangle and mirrored so the result
/// is exactly symmetric.
template <class Derived>
Eigen::MatrixXd second_moment(const Eigen::MatrixBase<Derived>& X) {
    const Eigen::Index d = X.cols();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
    S.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / static_cast<double>(X.rows()));
    return S.selfadjointView<Eigen::Lower>();
}

/// Truncate, quantize with triangular dither, then return the corrected
/// sample second moment (1/n) sum xdot xdot^T - (delta^2/4) I.
/// Sample k draws its dither from stream.child(k).
template <class Derived>
CovEstimate estimate_covariance(const Eigen::MatrixBase<Derived>& samples, const CovEstimatorSpec& spec,
                                const Stream& stream) {
    spec.validate();
    if (samples.rows() < 2)
        throw std::invalid_argument("estimate_covariance: need n >= 2 samples");
    if (!samples.allFinite())
        throw std::domain_error("estimate_covariance: non-finite sample");
    const Eigen::MatrixXd Xt = truncate_rows(samples, spec.truncation);
    const Eigen::MatrixXd Xq = quantize_rows(Xt, spec.quantizer, stream);
    CovEstimate est;
    est.sigmaHat = second_moment(Xq);
    const double delta = spec.quantizer.delta;
    est.sigmaHat.diagonal().array() -= 0.25 * delta * delta;
    if (spec.mu > 0.0)
        est.sigmaHat = (est.sigmaHat.array().abs() >= spec.mu).select(est.sigmaHat, 0.0);
    return est;
}

/// Entrywise hard threshold a * 1(|a| >= mu). Ties are kept.
inline CovEstimate threshold_covariance(const CovEstimate& est, double mu) {
    if (!(mu >= 0.0))
        throw std::invalid_argument("threshold_covariance: mu must be >= 0");
    CovEstimate out;
    out.sigmaHat = (est.sigmaHat.array().abs() >= mu).select(est.sigmaHat, 0.0);
    return out;
}

/// Scalar-variance estimates used to show why the dither matters.
struct AblationEstimates {
    double triangular = 0.0;        // triangular dither, -delta^2/4 correction
    double no_dither = 0.0;         // mean Q(X)^2
    double uniform_raw = 0.0;       // mean Q(X + tau'')^2, uniform dither
    double uniform_corrected = 0.0; // uniform_raw - delta^2/6
};

/// The four d = 1 estimators. The triangular and uniform dithers for sample k
/// come from independent children of stream.child(k).
template <class Derived>
AblationEstimates ablation_estimators(const Eigen::MatrixBase<Derived>& samples, double delta,
                                      const Stream& stream) {
    if (samples.size() < 1)
        throw std::invalid_argument("ablation_estimators: empty sample");
    const QuantizerSpec tri{delta, Dither::Triangular};
    const QuantizerSpec uni{delta, Dither::Uniform};
    double sTri = 0.0, sNo = 0.0, sUni = 0.0;
    for (Eigen::Index k = 0; k < samples.size(); ++k) {
        const double x = samples(k);
        const Stream sk = stream.child(static_cast<std::uint64_t>(k));
        Stream st = sk.child(0), su = sk.child(1);
        const double qt = uniform_quantize(x, tri, st);
        const double qn = quantize_level(x, delta);
        const double qu = uniform_quantize(x, uni, su);
        sTri += qt * qt;
        sNo += qn * qn;
        sUni += qu * qu;
    }
    const double n = static_cast<double>(samples.size());
    AblationEstimates a;
    a.triangular = sTri / n - 0.25 * delta * delta;
    a.no_dither = sNo / n;
    a.uniform_raw = sUni / n;
    a.uniform_corrected = a.uniform_raw - delta * delta / 6.0;
    return a;
}

// ---------------------------------------------------------------------------
// Tuning rules. The theory fixes these only up to absolute constants, exposed
// here as `c`.

/// max_i mean(x_ki^4), clipped below by 1.
template <class Derived>
double empirical_fourth_moment(const Eigen::MatrixBase<Derived>& X) {
    const double m = X.array().square().square().colwise().mean().maxCoeff();
    return std::max(m, 1.0);
}

/// Element-wise threshold zeta = c (n M / (delta_p log d))^{1/4}.
inline double zeta_elementwise(double c, double n, double M, double d, double deltaProb = 4.0) {
    const double logd = std::log(std::max(d, 2.0));
    return c * std::pow(n * M / (deltaProb * logd), 0.25);
}

/// l4 threshold zeta = c (M^{1/4} + Delta) (n / (delta_p log d))^{1/4}.
inline double zeta_l4(double c, double n, double M, double d, double Delta, double deltaProb = 4.0) {
    const double logd = std::log(std::max(d, 2.0));
    return c * (std::pow(M, 0.25) + Delta) * std::pow(n / (deltaProb * logd), 0.25);
}

/// Hard threshold mu = c (sqrt(M) + Delta^2) sqrt(delta_p log d / n).
inline double mu_threshold(double c, double n, double M, double d, double Delta, double deltaProb = 4.0) {
    const double logd = std::log(std::max(d, 2.0));
    return c * (std::sqrt(M) + Delta * Delta) * std::sqrt(deltaProb * logd / n);
}

} // namespace qht

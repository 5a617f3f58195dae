#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qht/covest.hpp"
#include "qht/randgen.hpp"

using namespace qht;

TEST(Covariance, NoQuantizationIsSampleSecondMoment) {
    const Eigen::MatrixXd X = sample_covariates({5, StudentTScaled{4.5, 1.0, {}}}, 200, Stream(40));
    CovEstimatorSpec spec;
    spec.quantizer = {0.0, Dither::Triangular};
    const CovEstimate est = estimate_covariance(X, spec, Stream(41));
    const Eigen::MatrixXd want = X.transpose() * X / 200.0;
    EXPECT_LT((est.sigmaHat - want).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_EQ(est.sigmaHat, est.sigmaHat.transpose());
}

// E xdot^2 = c^2 + Delta^2/4 for a constant input, so the corrected estimate
// recovers c^2.
TEST(Covariance, ConstantInputRecoversSquare) {
    const long n = 1000000;
    const double c = 0.8, delta = 1.0;
    const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(n, 1, c);
    CovEstimatorSpec spec;
    spec.quantizer = {delta, Dither::Triangular};
    const double est = estimate_covariance(X, spec, Stream(42)).sigmaHat(0, 0);
    // |xdot| <= |c| + 1.5 Delta = 2.3, so Var(xdot^2) < 2.3^4 / 4 < 10.
    EXPECT_NEAR(est, c * c, 4.0 * std::sqrt(10.0 / n));
}

// Over dither draws with the data fixed, the mean estimate equals the sample
// second moment of the truncated data.
TEST(Covariance, UnbiasedOverDither) {
    const Eigen::MatrixXd X = sample_covariates({3, GaussianIdentity{}}, 20, Stream(43));
    CovEstimatorSpec spec;
    spec.truncation = TruncationRule::elementwise(1.5);
    spec.quantizer = {1.0, Dither::Triangular};
    const Eigen::MatrixXd Xt = truncate_rows(X, spec.truncation);
    const Eigen::MatrixXd want = Xt.transpose() * Xt / 20.0;
    const int reps = 20000;
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 3);
    for (int r = 0; r < reps; ++r)
        mean += estimate_covariance(X, spec, Stream::keyed(44, r)).sigmaHat / reps;
    EXPECT_LT((mean - want).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Covariance, UniformDitherRejected) {
    CovEstimatorSpec spec;
    spec.quantizer = {1.0, Dither::Uniform};
    EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Threshold, Examples) {
    CovEstimate est;
    est.sigmaHat.resize(2, 2);
    est.sigmaHat << 0.05, 0.2, 0.2, 0.5;
    EXPECT_EQ(threshold_covariance(est, 0.0).sigmaHat, est.sigmaHat);
    Eigen::Matrix2d want;
    want << 0.0, 0.2, 0.2, 0.5;
    EXPECT_EQ(threshold_covariance(est, 0.1).sigmaHat, Eigen::MatrixXd(want));
    EXPECT_TRUE(threshold_covariance(est, std::numeric_limits<double>::infinity()).sigmaHat.isZero(0.0));
    // Ties survive the threshold.
    EXPECT_EQ(threshold_covariance(est, 0.2).sigmaHat(0, 1), 0.2);
}

TEST(Ablation, ZeroDeltaAllAgree) {
    const Eigen::MatrixXd X = sample_covariates({1, GaussianIdentity{}}, 500, Stream(45));
    const AblationEstimates a = ablation_estimators(X.col(0), 0.0, Stream(46));
    const double sv = X.col(0).squaredNorm() / 500.0;
    EXPECT_DOUBLE_EQ(a.triangular, sv);
    EXPECT_DOUBLE_EQ(a.no_dither, sv);
    EXPECT_DOUBLE_EQ(a.uniform_raw, sv);
    EXPECT_DOUBLE_EQ(a.uniform_corrected, sv);
}

// With X = 0 every estimator sees only its dither. E Q_Delta(tau)^2 for
// tau ~ U[-Delta/2, Delta/2] comes from quadrature; at Delta = 3 it is 2.25,
// because Q maps the whole dither range onto the two levels +-Delta/2.
TEST(Ablation, ZeroInputMatchesQuadrature) {
    const double delta = 3.0;
    const double uniformOracle =
        oracle::integrate([&](double t) { return std::pow(quantize_level(t, delta), 2) / delta; }, -delta / 2,
                          delta / 2);
    EXPECT_NEAR(uniformOracle, 2.25, 1e-9);

    const long n = 200000;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    const AblationEstimates a = ablation_estimators(zero, delta, Stream(47));
    EXPECT_DOUBLE_EQ(a.uniform_raw, uniformOracle);
    EXPECT_DOUBLE_EQ(a.no_dither, 2.25);
    EXPECT_NEAR(a.uniform_corrected, 2.25 - 1.5, 1e-12);
    // Triangular: E Q(tau)^2 = Delta^2 / 4, so the corrected value is near 0.
    // Each term is Q^2 in {2.25, 20.25}; its variance is below 20.25^2 / 4.
    EXPECT_NEAR(a.triangular, 0.0, 4.0 * 20.25 / 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Ablation, TriangularBeatsCompetitorsAtLargeN) {
    const long n = 20000;
    const int trials = 30;
    double eTri = 0, eNo = 0, eU = 0, eUc = 0;
    for (int t = 0; t < trials; ++t) {
        const Eigen::MatrixXd X = sample_covariates({1, GaussianIdentity{}}, n, Stream::keyed(48, t, 1));
        const AblationEstimates a = ablation_estimators(X.col(0), 3.0, Stream::keyed(48, t, 2));
        eTri += std::abs(a.triangular - 1.0);
        eNo += std::abs(a.no_dither - 1.0);
        eU += std::abs(a.uniform_raw - 1.0);
        eUc += std::abs(a.uniform_corrected - 1.0);
    }
    EXPECT_LT(eTri, eNo);
    EXPECT_LT(eTri, eU);
    EXPECT_LT(eTri, eUc);
}

TEST(TuningRules, ClosedForms) {
    const double logd = std::log(100.0);
    EXPECT_NEAR(zeta_elementwise(1.0, 400.0, 3.0, 100.0, 4.0), std::pow(400.0 * 3.0 / (4.0 * logd), 0.25), 1e-12);
    EXPECT_NEAR(zeta_l4(2.0, 400.0, 16.0, 100.0, 1.0, 4.0), 2.0 * 3.0 * std::pow(400.0 / (4.0 * logd), 0.25),
                1e-12);
    EXPECT_NEAR(mu_threshold(0.5, 400.0, 4.0, 100.0, 1.0, 4.0), 0.5 * 3.0 * std::sqrt(4.0 * logd / 400.0), 1e-12);
    Eigen::MatrixXd X(2, 2);
    X << 0.5, 2.0, -0.5, 0.0;
    EXPECT_DOUBLE_EQ(empirical_fourth_moment(X), 8.0);
    EXPECT_DOUBLE_EQ(empirical_fourth_moment(X * 0.1), 1.0);
}

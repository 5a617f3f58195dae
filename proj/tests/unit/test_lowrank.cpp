#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qht/lowrank.hpp"
#include "qht/randgen.hpp"

using namespace qht;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Stream s) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i)
            M(i, j) = z(s);
    return M;
}

std::vector<oracle::McEntry> as_entries(const std::vector<McObservation>& obs) {
    std::vector<oracle::McEntry> out;
    for (const auto& o : obs)
        out.push_back({o.i, o.j, o.y});
    return out;
}

QmcSolverOptions tight() {
    QmcSolverOptions o;
    o.maxIter = 200000;
    o.tolAbs = 1e-11;
    o.tolRel = 1e-11;
    return o;
}

} // namespace

TEST(Svt, ZeroTauIsIdentity) {
    const Eigen::MatrixXd M = random_matrix(5, 5, Stream(90));
    EXPECT_EQ(svt(M, 0.0), M);
}

TEST(Svt, RankOneClosedForm) {
    const Eigen::VectorXd u = random_matrix(6, 1, Stream(91)).col(0).normalized();
    const Eigen::VectorXd v = random_matrix(6, 1, Stream(92)).col(0).normalized();
    const Eigen::MatrixXd M = 3.0 * u * v.transpose();
    EXPECT_LT((svt(M, 1.0) - 2.0 * u * v.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(svt(M, 3.5).isZero(0.0));
}

TEST(Svt, MatchesEigenOracle) {
    for (int k = 0; k < 20; ++k) {
        const Eigen::MatrixXd M = random_matrix(8, 8, Stream::keyed(93, k));
        const double tau = 0.3 * (k % 7);
        EXPECT_LT((svt(M, tau) - oracle::svt_via_eigen(M, tau)).cwiseAbs().maxCoeff(), 1e-10) << "k=" << k;
    }
}

TEST(Svt, RejectsNegativeTau) { EXPECT_THROW(svt(Eigen::MatrixXd::Identity(2, 2), -1.0), std::invalid_argument); }

TEST(Qmc, InterpolatesNoiselessObservations) {
    const Eigen::Index d = 6;
    const Eigen::MatrixXd T = sample_lowrank_matrix({d, 2, -1.0}, Stream(94));
    std::vector<McObservation> obs;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            obs.push_back({i, j, T(i, j)});
    QmcProblem p{d, obs, T.cwiseAbs().maxCoeff(), 0.0};
    const QmcEstimate est = solve_qmc(p, tight());
    EXPECT_TRUE(est.converged);
    EXPECT_LT((est.thetaHat - T).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Qmc, ZeroWhenLambdaDominates) {
    const Eigen::Index d = 8;
    const Eigen::MatrixXd T = sample_lowrank_matrix({d, 2, -1.0}, Stream(95));
    const auto obs = sample_mc_observations(T, 300, GaussianVar{0.25}, Stream(96));
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, d);
    for (const auto& o : obs)
        G(o.i, o.j) += o.y / 300.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    QmcProblem p{d, obs, 10.0, svd.singularValues()[0] * 1.0001};
    const QmcEstimate est = solve_qmc(p, tight());
    EXPECT_LT(est.thetaHat.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Qmc, MatchesFistaOracleBoxInactive) {
    const Eigen::Index d = 12;
    const Eigen::MatrixXd T = sample_lowrank_matrix({d, 2, -1.0}, Stream(97));
    const auto obs = sample_mc_observations(T, 600, GaussianVar{0.25}, Stream(98));
    const double lambda = 0.01;
    QmcProblem p{d, obs, 100.0, lambda};
    const QmcEstimate est = solve_qmc(p, tight());
    const auto entries = as_entries(obs);
    const Eigen::MatrixXd ref = oracle::mc_fista(entries, d, lambda, 100.0, 4000);
    const double fA = oracle::mc_objective(entries, lambda, est.thetaHat);
    const double fB = oracle::mc_objective(entries, lambda, ref);
    EXPECT_LE(fA - fB, 1e-7);
    EXPECT_LT((est.thetaHat - ref).norm() / d, 1e-3);
}

TEST(Qmc, MatchesFistaOracleBoxActive) {
    const Eigen::Index d = 5;
    const Eigen::MatrixXd T = sample_lowrank_matrix({d, 1, -1.0}, Stream(99));
    const auto obs = sample_mc_observations(T, 200, GaussianVar{0.25}, Stream(100));
    const double alpha = 0.5 * T.cwiseAbs().maxCoeff();
    const double lambda = 0.02;
    QmcProblem p{d, obs, alpha, lambda};
    const QmcEstimate est = solve_qmc(p, tight());
    EXPECT_LE(est.thetaHat.cwiseAbs().maxCoeff(), alpha + 1e-12);
    const auto entries = as_entries(obs);
    const Eigen::MatrixXd ref = oracle::mc_fista(entries, d, lambda, alpha, 1500);
    const double fA = oracle::mc_objective(entries, lambda, est.thetaHat);
    const double fB = oracle::mc_objective(entries, lambda, ref);
    EXPECT_LE(fA - fB, 1e-6);
}

TEST(Qmc, QuantizeObservationsTruncatesThenQuantizes) {
    std::vector<McObservation> raw = {{0, 0, 10.0}, {1, 1, -0.3}};
    const auto q = quantize_mc_observations(raw, TruncationRule::elementwise(2.0), {1.0, Dither::None}, Stream(101));
    EXPECT_DOUBLE_EQ(q[0].y, 2.5);
    EXPECT_DOUBLE_EQ(q[1].y, -0.5);
    EXPECT_EQ(q[1].i, 1);
}

TEST(Qmc, ValidatesProblem) {
    QmcProblem p{3, {{0, 5, 1.0}}, 1.0, 0.1};
    EXPECT_THROW(p.validate(), std::invalid_argument);
    QmcProblem empty{3, {}, 1.0, 0.1};
    EXPECT_THROW(empty.validate(), std::invalid_argument);
}

TEST(Qmc, TuningRules) {
    const double root = std::sqrt(4.0 * std::log(30.0) / (2000.0 * 30.0));
    EXPECT_NEAR(lambda_qmc_subexp(0.5, 0.5, 1.0, 2000.0, 30.0), 0.5 * 1.5 * root, 1e-15);
    EXPECT_NEAR(lambda_qmc_heavy(1.0, 3.0, 4.0, 1.0, 2000.0, 30.0), 6.0 * root, 1e-14);
    EXPECT_NEAR(zeta_qmc_heavy(1.0, 3.0, 4.0, 2000.0, 30.0), 5.0 / (root * 30.0), 1e-12);
}

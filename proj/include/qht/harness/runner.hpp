#pragma once

// Monte Carlo sweep over (n, Delta, trial) for every experiment family.
//
// Random numbers: each trial owns the stream keyed by (seed, trial). Its
// children feed the instance generators (covariates, noise, signal, dithers),
// and every generator maps sample k to child(k), so for a fixed trial the
// sample of size n is a prefix of the sample of size n' > n and the data do
// not depend on Delta. Curves over n and over Delta therefore use common
// random numbers, and a row depends only on (spec, n, Delta, trial).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "qht/covest.hpp"
#include "qht/harness/experiment.hpp"
#include "qht/harness/results.hpp"
#include "qht/lowrank.hpp"
#include "qht/quantize.hpp"
#include "qht/randgen.hpp"
#include "qht/rng.hpp"
#include "qht/sparse/solvers.hpp"
#include "qht/sparse/surrogates.hpp"

namespace qht::harness {

/// Child indices of a trial stream.
namespace streams {
inline constexpr std::uint64_t kCovariates = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kTruth = 3;
inline constexpr std::uint64_t kResponseDither = 4;
inline constexpr std::uint64_t kCovariateDither = 5;
inline constexpr std::uint64_t kSecondCovariateDither = 6;
inline constexpr std::uint64_t kObservations = 7;
inline constexpr std::uint64_t kFreshDraws = 8;
} // namespace streams

/// Solver settings used by every sweep.
inline QcsSolverOptions sweep_qcs_options(double lambda, std::optional<double> radius = std::nullopt) {
    QcsSolverOptions o;
    o.lambda = lambda;
    o.l1Radius = radius;
    o.maxIter = 50000;
    o.tolPrimal = 1e-9;
    o.tolDual = 1e-9;
    o.tolStationarity = 1e-7;
    return o;
}

inline QmcSolverOptions sweep_qmc_options() {
    QmcSolverOptions o;
    o.maxIter = 10000;
    o.tolAbs = 1e-7;
    o.tolRel = 1e-6;
    return o;
}

/// One finished composite-gradient solve inside a sweep, passed to
/// RunOptions::onConstrainedSolve so callers can audit the returned point.
struct ConstrainedSolve {
    const SurrogatePair& problem;
    const QcsEstimate& estimate;
    double lambda;
    double radius;
    long n;
    double delta;
    int trial;
};

using ConstrainedSolveObserver = std::function<void(const ConstrainedSolve&)>;

namespace detail {

struct Task {
    long n;
    double delta;
    int trial;
};

class RowSink {
public:
    RowSink(const ExperimentSpec& e, const Task& t, const ConstrainedSolveObserver* observer = nullptr,
            std::mutex* observerMutex = nullptr)
        : e_(e), t_(t), observer_(observer), observerMutex_(observerMutex) {}

    /// Composite-gradient solve that also reports to the observer, if any.
    QcsEstimate solve_constrained(const SurrogatePair& p, double lambda, double radius) {
        QcsEstimate est = solve_nonconvex_constrained(p, sweep_qcs_options(lambda, radius));
        if (observer_ && *observer_) {
            std::lock_guard lock(*observerMutex_);
            (*observer_)({p, est, lambda, radius, t_.n, t_.delta, t_.trial});
        }
        return est;
    }

    void add(const std::string& label, Metric m, double value, bool converged) {
        ResultRow r;
        r.family = label;
        r.n = t_.n;
        r.d = e_.d;
        r.s_or_r = e_.sOrR();
        r.delta = t_.delta;
        r.trial = t_.trial;
        r.metric = m;
        r.value = value;
        r.converged = converged && std::isfinite(value);
        rows.push_back(std::move(r));
    }

    void add(Metric m, double value, bool converged = true) {
        add(std::string(family_name(e_.family)), m, value, converged);
    }

    std::vector<ResultRow> rows;

private:
    const ExperimentSpec& e_;
    const Task& t_;
    const ConstrainedSolveObserver* observer_;
    std::mutex* observerMutex_;
};

inline double log_d(long d) { return std::log(std::max<double>(static_cast<double>(d), 2.0)); }

/// (mean |v|^p)
inline double abs_moment(const Eigen::VectorXd& v, double p) { return v.array().abs().pow(p).mean(); }

// ---- shared instance generators ------------------------------------------

/// Heavy-tailed regression data: x iid (sqrt5/3) t(4.5) (unit variance),
/// noise t(4.5)/sqrt3.
inline CovariateModel heavy_covariates(long d) {
    return {d, StudentTScaled{4.5, std::sqrt(5.0) / 3.0, {}}};
}
inline NoiseModel heavy_noise() { return ScaledT{4.5, 1.0 / std::sqrt(3.0)}; }

/// E t(nu)^4 = 3 nu^2 / ((nu - 2)(nu - 4)), nu > 4.
inline double student_t_fourth_moment(double nu) { return 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0)); }

/// Population fourth-moment bound max(E x_i^4, E y^4) of the heavy-tailed
/// regression design. With independent symmetric summands z_i,
/// E (sum z_i)^4 = sum E z_i^4 + 6 sum_{i<j} E z_i^2 E z_j^2.
inline double heavy_design_fourth_moment(const Eigen::VectorXd& theta) {
    const double sx = std::sqrt(5.0) / 3.0, se = 1.0 / std::sqrt(3.0);
    const double mx4 = std::pow(sx, 4) * student_t_fourth_moment(4.5);
    const double mx2 = sx * sx * student_t_variance(4.5);
    const double me4 = std::pow(se, 4) * student_t_fourth_moment(4.5);
    const double me2 = se * se * student_t_variance(4.5);
    double sum4 = me4, sum2 = me2, cross = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double t2 = theta[i] * theta[i];
        if (t2 == 0.0)
            continue;
        sum4 += t2 * t2 * mx4;
        cross += sum2 * t2 * mx2;
        sum2 += t2 * mx2;
    }
    return std::max(mx4, sum4 + 6.0 * cross);
}

/// Gaussian-design data with noise t(3)/sqrt6 (unit variance).
inline CovariateModel gaussian_covariates(long d) { return {d, GaussianIdentity{}}; }
inline NoiseModel t3_noise() { return ScaledT{3.0, 1.0 / std::sqrt(6.0)}; }

struct RegressionInstance {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::VectorXd theta;
};

inline RegressionInstance regression_instance(const CovariateModel& cm, const NoiseModel& nm, long n, long s,
                                              const Stream& trial) {
    RegressionInstance inst;
    inst.X = sample_covariates(cm, n, trial.child(streams::kCovariates));
    inst.theta = sample_sparse_signal({cm.d, s, false}, trial.child(streams::kTruth));
    inst.y = inst.X * inst.theta + sample_noise_vector(nm, n, trial.child(streams::kNoise));
    return inst;
}

/// Truncate then quantize every response with a uniform dither; response k
/// draws from stream.child(k).
inline Eigen::VectorXd quantize_responses(const Eigen::VectorXd& y, const TruncationRule& rule, double delta,
                                          const Stream& stream, Dither dither = Dither::Uniform) {
    const QuantizerSpec q{delta, dither};
    Eigen::VectorXd out(y.size());
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        Stream s = stream.child(static_cast<std::uint64_t>(k));
        out[k] = uniform_quantize(truncate_scalar(y[k], rule), q, s);
    }
    return out;
}

inline void add_qcs_rows(RowSink& sink, const QcsEstimate& est, const Eigen::VectorXd& theta,
                         const std::string& label) {
    const QcsErrors e = qcs_errors(est.thetaHat, theta);
    sink.add(label, Metric::L2, e.l2, est.converged);
    sink.add(label, Metric::L1, e.l1, est.converged);
}

// ---- covariance ------------------------------------------------------------

inline void trial_cov(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    CovariateModel cm;
    cm.d = e.d;
    if (e.family == Family::CovOperator) {
        // Independent scaled t(4.5) coordinates with Sigma = diag(2, 2, 1, ..., 1).
        const double unit = 1.0 / std::sqrt(student_t_variance(4.5));
        StudentTScaled law{4.5, unit, {}};
        law.coordinateScale = {std::sqrt(2.0) * unit, std::sqrt(2.0) * unit};
        cm.law = law;
    } else {
        cm.law = CustomCovarianceT{};
    }
    cm.validate();
    const Eigen::MatrixXd X = sample_covariates(cm, t.n, trial.child(streams::kCovariates));
    const Eigen::MatrixXd truth = covariance(cm);
    const double n = static_cast<double>(t.n), d = static_cast<double>(e.d);
    const double M = empirical_fourth_moment(X);

    CovEstimatorSpec spec;
    spec.quantizer = {t.delta, Dither::Triangular};
    if (e.family == Family::CovOperator) {
        spec.truncation = TruncationRule::l4(zeta_l4(e.c("c_zeta"), n, M, d, t.delta, e.c("delta_prob")));
    } else {
        spec.truncation = TruncationRule::elementwise(zeta_elementwise(e.c("c_zeta"), n, M, d, e.c("delta_prob")));
    }
    if (e.family == Family::CovSparseThreshold)
        spec.mu = mu_threshold(e.c("c_mu"), n, M, d, t.delta, e.c("delta_prob"));

    const CovEstimate est = estimate_covariance(X, spec, trial.child(streams::kCovariateDither));
    const CovErrors err = covariance_errors(est.sigmaHat, truth);
    if (e.family == Family::CovElementwise) {
        sink.add(Metric::Linf, err.linf);
        sink.add(Metric::Op, err.op);
    } else {
        sink.add(Metric::Op, err.op);
        sink.add(Metric::Linf, err.linf);
    }
}

inline void trial_ablation_cov(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    // d = 1 standard Gaussian; the target variance is 1.
    const Eigen::MatrixXd X = sample_covariates({1, GaussianIdentity{}}, t.n, trial.child(streams::kCovariates));
    const AblationEstimates a = ablation_estimators(X.col(0), t.delta, trial.child(streams::kCovariateDither));
    const std::string base(family_name(e.family));
    sink.add(base + ":triangular", Metric::Linf, std::abs(a.triangular - 1.0), true);
    sink.add(base + ":no-dither", Metric::Linf, std::abs(a.no_dither - 1.0), true);
    sink.add(base + ":uniform", Metric::Linf, std::abs(a.uniform_raw - 1.0), true);
    sink.add(base + ":uniform-corrected", Metric::Linf, std::abs(a.uniform_corrected - 1.0), true);
}

// ---- sparse recovery -------------------------------------------------------

/// Gaussian design, t(3) noise: zeta_y and lambda from the sub-Gaussian
/// covariate rules (sigma = kappa_0 = 1), moment plug-in
/// m = (mean |y|^{2l})^{1/l}.
struct SubGaussianTuning {
    double zetaY;
    double lambda;
};

inline SubGaussianTuning subgaussian_tuning(const ExperimentSpec& e, const Eigen::VectorXd& y, double n,
                                            double delta, double deltaBar, bool quantizedCovariate) {
    const double l = e.c("moment_l");
    const double m = std::pow(abs_moment(y, 2.0 * l), 1.0 / l); // M^{1/l}
    const double dp = e.c("delta_prob");
    const double logd = log_d(e.d);
    const double sigma = 1.0;
    double zetaY;
    if (quantizedCovariate)
        zetaY = e.c("c_zeta_y") * std::sqrt(sigma * m / (sigma + delta) * n / (dp * logd));
    else
        zetaY = e.c("c_zeta_y") * std::sqrt(n * m / (dp * logd));
    const double s2 = (sigma + deltaBar) * (sigma + deltaBar);
    const double lambda = e.c("c_lambda") * s2 * (delta + std::sqrt(m)) * std::sqrt(dp * logd / n);
    return {zetaY, lambda};
}

inline void trial_qcs_gaussian(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const RegressionInstance inst = regression_instance(gaussian_covariates(e.d), t3_noise(), t.n, e.s, trial);
    const double n = static_cast<double>(t.n);
    const bool quantX = e.family == Family::QcsThm6;
    const double deltaBar = quantX ? t.delta : 0.0;
    const SubGaussianTuning tune = subgaussian_tuning(e, inst.y, n, t.delta, deltaBar, quantX);
    const Eigen::VectorXd ydot = quantize_responses(inst.y, TruncationRule::elementwise(tune.zetaY), t.delta,
                                                    trial.child(streams::kResponseDither));
    if (!quantX) {
        const SurrogatePair p = build_surrogates_full_covariate(inst.X, ydot);
        add_qcs_rows(sink, solve_generalized_lasso(p, sweep_qcs_options(tune.lambda)), inst.theta,
                     std::string(family_name(e.family)));
        return;
    }
    const Eigen::MatrixXd Xdot =
        quantize_rows(inst.X, {deltaBar, Dither::Triangular}, trial.child(streams::kCovariateDither));
    const SurrogatePair p = build_surrogates_quantized_covariate(Xdot, ydot, deltaBar);
    const double R = e.c("radius_scale") * inst.theta.lpNorm<1>();
    add_qcs_rows(sink, sink.solve_constrained(p, tune.lambda, R), inst.theta,
                 std::string(family_name(e.family)));
}

inline void trial_qcs_heavy(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const RegressionInstance inst = regression_instance(heavy_covariates(e.d), heavy_noise(), t.n, e.s, trial);
    const double n = static_cast<double>(t.n), d = static_cast<double>(e.d);
    const double dp = e.c("delta_prob");
    const double M = heavy_design_fourth_moment(inst.theta);
    const double zeta = zeta_elementwise(e.c("c_zeta"), n, M, d, dp);
    const double R = inst.theta.lpNorm<1>();
    const TruncationRule rule = TruncationRule::elementwise(zeta);
    const Eigen::VectorXd ydot = quantize_responses(inst.y, rule, t.delta, trial.child(streams::kResponseDither));
    const double root = std::sqrt(dp * log_d(e.d) / n);

    if (e.family == Family::QcsThm5) {
        const double lambda = e.c("c_lambda") * (R * std::sqrt(M) + t.delta * t.delta) * root;
        const SurrogatePair p = build_surrogates_full_covariate(inst.X, ydot, rule);
        add_qcs_rows(sink, solve_generalized_lasso(p, sweep_qcs_options(lambda)), inst.theta,
                     std::string(family_name(e.family)));
        return;
    }
    const double deltaBar = t.delta;
    const double lambda =
        e.c("c_lambda") * (R * std::sqrt(M) + t.delta * t.delta + R * deltaBar * deltaBar) * root;
    const Eigen::MatrixXd Xdot = quantize_rows(truncate_rows(inst.X, rule), {deltaBar, Dither::Triangular},
                                               trial.child(streams::kCovariateDither));
    const SurrogatePair p = build_surrogates_quantized_covariate(Xdot, ydot, deltaBar);
    add_qcs_rows(sink, sink.solve_constrained(p, lambda, e.c("radius_scale") * R),
                 inst.theta, std::string(family_name(e.family)));
}

inline void trial_qcs_one_bit(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const bool heavy = e.family == Family::QcsOneBitHT;
    const RegressionInstance inst =
        heavy ? regression_instance(heavy_covariates(e.d), heavy_noise(), t.n, e.s, trial)
              : regression_instance(gaussian_covariates(e.d), GaussianVar{0.25}, t.n, e.s, trial);
    const double n = static_cast<double>(t.n);
    const double dp = e.c("delta_prob");
    const double logd = log_d(e.d);
    const double R = inst.theta.lpNorm<1>();

    OneBitSpec spec;
    double lambda = 0.0;
    if (heavy) {
        if (!(e.c("c_zeta") < e.c("c_gamma")))
            throw ConfigError("constants.c_zeta: must be < c_gamma so that zeta < gamma");
        const double M = heavy_design_fourth_moment(inst.theta);
        const double base = std::pow(n * M * M / (dp * logd), 0.125);
        const TruncationRule rule = TruncationRule::elementwise(e.c("c_zeta") * base);
        spec = OneBitSpec(e.c("c_gamma") * base, e.c("c_gamma") * base, rule, rule);
        lambda = e.c("c_lambda") * std::sqrt(M) * R * std::pow(dp * logd / n, 0.25);
    } else {
        const double sigma = std::max(1.0, std::sqrt(abs_moment(inst.y, 2.0)));
        const double g = e.c("c_gamma") * sigma * std::sqrt(std::log(std::max(n / (2.0 * dp * logd), 2.0)));
        spec = OneBitSpec(g, g);
        lambda = e.c("c_lambda") * sigma * sigma * R * std::sqrt(dp * logd * std::log(n) * std::log(n) / n);
    }

    Eigen::MatrixXd X1(t.n, e.d), X2(t.n, e.d);
    Eigen::VectorXd ydot(t.n);
    const Stream xs = trial.child(streams::kCovariateDither);
    const Stream ys = trial.child(streams::kResponseDither);
    for (long k = 0; k < t.n; ++k) {
        auto [a, b] = one_bit_quantize_covariate(inst.X.row(k).transpose(), spec, xs.child(k));
        X1.row(k) = a.transpose();
        X2.row(k) = b.transpose();
        Stream s = ys.child(static_cast<std::uint64_t>(k));
        ydot[k] = one_bit_quantize_response(inst.y[k], spec, s);
    }
    const SurrogatePair p = build_surrogates_one_bit(X1, X2, ydot, spec);
    add_qcs_rows(sink, sink.solve_constrained(p, lambda, R), inst.theta,
                 std::string(family_name(e.family)));
}

inline void trial_ablation_qcs(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const RegressionInstance inst = regression_instance(gaussian_covariates(e.d), t3_noise(), t.n, e.s, trial);
    const double n = static_cast<double>(t.n);
    const SubGaussianTuning tune = subgaussian_tuning(e, inst.y, n, t.delta, 0.0, false);
    const TruncationRule rule = TruncationRule::elementwise(tune.zetaY);
    const Stream ys = trial.child(streams::kResponseDither);
    const std::string base(family_name(e.family));
    const auto opts = sweep_qcs_options(tune.lambda);

    const Eigen::VectorXd ydot = quantize_responses(inst.y, rule, t.delta, ys, Dither::Uniform);
    add_qcs_rows(sink, solve_generalized_lasso(build_surrogates_full_covariate(inst.X, ydot), opts), inst.theta,
                 base + ":dithered");
    const Eigen::VectorXd yq = quantize_responses(inst.y, rule, t.delta, ys, Dither::None);
    add_qcs_rows(sink, solve_generalized_lasso(build_surrogates_full_covariate(inst.X, yq), opts), inst.theta,
                 base + ":no-dither");
}

/// One covariate/noise/dither draw shared by `signals` random s-sparse unit
/// signals (worst error reported), against the median error of the same
/// number of signals each with its own fresh draw.
inline void trial_qcs_uniform(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const long signals = std::lround(e.c("signals"));
    if (signals < 1)
        throw ConfigError("constants.signals: must be >= 1");
    const double n = static_cast<double>(t.n);
    const double l = e.c("moment_l");
    const double dp = e.c("delta_prob");
    const double logd = log_d(e.d);
    const double sigma = 1.0;

    // Constrained Lasso at the oracle radius; zeta_y uses the noise moment,
    // which does not depend on the signal.
    auto solve_one = [&](const Eigen::MatrixXd& X, const Eigen::VectorXd& eps, const Eigen::VectorXd& theta,
                         const Stream& ditherStream) {
        const double m = std::pow(abs_moment(eps, 2.0 * l), 1.0 / l);
        const double zetaY = e.c("c_zeta_y") * std::sqrt(n * (m + sigma * sigma) / (dp * logd));
        const Eigen::VectorXd y = X * theta + eps;
        const Eigen::VectorXd ydot =
            quantize_responses(y, TruncationRule::elementwise(zetaY), t.delta, ditherStream);
        QcsSolverOptions o = sweep_qcs_options(0.0);
        const QcsEstimate est = solve_constrained_lasso(X, ydot, theta.lpNorm<1>(), o);
        return std::pair{qcs_errors(est.thetaHat, theta).l2, est.converged};
    };
    auto signal = [&](const Stream& s) { return sample_sparse_signal({e.d, e.s, true}, s); };

    const CovariateModel cm = gaussian_covariates(e.d);
    const Eigen::MatrixXd X = sample_covariates(cm, t.n, trial.child(streams::kCovariates));
    const Eigen::VectorXd eps = sample_noise_vector(t3_noise(), t.n, trial.child(streams::kNoise));
    double worst = 0.0;
    bool allConverged = true;
    for (long j = 0; j < signals; ++j) {
        const auto [err, ok] =
            solve_one(X, eps, signal(trial.child(streams::kTruth).child(j)), trial.child(streams::kResponseDither));
        worst = std::max(worst, err);
        allConverged = allConverged && ok;
    }

    std::vector<double> fresh;
    bool freshConverged = true;
    for (long j = 0; j < signals; ++j) {
        const Stream f = trial.child(streams::kFreshDraws).child(j);
        const Eigen::MatrixXd Xf = sample_covariates(cm, t.n, f.child(streams::kCovariates));
        const Eigen::VectorXd ef = sample_noise_vector(t3_noise(), t.n, f.child(streams::kNoise));
        const auto [err, ok] = solve_one(Xf, ef, signal(f.child(streams::kTruth)), f.child(streams::kResponseDither));
        fresh.push_back(err);
        freshConverged = freshConverged && ok;
    }
    std::sort(fresh.begin(), fresh.end());
    const std::size_t h = fresh.size() / 2;
    const double median = fresh.size() % 2 ? fresh[h] : 0.5 * (fresh[h - 1] + fresh[h]);

    const std::string base(family_name(e.family));
    sink.add(base + ":uniform-max", Metric::L2, worst, allConverged);
    sink.add(base + ":nonuniform-median", Metric::L2, median, freshConverged);
}

// ---- matrix completion -----------------------------------------------------

struct McInstance {
    Eigen::MatrixXd theta;
    std::vector<McObservation> raw;
    double alpha;
};

inline McInstance mc_instance(const ExperimentSpec& e, const Task& t, const Stream& trial, const NoiseModel& noise) {
    McInstance m;
    m.theta = sample_lowrank_matrix({e.d, e.r, -1.0}, trial.child(streams::kTruth));
    m.raw = sample_mc_observations(m.theta, t.n, noise, trial.child(streams::kObservations));
    m.alpha = m.theta.cwiseAbs().maxCoeff();
    return m;
}

inline QmcEstimate solve_mc(const McInstance& m, std::vector<McObservation> obs, long d, double lambda) {
    QmcProblem p;
    p.d = d;
    p.observations = std::move(obs);
    p.alpha = m.alpha;
    p.lambda = lambda;
    return solve_qmc(p, sweep_qmc_options());
}

inline void add_qmc_rows(RowSink& sink, const QmcEstimate& est, const Eigen::MatrixXd& theta,
                         const std::string& label, bool nuclear = true) {
    const QmcErrors err = qmc_errors(est.thetaHat, theta);
    sink.add(label, Metric::FroOverD, err.frobeniusOverD, est.converged);
    if (nuclear)
        sink.add(label, Metric::NucOverD, err.nuclearOverD, est.converged);
}

inline void trial_qmc(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const bool heavy = e.family == Family::QmcHeavy;
    const NoiseModel noise = heavy ? t3_noise() : NoiseModel{GaussianVar{0.25}};
    const McInstance m = mc_instance(e, t, trial, noise);
    const double n = static_cast<double>(t.n), d = static_cast<double>(e.d);
    const double dp = e.c("delta_prob");

    TruncationRule rule = TruncationRule::none();
    double lambda = 0.0;
    if (heavy) {
        const double M = noise_variance(noise);
        rule = TruncationRule::elementwise(zeta_qmc_heavy(e.c("c_zeta_y"), m.alpha, M, n, d, dp));
        lambda = lambda_qmc_heavy(e.c("c_lambda"), m.alpha, M, t.delta, n, d, dp);
    } else {
        lambda = lambda_qmc_subexp(e.c("c_lambda"), std::sqrt(noise_variance(noise)), t.delta, n, d, dp);
    }
    auto obs = quantize_mc_observations(m.raw, rule, {t.delta, Dither::Uniform},
                                        trial.child(streams::kResponseDither));
    add_qmc_rows(sink, solve_mc(m, std::move(obs), e.d, lambda), m.theta, std::string(family_name(e.family)));
}

inline void trial_ablation_qmc(const ExperimentSpec& e, const Task& t, const Stream& trial, RowSink& sink) {
    const NoiseModel noise = GaussianVar{0.25};
    const McInstance m = mc_instance(e, t, trial, noise);
    const double lambda = lambda_qmc_subexp(e.c("c_lambda"), std::sqrt(noise_variance(noise)), t.delta,
                                            static_cast<double>(t.n), static_cast<double>(e.d), e.c("delta_prob"));
    const std::string base(family_name(e.family));
    const Stream ds = trial.child(streams::kResponseDither);
    add_qmc_rows(sink,
                 solve_mc(m, quantize_mc_observations(m.raw, TruncationRule::none(), {t.delta, Dither::Uniform}, ds),
                          e.d, lambda),
                 m.theta, base + ":dithered", false);
    add_qmc_rows(sink,
                 solve_mc(m, quantize_mc_observations(m.raw, TruncationRule::none(), {t.delta, Dither::None}, ds),
                          e.d, lambda),
                 m.theta, base + ":no-dither", false);
}

inline void run_trial(const ExperimentSpec& e, const Task& t, RowSink& sink) {
    const Stream trial = Stream::keyed(e.seed, static_cast<std::uint64_t>(t.trial));
    switch (e.family) {
    case Family::CovElementwise:
    case Family::CovOperator:
    case Family::CovSparseThreshold: trial_cov(e, t, trial, sink); return;
    case Family::DitherAblationCov: trial_ablation_cov(e, t, trial, sink); return;
    case Family::QcsThm4:
    case Family::QcsThm6: trial_qcs_gaussian(e, t, trial, sink); return;
    case Family::QcsThm5:
    case Family::QcsThm7: trial_qcs_heavy(e, t, trial, sink); return;
    case Family::QcsOneBitSG:
    case Family::QcsOneBitHT: trial_qcs_one_bit(e, t, trial, sink); return;
    case Family::QcsUniform: trial_qcs_uniform(e, t, trial, sink); return;
    case Family::QmcSubExp:
    case Family::QmcHeavy: trial_qmc(e, t, trial, sink); return;
    case Family::DitherAblationQcs: trial_ablation_qcs(e, t, trial, sink); return;
    case Family::DitherAblationQmc: trial_ablation_qmc(e, t, trial, sink); return;
    }
}

} // namespace detail

struct RunOptions {
    int threads = 1;
    /// Called after each finished task with (done, total); may be called
    /// from worker threads, but never concurrently.
    std::function<void(std::size_t, std::size_t)> progress;
    /// Sees every composite-gradient solve; calls are serialized.
    ConstrainedSolveObserver onConstrainedSolve;
};

/// Runs the whole sweep. Rows come out in (n, Delta, trial) order for any
/// thread count.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {}) {
    spec.validate();
    for (const auto& [k, v] : default_constants(spec.family))
        if (spec.constants.find(k) == spec.constants.end())
            throw ConfigError("constants." + k + ": missing");

    std::vector<detail::Task> tasks;
    for (long n : spec.nGrid)
        for (double delta : spec.deltaGrid)
            for (int trial = 0; trial < spec.trials; ++trial)
                tasks.push_back({n, delta, trial});

    std::vector<std::vector<ResultRow>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex mu, observerMu;
    std::exception_ptr firstError;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size())
                return;
            try {
                const auto t0 = std::chrono::steady_clock::now();
                detail::RowSink sink(spec, tasks[i], &opts.onConstrainedSolve, &observerMu);
                detail::run_trial(spec, tasks[i], sink);
                if (spec.recordWallclock) {
                    const double secs =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    for (auto& r : sink.rows)
                        r.wallclock = secs;
                }
                results[i] = std::move(sink.rows);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!firstError)
                    firstError = std::current_exception();
                next.store(tasks.size());
                return;
            }
            std::lock_guard lock(mu);
            ++done;
            if (opts.progress)
                opts.progress(done, tasks.size());
        }
    };

    const int nThreads = std::max(1, std::min<int>(opts.threads, static_cast<int>(tasks.size())));
    if (nThreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nThreads; ++k)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    if (firstError)
        std::rethrow_exception(firstError);

    std::vector<ResultRow> rows;
    for (auto& r : results)
        rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    return rows;
}

} // namespace qht::harness

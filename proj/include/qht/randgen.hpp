#pragma once

// Synthetic instances: heavy-tailed covariates and noise, sparse signals,
// low-rank matrices and matrix-completion samples.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qht/rng.hpp"

namespace qht {

/// Draws from Student's t(nu) as Z / sqrt(V / nu).
inline double student_t(double nu, Stream& stream) {
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> v(nu);
    const double num = z(stream);
    return num / std::sqrt(v(stream) / nu);
}

/// Var(t(nu)) = nu / (nu - 2), nu > 2.
inline double student_t_variance(double nu) { return nu / (nu - 2.0); }

// ---------------------------------------------------------------------------
// Covariates

struct GaussianIdentity {};

/// Independent coordinates scale_i * t(nu). `coordinateScale`, when
/// non-empty, overrides `scale` for its leading coordinates.
struct StudentTScaled {
    double nu = 4.5;
    double scale = 1.0;
    std::vector<double> coordinateScale;

    double scale_of(Eigen::Index i) const {
        return static_cast<std::size_t>(i) < coordinateScale.size() ? coordinateScale[i] : scale;
    }
};

/// Coordinates 1-2 iid t(4.5); coordinates 3-4 a bivariate t(6) with
/// covariance 1.2; the rest iid t(6). Unit-scale draws.
struct CustomCovarianceT {
    static constexpr double nuHead = 4.5;
    static constexpr double nuTail = 6.0;
    static constexpr double crossCov = 1.2;
};

using CovariateLaw = std::variant<GaussianIdentity, StudentTScaled, CustomCovarianceT>;

struct CovariateModel {
    Eigen::Index d = 1;
    CovariateLaw law = GaussianIdentity{};

    void validate() const {
        if (d < 1)
            throw std::invalid_argument("CovariateModel: d must be >= 1");
        if (const auto* t = std::get_if<StudentTScaled>(&law); t && !(t->nu > 2.0))
            throw std::invalid_argument("CovariateModel: Student-t requires nu > 2");
        if (std::holds_alternative<CustomCovarianceT>(law) && d < 4)
            throw std::invalid_argument("CovariateModel: CustomCovarianceT requires d >= 4");
    }
};

/// Population covariance E[x x^T] of the model.
inline Eigen::MatrixXd covariance(const CovariateModel& m) {
    m.validate();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m.d, m.d);
    if (std::holds_alternative<GaussianIdentity>(m.law)) {
        S.setIdentity();
    } else if (const auto* t = std::get_if<StudentTScaled>(&m.law)) {
        for (Eigen::Index i = 0; i < m.d; ++i) {
            const double s = t->scale_of(i);
            S(i, i) = s * s * student_t_variance(t->nu);
        }
    } else {
        S.diagonal().setConstant(student_t_variance(CustomCovarianceT::nuTail));
        S(0, 0) = S(1, 1) = student_t_variance(CustomCovarianceT::nuHead);
        S(2, 3) = S(3, 2) = CustomCovarianceT::crossCov;
    }
    return S;
}

/// n x d matrix of iid rows; row k depends only on stream.child(k).
inline Eigen::MatrixXd sample_covariates(const CovariateModel& m, Eigen::Index n, const Stream& stream) {
    m.validate();
    if (n < 1)
        throw std::invalid_argument("sample_covariates: n must be >= 1");
    Eigen::MatrixXd X(n, m.d);
    for (Eigen::Index k = 0; k < n; ++k) {
        Stream s = stream.child(static_cast<std::uint64_t>(k));
        if (std::holds_alternative<GaussianIdentity>(m.law)) {
            std::normal_distribution<double> z;
            for (Eigen::Index i = 0; i < m.d; ++i)
                X(k, i) = z(s);
        } else if (const auto* t = std::get_if<StudentTScaled>(&m.law)) {
            for (Eigen::Index i = 0; i < m.d; ++i)
                X(k, i) = t->scale_of(i) * student_t(t->nu, s);
        } else {
            X(k, 0) = student_t(CustomCovarianceT::nuHead, s);
            X(k, 1) = student_t(CustomCovarianceT::nuHead, s);
            // Bivariate t(6): correlated normals over a shared chi-square.
            const double nu = CustomCovarianceT::nuTail;
            const double rho = CustomCovarianceT::crossCov / student_t_variance(nu);
            std::normal_distribution<double> z;
            std::chi_squared_distribution<double> v(nu);
            const double z1 = z(s);
            const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * z(s);
            const double w = std::sqrt(v(s) / nu);
            X(k, 2) = z1 / w;
            X(k, 3) = z2 / w;
            for (Eigen::Index i = 4; i < m.d; ++i)
                X(k, i) = student_t(nu, s);
        }
    }
    return X;
}

// ---------------------------------------------------------------------------
// Noise

struct GaussianVar {
    double variance = 1.0;
};

/// scale * t(nu).
struct ScaledT {
    double nu = 3.0;
    double scale = 1.0;
};

using NoiseModel = std::variant<GaussianVar, ScaledT>;

inline double noise_variance(const NoiseModel& m) {
    if (const auto* g = std::get_if<GaussianVar>(&m))
        return g->variance;
    const auto& t = std::get<ScaledT>(m);
    return t.scale * t.scale * student_t_variance(t.nu);
}

inline double sample_noise(const NoiseModel& m, Stream& stream) {
    if (const auto* g = std::get_if<GaussianVar>(&m)) {
        if (g->variance == 0.0)
            return 0.0;
        std::normal_distribution<double> z(0.0, std::sqrt(g->variance));
        return z(stream);
    }
    const auto& t = std::get<ScaledT>(m);
    if (!(t.nu > 2.0))
        throw std::invalid_argument("ScaledT noise requires nu > 2");
    return t.scale * student_t(t.nu, stream);
}

/// n iid noise draws; entry k depends only on stream.child(k).
inline Eigen::VectorXd sample_noise_vector(const NoiseModel& m, Eigen::Index n, const Stream& stream) {
    Eigen::VectorXd e(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        Stream s = stream.child(static_cast<std::uint64_t>(k));
        e[k] = sample_noise(m, s);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Signals

struct SignalSpec {
    Eigen::Index d = 1;
    Eigen::Index s = 1;
    bool randomSupport = false;
};

/// s-sparse unit vector; nonzeros uniform on the sphere S^{s-1}, support
/// [s] unless randomSupport is set.
inline Eigen::VectorXd sample_sparse_signal(const SignalSpec& spec, const Stream& stream) {
    if (spec.s < 1 || spec.s > spec.d)
        throw std::invalid_argument("SignalSpec: need 1 <= s <= d");
    Stream st = stream;
    std::normal_distribution<double> z;
    Eigen::VectorXd v(spec.s);
    do {
        for (Eigen::Index i = 0; i < spec.s; ++i)
            v[i] = z(st);
    } while (v.norm() == 0.0);
    v.normalize();

    std::vector<Eigen::Index> support(spec.d);
    for (Eigen::Index i = 0; i < spec.d; ++i)
        support[i] = i;
    if (spec.randomSupport) {
        // Partial Fisher-Yates.
        for (Eigen::Index i = 0; i < spec.s; ++i) {
            std::uniform_int_distribution<Eigen::Index> pick(i, spec.d - 1);
            std::swap(support[i], support[pick(st)]);
        }
    }
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.d);
    for (Eigen::Index i = 0; i < spec.s; ++i)
        theta[support[i]] = v[i];
    return theta;
}

struct LowRankSpec {
    Eigen::Index d = 1;
    Eigen::Index r = 1;
    double frobeniusTarget = -1.0; // <= 0 means "use d"
};

/// k * Theta0 Theta0^T with Theta0 a d x r standard Gaussian matrix and k set
/// so that the Frobenius norm equals the target.
inline Eigen::MatrixXd sample_lowrank_matrix(const LowRankSpec& spec, const Stream& stream) {
    if (spec.r < 1 || spec.r > spec.d)
        throw std::invalid_argument("LowRankSpec: need 1 <= r <= d");
    Stream st = stream;
    std::normal_distribution<double> z;
    Eigen::MatrixXd T0(spec.d, spec.r);
    for (Eigen::Index j = 0; j < spec.r; ++j)
        for (Eigen::Index i = 0; i < spec.d; ++i)
            T0(i, j) = z(st);
    Eigen::MatrixXd T1 = T0 * T0.transpose();
    const double target = spec.frobeniusTarget > 0.0 ? spec.frobeniusTarget : static_cast<double>(spec.d);
    T1 *= target / T1.norm();
    // Exact symmetry.
    return 0.5 * (T1 + T1.transpose());
}

struct McObservation {
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double y = 0.0;
};

/// y_k = theta(i_k, j_k) + eps_k with (i_k, j_k) uniform on [d] x [d], drawn
/// with replacement.
inline std::vector<McObservation> sample_mc_observations(const Eigen::MatrixXd& theta, Eigen::Index n,
                                                         const NoiseModel& noise, const Stream& stream) {
    if (theta.rows() != theta.cols())
        throw std::invalid_argument("sample_mc_observations: theta must be square");
    const Eigen::Index d = theta.rows();
    std::vector<McObservation> obs(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        Stream s = stream.child(static_cast<std::uint64_t>(k));
        std::uniform_int_distribution<Eigen::Index> idx(0, d - 1);
        McObservation& o = obs[static_cast<std::size_t>(k)];
        o.i = idx(s);
        o.j = idx(s);
        o.y = theta(o.i, o.j) + sample_noise(noise, s);
    }
    return obs;
}

} // namespace qht

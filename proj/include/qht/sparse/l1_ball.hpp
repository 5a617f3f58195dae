#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace qht {

/// Soft threshold; |v| <= t maps to 0.
inline double soft_threshold(double v, double t) {
    const double a = std::abs(v) - t;
    return a > 0.0 ? std::copysign(a, v) : 0.0;
}

template <class Derived>
Eigen::VectorXd soft_threshold(const Eigen::MatrixBase<Derived>& v, double t) {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[i] = soft_threshold(v[i], t);
    return out;
}

/// Euclidean projection onto {theta : ||theta||_1 <= R} by sorting
/// (Duchi et al. style threshold search).
template <class Derived>
Eigen::VectorXd project_l1_ball(const Eigen::MatrixBase<Derived>& v, double R) {
    if (!(R > 0.0))
        throw std::invalid_argument("project_l1_ball: radius must be > 0");
    Eigen::VectorXd out = v;
    if (out.lpNorm<1>() <= R)
        return out;
    std::vector<double> u(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        u[i] = std::abs(v[i]);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, t = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cum += u[j];
        const double cand = (cum - R) / static_cast<double>(j + 1);
        if (j + 1 == u.size() || u[j + 1] <= cand) {
            t = cand;
            break;
        }
    }
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out[i] = soft_threshold(out[i], t);
    return out;
}

} // namespace qht

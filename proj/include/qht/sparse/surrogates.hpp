#pragma once

// Surrogates (Q, b) for (E[x x^T], E[y x]) built from quantized data.

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "qht/covest.hpp"
#include "qht/quantize.hpp"

namespace qht {

enum class Provenance { FullCovariate, QuantizedCovariate, OneBit };

struct SurrogatePair {
    Eigen::MatrixXd Q;
    Eigen::VectorXd b;
    Provenance builtFrom = Provenance::FullCovariate;
    double deltaBar = 0.0; // covariate quantization level, when relevant
};

namespace detail {

template <class DX, class DY>
void check_dims(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& y) {
    if (X.rows() != y.size())
        throw std::invalid_argument("surrogates: X has " + std::to_string(X.rows()) + " rows but y has " +
                                    std::to_string(y.size()) + " entries");
    if (X.rows() < 1)
        throw std::invalid_argument("surrogates: need at least one sample");
}

} // namespace detail

/// Q = (1/n) sum x~ x~^T, b = (1/n) sum ydot x~, with x~ the truncated
/// covariates. `ydot` must already be truncated and quantized.
template <class DX, class DY>
SurrogatePair build_surrogates_full_covariate(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& ydot,
                                              const TruncationRule& truncX = {}) {
    detail::check_dims(X, ydot);
    const Eigen::MatrixXd Xt = truncate_rows(X, truncX);
    SurrogatePair p;
    p.Q = second_moment(Xt);
    p.b = Xt.transpose() * ydot / static_cast<double>(X.rows());
    p.builtFrom = Provenance::FullCovariate;
    return p;
}

/// Q = (1/n) sum xdot xdot^T - (deltaBar^2/4) I, b = (1/n) sum ydot xdot.
/// Xdot must come from the triangular-dithered quantizer at level deltaBar.
/// Q is indefinite in general.
template <class DX, class DY>
SurrogatePair build_surrogates_quantized_covariate(const Eigen::MatrixBase<DX>& Xdot,
                                                   const Eigen::MatrixBase<DY>& ydot, double deltaBar) {
    detail::check_dims(Xdot, ydot);
    if (!(deltaBar >= 0.0))
        throw std::invalid_argument("surrogates: deltaBar must be >= 0");
    SurrogatePair p;
    p.Q = second_moment(Xdot);
    p.Q.diagonal().array() -= 0.25 * deltaBar * deltaBar;
    p.b = Xdot.transpose() * ydot / static_cast<double>(Xdot.rows());
    p.builtFrom = deltaBar == 0.0 ? Provenance::FullCovariate : Provenance::QuantizedCovariate;
    p.deltaBar = deltaBar;
    return p;
}

/// Q = (gamma_x^2 / 2n) sum (x1 x2^T + x2 x1^T), b = (gamma_x gamma_y / n) sum ydot x1
/// from the two-bit sign covariates and the sign responses.
template <class D1, class D2, class DY>
SurrogatePair build_surrogates_one_bit(const Eigen::MatrixBase<D1>& Xdot1, const Eigen::MatrixBase<D2>& Xdot2,
                                       const Eigen::MatrixBase<DY>& ydot, const OneBitSpec& spec) {
    detail::check_dims(Xdot1, ydot);
    if (Xdot1.rows() != Xdot2.rows() || Xdot1.cols() != Xdot2.cols())
        throw std::invalid_argument("surrogates: Xdot1 and Xdot2 shapes differ");
    spec.validate();
    const double n = static_cast<double>(Xdot1.rows());
    const Eigen::MatrixXd C = Xdot1.transpose() * Xdot2;
    SurrogatePair p;
    p.Q = (spec.gammaX * spec.gammaX / (2.0 * n)) * (C + C.transpose());
    p.b = (spec.gammaX * spec.gammaY / n) * (Xdot1.transpose() * ydot);
    p.builtFrom = Provenance::OneBit;
    return p;
}

} // namespace qht

#pragma once

// Truncation and dithered quantization of scalars and vectors.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "qht/rng.hpp"

namespace qht {

enum class Dither { None, Uniform, Triangular };

inline const char* to_string(Dither d) {
    switch (d) {
    case Dither::None: return "none";
    case Dither::Uniform: return "uniform";
    case Dither::Triangular: return "triangular";
    }
    return "?";
}

/// Uniform quantizer with resolution `delta` and an optional random dither.
/// delta == 0 is the identity map.
struct QuantizerSpec {
    double delta = 0.0;
    Dither dither = Dither::None;

    void validate() const {
        if (!(delta >= 0.0) || !std::isfinite(delta))
            throw std::invalid_argument("QuantizerSpec: delta must be finite and >= 0");
    }
};

/// Shrinkage applied to raw data before quantization.
struct TruncationRule {
    enum class Kind { NoTruncation, ElementWise, L4Norm };

    Kind kind = Kind::NoTruncation;
    double zeta = 0.0; // ignored for NoTruncation

    static TruncationRule none() { return {}; }
    static TruncationRule elementwise(double zeta) { return make(Kind::ElementWise, zeta); }
    static TruncationRule l4(double zeta) { return make(Kind::L4Norm, zeta); }

    bool active() const { return kind != Kind::NoTruncation; }

private:
    static TruncationRule make(Kind k, double zeta) {
        if (!(zeta > 0.0) || !std::isfinite(zeta))
            throw std::invalid_argument("TruncationRule: zeta must be finite and > 0");
        TruncationRule r;
        r.kind = k;
        r.zeta = zeta;
        return r;
    }
};

/// Dither ranges and truncation for the 1-bit (sign) quantizer.
struct OneBitSpec {
    double gammaX = 1.0;
    double gammaY = 1.0;
    TruncationRule truncX;
    TruncationRule truncY;

    OneBitSpec() = default;
    OneBitSpec(double gx, double gy, TruncationRule tx = {}, TruncationRule ty = {})
        : gammaX(gx), gammaY(gy), truncX(tx), truncY(ty) {
        validate();
    }

    void validate() const {
        if (!(gammaX > 0.0) || !(gammaY > 0.0))
            throw std::invalid_argument("OneBitSpec: gamma_x and gamma_y must be > 0");
        if (truncX.kind == TruncationRule::Kind::L4Norm || truncY.kind == TruncationRule::Kind::L4Norm)
            throw std::invalid_argument("OneBitSpec: only element-wise truncation is supported");
        // Heavy-tailed regime: the dither must dominate the truncated range.
        if (truncX.active() && !(truncX.zeta < gammaX))
            throw std::invalid_argument("OneBitSpec: zeta_x must be < gamma_x");
        if (truncY.active() && !(truncY.zeta < gammaY))
            throw std::invalid_argument("OneBitSpec: zeta_y must be < gamma_y");
    }
};

namespace detail {

inline void require_finite(double a) {
    if (!std::isfinite(a))
        throw std::domain_error("quantize: non-finite input");
}

template <class Derived>
void require_finite(const Eigen::DenseBase<Derived>& x) {
    if (!x.allFinite())
        throw std::domain_error("quantize: non-finite input");
}

} // namespace detail

/// Q_delta(a) = delta * (floor(a / delta) + 1/2); identity for delta == 0.
inline double quantize_level(double a, double delta) {
    if (delta == 0.0)
        return a;
    return delta * (std::floor(a / delta) + 0.5);
}

/// sign with sign(0) := +1.
inline int sign_pm1(double a) { return a >= 0.0 ? 1 : -1; }

/// One dither draw for `spec`; zero when there is no dither or delta == 0.
inline double draw_dither(const QuantizerSpec& spec, Stream& stream) {
    if (spec.delta == 0.0)
        return 0.0;
    const double h = 0.5 * spec.delta;
    switch (spec.dither) {
    case Dither::None: return 0.0;
    case Dither::Uniform: return stream.uniform(-h, h);
    case Dither::Triangular: {
        const double t1 = stream.uniform(-h, h);
        return t1 + stream.uniform(-h, h);
    }
    }
    return 0.0;
}

/// Q_delta(a + tau) with a fresh dither draw tau.
inline double uniform_quantize(double a, const QuantizerSpec& spec, Stream& stream) {
    detail::require_finite(a);
    if (spec.delta == 0.0)
        return a;
    return quantize_level(a + draw_dither(spec, stream), spec.delta);
}

inline double truncate_scalar(double a, double zeta) {
    return std::copysign(std::min(std::abs(a), zeta), a);
}

inline double truncate_scalar(double a, const TruncationRule& rule) {
    // For a scalar the l4 norm is |a|, so both active kinds reduce to a clamp.
    if (!rule.active())
        return a;
    return truncate_scalar(a, rule.zeta);
}

/// Element-wise clamp or l4-norm rescaling, per `rule`.
template <class Derived>
Eigen::VectorXd truncate(const Eigen::MatrixBase<Derived>& x, const TruncationRule& rule) {
    detail::require_finite(x);
    Eigen::VectorXd out = x;
    switch (rule.kind) {
    case TruncationRule::Kind::NoTruncation: break;
    case TruncationRule::Kind::ElementWise:
        for (Eigen::Index i = 0; i < out.size(); ++i)
            out[i] = truncate_scalar(out[i], rule.zeta);
        break;
    case TruncationRule::Kind::L4Norm: {
        const double n4 = std::sqrt(std::sqrt(out.array().square().square().sum()));
        if (n4 > rule.zeta)
            out *= rule.zeta / n4;
        break;
    }
    }
    return out;
}

/// Truncates every row of X (one sample per row).
template <class Derived>
Eigen::MatrixXd truncate_rows(const Eigen::MatrixBase<Derived>& X, const TruncationRule& rule) {
    Eigen::MatrixXd out = X;
    if (!rule.active())
        return out;
    for (Eigen::Index k = 0; k < out.rows(); ++k)
        out.row(k) = truncate(out.row(k).transpose(), rule).transpose();
    return out;
}

/// x_i -> Q_delta(x_i + tau_i); coordinate i draws from stream.child(i).
template <class Derived>
Eigen::VectorXd quantize_vector(const Eigen::MatrixBase<Derived>& x, const QuantizerSpec& spec,
                                const Stream& stream) {
    detail::require_finite(x);
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Stream s = stream.child(static_cast<std::uint64_t>(i));
        out[i] = uniform_quantize(x[i], spec, s);
    }
    return out;
}

/// Quantizes each sample (row) of X; row k draws from stream.child(k).
template <class Derived>
Eigen::MatrixXd quantize_rows(const Eigen::MatrixBase<Derived>& X, const QuantizerSpec& spec,
                              const Stream& stream) {
    spec.validate();
    Eigen::MatrixXd out(X.rows(), X.cols());
    if (spec.delta == 0.0) {
        detail::require_finite(X);
        out = X;
        return out;
    }
    for (Eigen::Index k = 0; k < X.rows(); ++k)
        out.row(k) = quantize_vector(X.row(k).transpose(), spec, stream.child(k)).transpose();
    return out;
}

/// sign(T_zeta_y(y) + phi), phi ~ U[-gamma_y, gamma_y].
inline int one_bit_quantize_response(double y, const OneBitSpec& spec, Stream& stream) {
    detail::require_finite(y);
    const double yt = truncate_scalar(y, spec.truncY);
    return sign_pm1(yt + stream.uniform(-spec.gammaY, spec.gammaY));
}

/// Two independent sign quantizations of the element-wise truncated x.
template <class Derived>
std::pair<Eigen::VectorXd, Eigen::VectorXd>
one_bit_quantize_covariate(const Eigen::MatrixBase<Derived>& x, const OneBitSpec& spec,
                           const Stream& stream) {
    const Eigen::VectorXd xt = truncate(x, spec.truncX);
    Eigen::VectorXd b1(xt.size()), b2(xt.size());
    for (Eigen::Index i = 0; i < xt.size(); ++i) {
        Stream s = stream.child(static_cast<std::uint64_t>(i));
        b1[i] = sign_pm1(xt[i] + s.uniform(-spec.gammaX, spec.gammaX));
        b2[i] = sign_pm1(xt[i] + s.uniform(-spec.gammaX, spec.gammaX));
    }
    return {std::move(b1), std::move(b2)};
}

} // namespace qht

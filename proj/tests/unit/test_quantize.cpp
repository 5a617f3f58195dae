#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qht/quantize.hpp"
#include "qht/rng.hpp"

using namespace qht;

TEST(Quantizer, MidriseLevels) {
    Stream s(1);
    EXPECT_DOUBLE_EQ(uniform_quantize(0.3, {1.0, Dither::None}, s), 0.5);
    EXPECT_DOUBLE_EQ(uniform_quantize(-0.3, {1.0, Dither::None}, s), -0.5);
    EXPECT_DOUBLE_EQ(quantize_level(2.0, 1.0), 2.5);
    EXPECT_DOUBLE_EQ(quantize_level(-2.0, 1.0), -1.5);
    EXPECT_DOUBLE_EQ(quantize_level(0.0, 0.25), 0.125);
}

TEST(Quantizer, ZeroDeltaIsIdentityForEveryDither) {
    for (Dither d : {Dither::None, Dither::Uniform, Dither::Triangular}) {
        Stream s(2);
        EXPECT_EQ(uniform_quantize(7.13, {0.0, d}, s), 7.13);
    }
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(5);
    EXPECT_EQ(quantize_vector(z, {0.0, Dither::Triangular}, Stream(3)), z);
}

TEST(Quantizer, OutputLiesOnTheGrid) {
    Stream s(4);
    const QuantizerSpec q{0.7, Dither::Triangular};
    for (int k = 0; k < 1000; ++k) {
        const double v = uniform_quantize(s.uniform(-10.0, 10.0), q, s);
        const double cell = v / 0.7 - 0.5;
        EXPECT_NEAR(cell, std::round(cell), 1e-9);
    }
}

TEST(Quantizer, RejectsInvalidInput) {
    Stream s(5);
    EXPECT_THROW(uniform_quantize(std::nan(""), {1.0, Dither::Uniform}, s), std::domain_error);
    EXPECT_THROW(QuantizerSpec({-1.0, Dither::Uniform}).validate(), std::invalid_argument);
}

// E[xi^2] = Delta^2 / 4 under triangular dither, for any fixed input.
TEST(Quantizer, TriangularNoiseSecondMoment) {
    const double delta = 1.0;
    const QuantizerSpec q{delta, Dither::Triangular};
    const int N = 1000000;
    for (double a : {0.0, 0.17, 3.77}) {
        const Stream base = Stream::keyed(6, static_cast<std::uint64_t>(a * 100));
        double s1 = 0.0, s2 = 0.0;
        for (int k = 0; k < N; ++k) {
            Stream s = base.child(k);
            const double xi = uniform_quantize(a, q, s) - a;
            s1 += xi * xi;
            s2 += xi * xi * xi * xi;
        }
        const double m = s1 / N;
        const double se = std::sqrt((s2 / N - m * m) / N);
        EXPECT_NEAR(m, 0.25, 4.0 * se) << "a=" << a;
    }
}

// Quantization error w = Q(a + tau) - (a + tau) is U[-Delta/2, Delta/2] and
// uncorrelated with the input.
TEST(Quantizer, UniformDitherErrorIsUniform) {
    const double delta = 1.0;
    const QuantizerSpec q{delta, Dither::Uniform};
    const int N = 100000;
    std::vector<double> w(N);
    Stream in(7);
    double sxw = 0.0, sx = 0.0, sw = 0.0, sxx = 0.0, sww = 0.0;
    for (int k = 0; k < N; ++k) {
        const double a = in.uniform(-5.0, 5.0);
        Stream s = Stream::keyed(8, k);
        const double tau = draw_dither(q, s);
        w[k] = quantize_level(a + tau, delta) - (a + tau);
        sxw += a * w[k], sx += a, sw += w[k], sxx += a * a, sww += w[k] * w[k];
    }
    const double D = oracle::ks_statistic(w, [](double x) { return std::clamp(x + 0.5, 0.0, 1.0); });
    EXPECT_LT(D, 0.01);
    const double cov = sxw / N - (sx / N) * (sw / N);
    const double corr = cov / std::sqrt((sxx / N - sx * sx / N / N) * (sww / N - sw * sw / N / N));
    EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(N));
}

TEST(Quantizer, DitheredQuantizationIsUnbiased) {
    const QuantizerSpec q{2.0, Dither::Uniform};
    const int N = 200000;
    double sum = 0.0;
    for (int k = 0; k < N; ++k) {
        Stream s = Stream::keyed(9, k);
        sum += uniform_quantize(0.37, q, s);
    }
    // Var(Q) <= Delta^2 / 4 + Delta^2 / 12.
    EXPECT_NEAR(sum / N, 0.37, 4.0 * std::sqrt(4.0 / 3.0 / N));
}

TEST(Truncation, ElementWiseClamp) {
    Eigen::VectorXd x(3);
    x << 3.0, -1.0, -5.0;
    Eigen::VectorXd want(3);
    want << 2.0, -1.0, -2.0;
    EXPECT_EQ(truncate(x, TruncationRule::elementwise(2.0)), want);
    Eigen::VectorXd one(1);
    one << 0.5;
    EXPECT_EQ(truncate(one, TruncationRule::elementwise(1.0)), one);
}

TEST(Truncation, L4Rescale) {
    Eigen::VectorXd x(4);
    x << 1.0, -1.0, 1.0, std::pow(13.0, 0.25); // ||x||_4^4 = 16
    const Eigen::VectorXd t = truncate(x, TruncationRule::l4(1.0));
    EXPECT_LT((t - x / 2.0).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(std::pow(t.array().pow(4).sum(), 0.25), 1.0, 1e-14);
}

TEST(Truncation, Idempotent) {
    Stream s(10);
    Eigen::VectorXd x(20);
    for (auto& v : x)
        v = s.uniform(-9.0, 9.0);
    for (const TruncationRule& r : {TruncationRule::elementwise(2.5), TruncationRule::l4(3.0), TruncationRule::none()}) {
        const Eigen::VectorXd once = truncate(x, r);
        EXPECT_LT((truncate(once, r) - once).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Truncation, RejectsBadThreshold) {
    EXPECT_THROW(TruncationRule::elementwise(0.0), std::invalid_argument);
    EXPECT_THROW(TruncationRule::l4(-1.0), std::invalid_argument);
}

TEST(Determinism, SameStreamSameOutput) {
    Eigen::VectorXd x(50);
    Stream s(11);
    for (auto& v : x)
        v = s.uniform(-3.0, 3.0);
    const QuantizerSpec q{0.5, Dither::Triangular};
    EXPECT_EQ(quantize_vector(x, q, Stream::keyed(12, 1)), quantize_vector(x, q, Stream::keyed(12, 1)));
    EXPECT_NE(quantize_vector(x, q, Stream::keyed(12, 1)), quantize_vector(x, q, Stream::keyed(12, 2)));
}

TEST(OneBit, LargeInputNeverFlips) {
    const OneBitSpec spec(1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        Stream s = Stream::keyed(13, k);
        EXPECT_EQ(one_bit_quantize_response(10.0, spec, s), 1);
    }
}

TEST(OneBit, ZeroInputIsFairCoin) {
    const OneBitSpec spec(1.0, 1.0);
    const int N = 200000;
    long sum = 0;
    for (int k = 0; k < N; ++k) {
        Stream s = Stream::keyed(14, k);
        sum += one_bit_quantize_response(0.0, spec, s);
    }
    EXPECT_LT(std::abs(static_cast<double>(sum) / N), 4.0 / std::sqrt(N));
}

// E sign(y + phi), phi ~ U[-gamma, gamma], computed by quadrature over phi.
TEST(OneBit, MeanMatchesIntegral) {
    const double y = 0.3, gamma = 1.0;
    const double want = oracle::integrate([&](double phi) { return (y + phi >= 0.0 ? 1.0 : -1.0) / (2.0 * gamma); },
                                          -gamma, gamma);
    const OneBitSpec spec(gamma, gamma);
    const int N = 1000000;
    long sum = 0;
    for (int k = 0; k < N; ++k) {
        Stream s = Stream::keyed(15, k);
        sum += one_bit_quantize_response(y, spec, s);
    }
    EXPECT_NEAR(want, 0.3, 1e-4);
    EXPECT_NEAR(static_cast<double>(sum) / N, want, 4.0 / std::sqrt(N));
}

TEST(OneBit, CovariateBitsAreIndependentDraws) {
    const OneBitSpec spec(2.0, 2.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4000);
    auto [b1, b2] = one_bit_quantize_covariate(x, spec, Stream(16));
    EXPECT_LT(std::abs(b1.dot(b2)) / 4000.0, 4.0 / std::sqrt(4000.0));
    EXPECT_TRUE((b1.array().abs() == 1.0).all());
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "riskenv/uncertainty.hpp"

using namespace riskenv;

namespace {

constexpr double kPi = std::numbers::pi;

Mat4 SmallSigma() { return DiagonalMatrix({0.04, 0.04, 0.04, 0.0025}); }

Mat4 RotatedSigma() {
  const Mat4 r = oracle::Multiply(oracle::Multiply(oracle::Givens(0, 1, 0.4), oracle::Givens(1, 2, -0.7)),
                                  oracle::Givens(2, 3, 1.1));
  return oracle::Multiply(oracle::Multiply(r, DiagonalMatrix({4, 1, 1, 1})), oracle::Transpose(r));
}

void ExpectReconstructs(const Mat4& sigma, const EigenBasis& b) {
  const Mat4 rebuilt = oracle::Multiply(oracle::Multiply(b.vectors, DiagonalMatrix(b.eigenvalues)),
                                        oracle::Transpose(b.vectors));
  const Mat4 identity = oracle::Multiply(oracle::Transpose(b.vectors), b.vectors);
  double scale = 0.0;
  for (const auto& row : sigma)
    for (double v : row) scale = std::max(scale, std::abs(v));
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      EXPECT_NEAR(rebuilt[i][j], sigma[i][j], 1e-9 * std::max(1.0, scale));
      EXPECT_NEAR(identity[i][j], i == j ? 1.0 : 0.0, 1e-9);
    }
  }
  for (int i = 0; i < 3; ++i) EXPECT_GE(b.eigenvalues[i], b.eigenvalues[i + 1]);
}

}  // namespace

TEST(Chi2Cdf4, KnownPoints) {
  EXPECT_DOUBLE_EQ(Chi2Cdf4(0.0), 0.0);
  EXPECT_GT(Chi2Cdf4(50.0), 0.999999);
  EXPECT_NEAR(Chi2Cdf4(9.4877), 0.95, 1e-4);
  EXPECT_THROW(Chi2Cdf4(-1.0), DomainError);
}

TEST(Chi2Cdf4, MatchesIntegratedDensity) {
  for (double x : {0.3, 1.0, 2.5, 5.0, 9.4877, 15.0, 25.0}) {
    EXPECT_NEAR(Chi2Cdf4(x), oracle::Chi2Cdf4ByQuadrature(x), 1e-10) << x;
  }
}

TEST(Chi2Quantile4, KnownPointsAndDomain) {
  EXPECT_DOUBLE_EQ(Chi2Quantile4(0.0), 0.0);
  EXPECT_NEAR(Chi2Quantile4(0.95), 9.4877, 1e-3);
  EXPECT_THROW(Chi2Quantile4(1.0), DomainError);
  EXPECT_THROW(Chi2Quantile4(-0.1), DomainError);
}

TEST(Chi2Quantile4, RoundTripOnGrid) {
  for (double p : {0.1, 0.5, 0.9, 0.99}) EXPECT_NEAR(Chi2Cdf4(Chi2Quantile4(p)), p, 1e-9);
  for (int i = 0; i < 100; ++i) {
    const double p = (i + 0.5) / 100.0;
    EXPECT_NEAR(Chi2Cdf4(Chi2Quantile4(p)), p, 1e-9);
  }
}

TEST(Eigendecompose, DiagonalGivesSortedDiagonal) {
  const Mat4 sigma = DiagonalMatrix({0.5, 3.0, 0.1, 1.0});
  const EigenBasis b = Eigendecompose(sigma);
  EXPECT_DOUBLE_EQ(b.eigenvalues[0], 3.0);
  EXPECT_DOUBLE_EQ(b.eigenvalues[1], 1.0);
  EXPECT_DOUBLE_EQ(b.eigenvalues[2], 0.5);
  EXPECT_DOUBLE_EQ(b.eigenvalues[3], 0.1);
  // Columns are signed unit vectors: a permutation.
  EXPECT_DOUBLE_EQ(b.vectors[1][0], 1.0);
  EXPECT_DOUBLE_EQ(b.vectors[3][1], 1.0);
  EXPECT_DOUBLE_EQ(b.vectors[0][2], 1.0);
  EXPECT_DOUBLE_EQ(b.vectors[2][3], 1.0);
}

TEST(Eigendecompose, RecoversRotatedSpectrum) {
  const Mat4 sigma = RotatedSigma();
  const EigenBasis b = Eigendecompose(sigma);
  EXPECT_NEAR(b.eigenvalues[0], 4.0, 1e-10);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(b.eigenvalues[i], 1.0, 1e-10);
  ExpectReconstructs(sigma, b);
}

TEST(Eigendecompose, ZeroMatrix) {
  const EigenBasis b = Eigendecompose(Mat4{});
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(b.eigenvalues[i], 0.0);
    for (int j = 0; j < 4; ++j) EXPECT_EQ(b.vectors[i][j], i == j ? 1.0 : 0.0);
  }
}

TEST(Eigendecompose, RejectsAsymmetricInput) {
  Mat4 m = SmallSigma();
  m[0][1] = 0.01;
  EXPECT_THROW(Eigendecompose(m), ValidationError);
}

TEST(Eigendecompose, RandomCovariancesReconstruct) {
  oracle::Gen gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    Mat4 a{};
    for (auto& row : a)
      for (double& v : row) v = gen.Uniform(-1.0, 1.0);
    const Mat4 sigma = oracle::Multiply(a, oracle::Transpose(a));
    const EigenBasis b = Eigendecompose(sigma);
    ExpectReconstructs(sigma, b);
    for (int k = 0; k < 4; ++k) {
      // Sign convention: the largest-magnitude entry of each column is positive.
      int arg = 0;
      for (int i = 1; i < 4; ++i) {
        if (std::abs(b.vectors[i][k]) > std::abs(b.vectors[arg][k])) arg = i;
      }
      EXPECT_GT(b.vectors[arg][k], 0.0);
    }
  }
}

TEST(UncertaintySpec, Validation) {
  UncertaintySpec spec;
  spec.sigma = SmallSigma();
  EXPECT_NO_THROW(spec.Validate());
  spec.contour_levels = {0.5, 0.4};
  EXPECT_THROW(spec.Validate(), ValidationError);
  spec.contour_levels = {0.5, 1.0};
  EXPECT_THROW(spec.Validate(), ValidationError);
  spec.contour_levels = {0.5};
  spec.n_phi = 1;
  EXPECT_THROW(spec.Validate(), ValidationError);
  spec.n_phi = 6;
  spec.sigma = DiagonalMatrix({1.0, -0.5, 1.0, 1.0});
  EXPECT_THROW(spec.Validate(), ValidationError);
}

TEST(ContourDeviation, OriginAnglesPointAlongFirstAxis) {
  const EigenBasis b = Eigendecompose(DiagonalMatrix({0.09, 0.04, 0.01, 0.0025}));
  const StateDeviation d = ContourDeviation(b, 0.95, 0.0, 0.0, 0.0);
  EXPECT_NEAR(d.dx, std::sqrt(Chi2Quantile4(0.95) * 0.09), 1e-12);
  EXPECT_NEAR(d.dy, 0.0, 1e-15);
  EXPECT_NEAR(d.dv, 0.0, 1e-15);
  EXPECT_NEAR(d.dtheta, 0.0, 1e-15);
}

TEST(ContourDeviation, LiesOnTheEllipsoid) {
  oracle::Gen gen(22);
  const Mat4 sigma = RotatedSigma();
  const EigenBasis b = Eigendecompose(sigma);
  const Mat4 inv = oracle::Inverse(sigma);
  for (int i = 0; i < 300; ++i) {
    const double p = gen.Uniform(0.05, 0.999);
    const StateDeviation d =
        ContourDeviation(b, p, gen.Uniform(0, 2 * kPi), gen.Uniform(0, 2 * kPi), gen.Uniform(0, 2 * kPi));
    EXPECT_NEAR(oracle::Mahalanobis2(d.AsVector(), inv), Chi2Quantile4(p), 1e-9);
  }
}

TEST(ContourDeviation, ZeroEigenvalueAxisStaysZero) {
  const EigenBasis b = Eigendecompose(DiagonalMatrix({0.04, 0.04, 0.04, 0.0}));
  oracle::Gen gen(23);
  for (int i = 0; i < 50; ++i) {
    const StateDeviation d =
        ContourDeviation(b, 0.9, gen.Uniform(0, 2 * kPi), gen.Uniform(0, 2 * kPi), gen.Uniform(0, 2 * kPi));
    EXPECT_EQ(d.dtheta, 0.0);
  }
}

TEST(SampleContour, CountOrderAndMembership) {
  const EigenBasis b = Eigendecompose(DiagonalMatrix({0.09, 0.04, 0.01, 0.0025}));
  EXPECT_EQ(SampleContour(b, 0.5, 2).size(), 8u);
  const auto samples = SampleContour(b, 0.8, 4);
  ASSERT_EQ(samples.size(), 64u);
  const double r0 = std::sqrt(Chi2Quantile4(0.8) * 0.09);
  auto has = [&](double dx) {
    return std::any_of(samples.begin(), samples.end(), [&](const StateDeviation& d) {
      return std::abs(d.dx - dx) < 1e-12 && std::abs(d.dy) < 1e-12 && std::abs(d.dv) < 1e-12 &&
             std::abs(d.dtheta) < 1e-12;
    });
  };
  EXPECT_TRUE(has(r0));
  EXPECT_TRUE(has(-r0));
  // Lexicographic: index (z1, z2, z3) = z1 * 16 + z2 * 4 + z3.
  const StateDeviation expected = ContourDeviation(b, 0.8, 2 * kPi / 4, 3 * 2 * kPi / 4, 2 * kPi / 4);
  const StateDeviation& got = samples[1 * 16 + 3 * 4 + 1];
  EXPECT_NEAR(got.dx, expected.dx, 1e-15);
  EXPECT_NEAR(got.dy, expected.dy, 1e-15);
  EXPECT_NEAR(got.dv, expected.dv, 1e-15);
  EXPECT_NEAR(got.dtheta, expected.dtheta, 1e-15);
  const Mat4 inv = oracle::Inverse(DiagonalMatrix({0.09, 0.04, 0.01, 0.0025}));
  for (const auto& d : samples) EXPECT_NEAR(oracle::Mahalanobis2(d.AsVector(), inv), Chi2Quantile4(0.8), 1e-9);
}

TEST(SampleContour, MahalanobisInvariantUnderRotation) {
  const Mat4 sigma = RotatedSigma();
  const EigenBasis b = Eigendecompose(sigma);
  const Mat4 inv = oracle::Inverse(sigma);
  for (const auto& d : SampleContour(b, 0.6, 5)) {
    // Back into the eigenbasis: V^T d, weighted by 1 / lambda.
    double eigen_m2 = 0.0;
    const Vec4 v = d.AsVector();
    for (int k = 0; k < 4; ++k) {
      double c = 0.0;
      for (int i = 0; i < 4; ++i) c += b.vectors[i][k] * v[i];
      eigen_m2 += c * c / b.eigenvalues[k];
    }
    EXPECT_NEAR(oracle::Mahalanobis2(v, inv), eigen_m2, 1e-9);
  }
}

TEST(DrawNoise, ZeroCovarianceIsZero) {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(DrawNoise(Mat4{}, rng), StateDeviation{});
}

TEST(DrawNoise, SameSeedSameSequence) {
  const EigenBasis b = Eigendecompose(RotatedSigma());
  Rng a(99);
  Rng c(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(DrawNoise(b, a), DrawNoise(b, c));
}

TEST(DrawNoise, EmpiricalCovarianceMatches) {
  const Mat4 sigma = RotatedSigma();
  const EigenBasis b = Eigendecompose(sigma);
  Rng rng(5);
  const int n = 100000;
  Mat4 acc{};
  for (int s = 0; s < n; ++s) {
    const Vec4 d = DrawNoise(b, rng).AsVector();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) acc[i][j] += d[i] * d[j];
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double emp = acc[i][j] / n;
      // Relative for the well-populated entries, absolute otherwise.
      const double scale = std::sqrt(sigma[i][i] * sigma[j][j]);
      EXPECT_NEAR(emp, sigma[i][j], std::max(0.05 * std::abs(sigma[i][j]), 0.02 * scale))
          << i << "," << j;
    }
  }
}

TEST(DrawNoise, ConfidenceCoverage) {
  const Mat4 sigma = RotatedSigma();
  const EigenBasis b = Eigendecompose(sigma);
  const Mat4 inv = oracle::Inverse(sigma);
  Rng rng(6);
  const int n = 100000;
  std::vector<double> m2(n);
  for (auto& v : m2) v = oracle::Mahalanobis2(DrawNoise(b, rng).AsVector(), inv);
  for (double p : {0.5, 0.9, 0.99}) {
    const double q = Chi2Quantile4(p);
    const double frac = static_cast<double>(std::count_if(m2.begin(), m2.end(), [&](double x) { return x <= q; })) / n;
    EXPECT_NEAR(frac, p, 0.01) << p;
  }
}

TEST(Perturb, ClampsSpeedAndWrapsHeading) {
  const AgentState s{1, 2, 3.0, 0.5};
  const AgentState out = Perturb(s, {0.5, -0.5, -1.0, 0.5});
  EXPECT_DOUBLE_EQ(out.x, 1.5);
  EXPECT_DOUBLE_EQ(out.y, 1.5);
  EXPECT_DOUBLE_EQ(out.v, 0.0);
  EXPECT_NEAR(out.theta, 3.5 - 2 * kPi, 1e-12);
}

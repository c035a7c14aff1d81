#include "riskenv/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace riskenv {

namespace {

constexpr double kSymmetryTol = 1e-9;

double FrobeniusNorm(const Mat4& m) {
  double sum = 0.0;
  for (const auto& row : m)
    for (double v : row) sum += v * v;
  return std::sqrt(sum);
}

double OffDiagonalNorm(const Mat4& m) {
  double sum = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) sum += m[i][j] * m[i][j];
  return std::sqrt(sum);
}

void CheckSymmetric(const Mat4& m) {
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      if (!std::isfinite(m[i][j]) || !std::isfinite(m[j][i]) ||
          std::abs(m[i][j] - m[j][i]) > kSymmetryTol) {
        throw ValidationError(fmt::format(
            "covariance is not symmetric: sigma[{}][{}]={} vs sigma[{}][{}]={}", i, j,
            m[i][j], j, i, m[j][i]));
      }
    }
    if (!std::isfinite(m[i][i])) throw ValidationError("covariance has non-finite entries");
  }
}

Vec4 Rotate(const EigenBasis& basis, const Vec4& eigen_coords) {
  Vec4 out{};
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 4; ++k) out[i] += basis.vectors[i][k] * eigen_coords[k];
  }
  return out;
}

}  // namespace

Mat4 DiagonalMatrix(const Vec4& diagonal) {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = diagonal[i];
  return m;
}

AgentState Perturb(const AgentState& state, const StateDeviation& d) {
  AgentState out = state;
  out.x += d.dx;
  out.y += d.dy;
  out.v = std::max(0.0, state.v + d.dv);
  out.theta = WrapAngle(state.theta + d.dtheta);
  return out;
}

void UncertaintySpec::Validate() const {
  CheckSymmetric(sigma);
  const EigenBasis basis = Eigendecompose(sigma);
  if (basis.eigenvalues[3] < 0.0) {
    throw ValidationError(fmt::format("covariance is not positive semidefinite (eigenvalue {})",
                                      basis.eigenvalues[3]));
  }
  if (contour_levels.empty()) throw ValidationError("contour_levels must not be empty");
  double prev = 0.0;
  for (double p : contour_levels) {
    if (!(p > prev) || !(p < 1.0)) {
      throw ValidationError(fmt::format(
          "contour_levels must be strictly increasing within (0, 1), got {}", p));
    }
    prev = p;
  }
  if (n_phi < 2) throw ValidationError(fmt::format("n_phi must be >= 2, got {}", n_phi));
}

double Chi2Cdf4(double x) {
  if (!(x >= 0.0)) throw DomainError(fmt::format("chi-square argument must be >= 0, got {}", x));
  if (std::isinf(x)) return 1.0;
  // 1 - e^{-x/2}(1 + x/2), written with expm1 to keep precision near zero.
  const double h = 0.5 * x;
  return -std::expm1(-h) - h * std::exp(-h);
}

double Chi2Quantile4(double p) {
  if (!(p >= 0.0) || !(p < 1.0)) {
    throw DomainError(fmt::format("probability must lie in [0, 1), got {}", p));
  }
  if (p == 0.0) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (Chi2Cdf4(hi) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (Chi2Cdf4(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

EigenBasis Eigendecompose(const Mat4& sigma) {
  CheckSymmetric(sigma);
  Mat4 a = sigma;
  // Symmetrize away the tolerated asymmetry.
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) a[i][j] = a[j][i] = 0.5 * (a[i][j] + a[j][i]);

  Mat4 v = DiagonalMatrix({1.0, 1.0, 1.0, 1.0});
  const double scale = FrobeniusNorm(a);
  for (int sweep = 0; sweep < 100 && OffDiagonalNorm(a) > 1e-12 * scale; ++sweep) {
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with the rotation acting on rows/columns p and q.
        for (int k = 0; k < 4; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 4; ++k) {
          const double vkp = v[k][p];
          const double vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a[i][i] > a[j][j]; });

  EigenBasis basis;
  for (int col = 0; col < 4; ++col) {
    const int src = order[col];
    basis.eigenvalues[col] = a[src][src];
    int lead = 0;
    for (int row = 1; row < 4; ++row) {
      if (std::abs(v[row][src]) > std::abs(v[lead][src])) lead = row;
    }
    const double sign = v[lead][src] < 0.0 ? -1.0 : 1.0;
    for (int row = 0; row < 4; ++row) basis.vectors[row][col] = sign * v[row][src];
  }
  // Round-off can leave PSD eigenvalues slightly negative.
  for (double& lambda : basis.eigenvalues) {
    if (lambda < 0.0 && lambda > -1e-12 * std::max(1.0, scale)) lambda = 0.0;
  }
  return basis;
}

namespace {

StateDeviation DeviationOnLevelSet(const EigenBasis& basis, double quantile, double phi1,
                                   double phi2, double phi3) {
  Vec4 radii{};
  for (int i = 0; i < 4; ++i) radii[i] = std::sqrt(quantile * std::max(0.0, basis.eigenvalues[i]));
  const double s1 = std::sin(phi1);
  const double s2 = std::sin(phi2);
  const Vec4 local{radii[0] * std::cos(phi1), radii[1] * s1 * std::cos(phi2),
                   radii[2] * s1 * s2 * std::cos(phi3), radii[3] * s1 * s2 * std::sin(phi3)};
  return StateDeviation::FromVector(Rotate(basis, local));
}

}  // namespace

StateDeviation ContourDeviation(const EigenBasis& basis, double p_k, double phi1, double phi2,
                                double phi3) {
  return DeviationOnLevelSet(basis, Chi2Quantile4(p_k), phi1, phi2, phi3);
}

std::vector<StateDeviation> SampleContour(const EigenBasis& basis, double p_k, int n_phi) {
  if (n_phi < 2) throw ValidationError(fmt::format("n_phi must be >= 2, got {}", n_phi));
  const double quantile = Chi2Quantile4(p_k);
  std::vector<StateDeviation> out;
  out.reserve(static_cast<std::size_t>(n_phi) * n_phi * n_phi);
  const double step = 2.0 * std::numbers::pi / n_phi;
  for (int z1 = 0; z1 < n_phi; ++z1)
    for (int z2 = 0; z2 < n_phi; ++z2)
      for (int z3 = 0; z3 < n_phi; ++z3)
        out.push_back(DeviationOnLevelSet(basis, quantile, z1 * step, z2 * step, z3 * step));
  return out;
}

StateDeviation DrawNoise(const EigenBasis& basis, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec4 z{};
  for (int i = 0; i < 4; ++i) z[i] = normal(rng) * std::sqrt(std::max(0.0, basis.eigenvalues[i]));
  return StateDeviation::FromVector(Rotate(basis, z));
}

StateDeviation DrawNoise(const Mat4& sigma, Rng& rng) { return DrawNoise(Eigendecompose(sigma), rng); }

}  // namespace riskenv

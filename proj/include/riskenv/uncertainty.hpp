#ifndef RISKENV_UNCERTAINTY_HPP_
#define RISKENV_UNCERTAINTY_HPP_

#include <array>
#include <random>
#include <vector>

#include "riskenv/rss.hpp"

namespace riskenv {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// State deviations and covariances are ordered (x, y, v, theta).
using Vec4 = std::array<double, 4>;
using Mat4 = std::array<Vec4, 4>;  // row-major

using Rng = std::mt19937_64;

Mat4 DiagonalMatrix(const Vec4& diagonal);

struct StateDeviation {
  double dx = 0.0;
  double dy = 0.0;
  double dv = 0.0;
  double dtheta = 0.0;

  Vec4 AsVector() const { return {dx, dy, dv, dtheta}; }
  static StateDeviation FromVector(const Vec4& d) { return {d[0], d[1], d[2], d[3]}; }

  bool operator==(const StateDeviation&) const = default;
};

/// Adds a deviation to a state. Speed is clamped at zero and the heading
/// wrapped into (-pi, pi].
AgentState Perturb(const AgentState& state, const StateDeviation& deviation);

struct UncertaintySpec {
  Mat4 sigma{};
  std::vector<double> contour_levels = {0.2, 0.4, 0.6, 0.8, 0.95, 0.999};
  int n_phi = 6;

  /// Throws ValidationError unless sigma is symmetric PSD, the levels are
  /// strictly increasing in (0, 1) and n_phi >= 2.
  void Validate() const;
};

struct EigenBasis {
  Vec4 eigenvalues{};  // descending, >= 0
  Mat4 vectors{};      // columns are the eigenvectors

  bool IsZero() const { return eigenvalues[0] <= 0.0; }
};

/// CDF of the chi-square distribution with four degrees of freedom.
double Chi2Cdf4(double x);

/// Inverse of Chi2Cdf4 for p in [0, 1).
double Chi2Quantile4(double p);

/// Cyclic Jacobi eigendecomposition of a symmetric 4x4 matrix. Eigenvalues are
/// sorted in descending order; each eigenvector has its largest-magnitude
/// entry positive.
EigenBasis Eigendecompose(const Mat4& sigma);

/// Point on the level-p_k hyper-ellipsoid in hyperspherical angles, rotated
/// back into state coordinates.
StateDeviation ContourDeviation(const EigenBasis& basis, double p_k, double phi1,
                                double phi2, double phi3);

/// All n_phi^3 angular grid points on one contour, lexicographic in
/// (phi1, phi2, phi3).
std::vector<StateDeviation> SampleContour(const EigenBasis& basis, double p_k, int n_phi);

/// One draw from N(0, sigma).
StateDeviation DrawNoise(const EigenBasis& basis, Rng& rng);
StateDeviation DrawNoise(const Mat4& sigma, Rng& rng);

}  // namespace riskenv

#endif  // RISKENV_UNCERTAINTY_HPP_

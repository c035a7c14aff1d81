#ifndef RISKENV_RSS_HPP_
#define RISKENV_RSS_HPP_

#include <array>
#include <span>
#include <stdexcept>
#include <string>

namespace riskenv {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Wraps an angle into (-pi, pi].
double WrapAngle(double theta);

/// Kinematic state of one vehicle in the road-aligned frame. x points along the
/// road, y to the left; theta = 0 is the driving direction.
struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;

  double LonSpeed() const;
  double LatSpeed() const;

  bool operator==(const AgentState&) const = default;
};

struct VehicleGeometry {
  double length = 4.7;
  double width = 1.8;
};

/// Physical acceleration capabilities of the ego. These also define the
/// unrestricted envelope.
struct PhysicalLimits {
  double lon_accel = 8.0;
  double lon_brake = 8.0;
  double lat_accel = 4.0;
};

struct RssParams {
  double rho = 0.1;
  double a_max_accel_lon = 2.0;
  double b_min_brake_lon = 6.0;
  double b_max_brake_lon = 8.0;
  double a_max_accel_lat = 0.2;
  double b_min_brake_lat = 4.0;
  double mu_lat = 0.1;

  /// Throws ParameterError on non-positive rates or b_min > b_max.
  void Validate() const;
};

/// Everything the envelope function needs besides the states.
struct RssConfig {
  RssParams params;
  VehicleGeometry geometry;
  PhysicalLimits limits;
  double tau = 0.2;

  void Validate() const;
};

enum class EnvelopeComponent { kLonMin = 0, kLonMax = 1, kLatMin = 2, kLatMax = 3 };

inline constexpr std::array<EnvelopeComponent, 4> kEnvelopeComponents = {
    EnvelopeComponent::kLonMin, EnvelopeComponent::kLonMax,
    EnvelopeComponent::kLatMin, EnvelopeComponent::kLatMax};

const char* ComponentName(EnvelopeComponent c);

/// Acceleration limits in the road frame (m/s^2). Lateral is positive to the
/// left.
struct Envelope {
  double a_lon_min = 0.0;
  double a_lon_max = 0.0;
  double a_lat_min = 0.0;
  double a_lat_max = 0.0;

  static Envelope Unrestricted(const PhysicalLimits& limits);
  /// The most restrictive value the envelope function can produce in each
  /// component. The lateral interval of this sentinel is empty.
  static Envelope MostRestrictive(const PhysicalLimits& limits);

  double Get(EnvelopeComponent c) const;
  void Set(EnvelopeComponent c, double value);

  bool Feasible() const { return a_lon_min <= a_lon_max && a_lat_min <= a_lat_max; }

  /// Clamp into [min, max]. An empty interval (min > max) maps to its midpoint.
  double ClampLon(double a_lon) const;
  double ClampLat(double a_lat) const;
  bool Contains(double a_lon, double a_lat, double tol = 1e-9) const;

  bool operator==(const Envelope&) const = default;
};

// Restrictiveness order. Upper bounds are more restrictive when smaller, lower
// bounds when larger. RestrictivenessKey maps both onto "smaller key = more
// restrictive".
bool IsUpperBound(EnvelopeComponent c);
double RestrictivenessKey(EnvelopeComponent c, double value);
double ValueFromKey(EnvelopeComponent c, double key);
bool MoreRestrictive(EnvelopeComponent c, double a, double b);

/// Component-wise most restrictive of the two.
Envelope WorstOf(const Envelope& a, const Envelope& b);

/// True if any component of `applied` is strictly less restrictive than the
/// same component of `reference`.
bool LessRestrictiveThan(const Envelope& applied, const Envelope& reference,
                         double tol = 0.0);

/// Minimum longitudinal gap the rear vehicle must keep, clamped at zero.
double SafeDistanceLon(double v_rear, double v_front, const RssParams& params);

/// Minimum lateral gap. Velocities are lateral speeds of each vehicle toward
/// the other; negative means moving apart.
double SafeDistanceLat(double v1_toward, double v2_toward, const RssParams& params);

/// Edge-to-edge gaps of an ordered pair (ego, other) with axis-aligned boxes.
struct PairGeometry {
  double lon_gap = 0.0;
  double lat_gap = 0.0;
  bool ego_is_rear = true;
  bool other_on_left = true;
};

PairGeometry MeasurePair(const AgentState& ego, const AgentState& other,
                         const VehicleGeometry& geometry);

bool BoxesOverlap(const AgentState& a, const AgentState& b,
                  const VehicleGeometry& geometry);

/// Both the longitudinal and the lateral safe distance are violated.
bool PairDangerous(const AgentState& ego, const AgentState& other,
                   const RssConfig& config);

/// Most permissive acceleration limits that keep the pair non-dangerous after
/// the ego applies any acceleration within them for config.tau seconds.
Envelope PairwiseEnvelope(const AgentState& ego, const AgentState& other,
                          const RssConfig& config);

/// Star-shaped combination over all other agents.
Envelope ComputeEnvelope(const AgentState& ego, std::span<const AgentState> others,
                         const RssConfig& config);

/// Returns true (violation) iff some pair is dangerous.
bool SafetyViolated(const AgentState& ego, std::span<const AgentState> others,
                    const RssConfig& config);

}  // namespace riskenv

#endif  // RISKENV_RSS_HPP_

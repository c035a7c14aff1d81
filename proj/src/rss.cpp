#include "riskenv/rss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace riskenv {

namespace {

// Distance covered from speed v under constant acceleration a for t seconds,
// stopping at zero speed instead of reversing.
double Travel(double v, double a, double t) {
  if (a < 0.0 && v + a * t < 0.0) return v * v / (-2.0 * a);
  return v * t + 0.5 * a * t * t;
}

double SpeedAfter(double v, double a, double t) { return std::max(0.0, v + a * t); }

double LonDistance(double v_rear, double v_front, const RssParams& p) {
  const double v_resp = v_rear + p.rho * p.a_max_accel_lon;
  const double d = v_rear * p.rho + 0.5 * p.a_max_accel_lon * p.rho * p.rho +
                   v_resp * v_resp / (2.0 * p.b_min_brake_lon) -
                   v_front * v_front / (2.0 * p.b_max_brake_lon);
  return std::max(0.0, d);
}

double LatDistance(double v1_toward, double v2_toward, const RssParams& p) {
  auto approach = [&](double v) {
    const double u = std::max(0.0, v + p.rho * p.a_max_accel_lat);
    return u * p.rho + u * u / (2.0 * p.b_min_brake_lat);
  };
  return p.mu_lat + approach(v1_toward) + approach(v2_toward);
}

// Largest a in [lo, hi] with margin(a) >= 0 for a margin that is
// non-increasing in a. Caller guarantees margin(lo) >= 0 > margin(hi).
template <typename Margin>
double SolveUpperLimit(Margin&& margin, double lo, double hi) {
  for (int i = 0; i < 60 && hi - lo > 1e-9; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (margin(mid) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

void RequirePositive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ParameterError(fmt::format("{} must be positive, got {}", name, value));
  }
}

void RequireNonNegative(double value, const char* name) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw ParameterError(fmt::format("{} must be non-negative, got {}", name, value));
  }
}

}  // namespace

double WrapAngle(double theta) {
  constexpr double kPi = std::numbers::pi;
  double wrapped = std::remainder(theta, 2.0 * kPi);
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

double AgentState::LonSpeed() const { return v * std::cos(theta); }
double AgentState::LatSpeed() const { return v * std::sin(theta); }

void RssParams::Validate() const {
  RequirePositive(rho, "rho");
  RequireNonNegative(a_max_accel_lon, "a_max_accel_lon");
  RequirePositive(b_min_brake_lon, "b_min_brake_lon");
  RequirePositive(b_max_brake_lon, "b_max_brake_lon");
  RequireNonNegative(a_max_accel_lat, "a_max_accel_lat");
  RequirePositive(b_min_brake_lat, "b_min_brake_lat");
  RequireNonNegative(mu_lat, "mu_lat");
  if (b_min_brake_lon > b_max_brake_lon) {
    throw ParameterError(fmt::format("b_min_brake_lon ({}) exceeds b_max_brake_lon ({})",
                                     b_min_brake_lon, b_max_brake_lon));
  }
}

void RssConfig::Validate() const {
  params.Validate();
  RequirePositive(geometry.length, "geometry.length");
  RequirePositive(geometry.width, "geometry.width");
  RequirePositive(limits.lon_accel, "limits.lon_accel");
  RequirePositive(limits.lon_brake, "limits.lon_brake");
  RequirePositive(limits.lat_accel, "limits.lat_accel");
  RequirePositive(tau, "tau");
}

const char* ComponentName(EnvelopeComponent c) {
  switch (c) {
    case EnvelopeComponent::kLonMin: return "a_lon_min";
    case EnvelopeComponent::kLonMax: return "a_lon_max";
    case EnvelopeComponent::kLatMin: return "a_lat_min";
    case EnvelopeComponent::kLatMax: return "a_lat_max";
  }
  return "?";
}

Envelope Envelope::Unrestricted(const PhysicalLimits& limits) {
  return {-limits.lon_brake, limits.lon_accel, -limits.lat_accel, limits.lat_accel};
}

Envelope Envelope::MostRestrictive(const PhysicalLimits& limits) {
  // The lower longitudinal bound is never raised by the envelope function, so
  // full braking capability is its most restrictive reachable value.
  return {-limits.lon_brake, -limits.lon_brake, limits.lat_accel, -limits.lat_accel};
}

double Envelope::Get(EnvelopeComponent c) const {
  switch (c) {
    case EnvelopeComponent::kLonMin: return a_lon_min;
    case EnvelopeComponent::kLonMax: return a_lon_max;
    case EnvelopeComponent::kLatMin: return a_lat_min;
    case EnvelopeComponent::kLatMax: return a_lat_max;
  }
  return 0.0;
}

void Envelope::Set(EnvelopeComponent c, double value) {
  switch (c) {
    case EnvelopeComponent::kLonMin: a_lon_min = value; break;
    case EnvelopeComponent::kLonMax: a_lon_max = value; break;
    case EnvelopeComponent::kLatMin: a_lat_min = value; break;
    case EnvelopeComponent::kLatMax: a_lat_max = value; break;
  }
}

static double ClampInterval(double a, double lo, double hi) {
  if (lo > hi) return 0.5 * (lo + hi);
  return std::clamp(a, lo, hi);
}

double Envelope::ClampLon(double a_lon) const { return ClampInterval(a_lon, a_lon_min, a_lon_max); }
double Envelope::ClampLat(double a_lat) const { return ClampInterval(a_lat, a_lat_min, a_lat_max); }

bool Envelope::Contains(double a_lon, double a_lat, double tol) const {
  return a_lon >= a_lon_min - tol && a_lon <= a_lon_max + tol &&
         a_lat >= a_lat_min - tol && a_lat <= a_lat_max + tol;
}

bool IsUpperBound(EnvelopeComponent c) {
  return c == EnvelopeComponent::kLonMax || c == EnvelopeComponent::kLatMax;
}

double RestrictivenessKey(EnvelopeComponent c, double value) {
  return IsUpperBound(c) ? value : -value;
}

double ValueFromKey(EnvelopeComponent c, double key) {
  return IsUpperBound(c) ? key : -key;
}

bool MoreRestrictive(EnvelopeComponent c, double a, double b) {
  return RestrictivenessKey(c, a) < RestrictivenessKey(c, b);
}

Envelope WorstOf(const Envelope& a, const Envelope& b) {
  return {std::max(a.a_lon_min, b.a_lon_min), std::min(a.a_lon_max, b.a_lon_max),
          std::max(a.a_lat_min, b.a_lat_min), std::min(a.a_lat_max, b.a_lat_max)};
}

bool LessRestrictiveThan(const Envelope& applied, const Envelope& reference, double tol) {
  for (auto c : kEnvelopeComponents) {
    if (RestrictivenessKey(c, applied.Get(c)) > RestrictivenessKey(c, reference.Get(c)) + tol) {
      return true;
    }
  }
  return false;
}

double SafeDistanceLon(double v_rear, double v_front, const RssParams& p) {
  p.Validate();
  return LonDistance(v_rear, v_front, p);
}

double SafeDistanceLat(double v1_toward, double v2_toward, const RssParams& p) {
  p.Validate();
  return LatDistance(v1_toward, v2_toward, p);
}

PairGeometry MeasurePair(const AgentState& ego, const AgentState& other,
                         const VehicleGeometry& geometry) {
  PairGeometry g;
  const double dx = other.x - ego.x;
  const double dy = other.y - ego.y;
  g.ego_is_rear = dx >= 0.0;
  g.other_on_left = dy >= 0.0;
  g.lon_gap = std::abs(dx) - geometry.length;
  g.lat_gap = std::abs(dy) - geometry.width;
  return g;
}

bool BoxesOverlap(const AgentState& a, const AgentState& b, const VehicleGeometry& geometry) {
  return std::abs(a.x - b.x) < geometry.length && std::abs(a.y - b.y) < geometry.width;
}

namespace {

// Longitudinal and lateral quantities of one (ego, other) pair, with margins
// evaluated tau seconds ahead under the worst-case behavior of the other
// vehicle.
struct PairAnalysis {
  const RssConfig& cfg;
  PairGeometry geo;
  double ego_lon_v;
  double other_lon_v;
  double ego_lat_toward;
  double other_lat_toward;

  PairAnalysis(const AgentState& ego, const AgentState& other, const RssConfig& config)
      : cfg(config), geo(MeasurePair(ego, other, config.geometry)) {
    ego_lon_v = std::max(0.0, ego.LonSpeed());
    other_lon_v = std::max(0.0, other.LonSpeed());
    const double side = geo.other_on_left ? 1.0 : -1.0;
    ego_lat_toward = side * ego.LatSpeed();
    other_lat_toward = -side * other.LatSpeed();
  }

  double LonSafeDistanceNow() const {
    return geo.ego_is_rear ? LonDistance(ego_lon_v, other_lon_v, cfg.params)
                           : LonDistance(other_lon_v, ego_lon_v, cfg.params);
  }

  double LatSafeDistanceNow() const {
    return LatDistance(ego_lat_toward, other_lat_toward, cfg.params);
  }

  // Ego applies a_lon for tau. A front other brakes at b_max, a rear other
  // accelerates at a_max.
  double LonMarginAfter(double a_lon) const {
    const RssParams& p = cfg.params;
    const double t = cfg.tau;
    const double ego_s = Travel(ego_lon_v, a_lon, t);
    const double ego_v = SpeedAfter(ego_lon_v, a_lon, t);
    if (geo.ego_is_rear) {
      const double other_s = Travel(other_lon_v, -p.b_max_brake_lon, t);
      const double other_v = SpeedAfter(other_lon_v, -p.b_max_brake_lon, t);
      return geo.lon_gap - ego_s + other_s - LonDistance(ego_v, other_v, p);
    }
    const double other_s = Travel(other_lon_v, p.a_max_accel_lon, t);
    const double other_v = SpeedAfter(other_lon_v, p.a_max_accel_lon, t);
    return geo.lon_gap + ego_s - other_s - LonDistance(other_v, ego_v, p);
  }

  // Ego applies a_toward (toward the other) for tau; the other accelerates
  // toward the ego at a_max_accel_lat.
  double LatMarginAfter(double a_toward) const {
    const RssParams& p = cfg.params;
    const double t = cfg.tau;
    const double ego_s = ego_lat_toward * t + 0.5 * a_toward * t * t;
    const double other_s = other_lat_toward * t + 0.5 * p.a_max_accel_lat * t * t;
    return geo.lat_gap - ego_s - other_s -
           LatDistance(ego_lat_toward + a_toward * t,
                           other_lat_toward + p.a_max_accel_lat * t, p);
  }

  // Largest ego acceleration toward the other vehicle that keeps the lateral
  // distance safe after tau; the strongest acceleration away if none does.
  double LatLimitToward() const {
    const double hi = cfg.limits.lat_accel;
    const double lo = -cfg.limits.lat_accel;
    if (LatMarginAfter(hi) >= 0.0) return hi;
    if (LatMarginAfter(lo) < 0.0) return lo;
    return SolveUpperLimit([this](double a) { return LatMarginAfter(a); }, lo, hi);
  }

  // Only meaningful with the ego as rear vehicle.
  double LonUpperLimit() const {
    const double hi = cfg.limits.lon_accel;
    const double lo = -cfg.limits.lon_brake;
    if (LonMarginAfter(hi) >= 0.0) return hi;
    if (LonMarginAfter(lo) < 0.0) return lo;
    return SolveUpperLimit([this](double a) { return LonMarginAfter(a); }, lo, hi);
  }

  void RestrictLat(Envelope& e) const {
    const double limit = LatLimitToward();
    if (geo.other_on_left) {
      e.a_lat_max = std::min(e.a_lat_max, limit);
    } else {
      e.a_lat_min = std::max(e.a_lat_min, -limit);
    }
  }

  void RestrictLon(Envelope& e) const {
    if (geo.ego_is_rear) e.a_lon_max = std::min(e.a_lon_max, LonUpperLimit());
  }
};

}  // namespace

bool PairDangerous(const AgentState& ego, const AgentState& other, const RssConfig& config) {
  const PairAnalysis pair(ego, other, config);
  return pair.geo.lon_gap < pair.LonSafeDistanceNow() &&
         pair.geo.lat_gap < pair.LatSafeDistanceNow();
}

Envelope PairwiseEnvelope(const AgentState& ego, const AgentState& other,
                          const RssConfig& config) {
  config.params.Validate();
  const PairAnalysis pair(ego, other, config);
  Envelope e = Envelope::Unrestricted(config.limits);

  // Worst-case ego action for each direction.
  const bool lon_safe_any = pair.geo.ego_is_rear
                                ? pair.LonMarginAfter(config.limits.lon_accel) >= 0.0
                                : pair.LonMarginAfter(-config.limits.lon_brake) >= 0.0;
  if (lon_safe_any) return e;
  if (pair.LatMarginAfter(config.limits.lat_accel) >= 0.0) return e;

  const bool lon_safe = pair.geo.lon_gap >= pair.LonSafeDistanceNow();
  const bool lat_safe = pair.geo.lat_gap >= pair.LatSafeDistanceNow();

  if (lat_safe && !lon_safe) {
    pair.RestrictLat(e);
  } else if (lon_safe && !lat_safe) {
    // With the ego in front, longitudinal responsibility lies with the rear
    // vehicle.
    pair.RestrictLon(e);
  } else if (lon_safe && lat_safe) {
    if (pair.geo.ego_is_rear && pair.LonMarginAfter(-config.limits.lon_brake) >= 0.0) {
      pair.RestrictLon(e);
    } else {
      pair.RestrictLat(e);
    }
  } else {
    pair.RestrictLon(e);
    pair.RestrictLat(e);
  }
  return e;
}

Envelope ComputeEnvelope(const AgentState& ego, std::span<const AgentState> others,
                         const RssConfig& config) {
  Envelope e = Envelope::Unrestricted(config.limits);
  for (const auto& other : others) e = WorstOf(e, PairwiseEnvelope(ego, other, config));
  return e;
}

bool SafetyViolated(const AgentState& ego, std::span<const AgentState> others,
                    const RssConfig& config) {
  return std::any_of(others.begin(), others.end(), [&](const AgentState& other) {
    return PairDangerous(ego, other, config);
  });
}

}  // namespace riskenv

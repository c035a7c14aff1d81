#ifndef RISKENV_HIGHWAY_SIM_HPP_
#define RISKENV_HIGHWAY_SIM_HPP_

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskenv/rss.hpp"
#include "riskenv/uncertainty.hpp"

namespace riskenv {

struct IdmParams {
  double v0 = 17.0;  // scenarios override this with each vehicle's initial speed
  double T = 1.5;
  double a = 1.5;
  double b = 2.0;
  double s0 = 2.0;
  double delta = 4.0;

  void Validate() const;
};

/// IDM acceleration behind a leader at edge-to-edge distance `gap` (use
/// infinity when there is none), clamped to [-max_brake, a]. A non-positive gap
/// is an emergency and returns -max_brake.
double IdmAccel(double v, double gap, double lead_v, const IdmParams& params,
                double max_brake);

/// Two-lane straight road. Lane 0 (right) is centered on y = 0, lane 1 on
/// y = lane_width.
struct Road {
  double lane_width = 3.5;
  int lane_count = 2;

  double LaneCenter(int lane) const { return lane * lane_width; }
};

/// Axis-aligned goal rectangle plus admissible speed and heading.
struct GoalRegion {
  double x_min = 60.0;
  double x_max = 400.0;
  double y_min = 1.75;
  double y_max = 5.25;
  double v_min = 10.0;
  double v_max = 25.0;
  double max_abs_theta = 0.15;

  bool Contains(const AgentState& s) const;
};

struct LaneChangeController {
  int target_lane = 1;
  double kp_lat = 0.8;
  double kd_lat = 1.6;
};

struct SimParams {
  double dt = 0.2;
  double horizon = 8.0;
  Road road;
  RssConfig rss;
  LaneChangeController controller;
  GoalRegion goal;  // relative to the ego's initial x
  IdmParams ego_idm;
  IdmParams traffic_idm;
  // Hardest braking other vehicles can do; the ego may brake at
  // rss.limits.lon_brake.
  double traffic_max_brake = 8.0;
  // Traffic follows a vehicle once any part of it enters the lane; otherwise
  // only once its center has crossed the lane boundary.
  bool traffic_sees_intrusion = true;

  void Validate() const;
  int MaxSteps() const;
};

struct Vehicle {
  AgentState state;
  int lane = 0;
  IdmParams idm;
};

struct WorldState {
  int step = 0;
  double time = 0.0;  // step * dt
  AgentState ego;
  IdmParams ego_idm;
  std::vector<Vehicle> others;
  GoalRegion goal;

  std::vector<AgentState> OtherStates() const;
};

struct ObservedWorld {
  AgentState ego;
  std::vector<AgentState> others;
};

/// The ego is copied exactly; each other agent gets a fresh noise draw.
ObservedWorld Observe(const WorldState& world, const EigenBasis& basis, Rng& rng);

struct TrajectoryStep {
  double a_lon = 0.0;
  double a_lat = 0.0;
  AgentState next;
};

/// Exact integration of piecewise-constant road-frame accelerations. The
/// longitudinal speed stops at zero; heading follows the velocity vector.
AgentState IntegrateKinematics(const AgentState& s, double a_lon, double a_lat, double dt);

struct LeaderInfo {
  double gap = std::numeric_limits<double>::infinity();
  double speed = 0.0;
};

/// Half-width of the band around a lane center in which any part of a
/// vehicle box overlaps the lane.
double IntrusionCorridor(const Road& road, const VehicleGeometry& geometry);

/// Nearest vehicle ahead of `x` whose center lies strictly within
/// `corridor_half_width` of `lane_y`; returns the edge gap (infinity if none)
/// and its longitudinal speed.
LeaderInfo FindLeader(double x, double lane_y, std::span<const AgentState> candidates,
                      double corridor_half_width, double vehicle_length);

TrajectoryStep NominalLaneChange(const ObservedWorld& obs, const IdmParams& ego_idm,
                                 const Envelope& envelope, const SimParams& params);

TrajectoryStep SafetyManeuver(const ObservedWorld& obs, const SimParams& params);

enum class Outcome { kSuccess, kCollision, kTimeout };
const char* OutcomeName(Outcome o);

/// Collision before success before timeout. Empty while the episode goes on.
std::optional<Outcome> ClassifyOutcome(const WorldState& world, double elapsed,
                                       const SimParams& params);

enum class PolicyMode { kNominal, kSafety };

struct PolicyDecision {
  double a_lon = 0.0;
  double a_lat = 0.0;
  PolicyMode mode = PolicyMode::kNominal;
  std::optional<Envelope> envelope;  // set when accelerations were restricted
};

/// Decides the ego's accelerations from one observation. Implementations keep
/// their own latch state.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyDecision Decide(const ObservedWorld& obs, const IdmParams& ego_idm) = 0;
};

struct StepRecord {
  double t = 0.0;  // time at which the decision was made
  AgentState ego;
  ObservedWorld observation;
  PolicyDecision decision;
  bool collision = false;
  bool goal_reached = false;
  // Applied envelope less restrictive than the envelope of the true state.
  std::optional<bool> envelope_violated;
};

/// Advances one dt: observe, decide, move the ego exactly as commanded and the
/// others by IDM on their true states.
StepRecord Step(WorldState& world, Policy& policy, const EigenBasis& basis, Rng& observer_rng,
                const SimParams& params);

struct EpisodeResult {
  Outcome outcome = Outcome::kTimeout;
  int steps = 0;
  int envelope_checks = 0;
  int envelope_violations = 0;
};

using StepObserver = std::function<void(const StepRecord&)>;

EpisodeResult RunEpisode(WorldState world, Policy& policy, const EigenBasis& basis,
                         Rng& observer_rng, const SimParams& params,
                         const StepObserver& on_step = {});

}  // namespace riskenv

#endif  // RISKENV_HIGHWAY_SIM_HPP_

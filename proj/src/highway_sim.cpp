#include "riskenv/highway_sim.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace riskenv {

void IdmParams::Validate() const {
  for (auto [value, name] : {std::pair{v0, "v0"}, {T, "T"}, {a, "a"}, {b, "b"}, {s0, "s0"},
                             {delta, "delta"}}) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ParameterError(fmt::format("idm.{} must be positive, got {}", name, value));
    }
  }
}

double IdmAccel(double v, double gap, double lead_v, const IdmParams& p, double max_brake) {
  if (gap <= 0.0) return -max_brake;
  const double free_road = 1.0 - std::pow(v / p.v0, p.delta);
  double accel = p.a * free_road;
  if (std::isfinite(gap)) {
    const double dynamic = v * p.T + v * (v - lead_v) / (2.0 * std::sqrt(p.a * p.b));
    const double desired_gap = p.s0 + std::max(0.0, dynamic);
    const double ratio = desired_gap / gap;
    accel -= p.a * ratio * ratio;
  }
  return std::clamp(accel, -max_brake, p.a);
}

bool GoalRegion::Contains(const AgentState& s) const {
  return s.x >= x_min && s.x <= x_max && s.y >= y_min && s.y <= y_max && s.v >= v_min &&
         s.v <= v_max && std::abs(s.theta) <= max_abs_theta;
}

void SimParams::Validate() const {
  if (!(dt > 0.0)) throw ParameterError(fmt::format("dt must be positive, got {}", dt));
  if (!(horizon >= dt)) throw ParameterError("horizon must be at least one step");
  if (road.lane_count != 2) throw ParameterError("only two-lane roads are supported");
  if (!(road.lane_width > 0.0)) throw ParameterError("lane_width must be positive");
  if (controller.target_lane < 0 || controller.target_lane >= road.lane_count) {
    throw ParameterError(fmt::format("target_lane {} out of range", controller.target_lane));
  }
  if (!(traffic_max_brake > 0.0)) throw ParameterError("traffic_max_brake must be positive");
  rss.Validate();
  ego_idm.Validate();
  traffic_idm.Validate();
}

int SimParams::MaxSteps() const { return static_cast<int>(std::lround(horizon / dt)); }

std::vector<AgentState> WorldState::OtherStates() const {
  std::vector<AgentState> out;
  out.reserve(others.size());
  for (const auto& o : others) out.push_back(o.state);
  return out;
}

ObservedWorld Observe(const WorldState& world, const EigenBasis& basis, Rng& rng) {
  ObservedWorld obs;
  obs.ego = world.ego;
  obs.others.reserve(world.others.size());
  for (const auto& o : world.others) obs.others.push_back(Perturb(o.state, DrawNoise(basis, rng)));
  return obs;
}

AgentState IntegrateKinematics(const AgentState& s, double a_lon, double a_lat, double dt) {
  const double v_lon = std::max(0.0, s.LonSpeed());
  const double v_lat = s.LatSpeed();
  AgentState out = s;
  double v_lon_next = v_lon + a_lon * dt;
  if (v_lon_next < 0.0) {
    out.x += v_lon * v_lon / (-2.0 * a_lon);
    v_lon_next = 0.0;
  } else {
    out.x += v_lon * dt + 0.5 * a_lon * dt * dt;
  }
  const double v_lat_next = v_lat + a_lat * dt;
  out.y += v_lat * dt + 0.5 * a_lat * dt * dt;
  out.v = std::hypot(v_lon_next, v_lat_next);
  out.theta = out.v > 0.0 ? std::atan2(v_lat_next, v_lon_next) : 0.0;
  return out;
}

double IntrusionCorridor(const Road& road, const VehicleGeometry& geometry) {
  return 0.5 * (road.lane_width + geometry.width);
}

LeaderInfo FindLeader(double x, double lane_y, std::span<const AgentState> candidates,
                      double corridor_half_width, double vehicle_length) {
  LeaderInfo leader;
  for (const auto& c : candidates) {
    if (c.x <= x || std::abs(c.y - lane_y) >= corridor_half_width) continue;
    const double gap = c.x - x - vehicle_length;
    if (gap < leader.gap) {
      leader.gap = gap;
      leader.speed = std::max(0.0, c.LonSpeed());
    }
  }
  return leader;
}

namespace {

int NearestLane(double y, const Road& road) {
  const int lane = static_cast<int>(std::lround(y / road.lane_width));
  return std::clamp(lane, 0, road.lane_count - 1);
}

double LateralTracking(const AgentState& ego, double y_target, const LaneChangeController& c) {
  return c.kp_lat * (y_target - ego.y) - c.kd_lat * ego.LatSpeed();
}

}  // namespace

TrajectoryStep NominalLaneChange(const ObservedWorld& obs, const IdmParams& ego_idm,
                                 const Envelope& envelope, const SimParams& params) {
  const auto& road = params.road;
  const auto& limits = params.rss.limits;
  const auto& geometry = params.rss.geometry;
  const AgentState& ego = obs.ego;

  const int current = NearestLane(ego.y, road);
  const int target = params.controller.target_lane;
  const double corridor = IntrusionCorridor(road, geometry);
  LeaderInfo leader =
      FindLeader(ego.x, road.LaneCenter(current), obs.others, corridor, geometry.length);
  if (target != current) {
    const LeaderInfo other_lane =
        FindLeader(ego.x, road.LaneCenter(target), obs.others, corridor, geometry.length);
    if (other_lane.gap < leader.gap) leader = other_lane;
  }

  double a_lon = IdmAccel(std::max(0.0, ego.LonSpeed()), leader.gap, leader.speed, ego_idm,
                          limits.lon_brake);
  double a_lat = LateralTracking(ego, road.LaneCenter(target), params.controller);
  a_lon = envelope.ClampLon(std::clamp(a_lon, -limits.lon_brake, limits.lon_accel));
  a_lat = envelope.ClampLat(std::clamp(a_lat, -limits.lat_accel, limits.lat_accel));
  return {a_lon, a_lat, IntegrateKinematics(ego, a_lon, a_lat, params.dt)};
}

TrajectoryStep SafetyManeuver(const ObservedWorld& obs, const SimParams& params) {
  const auto& limits = params.rss.limits;
  const AgentState& ego = obs.ego;
  const double a_lon = ego.LonSpeed() > 0.0 ? -limits.lon_brake : 0.0;
  const double a_lat = std::clamp(LateralTracking(ego, params.road.LaneCenter(0), params.controller),
                                  -limits.lat_accel, limits.lat_accel);
  return {a_lon, a_lat, IntegrateKinematics(ego, a_lon, a_lat, params.dt)};
}

const char* OutcomeName(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "Success";
    case Outcome::kCollision: return "Collision";
    case Outcome::kTimeout: return "Timeout";
  }
  return "?";
}

std::optional<Outcome> ClassifyOutcome(const WorldState& world, double elapsed,
                                       const SimParams& params) {
  for (const auto& o : world.others) {
    if (BoxesOverlap(world.ego, o.state, params.rss.geometry)) return Outcome::kCollision;
  }
  if (world.goal.Contains(world.ego)) return Outcome::kSuccess;
  if (elapsed >= params.horizon - 1e-9) return Outcome::kTimeout;
  return std::nullopt;
}

StepRecord Step(WorldState& world, Policy& policy, const EigenBasis& basis, Rng& observer_rng,
                const SimParams& params) {
  StepRecord record;
  record.t = world.time;
  record.ego = world.ego;
  record.observation = Observe(world, basis, observer_rng);
  record.decision = policy.Decide(record.observation, world.ego_idm);

  const std::vector<AgentState> truth = world.OtherStates();
  if (record.decision.envelope) {
    const Envelope true_envelope = ComputeEnvelope(world.ego, truth, params.rss);
    record.envelope_violated = LessRestrictiveThan(*record.decision.envelope, true_envelope, 1e-9);
  }

  // Traffic reacts to the true states at the start of the step, ego included.
  const double traffic_corridor = params.traffic_sees_intrusion
                                      ? IntrusionCorridor(params.road, params.rss.geometry)
                                      : 0.5 * params.road.lane_width;
  std::vector<AgentState> everyone = truth;
  everyone.push_back(world.ego);
  std::vector<AgentState> next_others;
  next_others.reserve(world.others.size());
  for (std::size_t j = 0; j < world.others.size(); ++j) {
    const Vehicle& vehicle = world.others[j];
    std::vector<AgentState> candidates;
    candidates.reserve(everyone.size() - 1);
    for (std::size_t k = 0; k < everyone.size(); ++k) {
      if (k != j) candidates.push_back(everyone[k]);
    }
    const LeaderInfo leader =
        FindLeader(vehicle.state.x, params.road.LaneCenter(vehicle.lane), candidates,
                   traffic_corridor, params.rss.geometry.length);
    const double accel = IdmAccel(std::max(0.0, vehicle.state.LonSpeed()), leader.gap,
                                  leader.speed, vehicle.idm, params.traffic_max_brake);
    next_others.push_back(IntegrateKinematics(vehicle.state, accel, 0.0, params.dt));
  }

  world.ego = IntegrateKinematics(world.ego, record.decision.a_lon, record.decision.a_lat,
                                  params.dt);
  for (std::size_t j = 0; j < world.others.size(); ++j) world.others[j].state = next_others[j];
  world.step += 1;
  world.time = world.step * params.dt;

  for (const auto& o : world.others) {
    if (BoxesOverlap(world.ego, o.state, params.rss.geometry)) record.collision = true;
  }
  record.goal_reached = world.goal.Contains(world.ego);
  return record;
}

EpisodeResult RunEpisode(WorldState world, Policy& policy, const EigenBasis& basis,
                         Rng& observer_rng, const SimParams& params, const StepObserver& on_step) {
  EpisodeResult result;
  const int max_steps = params.MaxSteps();
  for (int k = 0; k < max_steps; ++k) {
    const StepRecord record = Step(world, policy, basis, observer_rng, params);
    ++result.steps;
    if (record.envelope_violated) {
      ++result.envelope_checks;
      if (*record.envelope_violated) ++result.envelope_violations;
    }
    if (on_step) on_step(record);
    if (auto outcome = ClassifyOutcome(world, world.time, params)) {
      result.outcome = *outcome;
      return result;
    }
  }
  result.outcome = Outcome::kTimeout;
  return result;
}

}  // namespace riskenv

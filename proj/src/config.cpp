#include "riskenv/config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

namespace riskenv {

using json = Json;

namespace {

std::string Child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string Index(const std::string& path, std::size_t i) { return fmt::format("{}[{}]", path, i); }

// Walks one JSON object, remembering which keys were consumed so that the
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) {
      throw ConfigError(fmt::format("{}: expected an object", path_.empty() ? "<root>" : path_));
    }
  }

  const json* Find(const std::string& key) {
    seen_.insert(key);
    auto it = value_.find(key);
    return it == value_.end() ? nullptr : &*it;
  }

  void Number(const std::string& key, double& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number()) throw ConfigError(fmt::format("{}: expected a number", Child(path_, key)));
      out = v->get<double>();
    }
  }

  template <typename Int>
  void Integer(const std::string& key, Int& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer()) {
        throw ConfigError(fmt::format("{}: expected an integer", Child(path_, key)));
      }
      if (v->is_number_unsigned()) {
        out = static_cast<Int>(v->get<std::uint64_t>());
      } else {
        const auto i = v->get<std::int64_t>();
        if (std::is_unsigned_v<Int> && i < 0) {
          throw ConfigError(fmt::format("{}: expected a non-negative integer", Child(path_, key)));
        }
        out = static_cast<Int>(i);
      }
    }
  }

  void Boolean(const std::string& key, bool& out) {
    if (const json* v = Find(key)) {
      if (!v->is_boolean()) throw ConfigError(fmt::format("{}: expected true or false", Child(path_, key)));
      out = v->get<bool>();
    }
  }

  void String(const std::string& key, std::string& out) {
    if (const json* v = Find(key)) {
      if (!v->is_string()) throw ConfigError(fmt::format("{}: expected a string", Child(path_, key)));
      out = v->get<std::string>();
    }
  }

  void NumberList(const std::string& key, std::vector<double>& out) {
    if (const json* v = Find(key)) {
      const std::string p = Child(path_, key);
      if (!v->is_array()) throw ConfigError(fmt::format("{}: expected an array of numbers", p));
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(fmt::format("{}: expected a number", Index(p, i)));
        out.push_back((*v)[i].get<double>());
      }
    }
  }

  std::string PathOf(const std::string& key) const { return Child(path_, key); }

  void Finish() const {
    for (auto it = value_.begin(); it != value_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(fmt::format("{}: unknown key", Child(path_, it.key())));
      }
    }
  }

 private:
  const json& value_;
  std::string path_;
  std::set<std::string> seen_;
};

void ReadRss(const json& value, const std::string& path, RssConfig& rss) {
  ObjectReader r(value, path);
  r.Number("rho", rss.params.rho);
  r.Number("a_max_accel_lon", rss.params.a_max_accel_lon);
  r.Number("b_min_brake_lon", rss.params.b_min_brake_lon);
  r.Number("b_max_brake_lon", rss.params.b_max_brake_lon);
  r.Number("a_max_accel_lat", rss.params.a_max_accel_lat);
  r.Number("b_min_brake_lat", rss.params.b_min_brake_lat);
  r.Number("mu_lat", rss.params.mu_lat);
  r.Number("tau", rss.tau);
  r.Number("vehicle_length", rss.geometry.length);
  r.Number("vehicle_width", rss.geometry.width);
  r.Number("max_accel_lon", rss.limits.lon_accel);
  r.Number("max_brake_lon", rss.limits.lon_brake);
  r.Number("max_accel_lat", rss.limits.lat_accel);
  r.Finish();
}

void ReadIdm(const json& value, const std::string& path, IdmParams& idm) {
  ObjectReader r(value, path);
  r.Number("T", idm.T);
  r.Number("a", idm.a);
  r.Number("b", idm.b);
  r.Number("s0", idm.s0);
  r.Number("delta", idm.delta);
  r.Finish();
}

void ReadGoal(const json& value, const std::string& path, GoalRegion& goal) {
  ObjectReader r(value, path);
  r.Number("x_min", goal.x_min);
  r.Number("x_max", goal.x_max);
  r.Number("y_min", goal.y_min);
  r.Number("y_max", goal.y_max);
  r.Number("v_min", goal.v_min);
  r.Number("v_max", goal.v_max);
  r.Number("max_abs_theta", goal.max_abs_theta);
  r.Finish();
}

void ReadSim(const json& value, const std::string& path, SimParams& sim) {
  ObjectReader r(value, path);
  r.Number("dt", sim.dt);
  r.Number("horizon", sim.horizon);
  r.Number("lane_width", sim.road.lane_width);
  r.Integer("target_lane", sim.controller.target_lane);
  r.Number("kp_lat", sim.controller.kp_lat);
  r.Number("kd_lat", sim.controller.kd_lat);
  r.Number("traffic_max_brake", sim.traffic_max_brake);
  r.Boolean("traffic_sees_intrusion", sim.traffic_sees_intrusion);
  if (const json* g = r.Find("goal")) ReadGoal(*g, r.PathOf("goal"), sim.goal);
  r.Finish();
}

void ReadScenarios(const json& value, const std::string& path, ScenarioParams& sp) {
  ObjectReader r(value, path);
  r.Integer("count", sp.count);
  r.Integer("master_seed", sp.master_seed);
  r.Number("speed_min", sp.speed_min);
  r.Number("speed_max", sp.speed_max);
  r.Number("gap_min", sp.gap_min);
  r.Number("gap_max", sp.gap_max);
  r.Number("merge_time", sp.merge_time);
  r.Number("split_min", sp.split_min);
  r.Number("split_max", sp.split_max);
  r.Integer("others", sp.others);
  r.Finish();
}

void ReadUncertainty(const json& value, const std::string& path, RunConfig& cfg) {
  ObjectReader r(value, path);
  r.NumberList("contour_levels", cfg.contour_levels);
  r.Integer("n_phi", cfg.n_phi);
  if (const json* c = r.Find("covariances")) {
    const std::string p = r.PathOf("covariances");
    if (!c->is_object()) throw ConfigError(fmt::format("{}: expected an object", p));
    cfg.covariances.clear();
    for (auto it = c->begin(); it != c->end(); ++it) {
      cfg.covariances.emplace_back(it.key(), ParseCovariance(it.value(), Child(p, it.key())));
    }
  }
  r.Finish();
}

json MatrixToJson(const Mat4& m) {
  json out = json::array();
  for (const auto& row : m)
    for (double v : row) out.push_back(v);
  return out;
}

}  // namespace

Mat4 SmallCovariance() { return DiagonalMatrix({0.04, 0.04, 0.04, 0.0025}); }

Mat4 LargeCovariance() { return DiagonalMatrix({0.16, 0.16, 0.16, 0.01}); }

RunConfig RunConfig::Defaults() {
  RunConfig cfg;
  cfg.covariances = {{"none", Mat4{}}, {"small", SmallCovariance()}, {"large", LargeCovariance()}};
  cfg.policies.assign(std::begin(kAllPolicies), std::end(kAllPolicies));
  return cfg;
}

UncertaintySpec RunConfig::Uncertainty(const std::string& case_name) const {
  for (const auto& [name, sigma] : covariances) {
    if (name == case_name) {
      UncertaintySpec spec;
      spec.sigma = sigma;
      spec.contour_levels = contour_levels;
      spec.n_phi = n_phi;
      return spec;
    }
  }
  throw ConfigError(fmt::format("covariance: unknown case '{}'", case_name));
}

std::vector<CovarianceCase> RunConfig::Cases() const {
  std::vector<CovarianceCase> out;
  for (const auto& entry : covariances) out.push_back({entry.first, Uncertainty(entry.first)});
  return out;
}

void RunConfig::Validate() const {
  auto wrap = [](const std::string& path, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{}: {}", path, e.what()));
    }
  };
  wrap("rss", [&] { sim.rss.Validate(); });
  wrap("idm", [&] { sim.traffic_idm.Validate(); });
  wrap("sim", [&] { sim.Validate(); });
  wrap("scenarios", [&] { scenarios.Validate(); });
  if (covariances.empty()) throw ConfigError("uncertainty.covariances: at least one case needed");
  for (const auto& [name, sigma] : covariances) {
    wrap("uncertainty.covariances." + name, [&] { Uncertainty(name).Validate(); });
  }
  if (policies.empty()) throw ConfigError("policies: at least one policy needed");
  if (betas.empty()) throw ConfigError("betas: at least one value needed");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    wrap(Index("betas", i), [&] { RiskLevel{betas[i]}; });
  }
  if (simplex_samples < 1) throw ConfigError("simplex_samples: must be >= 1");
  if (jobs < 1) throw ConfigError("jobs: must be >= 1");
}

RunConfig ParseRunConfig(const json& doc) {
  RunConfig cfg = RunConfig::Defaults();
  ObjectReader r(doc, "");
  if (const json* v = r.Find("rss")) ReadRss(*v, "rss", cfg.sim.rss);
  if (const json* v = r.Find("sim")) ReadSim(*v, "sim", cfg.sim);
  if (const json* v = r.Find("idm")) {
    ReadIdm(*v, "idm", cfg.sim.traffic_idm);
    cfg.sim.ego_idm = cfg.sim.traffic_idm;
  }
  if (const json* v = r.Find("scenarios")) ReadScenarios(*v, "scenarios", cfg.scenarios);
  if (const json* v = r.Find("uncertainty")) ReadUncertainty(*v, "uncertainty", cfg);
  if (const json* v = r.Find("policies")) {
    if (!v->is_array()) throw ConfigError("policies: expected an array of policy names");
    cfg.policies.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& name = (*v)[i];
      const auto kind = name.is_string() ? ParsePolicyKind(name.get<std::string>()) : std::nullopt;
      if (!kind) throw ConfigError(fmt::format("{}: unknown policy {}", Index("policies", i), name.dump()));
      cfg.policies.push_back(*kind);
    }
  }
  r.NumberList("betas", cfg.betas);
  r.Integer("simplex_samples", cfg.simplex_samples);
  r.Integer("jobs", cfg.jobs);
  std::string out = cfg.output_dir.string();
  r.String("output_dir", out);
  cfg.output_dir = out;
  r.Finish();
  cfg.Validate();
  return cfg;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) { return ParseRunConfig(ReadJsonFile(path)); }

json RunConfigToJson(const RunConfig& c) {
  const auto& p = c.sim.rss.params;
  json covariances = json::object();
  for (const auto& [name, sigma] : c.covariances) covariances[name] = MatrixToJson(sigma);
  json policies = json::array();
  for (PolicyKind k : c.policies) policies.push_back(PolicyName(k));
  return {
      {"rss",
       {{"rho", p.rho},
        {"a_max_accel_lon", p.a_max_accel_lon},
        {"b_min_brake_lon", p.b_min_brake_lon},
        {"b_max_brake_lon", p.b_max_brake_lon},
        {"a_max_accel_lat", p.a_max_accel_lat},
        {"b_min_brake_lat", p.b_min_brake_lat},
        {"mu_lat", p.mu_lat},
        {"tau", c.sim.rss.tau},
        {"vehicle_length", c.sim.rss.geometry.length},
        {"vehicle_width", c.sim.rss.geometry.width},
        {"max_accel_lon", c.sim.rss.limits.lon_accel},
        {"max_brake_lon", c.sim.rss.limits.lon_brake},
        {"max_accel_lat", c.sim.rss.limits.lat_accel}}},
      {"sim",
       {{"dt", c.sim.dt},
        {"horizon", c.sim.horizon},
        {"lane_width", c.sim.road.lane_width},
        {"target_lane", c.sim.controller.target_lane},
        {"kp_lat", c.sim.controller.kp_lat},
        {"kd_lat", c.sim.controller.kd_lat},
        {"traffic_max_brake", c.sim.traffic_max_brake},
        {"traffic_sees_intrusion", c.sim.traffic_sees_intrusion},
        {"goal",
         {{"x_min", c.sim.goal.x_min},
          {"x_max", c.sim.goal.x_max},
          {"y_min", c.sim.goal.y_min},
          {"y_max", c.sim.goal.y_max},
          {"v_min", c.sim.goal.v_min},
          {"v_max", c.sim.goal.v_max},
          {"max_abs_theta", c.sim.goal.max_abs_theta}}}}},
      {"idm",
       {{"T", c.sim.traffic_idm.T},
        {"a", c.sim.traffic_idm.a},
        {"b", c.sim.traffic_idm.b},
        {"s0", c.sim.traffic_idm.s0},
        {"delta", c.sim.traffic_idm.delta}}},
      {"scenarios",
       {{"count", c.scenarios.count},
        {"master_seed", c.scenarios.master_seed},
        {"speed_min", c.scenarios.speed_min},
        {"speed_max", c.scenarios.speed_max},
        {"gap_min", c.scenarios.gap_min},
        {"gap_max", c.scenarios.gap_max},
        {"merge_time", c.scenarios.merge_time},
        {"split_min", c.scenarios.split_min},
        {"split_max", c.scenarios.split_max},
        {"others", c.scenarios.others}}},
      {"uncertainty",
       {{"contour_levels", c.contour_levels}, {"n_phi", c.n_phi}, {"covariances", covariances}}},
      {"policies", policies},
      {"betas", c.betas},
      {"simplex_samples", c.simplex_samples},
      {"jobs", c.jobs},
      {"output_dir", c.output_dir.string()},
  };
}

RssConfig ParseRssConfig(const json& value, const std::string& path, RssConfig base) {
  ReadRss(value, path, base);
  try {
    base.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
  return base;
}

Mat4 ParseCovariance(const json& value, const std::string& path) {
  if (!value.is_array() || (value.size() != 16 && value.size() != 4)) {
    throw ConfigError(fmt::format("{}: expected 16 row-major entries or a 4-element diagonal", path));
  }
  std::vector<double> v;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number()) throw ConfigError(fmt::format("{}: expected a number", Index(path, i)));
    v.push_back(value[i].get<double>());
  }
  if (v.size() == 4) return DiagonalMatrix({v[0], v[1], v[2], v[3]});
  Mat4 m{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m[i][j] = v[static_cast<std::size_t>(4 * i + j)];
  return m;
}

json ToJson(const AgentState& s) { return {{"x", s.x}, {"y", s.y}, {"theta", s.theta}, {"v", s.v}}; }

json ToJson(const Envelope& e) {
  return {{"a_lon_min", e.a_lon_min},
          {"a_lon_max", e.a_lon_max},
          {"a_lat_min", e.a_lat_min},
          {"a_lat_max", e.a_lat_max}};
}

json ToJson(const StepRecord& record) {
  json observations = json::array();
  for (const auto& o : record.observation.others) observations.push_back(ToJson(o));
  return {
      {"t", record.t},
      {"ego", ToJson(record.ego)},
      {"observations", observations},
      {"envelope", record.decision.envelope ? ToJson(*record.decision.envelope) : json(nullptr)},
      {"command", {{"a_lon", record.decision.a_lon}, {"a_lat", record.decision.a_lat}}},
      {"mode", record.decision.mode == PolicyMode::kNominal ? "nominal" : "safety"},
      {"flags",
       {{"collision", record.collision},
        {"goal_reached", record.goal_reached},
        {"envelope_violated",
         record.envelope_violated ? json(*record.envelope_violated) : json(nullptr)}}},
  };
}

json ToJson(const RateTable& table) {
  json cells = json::array();
  for (const auto& c : table.cells) {
    json episodes = json::array();
    for (const auto& e : c.episodes) {
      episodes.push_back({{"scenario", e.scenario_index},
                          {"seed", e.seed},
                          {"outcome", OutcomeName(e.outcome)},
                          {"steps", e.steps},
                          {"envelope_checks", e.envelope_checks},
                          {"envelope_violations", e.envelope_violations}});
    }
    const auto freq = c.ViolationFrequency();
    cells.push_back({{"policy", PolicyName(c.policy)},
                     {"covariance_case", c.covariance_case},
                     {"beta", c.beta},
                     {"n", c.n},
                     {"successes", c.successes},
                     {"collisions", c.collisions},
                     {"timeouts", c.timeouts},
                     {"mean_steps", c.MeanSteps()},
                     {"mean_violation_freq", freq ? json(*freq) : json(nullptr)},
                     {"episodes", episodes}});
  }
  return {{"cells", cells}};
}

AgentState ParseAgentState(const json& value, const std::string& path) {
  AgentState s;
  ObjectReader r(value, path);
  for (auto [key, field] : {std::pair{"x", &s.x}, {"y", &s.y}, {"theta", &s.theta}, {"v", &s.v}}) {
    if (!r.Find(key)) throw ConfigError(fmt::format("{}: missing", Child(path, key)));
    r.Number(key, *field);
  }
  r.Finish();
  if (!(s.v >= 0.0)) throw ConfigError(fmt::format("{}: speed must be >= 0", Child(path, "v")));
  return s;
}

json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open file", path.string()));
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
  }
}

}  // namespace riskenv

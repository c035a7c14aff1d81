#include "riskenv/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace riskenv {

const char* PolicyName(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kProbabilisticEnvelopeRestriction: return "ProbabilisticEnvelopeRestriction";
    case PolicyKind::kEnvelopeRestriction: return "EnvelopeRestriction";
    case PolicyKind::kSimplex: return "Simplex";
    case PolicyKind::kProbabilisticSimplex: return "ProbabilisticSimplex";
  }
  return "?";
}

std::optional<PolicyKind> ParsePolicyKind(std::string_view name) {
  for (PolicyKind k : kAllPolicies) {
    if (name == PolicyName(k)) return k;
  }
  return std::nullopt;
}

bool UsesBeta(PolicyKind kind) {
  return kind == PolicyKind::kProbabilisticEnvelopeRestriction ||
         kind == PolicyKind::kProbabilisticSimplex;
}

void ScenarioParams::Validate() const {
  if (count < 1) throw ParameterError(fmt::format("scenario count must be >= 1, got {}", count));
  if (others < 0) throw ParameterError("number of other vehicles must be >= 0");
  if (!(speed_min >= 0.0 && speed_min <= speed_max)) {
    throw ParameterError(fmt::format("bad speed range [{}, {}]", speed_min, speed_max));
  }
  if (!(merge_time >= 0.0)) throw ParameterError("merge_time must be >= 0");
  if (!(split_min >= 0.0 && split_min <= split_max && split_max <= 1.0)) {
    throw ParameterError(fmt::format("bad merge split range [{}, {}]", split_min, split_max));
  }
  if (!(gap_min > 0.0 && gap_min <= gap_max)) {
    throw ParameterError(fmt::format("bad gap range [{}, {}]", gap_min, gap_max));
  }
}

std::vector<ScenarioConfig> GenerateScenarios(const ScenarioParams& params, const SimParams& sim) {
  params.Validate();
  std::seed_seq master_seq{params.master_seed};
  Rng master(master_seq);
  std::vector<ScenarioConfig> out;
  out.reserve(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) {
    ScenarioConfig sc;
    sc.seed = master();
    std::seed_seq seq{sc.seed, std::uint64_t{0}};
    Rng rng(seq);
    std::uniform_real_distribution<double> speed(params.speed_min, params.speed_max);
    std::uniform_real_distribution<double> gap(params.gap_min, params.gap_max);

    sc.ego = AgentState{0.0, sim.road.LaneCenter(0), 0.0, speed(rng)};
    const double merge_x = sc.ego.x + sc.ego.v * params.merge_time;
    const double first_gap = gap(rng);
    const double split =
        std::uniform_real_distribution<double>(params.split_min, params.split_max)(rng);
    double behind = merge_x - split * first_gap;
    double ahead = behind + first_gap;
    for (int k = 0; k < params.others; ++k) {
      double x = 0.0;
      if (k == 0) {
        x = ahead;
      } else if (k == 1) {
        x = behind;
      } else {
        x = (k % 2 == 0) ? (ahead += gap(rng)) : (behind -= gap(rng));
      }
      Vehicle v;
      v.lane = 1;
      v.state = AgentState{x, sim.road.LaneCenter(v.lane), 0.0, speed(rng)};
      v.idm = sim.traffic_idm;
      v.idm.v0 = std::max(v.state.v, 1e-3);
      sc.others.push_back(v);
    }
    out.push_back(std::move(sc));
  }
  return out;
}

WorldState MakeWorld(const ScenarioConfig& scenario, const SimParams& sim) {
  WorldState w;
  w.ego = scenario.ego;
  w.ego_idm = sim.ego_idm;
  w.ego_idm.v0 = std::max(scenario.ego.v, 1e-3);
  w.others = scenario.others;
  w.goal = sim.goal;
  w.goal.x_min += scenario.ego.x;
  w.goal.x_max += scenario.ego.x;
  return w;
}

NoiseModel NoiseModel::FromSpec(const UncertaintySpec& spec) {
  spec.Validate();
  NoiseModel m;
  m.basis = Eigendecompose(spec.sigma);
  m.contours = std::make_shared<const ContourSet>(ContourSet::Build(spec, m.basis));
  return m;
}

Rng ObserverRng(std::uint64_t scenario_seed) {
  std::seed_seq seq{scenario_seed, std::uint64_t{1}};
  return Rng(seq);
}

Rng PolicyRng(std::uint64_t scenario_seed) {
  std::seed_seq seq{scenario_seed, std::uint64_t{2}};
  return Rng(seq);
}

namespace {

struct Plan {
  bool switch_to_safety = false;
  std::optional<Envelope> envelope;
};

class LatchedPolicy : public Policy {
 public:
  explicit LatchedPolicy(const SimParams& sim) : sim_(sim) {}

  PolicyDecision Decide(const ObservedWorld& obs, const IdmParams& ego_idm) final {
    if (!latched_) {
      Plan plan = Evaluate(obs);
      if (plan.switch_to_safety) {
        latched_ = true;
      } else {
        const Envelope env = plan.envelope.value_or(Envelope::Unrestricted(sim_.rss.limits));
        const TrajectoryStep step = NominalLaneChange(obs, ego_idm, env, sim_);
        return {step.a_lon, step.a_lat, PolicyMode::kNominal, plan.envelope};
      }
    }
    const TrajectoryStep step = SafetyManeuver(obs, sim_);
    return {step.a_lon, step.a_lat, PolicyMode::kSafety, std::nullopt};
  }

 protected:
  virtual Plan Evaluate(const ObservedWorld& obs) = 0;

  SimParams sim_;

 private:
  bool latched_ = false;
};

class EnvelopeRestrictionPolicy final : public LatchedPolicy {
 public:
  using LatchedPolicy::LatchedPolicy;

 protected:
  Plan Evaluate(const ObservedWorld& obs) override {
    if (SafetyViolated(obs.ego, obs.others, sim_.rss)) return {true, std::nullopt};
    return {false, ComputeEnvelope(obs.ego, obs.others, sim_.rss)};
  }
};

class SimplexPolicy final : public LatchedPolicy {
 public:
  using LatchedPolicy::LatchedPolicy;

 protected:
  Plan Evaluate(const ObservedWorld& obs) override {
    return {SafetyViolated(obs.ego, obs.others, sim_.rss), std::nullopt};
  }
};

class ProbabilisticSimplexPolicy final : public LatchedPolicy {
 public:
  ProbabilisticSimplexPolicy(const SimParams& sim, const NoiseModel& noise, RiskLevel beta,
                             int samples, std::uint64_t seed)
      : LatchedPolicy(sim), basis_(noise.basis), beta_(beta), samples_(samples),
        rng_(PolicyRng(seed)) {}

 protected:
  Plan Evaluate(const ObservedWorld& obs) override {
    std::vector<double> estimates;
    estimates.reserve(obs.others.size());
    for (const auto& other : obs.others) {
      int violated = 0;
      for (int m = 0; m < samples_; ++m) {
        if (PairDangerous(obs.ego, Perturb(other, DrawNoise(basis_, rng_)), sim_.rss)) ++violated;
      }
      estimates.push_back(static_cast<double>(violated) / samples_);
    }
    return {ShouldSwitch(estimates, beta_), std::nullopt};
  }

 private:
  EigenBasis basis_;
  RiskLevel beta_;
  int samples_;
  Rng rng_;
};

class ProbabilisticEnvelopePolicy final : public LatchedPolicy {
 public:
  ProbabilisticEnvelopePolicy(const SimParams& sim, const NoiseModel& noise, RiskLevel beta)
      : LatchedPolicy(sim), contours_(noise.contours), beta_(beta) {}

 protected:
  Plan Evaluate(const ObservedWorld& obs) override {
    const ProbabilisticAssessment a =
        AssessObservation(obs.ego, obs.others, *contours_, sim_.rss, beta_);
    return {a.switch_to_safety, a.probabilistic};
  }

 private:
  std::shared_ptr<const ContourSet> contours_;
  RiskLevel beta_;
};

}  // namespace

std::unique_ptr<Policy> MakePolicy(const PolicySettings& settings, const NoiseModel& noise,
                                   const SimParams& sim, std::uint64_t policy_seed) {
  switch (settings.kind) {
    case PolicyKind::kEnvelopeRestriction:
      return std::make_unique<EnvelopeRestrictionPolicy>(sim);
    case PolicyKind::kSimplex:
      return std::make_unique<SimplexPolicy>(sim);
    case PolicyKind::kProbabilisticSimplex:
      if (settings.simplex_samples < 1) {
        throw ParameterError(
            fmt::format("simplex_samples must be >= 1, got {}", settings.simplex_samples));
      }
      return std::make_unique<ProbabilisticSimplexPolicy>(
          sim, noise, RiskLevel(settings.beta), settings.simplex_samples, policy_seed);
    case PolicyKind::kProbabilisticEnvelopeRestriction:
      if (!noise.contours) throw ParameterError("probabilistic envelope needs a contour set");
      return std::make_unique<ProbabilisticEnvelopePolicy>(sim, noise, RiskLevel(settings.beta));
  }
  throw ParameterError("unknown policy kind");
}

EpisodeSummary RunScenario(const ScenarioConfig& scenario, std::size_t index,
                           const PolicySettings& settings, const NoiseModel& noise,
                           const SimParams& sim, const StepObserver& on_step) {
  auto policy = MakePolicy(settings, noise, sim, scenario.seed);
  Rng observer = ObserverRng(scenario.seed);
  const EpisodeResult r =
      RunEpisode(MakeWorld(scenario, sim), *policy, noise.basis, observer, sim, on_step);
  return {index, scenario.seed, r.outcome, r.steps, r.envelope_checks, r.envelope_violations};
}

double RateCell::SuccessRate() const { return n ? static_cast<double>(successes) / n : 0.0; }
double RateCell::CollisionRate() const { return n ? static_cast<double>(collisions) / n : 0.0; }
double RateCell::TimeoutRate() const { return n ? static_cast<double>(timeouts) / n : 0.0; }
double RateCell::MeanSteps() const { return n ? static_cast<double>(total_steps) / n : 0.0; }

std::optional<double> RateCell::ViolationFrequency() const {
  if (envelope_checks == 0) return std::nullopt;
  return static_cast<double>(envelope_violations) / static_cast<double>(envelope_checks);
}

const RateCell* RateTable::Find(PolicyKind policy, std::string_view covariance_case,
                                double beta) const {
  for (const auto& c : cells) {
    if (c.policy == policy && c.covariance_case == covariance_case && c.beta == beta) return &c;
  }
  return nullptr;
}

namespace {

struct Job {
  std::size_t group;  // index into the list of distinct simulations
  std::size_t scenario;
};

struct Group {
  PolicyKind policy;
  std::size_t case_index;
  double beta;
};

}  // namespace

RateTable Sweep(const SweepRequest& request) {
  if (request.scenarios.empty() || request.policies.empty() || request.cases.empty() ||
      request.betas.empty()) {
    throw ParameterError("sweep needs scenarios, policies, covariance cases and betas");
  }
  request.sim.Validate();
  for (double b : request.betas) RiskLevel{b};

  std::vector<NoiseModel> noise;
  noise.reserve(request.cases.size());
  for (const auto& c : request.cases) noise.push_back(NoiseModel::FromSpec(c.spec));

  // Beta-independent policies are simulated once per case.
  std::vector<Group> groups;
  for (PolicyKind p : request.policies) {
    for (std::size_t c = 0; c < request.cases.size(); ++c) {
      if (UsesBeta(p)) {
        for (double b : request.betas) groups.push_back({p, c, b});
      } else {
        groups.push_back({p, c, 0.0});
      }
    }
  }
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t s = 0; s < request.scenarios.size(); ++s) jobs.push_back({g, s});

  std::vector<EpisodeSummary> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size() && !failed; i = next++) {
      const Job& job = jobs[i];
      const Group& g = groups[job.group];
      try {
        PolicySettings settings{g.policy, g.beta, request.simplex_samples};
        results[i] = RunScenario(request.scenarios[job.scenario], job.scenario, settings,
                                 noise[g.case_index], request.sim);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          spdlog::error("episode failed: policy={} case={} beta={} scenario={}",
                        PolicyName(g.policy), request.cases[g.case_index].name, g.beta,
                        job.scenario);
          error = std::current_exception();
        }
        failed = true;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(request.jobs, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<RateCell> per_group(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    per_group[g].policy = groups[g].policy;
    per_group[g].covariance_case = request.cases[groups[g].case_index].name;
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    RateCell& cell = per_group[jobs[i].group];
    const EpisodeSummary& e = results[i];
    ++cell.n;
    switch (e.outcome) {
      case Outcome::kSuccess: ++cell.successes; break;
      case Outcome::kCollision: ++cell.collisions; break;
      case Outcome::kTimeout: ++cell.timeouts; break;
    }
    cell.total_steps += e.steps;
    cell.envelope_checks += e.envelope_checks;
    cell.envelope_violations += e.envelope_violations;
    cell.episodes.push_back(e);
  }

  RateTable table;
  for (PolicyKind p : request.policies) {
    for (std::size_t c = 0; c < request.cases.size(); ++c) {
      for (double b : request.betas) {
        for (std::size_t g = 0; g < groups.size(); ++g) {
          if (groups[g].policy == p && groups[g].case_index == c &&
              (!UsesBeta(p) || groups[g].beta == b)) {
            RateCell cell = per_group[g];
            cell.beta = b;
            table.cells.push_back(std::move(cell));
            break;
          }
        }
      }
    }
  }
  return table;
}

void WriteRateCsv(const RateTable& table, std::ostream& out) {
  out << "policy,covariance_case,beta,success_rate,collision_rate,timeout_rate,n,mean_steps,"
         "mean_violation_freq\n";
  for (const auto& c : table.cells) {
    const auto freq = c.ViolationFrequency();
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", PolicyName(c.policy), c.covariance_case,
                       c.beta, c.SuccessRate(), c.CollisionRate(), c.TimeoutRate(), c.n,
                       c.MeanSteps(), freq ? fmt::format("{}", *freq) : std::string());
  }
}

namespace {

std::vector<double> AverageRanks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanCorrelation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ParameterError("spearman correlation needs two equally sized samples of length >= 2");
  }
  const auto rx = AverageRanks(x);
  const auto ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace riskenv

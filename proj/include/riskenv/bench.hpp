#ifndef RISKENV_BENCH_HPP_
#define RISKENV_BENCH_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "riskenv/highway_sim.hpp"
#include "riskenv/prob_envelope.hpp"

namespace riskenv {

enum class PolicyKind {
  kProbabilisticEnvelopeRestriction,
  kEnvelopeRestriction,
  kSimplex,
  kProbabilisticSimplex,
};

inline constexpr PolicyKind kAllPolicies[] = {
    PolicyKind::kProbabilisticEnvelopeRestriction, PolicyKind::kEnvelopeRestriction,
    PolicyKind::kSimplex, PolicyKind::kProbabilisticSimplex};

const char* PolicyName(PolicyKind kind);
std::optional<PolicyKind> ParsePolicyKind(std::string_view name);
/// Only the two probabilistic policies look at beta.
bool UsesBeta(PolicyKind kind);

/// Ranges for random scenario generation. Gaps are center-to-center
/// longitudinal distances between consecutive vehicles on the left lane. The
/// first gap contains the ego's projected merge point ego.x + v * merge_time;
/// the merge point sits a fraction drawn from [split_min, split_max] of that
/// gap ahead of the vehicle behind it.
struct ScenarioParams {
  int count = 100;
  std::uint64_t master_seed = 7;
  double speed_min = 15.3;
  double speed_max = 19.9;
  double gap_min = 40.0;
  double gap_max = 50.0;
  double merge_time = 1.0;
  double split_min = 0.0;
  double split_max = 1.0;
  int others = 2;

  void Validate() const;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  AgentState ego;
  std::vector<Vehicle> others;
};

/// Ego at x = 0 on the right lane. Other vehicles go on the left lane,
/// alternately ahead of and behind the merge point.
std::vector<ScenarioConfig> GenerateScenarios(const ScenarioParams& params,
                                              const SimParams& sim);

WorldState MakeWorld(const ScenarioConfig& scenario, const SimParams& sim);

struct PolicySettings {
  PolicyKind kind = PolicyKind::kEnvelopeRestriction;
  double beta = 0.0;
  int simplex_samples = 100;  // deviations per agent per step
};

/// Everything a policy needs to know about the perception noise. The contour
/// set is shared between episodes because it only depends on the covariance.
struct NoiseModel {
  EigenBasis basis;
  std::shared_ptr<const ContourSet> contours;

  static NoiseModel FromSpec(const UncertaintySpec& spec);
};

/// Builds a policy that starts in nominal mode and latches into the safety
/// maneuver once its switching rule fires.
std::unique_ptr<Policy> MakePolicy(const PolicySettings& settings, const NoiseModel& noise,
                                   const SimParams& sim, std::uint64_t policy_seed);

/// Per-scenario random streams: observation noise and policy sampling never
/// share a generator, so policies see identical noise in paired runs.
Rng ObserverRng(std::uint64_t scenario_seed);
Rng PolicyRng(std::uint64_t scenario_seed);

struct EpisodeSummary {
  std::size_t scenario_index = 0;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::kTimeout;
  int steps = 0;
  int envelope_checks = 0;
  int envelope_violations = 0;
};

EpisodeSummary RunScenario(const ScenarioConfig& scenario, std::size_t index,
                           const PolicySettings& settings, const NoiseModel& noise,
                           const SimParams& sim, const StepObserver& on_step = {});

struct CovarianceCase {
  std::string name;
  UncertaintySpec spec;
};

struct RateCell {
  PolicyKind policy = PolicyKind::kEnvelopeRestriction;
  std::string covariance_case;
  double beta = 0.0;
  int n = 0;
  int successes = 0;
  int collisions = 0;
  int timeouts = 0;
  long total_steps = 0;
  long envelope_checks = 0;
  long envelope_violations = 0;
  std::vector<EpisodeSummary> episodes;

  double SuccessRate() const;
  double CollisionRate() const;
  double TimeoutRate() const;
  double MeanSteps() const;
  /// Pooled per-step violation frequency; empty for policies without envelope.
  std::optional<double> ViolationFrequency() const;
};

struct RateTable {
  std::vector<RateCell> cells;

  const RateCell* Find(PolicyKind policy, std::string_view covariance_case, double beta) const;
};

struct SweepRequest {
  std::vector<ScenarioConfig> scenarios;
  std::vector<PolicyKind> policies;
  std::vector<CovarianceCase> cases;
  std::vector<double> betas;
  int simplex_samples = 100;
  SimParams sim;
  int jobs = 1;
};

/// Runs every (policy, case, beta) cell on all scenarios. Policies that ignore
/// beta are simulated once per case and reported for every beta. Cells come
/// out in policy, case, beta order regardless of the job count.
RateTable Sweep(const SweepRequest& request);

void WriteRateCsv(const RateTable& table, std::ostream& out);

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
double SpearmanCorrelation(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace riskenv

#endif  // RISKENV_BENCH_HPP_

#ifndef RISKENV_PROB_ENVELOPE_HPP_
#define RISKENV_PROB_ENVELOPE_HPP_

#include <span>
#include <vector>

#include "riskenv/rss.hpp"
#include "riskenv/uncertainty.hpp"

namespace riskenv {

/// Probability comparisons against beta tolerate this much round-off, so that
/// e.g. 1 - 0.95 does not count as exceeding 0.05.
inline constexpr double kProbabilityTol = 1e-12;

/// Allowed probability of applying an envelope that is less restrictive than
/// the true one.
class RiskLevel {
 public:
  explicit RiskLevel(double beta);
  double beta() const { return beta_; }

 private:
  double beta_;
};

struct ContourEnvelope {
  int agent_id = 0;
  int contour_index = 0;
  double probability_mass = 0.0;
  Envelope envelope;
};

/// Discrete distribution over worst-case envelopes of one agent. The mass
/// outside the outermost contour sits on residual_envelope, which is the
/// most-restrictive sentinel unless the covariance is zero.
struct RandomEnvelope {
  int agent_id = 0;
  std::vector<ContourEnvelope> entries;
  double residual_mass = 0.0;
  Envelope residual_envelope;

  double TotalMass() const;
};

/// Angular samples of every contour level, computed once per covariance.
struct ContourSet {
  std::vector<double> levels;
  std::vector<std::vector<StateDeviation>> samples;  // one list per level
  bool degenerate = false;                           // zero covariance

  static ContourSet Build(const UncertaintySpec& spec, const EigenBasis& basis);
  static ContourSet Build(const UncertaintySpec& spec);

  double Mass(std::size_t k) const;
  double ResidualMass() const;
};

/// Component-wise most restrictive envelope over the perturbed observations
/// obs + deviation.
Envelope WorstCaseContourEnvelope(const AgentState& ego, const AgentState& obs,
                                  std::span<const StateDeviation> deviations,
                                  const RssConfig& config);

RandomEnvelope BuildRandomEnvelope(const AgentState& ego, const AgentState& obs,
                                   const ContourSet& contours, const RssConfig& config,
                                   int agent_id = 0);
RandomEnvelope BuildRandomEnvelope(const AgentState& ego, const AgentState& obs,
                                   const UncertaintySpec& spec, const EigenBasis& basis,
                                   const RssConfig& config, int agent_id = 0);

/// Per component: the least restrictive support value c with
/// 1 - prod_j (1 - P(E_j strictly more restrictive than c)) <= beta.
double SolveComponent(std::span<const RandomEnvelope> agents, EnvelopeComponent component,
                      const RiskLevel& beta);

/// Risk-bounded envelope. Throws ValidationError on an empty agent list.
Envelope SolveProbabilisticEnvelope(std::span<const RandomEnvelope> agents,
                                    const RiskLevel& beta);

/// Expected safety violation of one observed agent: contour k counts as
/// violated if any of its samples is dangerous. The residual mass counts as
/// violated, except for zero covariance where it follows the observed state.
double ProbabilisticViolation(const AgentState& ego, const AgentState& obs,
                              const ContourSet& contours, const RssConfig& config);

/// True iff some agent's expected violation strictly exceeds beta.
bool ShouldSwitch(std::span<const double> expectations, const RiskLevel& beta);

/// Everything the probabilistic envelope policy needs for one observation.
struct ProbabilisticAssessment {
  Envelope deterministic;
  Envelope probabilistic;
  std::vector<double> violation_expectations;
  bool switch_to_safety = false;
};

/// Evaluates envelope, violations and the switch decision for an observed
/// world. With no other agents the envelope is unrestricted and no switch
/// happens.
ProbabilisticAssessment AssessObservation(const AgentState& ego,
                                          std::span<const AgentState> observed_others,
                                          const ContourSet& contours, const RssConfig& config,
                                          const RiskLevel& beta);

}  // namespace riskenv

#endif  // RISKENV_PROB_ENVELOPE_HPP_

#include "riskenv/prob_envelope.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace riskenv {

RiskLevel::RiskLevel(double beta) : beta_(beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ValidationError(fmt::format("beta_risk must lie in [0, 1], got {}", beta));
  }
}

double RandomEnvelope::TotalMass() const {
  double total = residual_mass;
  for (const auto& e : entries) total += e.probability_mass;
  return total;
}

ContourSet ContourSet::Build(const UncertaintySpec& spec, const EigenBasis& basis) {
  spec.Validate();
  ContourSet set;
  set.levels = spec.contour_levels;
  set.degenerate = basis.IsZero();
  for (double p : set.levels) {
    if (set.degenerate) {
      // Every angular sample coincides with the observation.
      set.samples.push_back({StateDeviation{}});
    } else {
      set.samples.push_back(SampleContour(basis, p, spec.n_phi));
    }
  }
  return set;
}

ContourSet ContourSet::Build(const UncertaintySpec& spec) {
  return Build(spec, Eigendecompose(spec.sigma));
}

double ContourSet::Mass(std::size_t k) const {
  return levels[k] - (k == 0 ? 0.0 : levels[k - 1]);
}

double ContourSet::ResidualMass() const { return levels.empty() ? 1.0 : 1.0 - levels.back(); }

Envelope WorstCaseContourEnvelope(const AgentState& ego, const AgentState& obs,
                                  std::span<const StateDeviation> deviations,
                                  const RssConfig& config) {
  if (deviations.empty()) throw ValidationError("worst-case envelope needs at least one sample");
  Envelope worst = Envelope::Unrestricted(config.limits);
  for (const auto& d : deviations) {
    worst = WorstOf(worst, PairwiseEnvelope(ego, Perturb(obs, d), config));
  }
  return worst;
}

RandomEnvelope BuildRandomEnvelope(const AgentState& ego, const AgentState& obs,
                                   const ContourSet& contours, const RssConfig& config,
                                   int agent_id) {
  RandomEnvelope out;
  out.agent_id = agent_id;
  for (std::size_t k = 0; k < contours.levels.size(); ++k) {
    out.entries.push_back({agent_id, static_cast<int>(k), contours.Mass(k),
                           WorstCaseContourEnvelope(ego, obs, contours.samples[k], config)});
  }
  out.residual_mass = contours.ResidualMass();
  out.residual_envelope = contours.degenerate
                              ? PairwiseEnvelope(ego, obs, config)
                              : Envelope::MostRestrictive(config.limits);
  return out;
}

RandomEnvelope BuildRandomEnvelope(const AgentState& ego, const AgentState& obs,
                                   const UncertaintySpec& spec, const EigenBasis& basis,
                                   const RssConfig& config, int agent_id) {
  return BuildRandomEnvelope(ego, obs, ContourSet::Build(spec, basis), config, agent_id);
}

namespace {

struct Atom {
  double key;
  double mass;
};

}  // namespace

double SolveComponent(std::span<const RandomEnvelope> agents, EnvelopeComponent component,
                      const RiskLevel& beta) {
  if (agents.empty()) throw ValidationError("probabilistic envelope needs at least one agent");

  std::vector<std::vector<Atom>> atoms(agents.size());
  std::vector<double> candidates;
  for (std::size_t j = 0; j < agents.size(); ++j) {
    for (const auto& entry : agents[j].entries) {
      atoms[j].push_back({RestrictivenessKey(component, entry.envelope.Get(component)),
                          entry.probability_mass});
    }
    if (agents[j].residual_mass > 0.0) {
      atoms[j].push_back({RestrictivenessKey(component, agents[j].residual_envelope.Get(component)),
                          agents[j].residual_mass});
    }
    for (const auto& a : atoms[j]) candidates.push_back(a.key);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Walk from most to least restrictive. The combined probability is
  // non-decreasing along the walk, so the first violation ends it.
  double best = candidates.front();
  for (double c : candidates) {
    double all_at_least = 1.0;
    for (const auto& agent_atoms : atoms) {
      double below = 0.0;
      for (const auto& a : agent_atoms) {
        if (a.key < c) below += a.mass;
      }
      all_at_least *= 1.0 - std::min(1.0, below);
    }
    if (1.0 - all_at_least > beta.beta() + kProbabilityTol) break;
    best = c;
  }
  return ValueFromKey(component, best);
}

Envelope SolveProbabilisticEnvelope(std::span<const RandomEnvelope> agents,
                                    const RiskLevel& beta) {
  if (agents.empty()) throw ValidationError("probabilistic envelope needs at least one agent");
  Envelope out;
  for (auto c : kEnvelopeComponents) out.Set(c, SolveComponent(agents, c, beta));
  return out;
}

double ProbabilisticViolation(const AgentState& ego, const AgentState& obs,
                              const ContourSet& contours, const RssConfig& config) {
  double expectation = 0.0;
  for (std::size_t k = 0; k < contours.levels.size(); ++k) {
    const auto& samples = contours.samples[k];
    const bool violated = std::any_of(samples.begin(), samples.end(), [&](const StateDeviation& d) {
      return PairDangerous(ego, Perturb(obs, d), config);
    });
    if (violated) expectation += contours.Mass(k);
  }
  const bool residual_violated = contours.degenerate ? PairDangerous(ego, obs, config) : true;
  if (residual_violated) expectation += contours.ResidualMass();
  return expectation;
}

bool ShouldSwitch(std::span<const double> expectations, const RiskLevel& beta) {
  return std::any_of(expectations.begin(), expectations.end(),
                     [&](double e) { return e > beta.beta() + kProbabilityTol; });
}

ProbabilisticAssessment AssessObservation(const AgentState& ego,
                                          std::span<const AgentState> observed_others,
                                          const ContourSet& contours, const RssConfig& config,
                                          const RiskLevel& beta) {
  ProbabilisticAssessment out;
  out.deterministic = ComputeEnvelope(ego, observed_others, config);
  if (observed_others.empty()) {
    out.probabilistic = Envelope::Unrestricted(config.limits);
    return out;
  }
  std::vector<RandomEnvelope> randoms;
  randoms.reserve(observed_others.size());
  for (std::size_t j = 0; j < observed_others.size(); ++j) {
    randoms.push_back(
        BuildRandomEnvelope(ego, observed_others[j], contours, config, static_cast<int>(j)));
    out.violation_expectations.push_back(
        ProbabilisticViolation(ego, observed_others[j], contours, config));
  }
  out.probabilistic = SolveProbabilisticEnvelope(randoms, beta);
  out.switch_to_safety = ShouldSwitch(out.violation_expectations, beta);
  return out;
}

}  // namespace riskenv

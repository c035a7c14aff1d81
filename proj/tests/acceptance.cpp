// Acceptance checks, one PASS/FAIL line per criterion. Exits nonzero if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "oracles.hpp"
#include "riskenv/bench.hpp"
#include "riskenv/config.hpp"
#include "riskenv/prob_envelope.hpp"
#include "riskenv/rss.hpp"
#include "riskenv/uncertainty.hpp"

using namespace riskenv;

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Report {
  int failures = 0;

  void Line(int id, bool ok, const std::string& detail) {
    fmt::print("criterion {}: {} ({})\n", id, ok ? "PASS" : "FAIL", detail);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

RandomEnvelope MakeRandom(const std::vector<std::pair<Envelope, double>>& entries, double residual) {
  RandomEnvelope r;
  int k = 0;
  for (const auto& [env, mass] : entries) r.entries.push_back({0, k++, mass, env});
  r.residual_mass = residual;
  r.residual_envelope = Envelope::MostRestrictive(PhysicalLimits{});
  return r;
}

void ChiSquare(Report& report) {
  const auto start = Clock::now();
  const double q95 = Chi2Quantile4(0.95);
  double worst = 0.0;
  for (int i = 1; i <= 100; ++i) {
    const double p = i / 101.0;
    worst = std::max(worst, std::abs(Chi2Cdf4(Chi2Quantile4(p)) - p));
  }
  const double elapsed = Seconds(start);
  const bool ok = std::abs(q95 - 9.4877) < 1e-3 && worst < 1e-9 && elapsed < 1.0;
  report.Line(1, ok, fmt::format("q(0.95) = {:.6f}, max round-trip error {:.2e}, {:.3f} s", q95, worst, elapsed));
}

void SafeDistance(Report& report) {
  const auto start = Clock::now();
  oracle::Gen gen(2024);
  int misclassified = 0;
  for (int i = 0; i < 1000; ++i) {
    const RssParams p = gen.Params();
    const double v_rear = gen.Uniform(0.0, 40.0);
    const double v_front = gen.Uniform(0.0, 40.0);
    const double d = SafeDistanceLon(v_rear, v_front, p);
    const bool safe_above = oracle::LonBrakingMinGap(v_rear, v_front, d + 0.01, p) > 0.0;
    const bool unsafe_below = oracle::LonBrakingMinGap(v_rear, v_front, d - 0.01, p) < 0.0;
    if (!safe_above || !unsafe_below) ++misclassified;
  }
  const double elapsed = Seconds(start);
  report.Line(2, misclassified == 0 && elapsed < 30.0,
              fmt::format("{} misclassified of 1000, {:.2f} s", misclassified, elapsed));
}

struct TwoAgentScene {
  AgentState ego;
  AgentState a;
  AgentState b;
};

void RiskSoundness(Report& report) {
  const auto start = Clock::now();
  const RssConfig rss;
  const std::vector<TwoAgentScene> scenes = {
      {{0, 1.75, 0.0, 17}, {25, 1.75, 0, 14}, {2, 5.25, 0, 17}},
      {{0, 1.75, 0.05, 17}, {6, 4.2, 0, 16}, {-20, 4.5, 0, 18}},
      {{0, 3.0, 0.03, 18}, {30, 3.5, 0, 16}, {-3, 5.0, -0.02, 17}},
      {{0, 1.75, 0.0, 19}, {35, 1.75, 0, 17}, {20, 1.75, 0, 18}},
      {{0, 2.5, 0.02, 16}, {-8, 4.8, 0, 19}, {12, 0.5, 0, 15}},
  };
  constexpr int kSamples = 100000;
  const std::vector<double> betas = {0.05, 0.2, 0.5};

  UncertaintySpec spec;
  spec.sigma = SmallCovariance();
  const EigenBasis basis = Eigendecompose(spec.sigma);
  bool ok = true;
  std::string detail;
  for (int n_phi : {6, 12}) {
    spec.n_phi = n_phi;
    const ContourSet contours = ContourSet::Build(spec, basis);
    const double allowance = n_phi == 6 ? 0.02 : 0.01;
    double worst_margin = -1.0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const TwoAgentScene& sc = scenes[s];
      const std::vector<AgentState> observed = {sc.a, sc.b};
      if (ComputeEnvelope(sc.ego, observed, rss) == Envelope::Unrestricted(rss.limits)) {
        ok = false;
        detail += fmt::format("scene {} is unrestricted; ", s);
      }
      const std::vector<RandomEnvelope> agents = {
          BuildRandomEnvelope(sc.ego, sc.a, contours, rss, 0),
          BuildRandomEnvelope(sc.ego, sc.b, contours, rss, 1)};
      std::vector<Envelope> percept;
      for (double beta : betas) percept.push_back(SolveProbabilisticEnvelope(agents, RiskLevel(beta)));

      // The true states are the observations displaced by fresh noise.
      std::seed_seq seq{std::uint64_t{3}, std::uint64_t{s}, static_cast<std::uint64_t>(n_phi)};
      Rng rng(seq);
      std::vector<int> exceed(betas.size(), 0);
      for (int i = 0; i < kSamples; ++i) {
        const std::vector<AgentState> truth = {Perturb(sc.a, DrawNoise(basis, rng)),
                                               Perturb(sc.b, DrawNoise(basis, rng))};
        const Envelope true_env = ComputeEnvelope(sc.ego, truth, rss);
        for (std::size_t k = 0; k < betas.size(); ++k) {
          if (LessRestrictiveThan(percept[k], true_env)) ++exceed[k];
        }
      }
      for (std::size_t k = 0; k < betas.size(); ++k) {
        const double freq = static_cast<double>(exceed[k]) / kSamples;
        const double bound = betas[k] + 3.0 * std::sqrt(betas[k] / kSamples) + allowance;
        worst_margin = std::max(worst_margin, freq - bound);
        fmt::print("  n_phi {:2} scene {} beta {:.2f}: frequency {:.5f}, bound {:.5f}\n", n_phi, s,
                   betas[k], freq, bound);
        if (freq > bound) ok = false;
      }
    }
    detail += fmt::format("n_phi {} worst frequency-bound {:+.4f}; ", n_phi, worst_margin);
  }
  const double elapsed = Seconds(start);
  ok = ok && elapsed < 300.0;
  report.Line(3, ok, fmt::format("{}{:.1f} s", detail, elapsed));
}

void BruteForce(Report& report) {
  const auto start = Clock::now();
  oracle::Gen gen(404);
  const std::vector<double> lon_min_values = {-8.0, -6.0, -3.0, 0.0};
  const std::vector<double> lon_max_values = {-2.0, 0.0, 1.5, 8.0};
  const std::vector<double> lat_values = {-1.0, 0.0, 0.5, 4.0};
  int matches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<RandomEnvelope> agents;
    const int n_agents = gen.Int(1, 3);
    for (int j = 0; j < n_agents; ++j) {
      const int k = gen.Int(1, 3);
      std::vector<double> levels;
      for (int i = 0; i < k; ++i) levels.push_back(gen.Uniform(0.05, 0.99));
      std::sort(levels.begin(), levels.end());
      std::vector<std::pair<Envelope, double>> entries;
      double prev = 0.0;
      for (double p : levels) {
        entries.push_back({Envelope{lon_min_values[gen.Int(0, 3)], lon_max_values[gen.Int(0, 3)],
                                    -lat_values[gen.Int(0, 3)], lat_values[gen.Int(0, 3)]},
                           p - prev});
        prev = p;
      }
      agents.push_back(MakeRandom(entries, 1.0 - prev));
    }
    const double beta = gen.Coin() ? gen.Uniform(0.0, 1.0) : gen.Int(0, 20) / 20.0;
    const Envelope got = SolveProbabilisticEnvelope(agents, RiskLevel(beta));
    bool same = true;
    for (auto c : kEnvelopeComponents) {
      same = same && got.Get(c) == oracle::BruteForceComponent(agents, c, beta);
    }
    if (same) ++matches;
  }
  const double elapsed = Seconds(start);
  report.Line(4, matches == 1000 && elapsed < 30.0,
              fmt::format("{}/1000 trials match enumeration, {:.2f} s", matches, elapsed));
}

void DegeneracyAndMonotonicity(Report& report) {
  const RssConfig rss;
  const std::vector<double> grid = RunConfig::Defaults().betas;
  oracle::Gen gen(55);

  UncertaintySpec zero;
  zero.sigma = Mat4{};
  const ContourSet zero_contours = ContourSet::Build(zero);
  UncertaintySpec small;
  small.sigma = SmallCovariance();
  const ContourSet small_contours = ContourSet::Build(small);

  int degenerate_mismatch = 0;
  int monotone_breaks = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const AgentState ego = gen.Ego();
    std::vector<AgentState> others;
    const int n = gen.Int(1, 3);
    for (int j = 0; j < n; ++j) others.push_back(gen.Neighbor(ego));

    std::vector<RandomEnvelope> exact;
    std::vector<RandomEnvelope> noisy;
    for (int j = 0; j < n; ++j) {
      exact.push_back(BuildRandomEnvelope(ego, others[j], zero_contours, rss, j));
      noisy.push_back(BuildRandomEnvelope(ego, others[j], small_contours, rss, j));
    }
    const Envelope reference = ComputeEnvelope(ego, others, rss);
    Envelope looser_exact{};
    Envelope looser_noisy{};
    // Walk the grid from the largest beta down; each step must be at least
    // as restrictive in every component.
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
      const Envelope e = SolveProbabilisticEnvelope(exact, RiskLevel(*it));
      const Envelope p = SolveProbabilisticEnvelope(noisy, RiskLevel(*it));
      if (*it < 1.0 && !(e == reference)) ++degenerate_mismatch;
      if (it != grid.rbegin()) {
        if (LessRestrictiveThan(e, looser_exact)) ++monotone_breaks;
        if (LessRestrictiveThan(p, looser_noisy)) ++monotone_breaks;
      }
      looser_exact = e;
      looser_noisy = p;
    }
  }
  report.Line(5, degenerate_mismatch == 0 && monotone_breaks == 0,
              fmt::format("500 inputs: {} zero-covariance mismatches, {} monotonicity breaks",
                          degenerate_mismatch, monotone_breaks));
}

void Benchmark(Report& report) {
  const auto start = Clock::now();
  const RunConfig cfg = RunConfig::Defaults();
  SweepRequest request;
  request.scenarios = GenerateScenarios(cfg.scenarios, cfg.sim);
  request.policies = cfg.policies;
  request.cases = cfg.Cases();
  request.betas = cfg.betas;
  request.simplex_samples = cfg.simplex_samples;
  request.sim = cfg.sim;
  const RateTable table = Sweep(request);
  const double elapsed = Seconds(start);

  auto cell = [&](PolicyKind p, const char* cov, double beta) -> const RateCell& {
    const RateCell* c = table.Find(p, cov, beta);
    if (c == nullptr) throw std::runtime_error(fmt::format("missing cell {} {} {}", PolicyName(p), cov, beta));
    return *c;
  };

  const double er_col = cell(PolicyKind::kEnvelopeRestriction, "none", 0.0).CollisionRate();
  const double simplex_col = cell(PolicyKind::kSimplex, "none", 0.0).CollisionRate();
  bool c_ok = true;
  std::string c_detail;
  for (double beta : cfg.betas) {
    if (beta <= 0.0 || beta > 0.1) continue;
    const RateCell& c = cell(PolicyKind::kProbabilisticEnvelopeRestriction, "small", beta);
    c_ok = c_ok && c.CollisionRate() == 0.0 && c.SuccessRate() >= 0.3;
    c_detail += fmt::format("beta {}: collisions {}, success {}; ", beta, c.CollisionRate(), c.SuccessRate());
  }
  const RateCell& zero_beta = cell(PolicyKind::kProbabilisticEnvelopeRestriction, "small", 0.0);
  c_ok = c_ok && zero_beta.CollisionRate() == 0.0;
  c_detail += fmt::format("beta 0: collisions {}, success {}", zero_beta.CollisionRate(), zero_beta.SuccessRate());

  std::vector<double> simplex_cols;
  for (double beta : cfg.betas) {
    simplex_cols.push_back(cell(PolicyKind::kProbabilisticSimplex, "small", beta).CollisionRate());
  }
  const double rho = SpearmanCorrelation(cfg.betas, simplex_cols);

  const bool ok = er_col == 0.0 && simplex_col > 0.0 && c_ok && rho > 0.0 && elapsed < 600.0;
  report.Line(6, ok,
              fmt::format("(a) ER collisions {}; (b) Simplex collisions {}; (c) {}; (d) Spearman {:.3f}; {:.1f} s",
                          er_col, simplex_col, c_detail, rho, elapsed));

  // Violation frequency of the probabilistic envelope policy, per covariance case.
  bool v_ok = true;
  std::string v_detail;
  for (const char* cov : {"small", "large"}) {
    for (double beta : {0.05, 0.1, 0.2}) {
      const RateCell& c = cell(PolicyKind::kProbabilisticEnvelopeRestriction, cov, beta);
      const double n = static_cast<double>(c.envelope_checks);
      const double freq = c.ViolationFrequency().value_or(1.0);
      const double bound = beta + 3.0 * std::sqrt(beta * (1.0 - beta) / n);
      v_ok = v_ok && n > 0 && freq <= bound;
      v_detail += fmt::format("{} beta {}: {:.4f} <= {:.4f} over {} steps; ", cov, beta, freq, bound,
                              c.envelope_checks);
    }
  }
  report.Line(7, v_ok, v_detail);
}

std::string TraceText(const ScenarioConfig& scenario, const NoiseModel& noise, const SimParams& sim) {
  std::ostringstream out;
  RunScenario(scenario, 0, {PolicyKind::kProbabilisticEnvelopeRestriction, 0.1, 100}, noise, sim,
              [&](const StepRecord& r) { out << ToJson(r).dump() << '\n'; });
  return out.str();
}

std::string CsvText(const RunConfig& cfg) {
  SweepRequest request;
  request.scenarios = GenerateScenarios(cfg.scenarios, cfg.sim);
  request.policies = cfg.policies;
  request.cases = cfg.Cases();
  request.betas = {0.05, 0.5};
  request.sim = cfg.sim;
  request.jobs = 2;
  std::ostringstream out;
  WriteRateCsv(Sweep(request), out);
  return out.str();
}

void Determinism(Report& report) {
  RunConfig cfg = RunConfig::Defaults();
  cfg.scenarios.count = 10;
  const auto scenarios = GenerateScenarios(cfg.scenarios, cfg.sim);
  const NoiseModel noise = NoiseModel::FromSpec(cfg.Uncertainty("small"));
  const std::string trace_a = TraceText(scenarios[3], noise, cfg.sim);
  const std::string trace_b = TraceText(scenarios[3], noise, cfg.sim);
  const std::string csv_a = CsvText(cfg);
  const std::string csv_b = CsvText(cfg);
  const bool ok = !trace_a.empty() && trace_a == trace_b && !csv_a.empty() && csv_a == csv_b;
  report.Line(8, ok, fmt::format("trace {} bytes identical: {}; csv {} bytes identical: {}", trace_a.size(),
                                 trace_a == trace_b, csv_a.size(), csv_a == csv_b));
}

}  // namespace

int main() {
  Report report;
  const std::vector<std::function<void(Report&)>> checks = {
      ChiSquare, SafeDistance, RiskSoundness, BruteForce, DegeneracyAndMonotonicity, Benchmark, Determinism};
  for (const auto& check : checks) {
    try {
      check(report);
    } catch (const std::exception& e) {
      fmt::print("check aborted: {}\n", e.what());
      ++report.failures;
    }
  }
  fmt::print("{} failing criteria\n", report.failures);
  return report.failures == 0 ? 0 : 1;
}

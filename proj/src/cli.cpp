#include "riskenv/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace riskenv::cli {

namespace {

void ConfigureLogging() {
  auto logger = spdlog::stderr_color_mt("riskenv");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("RISKENV_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("RISKENV_LOG='{}' not recognized, using info", level);
  }
}

std::ofstream OpenOutput(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  int jobs = 0;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> policies;
  std::vector<double> betas;
  std::vector<std::string> covariance;
};

void AddCommon(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration (defaults if omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_dir, "Output directory (overrides output_dir)");
  cmd->add_option("--jobs", o.jobs, "Worker threads for the sweep")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Master seed for scenario generation");
  cmd->add_option("--policies", o.policies, "Comma-separated policy names")->delimiter(',');
  cmd->add_option("--betas", o.betas, "Comma-separated risk levels")->delimiter(',');
  cmd->add_option("--covariance", o.covariance, "Covariance case(s), e.g. none,small,large")
      ->delimiter(',');
}

RunConfig ResolveConfig(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig::Defaults() : LoadRunConfig(o.config_path);
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.jobs > 0) cfg.jobs = o.jobs;
  if (o.seed) cfg.scenarios.master_seed = *o.seed;
  if (!o.policies.empty()) {
    cfg.policies.clear();
    for (const auto& name : o.policies) {
      const auto kind = ParsePolicyKind(name);
      if (!kind) throw ConfigError(fmt::format("--policies: unknown policy '{}'", name));
      cfg.policies.push_back(*kind);
    }
  }
  if (!o.betas.empty()) cfg.betas = o.betas;
  if (!o.covariance.empty()) {
    decltype(cfg.covariances) selected;
    for (const auto& name : o.covariance) {
      selected.emplace_back(name, cfg.Uncertainty(name).sigma);
    }
    cfg.covariances = std::move(selected);
  }
  cfg.Validate();
  return cfg;
}

int CmdEnvelope(const std::string& input_path, const CommonOptions& o) {
  const RunConfig cfg = ResolveConfig(o);
  const Json input = input_path == "-" ? Json::parse(std::cin) : ReadJsonFile(input_path);
  std::cout << EvaluateEnvelope(input, cfg).dump(2) << "\n";
  return kExitOk;
}

std::string TraceName(PolicyKind policy, const std::string& case_name, double beta,
                      std::size_t index) {
  return fmt::format("trace_{}_{}_beta{}_scenario{}.jsonl", PolicyName(policy), case_name, beta,
                     index);
}

int CmdSimulate(std::size_t index, const std::string& policy_name, double beta,
                const std::string& trace_path, const CommonOptions& o) {
  const RunConfig cfg = ResolveConfig(o);
  const auto kind = ParsePolicyKind(policy_name);
  if (!kind) throw ConfigError(fmt::format("--policy: unknown policy '{}'", policy_name));
  RiskLevel{beta};
  const std::string case_name = cfg.covariances.front().first;
  if (cfg.covariances.size() > 1) {
    spdlog::info("simulating covariance case '{}' (pass --covariance to choose)", case_name);
  }
  if (static_cast<int>(index) >= cfg.scenarios.count) {
    throw ConfigError(fmt::format("--scenario: index {} outside [0, {})", index, cfg.scenarios.count));
  }
  const auto scenarios = GenerateScenarios(cfg.scenarios, cfg.sim);
  const NoiseModel noise = NoiseModel::FromSpec(cfg.Uncertainty(case_name));
  const std::filesystem::path path =
      trace_path.empty() ? cfg.output_dir / TraceName(*kind, case_name, beta, index)
                         : std::filesystem::path(trace_path);
  std::ofstream out = OpenOutput(path);
  const EpisodeSummary summary =
      RunScenario(scenarios[index], index, {*kind, beta, cfg.simplex_samples}, noise, cfg.sim,
                  [&](const StepRecord& record) { out << ToJson(record).dump() << '\n'; });
  out.close();
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
  spdlog::info("trace with {} steps written to {}", summary.steps, path.string());
  std::cout << OutcomeName(summary.outcome) << "\n";
  return kExitOk;
}

int CmdBenchmark(const CommonOptions& o) {
  const RunConfig cfg = ResolveConfig(o);
  SweepRequest request;
  request.scenarios = GenerateScenarios(cfg.scenarios, cfg.sim);
  request.policies = cfg.policies;
  request.cases = cfg.Cases();
  request.betas = cfg.betas;
  request.simplex_samples = cfg.simplex_samples;
  request.sim = cfg.sim;
  request.jobs = cfg.jobs;
  spdlog::info("sweep: {} scenarios, {} policies, {} covariance cases, {} betas, {} jobs",
               request.scenarios.size(), request.policies.size(), request.cases.size(),
               request.betas.size(), request.jobs);
  const RateTable table = Sweep(request);

  const auto csv_path = cfg.output_dir / "rates.csv";
  std::ofstream csv = OpenOutput(csv_path);
  WriteRateCsv(table, csv);
  std::ofstream episodes = OpenOutput(cfg.output_dir / "episodes.json");
  episodes << ToJson(table).dump(1) << '\n';
  std::ofstream config = OpenOutput(cfg.output_dir / "config.json");
  config << RunConfigToJson(cfg).dump(2) << '\n';
  if (!csv || !episodes || !config) throw std::runtime_error("failed writing benchmark results");
  spdlog::info("rates written to {}", csv_path.string());
  return kExitOk;
}

int CmdValidate(const CommonOptions& o) {
  const RunConfig cfg = ResolveConfig(o);
  std::cout << RunConfigToJson(cfg).dump(2) << "\n";
  return kExitOk;
}

}  // namespace

Json EvaluateEnvelope(const Json& input, const RunConfig& defaults) {
  if (!input.is_object()) throw ConfigError("<root>: expected an object");
  static const std::set<std::string> kKeys = {"ego",  "others",         "covariance", "beta",
                                              "rss",  "contour_levels", "n_phi"};
  for (auto it = input.begin(); it != input.end(); ++it) {
    if (!kKeys.count(it.key())) throw ConfigError(fmt::format("{}: unknown key", it.key()));
  }
  for (const char* required : {"ego", "others", "covariance", "beta"}) {
    if (!input.contains(required)) throw ConfigError(fmt::format("{}: missing", required));
  }

  const RssConfig rss =
      input.contains("rss") ? ParseRssConfig(input["rss"], "rss", defaults.sim.rss) : defaults.sim.rss;
  const AgentState ego = ParseAgentState(input["ego"], "ego");
  const Json& others_json = input["others"];
  if (!others_json.is_array()) throw ConfigError("others: expected an array");
  std::vector<AgentState> others;
  for (std::size_t i = 0; i < others_json.size(); ++i) {
    others.push_back(ParseAgentState(others_json[i], fmt::format("others[{}]", i)));
  }
  if (!input["beta"].is_number()) throw ConfigError("beta: expected a number");
  const double beta_value = input["beta"].get<double>();
  if (!(beta_value >= 0.0 && beta_value <= 1.0)) throw ConfigError("beta: must lie in [0, 1]");

  UncertaintySpec spec;
  spec.sigma = ParseCovariance(input["covariance"], "covariance");
  spec.contour_levels = defaults.contour_levels;
  spec.n_phi = defaults.n_phi;
  if (input.contains("contour_levels")) {
    const Json& levels = input["contour_levels"];
    if (!levels.is_array()) throw ConfigError("contour_levels: expected an array of numbers");
    spec.contour_levels.clear();
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (!levels[i].is_number()) throw ConfigError(fmt::format("contour_levels[{}]: expected a number", i));
      spec.contour_levels.push_back(levels[i].get<double>());
    }
  }
  if (input.contains("n_phi")) {
    if (!input["n_phi"].is_number_integer()) throw ConfigError("n_phi: expected an integer");
    spec.n_phi = input["n_phi"].get<int>();
  }
  try {
    spec.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("covariance: {}", e.what()));
  }

  const ContourSet contours = ContourSet::Build(spec);
  const ProbabilisticAssessment a =
      AssessObservation(ego, others, contours, rss, RiskLevel(beta_value));
  return {{"deterministic_envelope", ToJson(a.deterministic)},
          {"probabilistic_envelope", ToJson(a.probabilistic)},
          {"per_agent_violation_expectation", a.violation_expectations},
          {"switch_decision", a.switch_to_safety}};
}

int Run(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Risk-bounded safety envelopes for a two-lane highway merge"};
  app.require_subcommand(1);

  CommonOptions envelope_opts, simulate_opts, benchmark_opts, validate_opts;
  std::string input_path;
  auto* envelope = app.add_subcommand("envelope", "Evaluate envelopes for one observed state");
  envelope->add_option("input", input_path, "Input JSON file ('-' for stdin)")->required();
  AddCommon(envelope, envelope_opts);

  std::size_t scenario = 0;
  std::string policy;
  double beta = 0.0;
  std::string trace_path;
  auto* simulate = app.add_subcommand("simulate", "Run one episode and write a JSON-lines trace");
  simulate->add_option("--scenario", scenario, "Scenario index");
  simulate->add_option("--policy", policy, "Policy name")->required();
  simulate->add_option("--beta", beta, "Risk level");
  simulate->add_option("--trace", trace_path, "Trace file (default: <out>/trace_*.jsonl)");
  AddCommon(simulate, simulate_opts);

  auto* benchmark = app.add_subcommand("benchmark", "Run the policy sweep and write rates.csv");
  AddCommon(benchmark, benchmark_opts);

  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults");
  AddCommon(validate, validate_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*envelope) return CmdEnvelope(input_path, envelope_opts);
    if (*simulate) return CmdSimulate(scenario, policy, beta, trace_path, simulate_opts);
    if (*benchmark) return CmdBenchmark(benchmark_opts);
    if (*validate) return CmdValidate(validate_opts);
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("invalid input: {}", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace riskenv::cli

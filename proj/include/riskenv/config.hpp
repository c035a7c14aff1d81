#ifndef RISKENV_CONFIG_HPP_
#define RISKENV_CONFIG_HPP_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskenv/bench.hpp"

namespace riskenv {

/// Objects keep their keys in insertion (file) order.
using Json = nlohmann::ordered_json;

/// Bad configuration or input document. The message starts with the JSON path
/// of the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  SimParams sim;
  ScenarioParams scenarios;
  std::vector<double> contour_levels = UncertaintySpec{}.contour_levels;
  int n_phi = UncertaintySpec{}.n_phi;
  // Named covariance cases, in sweep order.
  std::vector<std::pair<std::string, Mat4>> covariances;
  std::vector<PolicyKind> policies;
  std::vector<double> betas = {0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  int simplex_samples = 100;
  int jobs = 1;
  std::filesystem::path output_dir = "results";

  /// Defaults: all four policies and the none/small/large covariance cases.
  static RunConfig Defaults();

  UncertaintySpec Uncertainty(const std::string& case_name) const;
  std::vector<CovarianceCase> Cases() const;
  /// Throws ConfigError for out-of-range values.
  void Validate() const;
};

Mat4 SmallCovariance();
Mat4 LargeCovariance();

/// Reads a config document on top of the defaults. Every key is optional;
/// unknown keys are rejected.
RunConfig ParseRunConfig(const Json& doc);
RunConfig LoadRunConfig(const std::filesystem::path& path);
Json RunConfigToJson(const RunConfig& config);

/// Overrides the fields of `base` present in an "rss" object.
RssConfig ParseRssConfig(const Json& value, const std::string& path, RssConfig base);

/// Accepts a 16-element row-major matrix or a 4-element diagonal.
Mat4 ParseCovariance(const Json& value, const std::string& path);

Json ToJson(const AgentState& s);
Json ToJson(const Envelope& e);
Json ToJson(const StepRecord& record);
Json ToJson(const RateTable& table);
AgentState ParseAgentState(const Json& value, const std::string& path);

/// Parses a JSON document from a file; syntax errors become ConfigError.
Json ReadJsonFile(const std::filesystem::path& path);

}  // namespace riskenv

#endif  // RISKENV_CONFIG_HPP_

#ifndef RISKENV_CLI_HPP_
#define RISKENV_CLI_HPP_

#include "riskenv/config.hpp"

namespace riskenv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Single-state evaluation. `input` holds ego, others, covariance and beta,
/// plus optional rss, contour_levels and n_phi overrides.
Json EvaluateEnvelope(const Json& input, const RunConfig& defaults);

/// Entry point of the `riskenv` executable; returns the process exit code.
int Run(int argc, char** argv);

}  // namespace riskenv::cli

#endif  // RISKENV_CLI_HPP_

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jumplab/config.hpp"

namespace jumplab::runner {

inline constexpr const char* kVersion = "0.1.0";

struct RunResult {
  int exit_code = 0;
  std::vector<std::string> files;  // paths written, relative to out dir
};

// Executes the configured experiment and writes its reports into `out_dir`
// (created if needed). Every byte written is a deterministic function of
// (config, seed); wall time goes to stderr only. Module failures are captured
// into failure.json with a nonzero exit code.
RunResult run_experiment(config::ExperimentConfig cfg,
                         const std::string& out_dir,
                         std::optional<std::uint64_t> seed_override = {},
                         std::optional<int> threads_override = {});

// The commuting-SPD square-root gap suite behind the `lemma21` experiment:
// seeded pairs A = U D_A U^T, B = U D_B U^T with a shared random orthogonal
// basis and eigenvalues in [sqrt(lambda)*eig_lo_factor, eig_hi].
struct SqrtGapSuite {
  long total = 0;
  long holds = 0;
  double max_violation = 0.0;       // max(lhs - rhs) over pairs
  double max_trace_rel_err = 0.0;   // trace identity, relative
};

SqrtGapSuite run_sqrt_gap_suite(const config::Lemma21Config& cfg,
                                std::uint64_t seed);

}  // namespace jumplab::runner

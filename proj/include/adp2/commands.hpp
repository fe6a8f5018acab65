#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adp2/config.hpp"

namespace adp2 {

// Command-line overrides applied on top of the parsed config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mu;      // "auto" or a number in (0, 1)
  std::optional<std::string> output;  // directory prepended to output paths
};

ExperimentConfig load_config(const std::string& path, const CliOverrides& overrides);

// Prints the calibration bundle and the feasibility table. Returns 0 when the
// budget is feasible, 3 when not.
int cmd_calibrate(const ExperimentConfig& c);

// Runs the experiment, writes the trace CSV and the report JSON atomically,
// prints a one-screen summary.
int cmd_run(const ExperimentConfig& c);

// Reads two trace files and prints a CSV comparison table
// (metric, a, b, ratio).
int cmd_compare(const std::string& trace_a, const std::string& trace_b);

// Runs the config under `runs` consecutive seeds in parallel, one thread per
// run, each writing suffixed trace/report files.
int cmd_sweep(const ExperimentConfig& c, int runs);

}  // namespace adp2

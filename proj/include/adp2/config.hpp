#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adp2/engine.hpp"
#include "adp2/task.hpp"
#include "adp2/topology.hpp"

namespace adp2 {

inline constexpr int kConfigSchemaVersion = 1;

struct GraphConfig {
  enum class Kind { ring, full_bipartite, custom };
  Kind kind = Kind::full_bipartite;
  std::vector<std::pair<int, int>> edges;  // custom only
};

std::string to_string(GraphConfig::Kind k);

// Three mutually exclusive noise modes: off (sigma2 = 0, no accounting), raw
// (fixed per-coordinate stddev, no accounting), calibrated (sigma2 derived
// from an (eps, delta) target, accountant active).
struct PrivacyConfig {
  enum class Mode { off, raw, calibrated };
  Mode mode = Mode::off;
  double sigma = 0.0;
  double eps = 0.0;
  double delta = 0.0;
  bool mu_auto = true;
  double mu = 0.0;
};

struct OutputConfig {
  std::string trace = "trace.csv";
  std::string report = "report.json";
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::adpsgd;
  ActivationMode activation = ActivationMode::physical;
  TaskSpec task;
  GraphConfig graph;
  bool eta_auto = true;  // eta = K/(B sqrt(T))
  double eta = 0.0;      // used when eta_auto is false
  int B = 1;
  long T = 100;
  long probe_stride = 100;
  std::optional<long> tau_max;
  bool interleave = false;
  PrivacyConfig privacy;
  ScenarioSpec scenario;
  TimingSpec timing;
  OutputConfig output;
};

// Equality is canonical-form equality: two configs are equal when they
// serialize to the same document.
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
inline bool operator!=(const ExperimentConfig& a, const ExperimentConfig& b) {
  return !(a == b);
}

// Parses and fully validates a config. Throws ConfigError carrying the
// complete list of problems, not just the first one found.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Canonical serialized form with every default filled in; stable across
// serialize/parse round trips.
std::string serialize_config(const ExperimentConfig& c);

// FNV-1a hash of the canonical form, 16 hex digits. Recorded in trace headers
// so a trace can be matched to the exact config that produced it.
std::string config_hash(const ExperimentConfig& c);

Task build_task(const ExperimentConfig& c);
CommGraph build_graph(const ExperimentConfig& c);

// Batch size the engine will actually use (large_batch folds batch_mult in).
int effective_batch(const ExperimentConfig& c);

// Resolves eta ("auto" rule), the noise mode (raw sigma or calibration
// against the task's clip bound and smallest shard), and timing into engine
// options. Throws InfeasibleError when a calibrated budget has no feasible
// sigma2, listing the closest miss.
RunOptions build_run_options(const ExperimentConfig& c, const Task& task);

}  // namespace adp2

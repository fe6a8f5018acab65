#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adp2/vec.hpp"

namespace adp2 {

constexpr int kTraceSchemaVersion = 1;

enum class TraceEvent { update, barrier };

std::string to_string(TraceEvent e);

// One line of the trace CSV. loss/grad_norm_sq are filled only on probe rows
// (has_metrics). worker is -1 on barrier rows.
struct TraceRow {
  double virtual_time = 0.0;
  long global_iter = 0;
  int worker = -1;
  TraceEvent event = TraceEvent::update;
  bool has_metrics = false;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  long staleness = 0;
  double eps_spent = 0.0;
};

// Snapshot of the averaged model at a probe, kept in memory for analysis (not
// serialized to CSV).
struct TraceProbe {
  long t = 0;
  double virtual_time = 0.0;
  Vec theta;
  double eps_spent = 0.0;
};

struct TraceSummary {
  Vec initial_theta;
  Vec final_theta;
  int batch_size = 0;
  double noise_sigma2 = 0.0;
  double total_virtual_time = 0.0;
  long updates = 0;
  double total_compute_time = 0.0;
  long max_staleness = 0;
  double mean_staleness = 0.0;
  double final_eps_spent = 0.0;
  bool calibrated = false;
  long ledger_steps = 0;
  double ledger_rdp_total = 0.0;
  double ledger_eps = 0.0;  // total RDP converted at (alpha, delta)
  double eta = 0.0;
  std::string eta_rule = "fixed";
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  std::vector<TraceProbe> probes;
  TraceSummary summary;
};

struct ThroughputSummary {
  long updates = 0;
  double wall_time = 0.0;
  double updates_per_time = 0.0;  // NaN when wall_time is zero (logical mode)
  double mean_staleness = 0.0;
  long max_staleness = 0;
  double mean_compute_per_update = 0.0;
};

ThroughputSummary throughput_summary(const TrainingTrace& trace);

// CSV serialization. Doubles are printed with %.17g so files round-trip and
// byte-compare across runs. Writes are atomic (temp file + rename).
void write_trace_csv(const TrainingTrace& trace, const std::string& path,
                     const std::string& config_hash, std::uint64_t seed);

struct ParsedTrace {
  int schema_version = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
};

ParsedTrace read_trace_csv(const std::string& path);

// Atomic text-file write used for traces and reports.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string format_double(double v);  // %.17g, C locale

}  // namespace adp2

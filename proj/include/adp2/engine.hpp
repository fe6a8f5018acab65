#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "adp2/privacy.hpp"
#include "adp2/task.hpp"
#include "adp2/topology.hpp"
#include "adp2/trace.hpp"

namespace adp2 {

enum class RunMode { adpsgd, sync };
enum class ActivationMode { physical, logical };

std::string to_string(RunMode m);
std::string to_string(ActivationMode m);

struct ScenarioSpec {
  enum class Kind { none, random_slow, fixed_straggler, large_batch };
  Kind kind = Kind::none;
  double factor = 1.0;      // slowdown multiplier (random_slow, fixed_straggler)
  bool per_iteration = true;  // random_slow: redraw the slow worker each iteration
  int worker = 0;           // fixed_straggler target
  double batch_mult = 1.0;  // large_batch
  double lr_mult = 1.0;     // large_batch
};

std::string to_string(ScenarioSpec::Kind k);

struct TimingSpec {
  double base_compute = 1.0;   // t_c, one minibatch at multiplier 1
  double comm_time = 0.0;      // gossip exchange duration appended to each cycle
  double allreduce_time = 0.1; // t_a, added after the slowest worker each SYNC round
  double jitter = 0.0;         // compute time factor 1 + jitter*U[0,1)
};

struct RunOptions {
  RunMode mode = RunMode::adpsgd;
  ActivationMode activation = ActivationMode::physical;
  double eta = 0.01;
  std::string eta_rule = "fixed";  // fixed | auto (K/(B sqrt(T)))
  int B = 1;
  long T = 1;  // total updates; SYNC needs T divisible by K
  ScenarioSpec scenario;
  TimingSpec timing;
  std::uint64_t seed = 0;
  long probe_stride = 100;
  std::optional<long> tau_max;  // bounded-staleness guard
  bool interleave = false;      // update before averaging instead of after
  double noise_sigma2 = 0.0;
  std::optional<PrivacyParams> privacy;  // present in calibrated mode
  Vec init;                              // empty = zeros(d)
};

// Compute-time multiplier for one (worker, iteration). Stateless in the
// iteration index so schedule order cannot perturb the draw: the slowed worker
// of iteration i is hashed from (seed, i).
double compute_multiplier(const ScenarioSpec& scenario, int K, int worker, long iteration,
                          std::uint64_t seed);

// Folds large_batch into (B, eta); other kinds pass through untouched.
RunOptions apply_scenario(RunOptions opts);

TrainingTrace run_adpsgd(const Task& task, const CommGraph& graph, const RunOptions& opts);
TrainingTrace run_sync(const Task& task, const CommGraph& graph, const RunOptions& opts);
TrainingTrace run(const Task& task, const CommGraph& graph, const RunOptions& opts);

}  // namespace adp2

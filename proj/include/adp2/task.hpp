#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adp2/rng.hpp"
#include "adp2/vec.hpp"

namespace adp2 {

enum class TaskKind { quadratic, logistic, mlp };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

// One data point. Quadratic tasks use x as the sample's center and ignore y;
// logistic uses y in {-1, +1}; mlp uses a real-valued y.
struct Sample {
  Vec x;
  double y = 0.0;
};

struct DataShard {
  int worker_id = 0;
  std::vector<Sample> samples;
  int size() const { return static_cast<int>(samples.size()); }
};

// Generator knobs plus structural parameters. For mlp, d is derived from
// input_dim (8 hidden units, tanh, scalar output).
struct TaskSpec {
  TaskKind kind = TaskKind::quadratic;
  int d = 1;
  int K = 2;
  std::vector<int> shard_sizes;  // length K, all >= 1
  std::uint64_t gen_seed = 0;
  bool clip_enabled = true;
  double clip_bound = 1.0;  // G
  double center_base = 0.0;
  double center_spread = 1.0;
  double sample_spread = 1.0;
  int input_dim = 2;        // mlp only
  double label_noise = 0.1;  // logistic margin noise / mlp target noise
  std::vector<double> weights;  // p_k; empty means uniform 1/K
};

// Within-worker (grad_var) and across-worker (worker_var) gradient variance
// bounds. Exact for the quadratic, plug-in sampled otherwise.
struct VarianceStats {
  double grad_var = 0.0;    // bound on E_xi ||grad f(w;xi) - grad F_k(w)||^2
  double worker_var = 0.0;  // bound on E_k ||grad F_k(w) - grad F(w)||^2
  bool estimated = false;
};

// Rescale g into the ball of radius G. Identity when ||g|| <= G.
Vec clip(const Vec& g, double G);

// B distinct indices drawn uniformly without replacement, returned sorted.
std::vector<int> sample_minibatch(const DataShard& shard, int B, SeededRng& rng);

class Task {
 public:
  static Task generate(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  TaskKind kind() const { return spec_.kind; }
  int d() const { return spec_.d; }
  int K() const { return spec_.K; }
  const DataShard& shard(int k) const;
  int min_shard_size() const;  // n_(1)
  double weight(int k) const { return weights_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& weights() const { return weights_; }

  bool clip_enabled() const { return spec_.clip_enabled; }
  double clip_bound() const { return spec_.clip_bound; }
  double lipschitz() const { return lipschitz_; }
  bool lipschitz_estimated() const { return lipschitz_estimated_; }
  const VarianceStats& variance() const { return variance_; }

  bool has_optimum() const { return optimum_.has_value(); }
  const Vec& optimum() const;
  double optimal_value() const;

  double loss(const Vec& w) const;
  double shard_loss(int k, const Vec& w) const;
  // Raw gradient of one sample's loss, before any clipping.
  Vec per_sample_gradient(const Vec& w, int worker, int sample) const;
  // Mean of (optionally clipped) per-sample gradients over the batch.
  Vec minibatch_gradient(const Vec& w, int worker, const std::vector<int>& batch) const;
  // Exact shard gradient over all of worker k's data, never clipped.
  Vec shard_gradient(int k, const Vec& w) const;
  // Exact gradient of F = sum_k p_k F_k over all data, never clipped.
  Vec full_gradient(const Vec& w) const;

  std::vector<int> draw_minibatch(int worker, int B, SeededRng& rng) const {
    return sample_minibatch(shard(worker), B, rng);
  }

 private:
  Task() = default;
  void compute_constants();

  TaskSpec spec_;
  std::vector<DataShard> shards_;
  std::vector<double> weights_;
  double lipschitz_ = 1.0;
  bool lipschitz_estimated_ = false;
  VarianceStats variance_;
  std::optional<Vec> optimum_;
  std::optional<double> optimal_value_;
};

}  // namespace adp2

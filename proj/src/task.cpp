#include "adp2/task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace adp2 {

namespace {

constexpr int kHidden = 8;

int mlp_param_count(int input_dim) { return kHidden * input_dim + 2 * kHidden + 1; }

// Parameter layout: W1 row-major (kHidden x in), b1, w2, b2.
struct MlpView {
  const double* w1;
  const double* b1;
  const double* w2;
  const double* b2;
  int in;
  explicit MlpView(const Vec& w, int input_dim)
      : w1(w.data()),
        b1(w.data() + kHidden * input_dim),
        w2(w.data() + kHidden * input_dim + kHidden),
        b2(w.data() + kHidden * input_dim + 2 * kHidden),
        in(input_dim) {}
};

double mlp_forward(const MlpView& m, const Vec& x, double h[kHidden]) {
  double out = m.b2[0];
  for (int j = 0; j < kHidden; ++j) {
    double z = m.b1[j];
    const double* row = m.w1 + j * m.in;
    for (int i = 0; i < m.in; ++i) z += row[i] * x[static_cast<std::size_t>(i)];
    h[j] = std::tanh(z);
    out += m.w2[j] * h[j];
  }
  return out;
}

double stable_sigmoid(double z) {
  // 1 / (1 + exp(-z)) without overflow on either tail.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::quadratic: return "quadratic";
    case TaskKind::logistic: return "logistic";
    case TaskKind::mlp: return "mlp";
  }
  throw std::logic_error("unreachable task kind");
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "quadratic") return TaskKind::quadratic;
  if (s == "logistic") return TaskKind::logistic;
  if (s == "mlp") return TaskKind::mlp;
  throw std::invalid_argument("unknown task kind: " + s);
}

Vec clip(const Vec& g, double G) {
  if (!(G > 0.0)) throw std::domain_error("clip bound must be positive");
  const double n = norm(g);
  if (n <= G) return g;
  Vec out = g;
  scale(out, G / n);
  return out;
}

std::vector<int> sample_minibatch(const DataShard& shard, int B, SeededRng& rng) {
  const int n = shard.size();
  if (B < 1 || B > n)
    throw std::invalid_argument("invalid batch size " + std::to_string(B) +
                                " for shard of size " + std::to_string(n));
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < B; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<int> batch(pool.begin(), pool.begin() + B);
  std::sort(batch.begin(), batch.end());
  return batch;
}

Task Task::generate(const TaskSpec& spec) {
  Task t;
  t.spec_ = spec;
  if (spec.K < 2) throw std::invalid_argument("task needs K >= 2 workers");
  if (static_cast<int>(spec.shard_sizes.size()) != spec.K)
    throw std::invalid_argument("shard_sizes must have length K");
  for (int n : spec.shard_sizes)
    if (n < 1) throw std::invalid_argument("every shard must be nonempty");

  if (spec.kind == TaskKind::mlp) {
    if (spec.input_dim < 1) throw std::invalid_argument("mlp input_dim must be >= 1");
    t.spec_.d = mlp_param_count(spec.input_dim);
  } else if (spec.d < 1) {
    throw std::invalid_argument("dimension must be >= 1");
  }

  if (spec.weights.empty()) {
    t.weights_.assign(static_cast<std::size_t>(spec.K), 1.0 / spec.K);
  } else {
    if (static_cast<int>(spec.weights.size()) != spec.K)
      throw std::invalid_argument("weights must have length K");
    double sum = 0.0;
    for (double p : spec.weights) {
      if (!(p > 0.0)) throw std::invalid_argument("weights must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("weights must sum to 1 within 1e-12");
    t.weights_ = spec.weights;
  }

  SeededRng gen(spec.gen_seed);
  const int d = t.spec_.d;
  const int in = (spec.kind == TaskKind::mlp) ? spec.input_dim : d;

  // Teacher parameters for the label-generating model (logistic and mlp).
  Vec teacher;
  if (spec.kind != TaskKind::quadratic) {
    auto ts = gen.stream("teacher");
    teacher.resize(static_cast<std::size_t>(spec.kind == TaskKind::logistic ? d : mlp_param_count(in)));
    for (double& v : teacher) v = ts.normal();
    if (spec.kind == TaskKind::mlp) scale(teacher, 0.7);
  }

  t.shards_.resize(static_cast<std::size_t>(spec.K));
  for (int k = 0; k < spec.K; ++k) {
    auto cs = gen.stream("shard_center", static_cast<std::uint64_t>(k));
    auto ss = gen.stream("shard_samples", static_cast<std::uint64_t>(k));
    Vec center(static_cast<std::size_t>(in));
    for (double& v : center) v = spec.center_base + spec.center_spread * cs.normal();

    DataShard& shard = t.shards_[static_cast<std::size_t>(k)];
    shard.worker_id = k;
    shard.samples.resize(static_cast<std::size_t>(spec.shard_sizes[static_cast<std::size_t>(k)]));
    for (auto& sample : shard.samples) {
      sample.x.resize(static_cast<std::size_t>(in));
      for (std::size_t i = 0; i < sample.x.size(); ++i)
        sample.x[i] = center[i] + spec.sample_spread * ss.normal();
      switch (spec.kind) {
        case TaskKind::quadratic:
          sample.y = 0.0;
          break;
        case TaskKind::logistic: {
          const double margin = dot(teacher, sample.x) + spec.label_noise * ss.normal();
          sample.y = margin >= 0.0 ? 1.0 : -1.0;
          break;
        }
        case TaskKind::mlp: {
          MlpView view(teacher, in);
          double h[kHidden];
          sample.y = mlp_forward(view, sample.x, h) + spec.label_noise * ss.normal();
          break;
        }
      }
    }
  }

  t.compute_constants();
  return t;
}

const DataShard& Task::shard(int k) const {
  if (k < 0 || k >= K()) throw std::out_of_range("worker index out of range");
  return shards_[static_cast<std::size_t>(k)];
}

int Task::min_shard_size() const {
  int n = shards_.front().size();
  for (const auto& s : shards_) n = std::min(n, s.size());
  return n;
}

const Vec& Task::optimum() const {
  if (!optimum_) throw std::logic_error("optimum is only known for the quadratic task");
  return *optimum_;
}

double Task::optimal_value() const {
  if (!optimal_value_) throw std::logic_error("optimal value is only known for the quadratic task");
  return *optimal_value_;
}

double Task::shard_loss(int k, const Vec& w) const {
  const DataShard& s = shard(k);
  double acc = 0.0;
  switch (spec_.kind) {
    case TaskKind::quadratic:
      for (const auto& sample : s.samples) acc += 0.5 * norm_sq(sub(w, sample.x));
      break;
    case TaskKind::logistic:
      for (const auto& sample : s.samples) {
        const double z = dot(w, sample.x);
        // log(1 + exp(-y z)) evaluated stably for both signs of the exponent.
        const double m = -sample.y * z;
        acc += m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
      }
      break;
    case TaskKind::mlp: {
      MlpView view(w, spec_.input_dim);
      double h[kHidden];
      for (const auto& sample : s.samples) {
        const double e = mlp_forward(view, sample.x, h) - sample.y;
        acc += 0.5 * e * e;
      }
      break;
    }
  }
  return acc / s.size();
}

double Task::loss(const Vec& w) const {
  if (static_cast<int>(w.size()) != d()) throw std::invalid_argument("model dimension mismatch");
  double acc = 0.0;
  for (int k = 0; k < K(); ++k) acc += weight(k) * shard_loss(k, w);
  return acc;
}

Vec Task::per_sample_gradient(const Vec& w, int worker, int sample) const {
  const DataShard& s = shard(worker);
  if (sample < 0 || sample >= s.size()) throw std::out_of_range("sample index out of range");
  if (static_cast<int>(w.size()) != d()) throw std::invalid_argument("model dimension mismatch");
  if (!all_finite(w)) throw std::invalid_argument("model vector must be finite");
  const Sample& p = s.samples[static_cast<std::size_t>(sample)];

  switch (spec_.kind) {
    case TaskKind::quadratic:
      return sub(w, p.x);
    case TaskKind::logistic: {
      const double z = dot(w, p.x);
      const double coeff = -p.y * stable_sigmoid(-p.y * z);
      Vec g = p.x;
      scale(g, coeff);
      return g;
    }
    case TaskKind::mlp: {
      MlpView view(w, spec_.input_dim);
      double h[kHidden];
      const double e = mlp_forward(view, p.x, h) - p.y;
      Vec g(w.size(), 0.0);
      double* g1 = g.data();
      double* gb1 = g.data() + kHidden * view.in;
      double* g2 = g.data() + kHidden * view.in + kHidden;
      double* gb2 = g.data() + kHidden * view.in + 2 * kHidden;
      gb2[0] = e;
      for (int j = 0; j < kHidden; ++j) {
        g2[j] = e * h[j];
        const double back = e * view.w2[j] * (1.0 - h[j] * h[j]);
        gb1[j] = back;
        double* row = g1 + j * view.in;
        for (int i = 0; i < view.in; ++i) row[i] = back * p.x[static_cast<std::size_t>(i)];
      }
      return g;
    }
  }
  throw std::logic_error("unreachable task kind");
}

Vec Task::minibatch_gradient(const Vec& w, int worker, const std::vector<int>& batch) const {
  if (batch.empty()) throw std::invalid_argument("empty minibatch");
  Vec acc = zeros(w.size());
  for (int idx : batch) {
    Vec g = per_sample_gradient(w, worker, idx);
    if (spec_.clip_enabled) g = clip(g, spec_.clip_bound);
    axpy(1.0, g, acc);
  }
  scale(acc, 1.0 / static_cast<double>(batch.size()));
  return acc;
}

Vec Task::shard_gradient(int k, const Vec& w) const {
  const DataShard& s = shard(k);
  Vec acc = zeros(w.size());
  for (int i = 0; i < s.size(); ++i) axpy(1.0, per_sample_gradient(w, k, i), acc);
  scale(acc, 1.0 / s.size());
  return acc;
}

Vec Task::full_gradient(const Vec& w) const {
  Vec acc = zeros(w.size());
  for (int k = 0; k < K(); ++k) axpy(weight(k), shard_gradient(k, w), acc);
  return acc;
}

void Task::compute_constants() {
  const int d = spec_.d;

  if (spec_.kind == TaskKind::quadratic) {
    // grad F_k(w) = w - mean_k, so everything below is exact and w-independent.
    std::vector<Vec> shard_means;
    shard_means.reserve(shards_.size());
    for (const auto& s : shards_) {
      Vec m = zeros(static_cast<std::size_t>(d));
      for (const auto& sample : s.samples) axpy(1.0, sample.x, m);
      scale(m, 1.0 / s.size());
      shard_means.push_back(std::move(m));
    }
    Vec wstar = zeros(static_cast<std::size_t>(d));
    for (int k = 0; k < K(); ++k) axpy(weight(k), shard_means[static_cast<std::size_t>(k)], wstar);

    double grad_var = 0.0;
    for (int k = 0; k < K(); ++k) {
      const auto& s = shards_[static_cast<std::size_t>(k)];
      double v = 0.0;
      for (const auto& sample : s.samples)
        v += norm_sq(sub(sample.x, shard_means[static_cast<std::size_t>(k)]));
      grad_var = std::max(grad_var, v / s.size());
    }
    double worker_var = 0.0;
    for (int k = 0; k < K(); ++k)
      worker_var += norm_sq(sub(shard_means[static_cast<std::size_t>(k)], wstar)) / K();

    lipschitz_ = 1.0;
    lipschitz_estimated_ = false;
    variance_ = {grad_var, worker_var, false};
    optimal_value_ = loss(wstar);
    optimum_ = std::move(wstar);
    return;
  }

  if (spec_.kind == TaskKind::logistic) {
    // Hessian of F_k is (1/n_k) sum s(1-s) x x^T with s(1-s) <= 1/4, so the
    // trace bound (1/(4 n_k)) sum ||x||^2 is a valid smoothness constant.
    double worst = 0.0;
    for (const auto& s : shards_) {
      double acc = 0.0;
      for (const auto& sample : s.samples) acc += norm_sq(sample.x);
      worst = std::max(worst, acc / (4.0 * s.size()));
    }
    lipschitz_ = std::max(worst, 1e-12);
    lipschitz_estimated_ = false;
  } else {
    // No clean closed form for the mlp; estimate the largest Hessian eigenvalue
    // by power iteration on central-difference Hessian-vector products at a few
    // random points and keep a margin.
    SeededRng probe(SeededRng::derive(spec_.gen_seed, "lipschitz_probe", 0));
    double lmax = 0.0;
    const double fd = 1e-4;
    for (int trial = 0; trial < 5; ++trial) {
      Vec w(static_cast<std::size_t>(d));
      for (double& v : w) v = probe.normal() * 0.5;
      Vec v(static_cast<std::size_t>(d));
      for (double& c : v) c = probe.normal();
      double lambda = 0.0;
      for (int it = 0; it < 25; ++it) {
        const double vn = norm(v);
        if (vn == 0.0) break;
        scale(v, 1.0 / vn);
        Vec wp = w, wm = w;
        axpy(fd, v, wp);
        axpy(-fd, v, wm);
        Vec hv = sub(full_gradient(wp), full_gradient(wm));
        scale(hv, 1.0 / (2.0 * fd));
        lambda = norm(hv);
        v = std::move(hv);
      }
      lmax = std::max(lmax, lambda);
    }
    lipschitz_ = std::max(1.5 * lmax, 1e-12);
    lipschitz_estimated_ = true;
  }

  // Plug-in variance estimates: enumerate every sample's gradient at a set of
  // random probe points and take the worst case over probes.
  SeededRng probe(SeededRng::derive(spec_.gen_seed, "variance_probe", 0));
  double grad_var = 0.0;
  double worker_var = 0.0;
  const int probes = 20;
  for (int r = 0; r < probes; ++r) {
    Vec w(static_cast<std::size_t>(d));
    for (double& v : w) v = probe.normal();
    Vec mean_full = full_gradient(w);
    double wv = 0.0;
    for (int k = 0; k < K(); ++k) {
      const auto& s = shards_[static_cast<std::size_t>(k)];
      Vec mean_k = shard_gradient(k, w);
      double v = 0.0;
      for (int i = 0; i < s.size(); ++i)
        v += norm_sq(sub(per_sample_gradient(w, k, i), mean_k));
      grad_var = std::max(grad_var, v / s.size());
      wv += norm_sq(sub(mean_k, mean_full)) / K();
    }
    worker_var = std::max(worker_var, wv);
  }
  variance_ = {grad_var, worker_var, true};
}

}  // namespace adp2

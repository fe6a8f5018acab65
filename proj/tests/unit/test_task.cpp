#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "adp2/rng.hpp"
#include "adp2/task.hpp"
#include "adp2/vec.hpp"

using namespace adp2;

namespace {

TaskSpec quadratic_spec(int d, int K, int shard_size) {
  TaskSpec s;
  s.kind = TaskKind::quadratic;
  s.d = d;
  s.K = K;
  s.shard_sizes.assign(static_cast<std::size_t>(K), shard_size);
  s.gen_seed = 11;
  s.clip_enabled = false;
  return s;
}

// Central finite difference of the per-sample loss is not directly exposed,
// so probe the gradient field through shard_loss restricted to one-sample
// shards is overkill; instead check grad F against finite differences of the
// full loss, which exercises the same per-sample gradients.
double fd_partial(const Task& task, const Vec& w, std::size_t i, double h) {
  Vec wp = w, wm = w;
  wp[i] += h;
  wm[i] -= h;
  return (task.loss(wp) - task.loss(wm)) / (2.0 * h);
}

void check_gradient_matches_fd(const Task& task, SeededRng& rng, double tol) {
  Vec w(static_cast<std::size_t>(task.d()));
  for (double& v : w) v = 0.5 * rng.normal();
  const Vec g = task.full_gradient(w);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double fd = fd_partial(task, w, i, 1e-6);
    const double scale = std::max({1.0, std::abs(fd), std::abs(g[i])});
    CHECK(std::abs(g[i] - fd) / scale < tol);
  }
}

}  // namespace

TEST_CASE("degenerate quadratic has exact closed forms") {
  TaskSpec s = quadratic_spec(3, 4, 8);
  s.center_base = 2.0;
  s.center_spread = 0.0;
  s.sample_spread = 0.0;
  const Task task = Task::generate(s);

  const Vec c(3, 2.0);
  Vec w{1.0, -1.0, 4.0};
  // F(w) = 1/2 ||w - c||^2 with every sample equal to c.
  const double expected = 0.5 * norm_sq(sub(w, c));
  CHECK(task.loss(w) == doctest::Approx(expected).epsilon(1e-14));
  const Vec g = task.full_gradient(w);
  for (int i = 0; i < 3; ++i) CHECK(g[static_cast<std::size_t>(i)] == doctest::Approx(w[static_cast<std::size_t>(i)] - 2.0).epsilon(1e-14));

  REQUIRE(task.has_optimum());
  for (double v : task.optimum()) CHECK(v == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(task.optimal_value() == doctest::Approx(0.0));
  CHECK(task.lipschitz() == 1.0);
  CHECK_FALSE(task.lipschitz_estimated());
  CHECK(task.variance().grad_var == doctest::Approx(0.0));
  CHECK(task.variance().worker_var == doctest::Approx(0.0));
  CHECK_FALSE(task.variance().estimated);
}

TEST_CASE("quadratic optimum is the weighted mean of shard means") {
  TaskSpec s = quadratic_spec(2, 3, 5);
  s.center_spread = 1.5;
  s.sample_spread = 0.7;
  const Task task = Task::generate(s);

  Vec wstar = zeros(2);
  for (int k = 0; k < 3; ++k) {
    Vec mean = zeros(2);
    for (const auto& sample : task.shard(k).samples) axpy(1.0, sample.x, mean);
    scale(mean, 1.0 / task.shard(k).size());
    axpy(task.weight(k), mean, wstar);
  }
  REQUIRE(task.has_optimum());
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(task.optimum()[i] == doctest::Approx(wstar[i]).epsilon(1e-12));

  // With distinct shard centers the across-worker variance must be positive.
  CHECK(task.variance().worker_var > 0.0);
  const Vec gstar = task.full_gradient(task.optimum());
  CHECK(norm_sq(gstar) < 1e-24);
}

TEST_CASE("gradients match finite differences for all task kinds") {
  SeededRng rng(21);

  TaskSpec q = quadratic_spec(3, 2, 6);
  q.center_spread = 1.0;
  q.sample_spread = 0.8;
  const Task quad = Task::generate(q);
  for (int trial = 0; trial < 10; ++trial) check_gradient_matches_fd(quad, rng, 1e-7);

  TaskSpec l;
  l.kind = TaskKind::logistic;
  l.d = 4;
  l.K = 2;
  l.shard_sizes = {6, 9};
  l.gen_seed = 3;
  l.clip_enabled = false;
  const Task logi = Task::generate(l);
  for (int trial = 0; trial < 10; ++trial) check_gradient_matches_fd(logi, rng, 1e-5);

  TaskSpec m;
  m.kind = TaskKind::mlp;
  m.input_dim = 2;
  m.K = 2;
  m.shard_sizes = {5, 5};
  m.gen_seed = 4;
  m.clip_enabled = false;
  const Task mlp = Task::generate(m);
  CHECK(mlp.d() == 8 * 2 + 2 * 8 + 1);
  for (int trial = 0; trial < 10; ++trial) check_gradient_matches_fd(mlp, rng, 1e-5);
}

TEST_CASE("logistic loss at zero is log 2") {
  TaskSpec l;
  l.kind = TaskKind::logistic;
  l.d = 3;
  l.K = 2;
  l.shard_sizes = {7, 7};
  l.gen_seed = 5;
  const Task task = Task::generate(l);
  CHECK(task.loss(zeros(3)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  for (const auto& sample : task.shard(0).samples)
    CHECK((sample.y == 1.0 || sample.y == -1.0));
}

TEST_CASE("logistic smoothness bound dominates finite-difference curvature") {
  TaskSpec l;
  l.kind = TaskKind::logistic;
  l.d = 3;
  l.K = 2;
  l.shard_sizes = {8, 8};
  l.gen_seed = 6;
  const Task task = Task::generate(l);
  CHECK_FALSE(task.lipschitz_estimated());

  // Manual evaluation of max_k (1/(4 n_k)) sum ||x||^2.
  double worst = 0.0;
  for (int k = 0; k < 2; ++k) {
    double acc = 0.0;
    for (const auto& sample : task.shard(k).samples) acc += norm_sq(sample.x);
    worst = std::max(worst, acc / (4.0 * task.shard(k).size()));
  }
  CHECK(task.lipschitz() == doctest::Approx(worst).epsilon(1e-12));
}

TEST_CASE("mlp smoothness estimate bounds sampled curvature") {
  TaskSpec m;
  m.kind = TaskKind::mlp;
  m.input_dim = 2;
  m.K = 2;
  m.shard_sizes = {6, 6};
  m.gen_seed = 7;
  const Task task = Task::generate(m);
  CHECK(task.lipschitz_estimated());
  CHECK(task.lipschitz() > 0.0);

  SeededRng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Vec w(static_cast<std::size_t>(task.d()));
    for (double& v : w) v = 0.4 * rng.normal();
    Vec v(static_cast<std::size_t>(task.d()));
    for (double& x : v) x = rng.normal();
    scale(v, 1.0 / norm(v));
    Vec wp = w, wm = w;
    axpy(1e-4, v, wp);
    axpy(-1e-4, v, wm);
    Vec hv = sub(task.full_gradient(wp), task.full_gradient(wm));
    scale(hv, 1.0 / 2e-4);
    CHECK(norm(hv) <= task.lipschitz() * 1.01);
  }
}

TEST_CASE("clip rescales exactly onto the ball") {
  Vec g{3.0, 4.0};
  const Vec c = clip(g, 1.0);
  CHECK(norm(c) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(c[1] == doctest::Approx(0.8).epsilon(1e-15));

  Vec small{0.1, -0.2};
  const Vec same = clip(small, 1.0);
  CHECK(same[0] == 0.1);
  CHECK(same[1] == -0.2);
}

TEST_CASE("minibatch gradient is the mean of clipped per-sample gradients") {
  TaskSpec s = quadratic_spec(2, 2, 6);
  s.center_spread = 2.0;
  s.sample_spread = 1.5;
  s.clip_enabled = true;
  s.clip_bound = 0.5;
  const Task task = Task::generate(s);

  Vec w{1.0, -2.0};
  const std::vector<int> batch{0, 2, 5};
  Vec expected = zeros(2);
  for (int idx : batch) axpy(1.0, clip(task.per_sample_gradient(w, 1, idx), 0.5), expected);
  scale(expected, 1.0 / 3.0);

  const Vec got = task.minibatch_gradient(w, 1, batch);
  CHECK(got[0] == doctest::Approx(expected[0]).epsilon(1e-15));
  CHECK(got[1] == doctest::Approx(expected[1]).epsilon(1e-15));

  CHECK_THROWS_AS((void)task.minibatch_gradient(w, 1, {}), std::invalid_argument);
}

TEST_CASE("minibatch sampling is sorted, distinct and subset-uniform") {
  TaskSpec s = quadratic_spec(1, 2, 5);
  const Task task = Task::generate(s);
  SeededRng rng(17);

  std::map<std::pair<int, int>, int> freq;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto batch = task.draw_minibatch(0, 2, rng);
    REQUIRE(batch.size() == 2);
    REQUIRE(batch[0] < batch[1]);
    REQUIRE(batch[0] >= 0);
    REQUIRE(batch[1] < 5);
    ++freq[{batch[0], batch[1]}];
  }
  CHECK(freq.size() == 10);
  const double p = 1.0 / 10.0;
  const double sd = std::sqrt(draws * p * (1.0 - p));
  for (const auto& [pair, count] : freq) CHECK(std::abs(count - draws * p) < 4.0 * sd);

  const auto all = task.draw_minibatch(0, 5, rng);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS((void)task.draw_minibatch(0, 6, rng), std::invalid_argument);
}

TEST_CASE("generation is deterministic in the spec") {
  TaskSpec s = quadratic_spec(3, 3, 4);
  s.center_spread = 1.0;
  s.sample_spread = 0.5;
  const Task a = Task::generate(s);
  const Task b = Task::generate(s);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 4; ++i)
      CHECK(a.shard(k).samples[static_cast<std::size_t>(i)].x ==
            b.shard(k).samples[static_cast<std::size_t>(i)].x);

  s.gen_seed = 12;
  const Task c = Task::generate(s);
  CHECK(a.shard(0).samples[0].x != c.shard(0).samples[0].x);
}

TEST_CASE("spec validation rejects malformed inputs") {
  TaskSpec s = quadratic_spec(2, 2, 4);
  s.shard_sizes = {4};
  CHECK_THROWS_AS((void)Task::generate(s), std::invalid_argument);

  s = quadratic_spec(2, 2, 4);
  s.weights = {0.4, 0.7};
  CHECK_THROWS_AS((void)Task::generate(s), std::invalid_argument);

  s = quadratic_spec(2, 2, 4);
  s.weights = {1.2, -0.2};
  CHECK_THROWS_AS((void)Task::generate(s), std::invalid_argument);

  s = quadratic_spec(2, 2, 4);
  s.weights = {0.25, 0.75};
  const Task t = Task::generate(s);
  CHECK(t.weight(0) == 0.25);
  CHECK(t.weight(1) == 0.75);
}

TEST_CASE("min shard size picks the smallest shard") {
  TaskSpec s = quadratic_spec(1, 3, 4);
  s.shard_sizes = {9, 4, 6};
  const Task task = Task::generate(s);
  CHECK(task.min_shard_size() == 4);
}

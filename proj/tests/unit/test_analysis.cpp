#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "adp2/analysis.hpp"
#include "adp2/engine.hpp"
#include "adp2/task.hpp"
#include "adp2/topology.hpp"

using namespace adp2;

namespace {

// Independent long-double evaluation of the descent constants, kept deliberately
// close to the written formulas rather than the library's factored code paths.
struct RefConstants {
  long double rho_bar, c1, c2, c3;
};

RefConstants reference_constants(long double eta, long double B, long double L,
                                 long double tau, long double K, long double rho) {
  RefConstants r{};
  const long double sq = sqrtl(rho);
  r.rho_bar = ((K - 1.0L) / K) * (1.0L / (1.0L - rho) + 2.0L * sq / ((1.0L - sq) * (1.0L - sq)));
  const long double q = tau * (K - 1.0L) / K + r.rho_bar;
  r.c1 = 1.0L - 24.0L * eta * eta * B * B * L * L * q;
  const long double bracket = eta * B * L * L / K + 6.0L * eta * eta * B * B * L * L * L / (K * K) +
                              12.0L * eta * eta * eta * B * B * B * L * L * L * L * tau * tau /
                                  (K * K * K);
  r.c2 = -bracket * (4.0L * eta * eta * B * B * q / r.c1) + eta * B / (2.0L * K) -
         eta * eta * B * B * L / (K * K) -
         2.0L * eta * eta * eta * B * B * B * L * L * tau * tau / (K * K * K);
  r.c3 = 0.5L + eta * B * L * tau * tau / K +
         (6.0L * eta * eta * B * B * L * L + eta * K * B * L +
          12.0L * eta * eta * eta * B * B * B * L * L * L * tau * tau / K) *
             (2.0L * r.rho_bar / r.c1);
  return r;
}

}  // namespace

TEST_CASE("descent constants match an independent evaluation") {
  struct Case {
    double eta, B, L, tau, K, rho;
  };
  const std::vector<Case> cases{
      {0.01, 1, 1, 0, 2, 0.0},    {0.02, 4, 1, 3, 8, 0.875},
      {0.005, 8, 2, 5, 16, 0.9},  {0.001, 16, 0.5, 2, 4, 2.0 / 3.0},
      {0.05, 2, 1.5, 1, 6, 0.75},
  };
  for (const auto& c : cases) {
    const ConvergenceConstants got = convergence_constants(c.eta, c.B, c.L, c.tau, c.K, c.rho);
    const RefConstants ref = reference_constants(c.eta, c.B, c.L, c.tau, c.K, c.rho);
    CHECK(got.rho_bar == doctest::Approx(static_cast<double>(ref.rho_bar)).epsilon(1e-12));
    CHECK(got.c1 == doctest::Approx(static_cast<double>(ref.c1)).epsilon(1e-12));
    CHECK(got.c2 == doctest::Approx(static_cast<double>(ref.c2)).epsilon(1e-10));
    CHECK(got.c3 == doctest::Approx(static_cast<double>(ref.c3)).epsilon(1e-12));
    CHECK(got.c1_positive == (got.c1 > 0.0));
    CHECK(got.c2_nonnegative == (got.c2 >= 0.0));
    CHECK(got.c3_at_most_one == (got.c3 <= 1.0));
    CHECK(got.admissible == (got.c1_positive && got.c2_nonnegative && got.c3_at_most_one));
  }
}

TEST_CASE("admissibility flips as the step size grows") {
  // With B = L = 1, tau = 0, K = 2, rho = 0 the contraction factor is
  // 1 - 12 eta^2, so it changes sign at eta = 1/sqrt(12).
  const ConvergenceConstants ok = convergence_constants(0.28, 1, 1, 0, 2, 0.0);
  CHECK(ok.c1 == doctest::Approx(1.0 - 12.0 * 0.28 * 0.28).epsilon(1e-12));
  CHECK(ok.c1_positive);

  const ConvergenceConstants bad = convergence_constants(0.29, 1, 1, 0, 2, 0.0);
  CHECK_FALSE(bad.c1_positive);
  CHECK_FALSE(bad.admissible);

  const ConvergenceConstants small = convergence_constants(0.01, 1, 1, 0, 2, 0.0);
  CHECK(small.admissible);
}

TEST_CASE("extended precision mirror agrees with the double path") {
  for (double eta : {0.001, 0.01, 0.05})
    for (double tau : {0.0, 2.0, 7.0}) {
      const ConvergenceConstants d = convergence_constants(eta, 4, 1, tau, 8, 0.875);
      const ConvergenceConstantsExt e = convergence_constants_ext(eta, 4, 1, tau, 8, 0.875L);
      CHECK(d.rho_bar == doctest::Approx(static_cast<double>(e.rho_bar)).epsilon(1e-9));
      CHECK(d.c1 == doctest::Approx(static_cast<double>(e.c1)).epsilon(1e-9));
      CHECK(d.c2 == doctest::Approx(static_cast<double>(e.c2)).epsilon(1e-9));
      CHECK(d.c3 == doctest::Approx(static_cast<double>(e.c3)).epsilon(1e-9));
    }
}

TEST_CASE("constants reject out-of-domain inputs") {
  CHECK_THROWS_AS((void)convergence_constants(0.0, 1, 1, 0, 2, 0.0), std::domain_error);
  CHECK_THROWS_AS((void)convergence_constants(0.01, 0, 1, 0, 2, 0.0), std::domain_error);
  CHECK_THROWS_AS((void)convergence_constants(0.01, 1, 0, 0, 2, 0.0), std::domain_error);
  CHECK_THROWS_AS((void)convergence_constants(0.01, 1, 1, -1, 2, 0.0), std::domain_error);
  CHECK_THROWS_AS((void)convergence_constants(0.01, 1, 1, 0, 1, 0.0), std::domain_error);
  CHECK_THROWS_AS((void)convergence_constants(0.01, 1, 1, 0, 2, 1.0), std::domain_error);
  CHECK_THROWS_AS((void)iteration_threshold(1, 2, 0, 1.0), std::domain_error);
}

TEST_CASE("iteration threshold reproduces the tau-free reference point") {
  // K = 2, tau = 0, rho = 0: branches are 96, 1024, 0 and 64/2^(1/6), so the
  // 1024 branch wins and L^2 K^2 scaling gives 4096.
  CHECK(iteration_threshold(1, 2, 0, 0.0) == doctest::Approx(4096.0).epsilon(1e-12));
  CHECK(static_cast<double>(iteration_threshold_ext(1, 2, 0, 0.0L)) ==
        doctest::Approx(4096.0).epsilon(1e-12));

  // Larger smoothness scales quadratically.
  CHECK(iteration_threshold(2, 2, 0, 0.0) == doctest::Approx(4.0 * 4096.0).epsilon(1e-12));

  double prev = 0.0;
  for (double tau : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    const double t = iteration_threshold(1, 4, tau, 0.75);
    CHECK(t >= prev);
    prev = t;
  }

  const double d = iteration_threshold(1, 8, 3, 0.875);
  const long double e = iteration_threshold_ext(1, 8, 3, 0.875L);
  CHECK(d == doctest::Approx(static_cast<double>(e)).epsilon(1e-9));
}

TEST_CASE("rate bound matches its closed form and decays as 1/sqrt(T)") {
  const double f0 = 2.0, L = 1.5, gv = 0.3, wv = 0.2, d = 10, s2 = 0.01, B = 4;
  const double expected =
      (2.0 * f0 + 2.0 * L * (gv / B + 6.0 * wv + d * s2 / (B * B))) / std::sqrt(400.0);
  CHECK(rate_bound(f0, L, gv, wv, d, s2, B, 400) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(rate_bound(f0, L, gv, wv, d, s2, B, 1600) ==
        doctest::Approx(expected / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)rate_bound(-1.0, L, gv, wv, d, s2, B, 400), std::domain_error);
  CHECK_THROWS_AS((void)rate_bound(f0, L, gv, wv, d, s2, B, 0), std::domain_error);
  CHECK_THROWS_AS((void)rate_bound(f0, L, gv, wv, d, -0.1, B, 400), std::domain_error);
}

TEST_CASE("privacy-utility package reproduces its reference constant") {
  const PrivateUtility u = private_utility(1.0, 1.0, 0.0, 0.0, 1.0, 0.5, 16, 3125, 5.0,
                                           0.01, 10.0, 1.0);
  CHECK(u.c4 == doctest::Approx(20.0 * std::sqrt(5.0)).epsilon(1e-12));
  CHECK(u.c4 == doctest::Approx(44.721359549995796).epsilon(1e-12));

  const double a = 1.0 + 1.0 * (0.0 / 1.0 + 6.0 * 0.0);
  const double kn = 16.0 * 3125.0;
  CHECK(u.iterations ==
        doctest::Approx(2.0 * a * kn * kn * 25.0 / (40.0 * 10.0 * 1.0 * std::log(100.0)))
            .epsilon(1e-12));
  CHECK(u.bound == doctest::Approx(u.c4 * std::sqrt(10.0 * 1.0 * a * std::log(100.0)) /
                                   (kn * 5.0))
                       .epsilon(1e-12));

  // The batch correction vanishes as B grows.
  const PrivateUtility big = private_utility(1.0, 1.0, 0.0, 0.0, 1e9, 0.5, 16, 3125, 5.0,
                                             0.01, 10.0, 1.0);
  CHECK(big.c4 == doctest::Approx(4.0 * std::sqrt(5.0)).epsilon(1e-9));

  CHECK_THROWS_AS((void)private_utility(1, 1, 0, 0, 1, 0.0, 16, 3125, 5, 0.01, 10, 1),
                  std::domain_error);
  CHECK_THROWS_AS((void)private_utility(1, 1, 0, 0, 1, 1.0, 16, 3125, 5, 0.01, 10, 1),
                  std::domain_error);
  CHECK_THROWS_AS((void)private_utility(1, 1, 0, 0, 1, 0.5, 16, 3125, 5, 1.5, 10, 1),
                  std::domain_error);
}

TEST_CASE("auto learning rate follows K over B sqrt T") {
  CHECK(auto_learning_rate(8, 4, 1e4) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(auto_learning_rate(2, 1, 4096) == doctest::Approx(2.0 / 64.0).epsilon(1e-15));
}

TEST_CASE("convergence report recomputes probe metrics from the trace") {
  TaskSpec ts;
  ts.kind = TaskKind::quadratic;
  ts.d = 3;
  ts.K = 2;
  ts.shard_sizes = {6, 6};
  ts.gen_seed = 2;
  ts.clip_enabled = false;
  ts.center_spread = 1.0;
  ts.sample_spread = 0.5;
  const Task task = Task::generate(ts);
  const CommGraph graph = CommGraph::ring(2);

  RunOptions opts;
  opts.mode = RunMode::adpsgd;
  opts.activation = ActivationMode::logical;
  opts.eta = auto_learning_rate(2, 2, 1000);
  opts.eta_rule = "auto";
  opts.B = 2;
  opts.T = 1000;
  opts.seed = 3;
  opts.probe_stride = 100;
  const TrainingTrace trace = run(task, graph, opts);

  const ConvergenceReport rep = convergence_report(trace, task, 100);
  REQUIRE(rep.probes.size() == 10);
  CHECK(rep.probes.front().t == 100);
  CHECK(rep.probes.back().t == 1000);
  for (const auto& p : rep.probes) CHECK(p.t % 100 == 0);

  // The filtered view at double stride keeps the final probe.
  const ConvergenceReport sparse = convergence_report(trace, task, 200);
  CHECK(sparse.probes.back().t == 1000);
  CHECK(sparse.probes.size() < rep.probes.size());

  CHECK(rep.final_loss == doctest::Approx(task.loss(trace.summary.final_theta)).epsilon(1e-12));
  CHECK(rep.final_grad_norm_sq ==
        doctest::Approx(norm_sq(task.full_gradient(trace.summary.final_theta))).epsilon(1e-12));
  CHECK(rep.running_mean_grad_norm_sq ==
        doctest::Approx(rep.probes.back().running_mean_grad_norm_sq).epsilon(1e-12));

  double acc = 0.0;
  for (std::size_t i = 0; i < rep.probes.size(); ++i) {
    acc += rep.probes[i].grad_norm_sq;
    CHECK(rep.probes[i].running_mean_grad_norm_sq ==
          doctest::Approx(acc / static_cast<double>(i + 1)).epsilon(1e-12));
  }
}

TEST_CASE("bound comparison wires measured quantities into the rate statement") {
  TaskSpec ts;
  ts.kind = TaskKind::quadratic;
  ts.d = 2;
  ts.K = 2;
  ts.shard_sizes = {5, 5};
  ts.gen_seed = 9;
  ts.clip_enabled = false;
  ts.center_spread = 0.3;
  ts.sample_spread = 0.2;
  const Task task = Task::generate(ts);
  const CommGraph graph = CommGraph::ring(2);

  RunOptions opts;
  opts.mode = RunMode::adpsgd;
  opts.activation = ActivationMode::logical;
  opts.eta = auto_learning_rate(2, 2, 1000);
  opts.eta_rule = "auto";
  opts.B = 2;
  opts.T = 1000;
  opts.seed = 4;
  opts.probe_stride = 50;
  const TrainingTrace trace = run(task, graph, opts);

  const BoundComparison bc = bound_comparison(trace, task, 0.0);
  // Logical activation keeps every snapshot fresh.
  CHECK(bc.tau_measured == 0.0);
  CHECK(bc.rho == 0.0);
  CHECK(bc.rho_bar == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bc.t_min == doctest::Approx(4096.0).epsilon(1e-12));
  CHECK_FALSE(bc.t_at_least_t_min);

  const double expected_rhs = rate_bound(
      task.loss(trace.summary.initial_theta) - task.optimal_value(), task.lipschitz(),
      task.variance().grad_var, task.variance().worker_var, 2.0, 0.0, 2.0, 1000.0);
  CHECK(bc.rhs == doctest::Approx(expected_rhs).epsilon(1e-12));

  double acc = 0.0;
  for (const auto& p : trace.probes) acc += norm_sq(task.full_gradient(p.theta));
  acc /= static_cast<double>(trace.probes.size());
  CHECK(bc.measured_mean == doctest::Approx(acc).epsilon(1e-12));
  CHECK(bc.satisfied == (bc.measured_mean <= bc.rhs));
}

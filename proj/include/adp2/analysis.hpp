#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "adp2/task.hpp"
#include "adp2/topology.hpp"
#include "adp2/vec.hpp"

namespace adp2 {

struct TrainingTrace;  // engine.hpp

// Constants of the descent inequality for the averaged model, evaluated from
// (eta, B, L, tau, K, rho). The admissibility flags are the conditions under
// which the convergence bound applies: c1 > 0, c2 >= 0, c3 <= 1.
struct ConvergenceConstants {
  double rho_bar = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  bool c1_positive = false;
  bool c2_nonnegative = false;
  bool c3_at_most_one = false;
  bool admissible = false;
};

ConvergenceConstants convergence_constants(double eta, double B, double L, double tau,
                                           double K, double rho);

// Extended-precision mirror used to guard against cancellation in c2.
struct ConvergenceConstantsExt {
  long double rho_bar = 0.0L;
  long double c1 = 0.0L;
  long double c2 = 0.0L;
  long double c3 = 0.0L;
};

ConvergenceConstantsExt convergence_constants_ext(long double eta, long double B,
                                                  long double L, long double tau,
                                                  long double K, long double rho);

// Smallest iteration count for which the 1/sqrt(T) rate statement applies
// (max of four branch terms scaled by L^2 K^2).
double iteration_threshold(double L, double K, double tau, double rho);
long double iteration_threshold_ext(long double L, long double K, long double tau,
                                    long double rho);

// Right-hand side of the rate statement:
// (2(F(w0)-F*) + 2L(grad_var/B + 6 worker_var + d sigma2/B^2)) / sqrt(T).
double rate_bound(double f0_minus_fstar, double L, double grad_var, double worker_var,
                  double d, double sigma2, double B, double T);

// Privacy-utility package: the iteration count T matched to the budget, the
// constant c4 = 4 sqrt(5)(1 + 1/(B^2 mu(1-mu))), and the utility bound.
struct PrivateUtility {
  double iterations = 0.0;
  double c4 = 0.0;
  double bound = 0.0;
};

PrivateUtility private_utility(double f0_minus_fstar, double L, double grad_var,
                               double worker_var, double B, double mu, double K,
                               double n1, double eps, double delta, double d, double G);

// Learning rate rule used by the rate statement: eta = K / (B sqrt(T)).
inline double auto_learning_rate(double K, double B, double T) {
  return K / (B * std::sqrt(T));
}

struct ProbeMetrics {
  long t = 0;
  double virtual_time = 0.0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double running_mean_grad_norm_sq = 0.0;
  double eps_spent = 0.0;
};

struct BoundComparison {
  double tau_measured = 0.0;
  double rho = 0.0;
  double rho_bar = 0.0;
  double t_min = 0.0;
  double rhs = 0.0;
  double measured_mean = 0.0;
  bool satisfied = false;
  bool t_at_least_t_min = false;
};

struct ConvergenceReport {
  std::vector<ProbeMetrics> probes;
  double running_mean_grad_norm_sq = 0.0;
  double final_loss = 0.0;
  double final_grad_norm_sq = 0.0;
  // Present when the task has known constants (quadratic) and the run used the
  // auto learning-rate rule with a known spectral gap.
  std::optional<BoundComparison> bound;
};

// Re-evaluates F and ||grad F||^2 at every stored probe state of the trace.
// stride filters probes to multiples of the given stride (the final probe is
// always kept).
ConvergenceReport convergence_report(const TrainingTrace& trace, const Task& task,
                                     int probe_stride);

// Checks the measured mean squared gradient norm of the averaged model against
// the theoretical rate bound. Requires a task with exactly known constants and
// the exact spectral gap of the communication pattern; callers attach the
// result to a ConvergenceReport when those are available.
BoundComparison bound_comparison(const TrainingTrace& trace, const Task& task, double rho);

}  // namespace adp2

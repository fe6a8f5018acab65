#include "adp2/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adp2/errors.hpp"
#include "adp2/topology.hpp"
#include "adp2/trace.hpp"

namespace adp2 {

namespace {

template <typename Real>
void check_constant_domain(Real eta, Real B, Real L, Real tau, Real K, Real rho) {
  if (!(eta > Real(0))) throw std::domain_error("eta must be positive");
  if (!(B >= Real(1))) throw std::domain_error("batch size must be >= 1");
  if (!(L > Real(0))) throw std::domain_error("smoothness constant must be positive");
  if (!(tau >= Real(0))) throw std::domain_error("staleness bound must be >= 0");
  if (!(K >= Real(2))) throw std::domain_error("worker count must be >= 2");
  if (!(rho >= Real(0)) || rho >= Real(1))
    throw std::domain_error("spectral radius must lie in [0, 1)");
}

template <typename Real>
Real eval_rho_bar(Real K, Real rho) {
  const Real sr = std::sqrt(rho);
  const Real denom = (Real(1) - sr) * (Real(1) - sr);
  return (K - Real(1)) / K * (Real(1) / (Real(1) - rho) + Real(2) * sr / denom);
}

template <typename Real>
struct RawConstants {
  Real rho_bar;
  Real c1;
  Real c2;
  Real c3;
};

// The three descent constants share the combination
// q = tau (K-1)/K + rho_bar; c2 suffers heavy cancellation, which is why the
// evaluator is also instantiated at long double.
template <typename Real>
RawConstants<Real> eval_constants(Real eta, Real B, Real L, Real tau, Real K, Real rho) {
  check_constant_domain(eta, B, L, tau, K, rho);
  const Real rb = eval_rho_bar(K, rho);
  const Real q = tau * (K - Real(1)) / K + rb;
  const Real eB = eta * B;

  const Real c1 = Real(1) - Real(24) * eB * eB * L * L * q;

  const Real c3 = Real(0.5) + eta * B * L * tau * tau / K +
                  (Real(6) * eB * eB * L * L + eta * K * B * L +
                   Real(12) * eB * eB * eB * L * L * L * tau * tau / K) *
                      (Real(2) * rb / c1);

  const Real bracket = eta * B * L * L / K + Real(6) * eB * eB * L * L * L / (K * K) +
                       Real(12) * eB * eB * eB * L * L * L * L * tau * tau / (K * K * K);
  const Real c2 = -bracket * (Real(4) * eB * eB * q / c1) + eta * B / (Real(2) * K) -
                  eB * eB * L / (K * K) -
                  Real(2) * eB * eB * eB * L * L * tau * tau / (K * K * K);

  return RawConstants<Real>{rb, c1, c2, c3};
}

template <typename Real>
Real eval_threshold(Real L, Real K, Real tau, Real rho) {
  if (!(L > Real(0))) throw std::domain_error("smoothness constant must be positive");
  if (!(tau >= Real(0))) throw std::domain_error("staleness bound must be >= 0");
  if (!(K >= Real(2))) throw std::domain_error("worker count must be >= 2");
  if (!(rho >= Real(0)) || rho >= Real(1))
    throw std::domain_error("spectral radius must lie in [0, 1)");
  const Real rb = eval_rho_bar(K, rho);
  const Real q = tau * (K - Real(1)) / K + rb;

  const Real b1 = Real(192) * q;
  const Real b2 = Real(1024) * K * K * rb * rb;
  const Real b3 = Real(64) * tau * tau / (K * K);
  const Real paren = Real(8) * std::sqrt(Real(6)) * std::pow(tau, Real(2) / Real(3)) + Real(8);
  const Real b4 = std::sqrt(K - Real(1)) / std::pow(K, Real(1) / Real(6)) * paren * paren *
                  std::pow(tau + rb * K / (K - Real(1)), Real(2) / Real(3));

  const Real m = std::max(std::max(b1, b2), std::max(b3, b4));
  return L * L * K * K * m;
}

}  // namespace

ConvergenceConstants convergence_constants(double eta, double B, double L, double tau,
                                           double K, double rho) {
  const auto raw = eval_constants<double>(eta, B, L, tau, K, rho);
  ConvergenceConstants out;
  out.rho_bar = raw.rho_bar;
  out.c1 = raw.c1;
  out.c2 = raw.c2;
  out.c3 = raw.c3;
  out.c1_positive = raw.c1 > 0.0;
  out.c2_nonnegative = raw.c2 >= 0.0;
  out.c3_at_most_one = raw.c3 <= 1.0;
  out.admissible = out.c1_positive && out.c2_nonnegative && out.c3_at_most_one;
  return out;
}

ConvergenceConstantsExt convergence_constants_ext(long double eta, long double B,
                                                  long double L, long double tau,
                                                  long double K, long double rho) {
  const auto raw = eval_constants<long double>(eta, B, L, tau, K, rho);
  return ConvergenceConstantsExt{raw.rho_bar, raw.c1, raw.c2, raw.c3};
}

double iteration_threshold(double L, double K, double tau, double rho) {
  return eval_threshold<double>(L, K, tau, rho);
}

long double iteration_threshold_ext(long double L, long double K, long double tau,
                                    long double rho) {
  return eval_threshold<long double>(L, K, tau, rho);
}

double rate_bound(double f0_minus_fstar, double L, double grad_var, double worker_var,
                  double d, double sigma2, double B, double T) {
  if (!(f0_minus_fstar >= 0.0)) throw std::domain_error("F(w0) - F* must be >= 0");
  if (!(L > 0.0)) throw std::domain_error("smoothness constant must be positive");
  if (!(grad_var >= 0.0) || !(worker_var >= 0.0))
    throw std::domain_error("variance terms must be >= 0");
  if (!(d >= 1.0)) throw std::domain_error("dimension must be >= 1");
  if (!(sigma2 >= 0.0)) throw std::domain_error("noise variance must be >= 0");
  if (!(B >= 1.0)) throw std::domain_error("batch size must be >= 1");
  if (!(T >= 1.0)) throw std::domain_error("iteration count must be >= 1");
  return (2.0 * f0_minus_fstar +
          2.0 * L * (grad_var / B + 6.0 * worker_var + d * sigma2 / (B * B))) /
         std::sqrt(T);
}

PrivateUtility private_utility(double f0_minus_fstar, double L, double grad_var,
                               double worker_var, double B, double mu, double K,
                               double n1, double eps, double delta, double d, double G) {
  if (!(f0_minus_fstar >= 0.0)) throw std::domain_error("F(w0) - F* must be >= 0");
  if (!(L > 0.0)) throw std::domain_error("smoothness constant must be positive");
  if (!(grad_var >= 0.0) || !(worker_var >= 0.0))
    throw std::domain_error("variance terms must be >= 0");
  if (!(B >= 1.0)) throw std::domain_error("batch size must be >= 1");
  if (!(mu > 0.0) || !(mu < 1.0)) throw std::domain_error("mu must lie in (0, 1)");
  if (!(K >= 2.0)) throw std::domain_error("worker count must be >= 2");
  if (!(n1 >= 1.0)) throw std::domain_error("shard size must be >= 1");
  if (!(eps > 0.0)) throw std::domain_error("eps must be positive");
  if (!(delta > 0.0) || !(delta < 1.0)) throw std::domain_error("delta must lie in (0, 1)");
  if (!(d >= 1.0)) throw std::domain_error("dimension must be >= 1");
  if (!(G > 0.0)) throw std::domain_error("clip bound must be positive");

  const double a = f0_minus_fstar + L * (grad_var / B + 6.0 * worker_var);
  const double log_inv_delta = std::log(1.0 / delta);
  PrivateUtility out;
  out.iterations =
      2.0 * a * K * K * n1 * n1 * eps * eps / (40.0 * d * L * G * G * log_inv_delta);
  out.c4 = 4.0 * std::sqrt(5.0) * (1.0 + 1.0 / (B * B * mu * (1.0 - mu)));
  out.bound = out.c4 * G * std::sqrt(d * L * a * log_inv_delta) / (K * n1 * eps);
  return out;
}

ConvergenceReport convergence_report(const TrainingTrace& trace, const Task& task,
                                     int probe_stride) {
  if (probe_stride < 1) throw std::domain_error("probe stride must be >= 1");
  if (trace.probes.empty())
    throw std::invalid_argument("trace carries no probe states to analyze");

  ConvergenceReport report;
  double sum = 0.0;
  long count = 0;
  const std::size_t last = trace.probes.size() - 1;
  for (std::size_t i = 0; i < trace.probes.size(); ++i) {
    const auto& p = trace.probes[i];
    if (p.t % probe_stride != 0 && i != last) continue;
    ProbeMetrics m;
    m.t = p.t;
    m.virtual_time = p.virtual_time;
    m.loss = task.loss(p.theta);
    m.grad_norm_sq = norm_sq(task.full_gradient(p.theta));
    m.eps_spent = p.eps_spent;
    sum += m.grad_norm_sq;
    ++count;
    m.running_mean_grad_norm_sq = sum / static_cast<double>(count);
    report.probes.push_back(m);
  }
  report.running_mean_grad_norm_sq = report.probes.back().running_mean_grad_norm_sq;
  report.final_loss = report.probes.back().loss;
  report.final_grad_norm_sq = report.probes.back().grad_norm_sq;
  return report;
}

BoundComparison bound_comparison(const TrainingTrace& trace, const Task& task, double rho) {
  if (!task.has_optimum())
    throw std::invalid_argument("bound comparison needs a task with a known optimum");
  if (trace.probes.empty())
    throw std::invalid_argument("trace carries no probe states to analyze");
  const auto& s = trace.summary;
  if (s.batch_size < 1 || s.updates < 1)
    throw std::invalid_argument("trace summary is incomplete");

  BoundComparison out;
  out.tau_measured = static_cast<double>(s.max_staleness);
  out.rho = rho;
  out.rho_bar = rho_bar(static_cast<int>(task.K()), rho);
  const double L = task.lipschitz();
  out.t_min = iteration_threshold(L, static_cast<double>(task.K()), out.tau_measured, rho);

  const auto stats = task.variance();
  const double f0 = task.loss(s.initial_theta);
  out.rhs = rate_bound(f0 - task.optimal_value(), L, stats.grad_var, stats.worker_var,
                       static_cast<double>(task.d()), s.noise_sigma2,
                       static_cast<double>(s.batch_size), static_cast<double>(s.updates));

  double sum = 0.0;
  for (const auto& p : trace.probes) sum += norm_sq(task.full_gradient(p.theta));
  out.measured_mean = sum / static_cast<double>(trace.probes.size());
  out.satisfied = out.measured_mean <= out.rhs;
  out.t_at_least_t_min = static_cast<double>(s.updates) >= out.t_min;
  return out;
}

}  // namespace adp2

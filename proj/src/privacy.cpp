#include "adp2/privacy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "adp2/errors.hpp"

namespace adp2 {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void check_domain(bool ok, const std::string& what) {
  if (!ok) throw std::domain_error(what);
}

}  // namespace

RdpPoint gaussian_rdp(double alpha, double delta2, double sigma2) {
  check_domain(alpha > 1.0, "gaussian_rdp requires alpha > 1");
  check_domain(delta2 > 0.0, "gaussian_rdp requires delta2 > 0");
  check_domain(sigma2 > 0.0, "gaussian_rdp requires sigma2 > 0");
  return RdpPoint{alpha, alpha * delta2 * delta2 / (2.0 * sigma2)};
}

RdpPoint subsampled_gaussian_rdp(double alpha, double gamma, double delta2, double sigma2) {
  check_domain(alpha > 1.0, "subsampled_gaussian_rdp requires alpha > 1");
  check_domain(gamma > 0.0 && gamma <= 1.0, "subsampled_gaussian_rdp requires 0 < gamma <= 1");
  check_domain(delta2 > 0.0, "subsampled_gaussian_rdp requires delta2 > 0");
  check_domain(sigma2 > 0.0, "subsampled_gaussian_rdp requires sigma2 > 0");

  const double ratio = sigma2 / (delta2 * delta2);
  if (ratio < 1.5)
    throw RegimeError("subsampled Gaussian bound out of regime: noise floor violated, "
                      "sigma2/delta2^2 = " + fmt(ratio) + " < 1.5");
  const double alpha_cap = std::log(1.0 / (gamma * (1.0 + ratio)));
  if (alpha > alpha_cap)
    throw RegimeError("subsampled Gaussian bound out of regime: alpha = " + fmt(alpha) +
                      " > log(1/(gamma(1+sigma2/delta2^2))) = " + fmt(alpha_cap));
  return RdpPoint{alpha, 5.0 * gamma * gamma * alpha * delta2 * delta2 / sigma2};
}

RdpPoint compose(const std::vector<RdpPoint>& points) {
  if (points.empty()) return RdpPoint{std::numeric_limits<double>::infinity(), 0.0};
  const double alpha = points.front().alpha;
  double total = 0.0;
  for (const auto& p : points) {
    const double scale = std::max(std::abs(alpha), 1.0);
    if (std::abs(p.alpha - alpha) > 1e-12 * scale)
      throw std::invalid_argument("composition requires one shared alpha, got " +
                                  fmt(alpha) + " and " + fmt(p.alpha));
    total += p.eps;
  }
  return RdpPoint{alpha, total};
}

double rdp_to_dp(const RdpPoint& point, double delta) {
  check_domain(point.alpha > 1.0, "rdp_to_dp requires alpha > 1");
  check_domain(delta > 0.0 && delta <= 1.0, "rdp_to_dp requires delta in (0, 1]");
  if (std::isinf(point.alpha)) return point.eps;
  return point.eps + std::log(1.0 / delta) / (point.alpha - 1.0);
}

std::vector<FeasibilityCheck> feasibility_checks(const PrivacyParams& p) {
  std::vector<FeasibilityCheck> checks;

  const double ratio = p.sigma2 / (p.delta2 * p.delta2);
  checks.push_back({"noise_floor", "sigma2/delta2^2 >= 1.5", ratio, 1.5, ratio >= 1.5});

  const double kn = static_cast<double>(p.K) * static_cast<double>(p.n1);
  const double b = static_cast<double>(p.B);
  const double numer = kn * kn * kn * p.mu * p.eps;
  const double denom = kn * kn * p.mu * p.eps * b +
                       5.0 * static_cast<double>(p.T) * p.alpha * b * b * b;
  const double alpha_cap = std::log(numer / denom);
  checks.push_back({"alpha_cap",
                    "alpha <= log(K^3 n1^3 mu eps / (K^2 n1^2 mu eps B + 5 T alpha B^3))",
                    p.alpha, alpha_cap, p.alpha <= alpha_cap});

  const double eps_cap =
      10.0 * b * b * static_cast<double>(p.T) * p.alpha / (3.0 * kn * kn * p.mu);
  checks.push_back({"eps_cap", "eps <= 10 B^2 T alpha / (3 K^2 n1^2 mu)", p.eps, eps_cap,
                    p.eps <= eps_cap});
  return checks;
}

namespace {

PrivacyParams build_bundle(double eps, double delta, double mu, int K, int n1, int B,
                           long T, double G) {
  check_domain(eps > 0.0, "calibration requires eps > 0");
  check_domain(delta > 0.0 && delta < 1.0, "calibration requires delta in (0, 1)");
  check_domain(mu > 0.0 && mu < 1.0, "calibration requires mu in (0, 1)");
  check_domain(K >= 2, "calibration requires K >= 2");
  check_domain(n1 >= 1, "calibration requires n1 >= 1");
  check_domain(B >= 1, "calibration requires B >= 1");
  check_domain(T >= 1, "calibration requires T >= 1");
  check_domain(G > 0.0, "calibration requires G > 0");

  PrivacyParams p;
  p.eps = eps;
  p.delta = delta;
  p.mu = mu;
  p.G = G;
  p.K = K;
  p.n1 = n1;
  p.B = B;
  p.T = T;
  p.alpha = std::log(1.0 / delta) / ((1.0 - mu) * eps) + 1.0;
  const double kn = static_cast<double>(K) * static_cast<double>(n1);
  p.sigma2 = 20.0 * G * G * static_cast<double>(T) * p.alpha / (kn * kn * mu * eps);
  p.gamma = static_cast<double>(B) / kn;
  p.delta2 = 2.0 * G / static_cast<double>(B);
  return p;
}

}  // namespace

std::pair<PrivacyParams, std::vector<FeasibilityCheck>> calibration_attempt(
    double eps, double delta, double mu, int K, int n1, int B, long T, double G) {
  const PrivacyParams p = build_bundle(eps, delta, mu, K, n1, B, T, G);
  return {p, feasibility_checks(p)};
}

PrivacyParams calibrate_sigma(double eps, double delta, double mu, int K, int n1, int B,
                              long T, double G) {
  const PrivacyParams p = build_bundle(eps, delta, mu, K, n1, B, T, G);
  std::string violations;
  for (const auto& c : feasibility_checks(p)) {
    if (c.ok) continue;
    if (!violations.empty()) violations += "; ";
    violations += c.name + " constraint violated: " + c.inequality + " fails with " +
                  fmt(c.lhs) + " vs " + fmt(c.rhs);
    if (c.name == "alpha_cap")
      violations += " (alpha = " + fmt(p.alpha) + " exceeds the cap " + fmt(c.rhs) + ")";
  }
  if (!violations.empty())
    throw InfeasibleError("infeasible privacy budget: " + violations);
  return p;
}

MuSearchResult find_mu(double eps, double delta, int K, int n1, int B, long T, double G,
                       int grid) {
  check_domain(grid >= 10, "find_mu requires grid resolution >= 10");

  MuSearchResult result;
  double best_sigma2 = std::numeric_limits<double>::infinity();
  // For infeasible grids we report the mu closest to feasibility, measured by
  // the largest relative violation across its failing constraints.
  double best_violation = std::numeric_limits<double>::infinity();

  for (int i = 1; i <= grid; ++i) {
    const double mu = static_cast<double>(i) / (grid + 1);
    const PrivacyParams p = build_bundle(eps, delta, mu, K, n1, B, T, G);
    const auto checks = feasibility_checks(p);
    bool feasible = true;
    double violation = 0.0;
    for (const auto& c : checks) {
      if (c.ok) continue;
      feasible = false;
      const double scale = std::max(std::abs(c.lhs), std::abs(c.rhs));
      violation = std::max(violation, scale > 0.0 ? std::abs(c.lhs - c.rhs) / scale : 1.0);
    }
    if (feasible) {
      if (p.sigma2 < best_sigma2) {
        best_sigma2 = p.sigma2;
        result.params = p;
        result.best_mu = mu;
        result.best_checks = checks;
      }
    } else if (!result.params && violation < best_violation) {
      best_violation = violation;
      result.best_mu = mu;
      result.best_checks = checks;
    }
  }
  return result;
}

double per_iteration_epsilon(long t, long T, double eps) {
  check_domain(T >= 1, "per_iteration_epsilon requires T >= 1");
  if (t < 0 || t > T)
    throw std::domain_error("per_iteration_epsilon requires 0 <= t <= T, got t = " +
                            std::to_string(t));
  return std::sqrt(static_cast<double>(t) / static_cast<double>(T)) * eps;
}

double per_iteration_epsilon(long t, const PrivacyParams& params) {
  return per_iteration_epsilon(t, params.T, params.eps);
}

Vec add_noise(const Vec& g, double sigma2, SeededRng& rng) {
  check_domain(sigma2 >= 0.0, "add_noise requires sigma2 >= 0");
  const double sigma = std::sqrt(sigma2);
  Vec out = g;
  for (double& v : out) v += sigma * rng.normal();
  return out;
}

}  // namespace adp2

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adp2/rng.hpp"
#include "adp2/vec.hpp"

namespace adp2 {

// One point of a Renyi-DP curve: the mechanism is (alpha, eps)-RDP.
struct RdpPoint {
  double alpha = 0.0;
  double eps = 0.0;
};

// eps = alpha * delta2^2 / (2 sigma2) for the Gaussian mechanism with
// l2 sensitivity delta2 and noise variance sigma2.
RdpPoint gaussian_rdp(double alpha, double delta2, double sigma2);

// Subsampled Gaussian bound eps = 5 gamma^2 alpha delta2^2 / sigma2, valid
// only when sigma2/delta2^2 >= 1.5 and alpha <= log(1/(gamma(1 + sigma2/delta2^2))).
// Queries outside that regime throw RegimeError naming the failed inequality.
RdpPoint subsampled_gaussian_rdp(double alpha, double gamma, double delta2, double sigma2);

// Additive composition at a fixed order. Empty input composes to the perfect
// privacy point (alpha = +inf, eps = 0).
RdpPoint compose(const std::vector<RdpPoint>& points);

// eps = eps_rdp + log(1/delta)/(alpha - 1).
double rdp_to_dp(const RdpPoint& point, double delta);

// Calibrated bundle: the noise level sigma2 that makes T iterations
// (eps, delta)-DP, split by mu between the composition budget and the
// conversion overhead.
struct PrivacyParams {
  double eps = 0.0;
  double delta = 0.0;
  double mu = 0.0;
  double alpha = 0.0;   // log(1/delta)/((1-mu) eps) + 1
  double sigma2 = 0.0;  // 20 G^2 T alpha / (K^2 n1^2 mu eps)
  double gamma = 0.0;   // B / (K n1)
  double delta2 = 0.0;  // 2 G / B
  double G = 0.0;
  int K = 0;
  int n1 = 0;
  int B = 0;
  long T = 0;
};

struct FeasibilityCheck {
  std::string name;        // noise_floor | alpha_cap | eps_cap
  std::string inequality;  // human-readable form
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

// The three feasibility constraints evaluated for a calibrated bundle, in a
// fixed order: noise floor, alpha cap, eps cap.
std::vector<FeasibilityCheck> feasibility_checks(const PrivacyParams& p);

// Full calibration. Throws InfeasibleError (naming every violated constraint
// with both sides) when the budget cannot be met, domain errors on bad inputs.
PrivacyParams calibrate_sigma(double eps, double delta, double mu, int K, int n1,
                              int B, long T, double G);

// Same derivation without enforcing feasibility: returns the bundle and its
// checks so callers can report a failing budget instead of aborting on it.
std::pair<PrivacyParams, std::vector<FeasibilityCheck>> calibration_attempt(
    double eps, double delta, double mu, int K, int n1, int B, long T, double G);

struct MuSearchResult {
  std::optional<PrivacyParams> params;        // feasible bundle minimizing sigma2
  double best_mu = 0.0;                       // chosen mu, or closest-to-feasible mu
  std::vector<FeasibilityCheck> best_checks;  // checks at best_mu
};

// Uniform grid over mu in (0,1), exclusive endpoints, grid >= 10 points.
MuSearchResult find_mu(double eps, double delta, int K, int n1, int B, long T,
                       double G, int grid = 99);

// Budget spent by the t-th intermediate model: sqrt(t/T) * eps.
double per_iteration_epsilon(long t, const PrivacyParams& params);
double per_iteration_epsilon(long t, long T, double eps);

// g + n, n ~ N(0, sigma2 I) coordinate-wise. Always consumes d normal draws so
// that runs differing only in sigma2 stay aligned draw-for-draw.
Vec add_noise(const Vec& g, double sigma2, SeededRng& rng);

// Per-iteration RDP spend record kept by the engine.
class SpendLedger {
 public:
  void record(long t, double eps_rdp) {
    records_.emplace_back(t, eps_rdp);
    total_ += eps_rdp;
  }
  long steps() const { return static_cast<long>(records_.size()); }
  double total_rdp() const { return total_; }
  double converted_eps(double alpha, double delta) const {
    return rdp_to_dp(RdpPoint{alpha, total_}, delta);
  }
  const std::vector<std::pair<long, double>>& records() const { return records_; }

 private:
  std::vector<std::pair<long, double>> records_;
  double total_ = 0.0;
};

}  // namespace adp2

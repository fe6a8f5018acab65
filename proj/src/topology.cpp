#include "adp2/topology.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace adp2 {

CommGraph CommGraph::ring(int K) {
  if (K < 2 || K % 2 != 0)
    throw std::invalid_argument("ring graph needs even K >= 2, got " + std::to_string(K));
  CommGraph g;
  g.k_ = K;
  g.policy_ = PairPolicy::bipartite;
  for (int i = 0; i < K; ++i) {
    if (i % 2 == 0)
      g.senders_.push_back(i);
    else
      g.receivers_.push_back(i);
    const int next = (i + 1) % K;
    const int a = std::min(i, next);
    const int b = std::max(i, next);
    if (a != b) g.edges_.emplace_back(a, b);
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());
  g.finalize();
  return g;
}

CommGraph CommGraph::full_bipartite(int K) {
  if (K < 2 || K % 2 != 0)
    throw std::invalid_argument("full bipartite graph needs even K >= 2, got " + std::to_string(K));
  CommGraph g;
  g.k_ = K;
  g.policy_ = PairPolicy::bipartite;
  for (int i = 0; i < K; ++i) {
    if (i % 2 == 0)
      g.senders_.push_back(i);
    else
      g.receivers_.push_back(i);
  }
  for (int s : g.senders_)
    for (int r : g.receivers_) g.edges_.emplace_back(std::min(s, r), std::max(s, r));
  std::sort(g.edges_.begin(), g.edges_.end());
  g.finalize();
  return g;
}

CommGraph CommGraph::custom(int K, std::vector<std::pair<int, int>> edges) {
  if (K < 2) throw std::invalid_argument("graph needs K >= 2");
  if (edges.empty()) throw std::invalid_argument("custom graph needs at least one edge");
  std::set<std::pair<int, int>> seen;
  for (auto& e : edges) {
    if (e.first == e.second) throw std::invalid_argument("self loops are not allowed");
    if (e.first > e.second) std::swap(e.first, e.second);
    if (e.first < 0 || e.second >= K)
      throw std::invalid_argument("edge endpoint out of range");
    if (!seen.insert(e).second) throw std::invalid_argument("duplicate edge");
  }
  CommGraph g;
  g.k_ = K;
  g.policy_ = PairPolicy::any_neighbor;
  g.edges_.assign(seen.begin(), seen.end());
  g.finalize();
  return g;
}

void CommGraph::finalize() {
  partners_.assign(static_cast<std::size_t>(k_), {});
  std::vector<char> is_sender(static_cast<std::size_t>(k_), 0);
  for (int s : senders_) is_sender[static_cast<std::size_t>(s)] = 1;

  for (const auto& [a, b] : edges_) {
    if (policy_ == PairPolicy::bipartite) {
      // Every edge must cross the sender/receiver cut.
      if (is_sender[static_cast<std::size_t>(a)] == is_sender[static_cast<std::size_t>(b)])
        throw std::invalid_argument("edge does not cross the sender/receiver partition");
    }
    partners_[static_cast<std::size_t>(a)].push_back(b);
    partners_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& p : partners_) {
    std::sort(p.begin(), p.end());
    if (p.empty()) throw std::invalid_argument("graph has an isolated worker");
  }

  // Connectivity by breadth-first search; a disconnected pattern can never mix.
  std::vector<char> visited(static_cast<std::size_t>(k_), 0);
  std::vector<int> frontier{0};
  visited[0] = 1;
  int count = 1;
  while (!frontier.empty()) {
    const int v = frontier.back();
    frontier.pop_back();
    for (int u : partners_[static_cast<std::size_t>(v)]) {
      if (!visited[static_cast<std::size_t>(u)]) {
        visited[static_cast<std::size_t>(u)] = 1;
        ++count;
        frontier.push_back(u);
      }
    }
  }
  if (count != k_) throw std::invalid_argument("graph is disconnected");
}

const std::vector<int>& CommGraph::partners(int worker) const {
  if (worker < 0 || worker >= k_) throw std::out_of_range("worker index out of range");
  return partners_[static_cast<std::size_t>(worker)];
}

std::vector<double> GossipMatrix::dense() const {
  std::vector<double> m(static_cast<std::size_t>(K) * K, 0.0);
  for (int r = 0; r < K; ++r) m[static_cast<std::size_t>(r) * K + r] = 1.0;
  m[static_cast<std::size_t>(i) * K + i] = 0.5;
  m[static_cast<std::size_t>(j) * K + j] = 0.5;
  m[static_cast<std::size_t>(i) * K + j] = 0.5;
  m[static_cast<std::size_t>(j) * K + i] = 0.5;
  return m;
}

GossipMatrix sample_gossip_matrix(const CommGraph& graph, int active, SeededRng& rng) {
  const auto& choices = graph.partners(active);
  const int partner = choices[rng.below(choices.size())];
  return GossipMatrix{graph.K(), std::min(active, partner), std::max(active, partner)};
}

GossipMatrix sample_gossip_matrix(const CommGraph& graph, SeededRng& rng) {
  const int active = static_cast<int>(rng.below(static_cast<std::uint64_t>(graph.K())));
  return sample_gossip_matrix(graph, active, rng);
}

void apply_averaging(std::vector<Vec>& models, const GossipMatrix& A) {
  if (static_cast<int>(models.size()) != A.K)
    throw std::invalid_argument("model count does not match gossip matrix size");
  Vec& wi = models[static_cast<std::size_t>(A.i)];
  Vec& wj = models[static_cast<std::size_t>(A.j)];
  check_same_dim(wi, wj);
  for (std::size_t c = 0; c < wi.size(); ++c) {
    const double avg = 0.5 * (wi[c] + wj[c]);
    wi[c] = avg;
    wj[c] = avg;
  }
}

std::vector<Vec> apply_matrix(const std::vector<Vec>& models, const std::vector<double>& A, int K) {
  if (static_cast<int>(models.size()) != K || A.size() != static_cast<std::size_t>(K) * K)
    throw std::invalid_argument("shape mismatch in apply_matrix");
  const std::size_t d = models.front().size();
  std::vector<Vec> out(static_cast<std::size_t>(K), zeros(d));
  for (int col = 0; col < K; ++col)
    for (int row = 0; row < K; ++row) {
      const double a = A[static_cast<std::size_t>(row) * K + col];
      if (a != 0.0) axpy(a, models[static_cast<std::size_t>(row)], out[static_cast<std::size_t>(col)]);
    }
  return out;
}

namespace {

SpectralEstimate eigen_rho(const Eigen::MatrixXd& M, long n_samples) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(M);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigensolver failed to converge");
  const int K = static_cast<int>(M.rows());
  SpectralEstimate est;
  est.n_samples = n_samples;
  est.eigenvalues.resize(static_cast<std::size_t>(K));
  // Eigen returns ascending order; flip to descending.
  for (int i = 0; i < K; ++i)
    est.eigenvalues[static_cast<std::size_t>(i)] = solver.eigenvalues()(K - 1 - i);
  est.rho = std::max(std::abs(est.eigenvalues[1]),
                     std::abs(est.eigenvalues[static_cast<std::size_t>(K - 1)]));
  if (est.rho >= 1.0 - 1e-9)
    throw std::runtime_error("mixing pattern is effectively disconnected (rho >= 1)");
  return est;
}

}  // namespace

SpectralEstimate estimate_spectral_gap(const CommGraph& graph, SpectralMode mode,
                                       long n_samples, std::uint64_t seed) {
  const int K = graph.K();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K, K);

  if (mode == SpectralMode::exact) {
    // P(pair) accumulated over the two-stage draw: active worker uniform over
    // [K], partner uniform over the active worker's partner list. Each pair
    // matrix is I - (1/2)(e_i - e_j)(e_i - e_j)^T.
    M = Eigen::MatrixXd::Identity(K, K);
    for (int active = 0; active < K; ++active) {
      const auto& choices = graph.partners(active);
      const double p = 1.0 / (static_cast<double>(K) * static_cast<double>(choices.size()));
      for (int partner : choices) {
        M(active, active) -= 0.5 * p;
        M(partner, partner) -= 0.5 * p;
        M(active, partner) += 0.5 * p;
        M(partner, active) += 0.5 * p;
      }
    }
    return eigen_rho(M, 0);
  }

  if (n_samples < 1) throw std::invalid_argument("monte carlo mode needs n_samples >= 1");
  SeededRng rng(seed);
  auto stream = rng.stream("spectral");
  for (long s = 0; s < n_samples; ++s) {
    const GossipMatrix A = sample_gossip_matrix(graph, stream);
    M(A.i, A.i) += 0.5;
    M(A.j, A.j) += 0.5;
    M(A.i, A.j) += 0.5;
    M(A.j, A.i) += 0.5;
    for (int r = 0; r < K; ++r)
      if (r != A.i && r != A.j) M(r, r) += 1.0;
  }
  M /= static_cast<double>(n_samples);
  return eigen_rho(M, n_samples);
}

double rho_bar(int K, double rho) {
  if (K < 2) throw std::domain_error("rho_bar needs K >= 2");
  if (rho < 0.0 || rho >= 1.0 - 1e-9)
    throw std::domain_error("rho_bar requires 0 <= rho < 1 - 1e-9, got " + std::to_string(rho));
  const double sq = std::sqrt(rho);
  return (static_cast<double>(K - 1) / K) *
         (1.0 / (1.0 - rho) + 2.0 * sq / ((1.0 - sq) * (1.0 - sq)));
}

}  // namespace adp2

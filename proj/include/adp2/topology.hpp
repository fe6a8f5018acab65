#pragma once

#include <utility>
#include <vector>

#include "adp2/rng.hpp"
#include "adp2/vec.hpp"

namespace adp2 {

// How the active worker chooses its gossip partner.
//   bipartite: workers are split into senders and receivers; a sender picks a
//     uniform receiver-neighbor and vice versa (ring / full_bipartite shapes).
//   any_neighbor: no role split; the active worker picks a uniform neighbor
//     (custom edge lists, where a bipartition may not exist).
enum class PairPolicy { bipartite, any_neighbor };

class CommGraph {
 public:
  static CommGraph ring(int K);            // even K, even indices send
  static CommGraph full_bipartite(int K);  // even K, all even-odd pairs
  static CommGraph custom(int K, std::vector<std::pair<int, int>> edges);

  int K() const { return k_; }
  PairPolicy policy() const { return policy_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& senders() const { return senders_; }
  const std::vector<int>& receivers() const { return receivers_; }
  // Workers the given worker may be paired with, sorted ascending.
  const std::vector<int>& partners(int worker) const;

 private:
  CommGraph() = default;
  void finalize();  // builds partner lists, checks connectivity

  int k_ = 0;
  PairPolicy policy_ = PairPolicy::bipartite;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> senders_;
  std::vector<int> receivers_;
  std::vector<std::vector<int>> partners_;
};

// Pairwise averaging matrix: identity except rows/columns i and j, where the
// 2x2 block is all one-half. Always doubly stochastic, symmetric, idempotent.
struct GossipMatrix {
  int K = 0;
  int i = 0;
  int j = 0;
  std::vector<double> dense() const;  // row-major K*K, for tests and estimation
};

// Picks the partner for the given active worker uniformly among its allowed
// partners and returns the pairwise averaging matrix.
GossipMatrix sample_gossip_matrix(const CommGraph& graph, int active, SeededRng& rng);
// Also draws the active worker uniformly.
GossipMatrix sample_gossip_matrix(const CommGraph& graph, SeededRng& rng);

// In-place pairwise averaging of the coupled workers' models.
void apply_averaging(std::vector<Vec>& models, const GossipMatrix& A);
// Generic right-multiplication by an arbitrary K x K matrix (column j of the
// result mixes the inputs with the matrix's column j). Test utility.
std::vector<Vec> apply_matrix(const std::vector<Vec>& models, const std::vector<double>& A, int K);

struct SpectralEstimate {
  double rho = 0.0;                  // max(|lambda_2|, |lambda_K|)
  std::vector<double> eigenvalues;   // sorted descending, length K
  long n_samples = 0;                // 0 means exact enumeration
};

enum class SpectralMode { exact, monte_carlo };

// Spectral gap of E[A^T A] under (uniform active worker, uniform partner).
// Pairwise matrices are symmetric projectors, so A^T A = A and the expectation
// can be enumerated exactly from the pair probabilities.
SpectralEstimate estimate_spectral_gap(const CommGraph& graph, SpectralMode mode,
                                       long n_samples = 0, std::uint64_t seed = 0);

// (K-1)/K * (1/(1-rho) + 2 sqrt(rho)/(1-sqrt(rho))^2). Domain rho < 1 - 1e-9.
double rho_bar(int K, double rho);

}  // namespace adp2

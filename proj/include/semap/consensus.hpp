#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "semap/dense_map.hpp"
#include "semap/kernels.hpp"
#include "semap/logodds.hpp"
#include "semap/octree.hpp"

namespace semap {

struct Neighbor {
  std::size_t index = 0;
  double weight = 0.0;
};

/// Weighted adjacency A of the communication graph. Rows sum to one; the
/// edge set is the non-zero pattern, which must be symmetric.
class RobotGraph {
 public:
  /// `weights` is row-major n x n. Asymmetric weights are rejected unless
  /// `allow_asymmetric`.
  RobotGraph(std::size_t n, std::vector<double> weights, bool allow_asymmetric = false);

  /// Metropolis weights A_ij = 1/max(deg_i, deg_j) on the given undirected
  /// edges, with the remainder of each row on the diagonal.
  static RobotGraph metropolis(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);
  static RobotGraph complete(std::size_t n);
  static RobotGraph edgeless(std::size_t n);
  static RobotGraph star(std::size_t n);
  static RobotGraph ring(std::size_t n);
  static RobotGraph path(std::size_t n);

  std::size_t size() const { return n_; }
  double weight(std::size_t i, std::size_t j) const { return weights_[i * n_ + j]; }
  std::vector<Neighbor> neighbors(std::size_t i) const;
  /// Unordered edges {i, j}, i < j, in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  bool connected() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> weights_;
};

enum class GammaSchedule { Constant, InverseSqrt };

struct IterationParams {
  double epsilon = 0.25;
  double gamma = 1.0;
  GammaSchedule schedule = GammaSchedule::Constant;
  int k_max = 100;
  double update_tol = 1e-3;
  GradientForm form = GradientForm::Stabilized;

  void validate() const;
  /// Step size for 1-based iteration k.
  double gamma_at(int k) const;
};

struct WeightedNeighbor {
  double weight = 0.0;
  LogOddsVector h;
};

LogOddsVector consensus_step(const LogOddsVector& h_i, std::span<const WeightedNeighbor> neighbors, double epsilon);
LogOddsVector gradient(const LogOddsVector& h_tilde, const LogProbVector& logq,
                       GradientForm form = GradientForm::Stabilized);
LogOddsVector apply_gradient(const LogOddsVector& h_tilde, const LogOddsVector& g, double gamma);

/// Per-cell objective: sum_m sigma_m(h) * (logq[m] - log sigma_m(h)).
double objective_value(const LogOddsVector& h, const LogProbVector& logq);

/// Sum over edges and common-refinement regions of w * cells * ||h_j - h_i||^2,
/// w = A_ij when `weighted`, else 1.
double constraint_residual(std::span<const SemanticOctree> maps, const RobotGraph& graph, bool weighted);
double constraint_residual(std::span<const DenseMap> maps, const RobotGraph& graph, bool weighted,
                           Execution exec = Execution::Serial);
/// Exact-sum form of the pairwise term, shared by both backends.
ExactSum pair_residual(const SemanticOctree& a, const SemanticOctree& b, double weight);

struct IterateResult {
  double update_norm = 0.0;
  std::size_t regions = 0;
};

/// One synchronous round for one robot: consensus against the neighbor
/// snapshots, then the local gradient step, on every region of the common
/// refinement. Writes results back and re-prunes.
IterateResult iterate(SemanticOctree& own, std::span<const SemanticOctree* const> neighbor_maps,
                      std::span<const double> weights, const IterationParams& params, int k,
                      Execution exec = Execution::Serial);
IterateResult iterate(DenseMap& own, std::span<const DenseSnapshot* const> neighbor_maps,
                      std::span<const double> weights, const IterationParams& params, int k,
                      Execution exec = Execution::Serial);

struct SolveResult {
  int iterations = 0;
  double last_update_norm = 0.0;
  bool converged = false;
};

/// Repeats `iterate` against fixed neighbor maps until the update norm drops
/// below update_tol or k_max rounds have run.
SolveResult solve(SemanticOctree& own, std::span<const SemanticOctree* const> neighbor_maps,
                  std::span<const double> weights, const IterationParams& params, Execution exec = Execution::Serial);

}  // namespace semap

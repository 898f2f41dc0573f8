#include "semap/consensus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <queue>

#include "semap/errors.hpp"

namespace semap {

RobotGraph::RobotGraph(std::size_t n, std::vector<double> weights, bool allow_asymmetric)
    : n_(n), weights_(std::move(weights)) {
  if (n_ == 0) throw InvalidInput("graph: need at least one robot");
  if (weights_.size() != n_ * n_) throw InvalidInput("graph: weight matrix must be n x n");
  for (std::size_t i = 0; i < n_; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double w = weight(i, j);
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("graph: weights must be finite and >= 0");
      if ((w > 0.0) != (weight(j, i) > 0.0)) throw InvalidInput("graph: edge pattern must be symmetric");
      if (!allow_asymmetric && w != weight(j, i)) {
        throw InvalidInput("graph: weights must be symmetric (allow_asymmetric to override)");
      }
      row += w;
    }
    if (std::abs(row - 1.0) > 1e-9) throw InvalidInput("graph: every row must sum to 1");
  }
}

RobotGraph RobotGraph::metropolis(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::size_t> degree(n, 0);
  std::vector<bool> linked(n * n, false);
  for (auto [i, j] : edges) {
    if (i >= n || j >= n || i == j) throw InvalidInput("graph: invalid edge");
    if (linked[i * n + j]) continue;
    linked[i * n + j] = linked[j * n + i] = true;
    ++degree[i];
    ++degree[j];
  }
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!linked[i * n + j]) continue;
      w[i * n + j] = 1.0 / static_cast<double>(std::max(degree[i], degree[j]));
      row += w[i * n + j];
    }
    w[i * n + i] = 1.0 - row;
  }
  return RobotGraph(n, std::move(w));
}

RobotGraph RobotGraph::complete(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return metropolis(n, e);
}

RobotGraph RobotGraph::edgeless(std::size_t n) { return metropolis(n, {}); }

RobotGraph RobotGraph::star(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t j = 1; j < n; ++j) e.emplace_back(0, j);
  return metropolis(n, e);
}

RobotGraph RobotGraph::ring(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  if (n == 2) e.emplace_back(0, 1);
  if (n > 2) {
    for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  }
  return metropolis(n, e);
}

RobotGraph RobotGraph::path(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return metropolis(n, e);
}

std::vector<Neighbor> RobotGraph::neighbors(std::size_t i) const {
  std::vector<Neighbor> out;
  for (std::size_t j = 0; j < n_; ++j) {
    if (j != i && weight(i, j) > 0.0) out.push_back({j, weight(i, j)});
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> RobotGraph::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (weight(i, j) > 0.0) out.emplace_back(i, j);
  return out;
}

bool RobotGraph::connected() const {
  std::vector<bool> seen(n_, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop();
    for (const Neighbor& nb : neighbors(i)) {
      if (!seen[nb.index]) {
        seen[nb.index] = true;
        ++reached;
        frontier.push(nb.index);
      }
    }
  }
  return reached == n_;
}

void IterationParams::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw InvalidInput("iteration: epsilon must lie in (0, 1/2)");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidInput("iteration: gamma must be finite and >= 0");
  if (k_max < 1) throw InvalidInput("iteration: k_max must be >= 1");
  if (!(update_tol >= 0.0)) throw InvalidInput("iteration: update_tol must be >= 0");
}

double IterationParams::gamma_at(int k) const {
  if (schedule == GammaSchedule::InverseSqrt) return gamma / std::sqrt(static_cast<double>(std::max(k, 1)));
  return gamma;
}

LogOddsVector consensus_step(const LogOddsVector& h_i, std::span<const WeightedNeighbor> neighbors, double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidInput("consensus_step: epsilon must be >= 0");
  if (!all_finite(h_i.span())) throw InvalidInput("consensus_step: non-finite h");
  double total = 0.0;
  std::vector<double> rows;
  std::vector<double> weights;
  for (const WeightedNeighbor& nb : neighbors) {
    if (!(nb.weight >= 0.0) || !std::isfinite(nb.weight)) throw InvalidInput("consensus_step: bad weight");
    if (nb.h.size() != h_i.size() || !all_finite(nb.h.span())) throw InvalidInput("consensus_step: bad neighbor h");
    total += nb.weight;
    weights.push_back(nb.weight);
    rows.insert(rows.end(), nb.h.begin(), nb.h.end());
  }
  if (total > 1.0 + 1e-12) throw InvalidInput("consensus_step: neighbor weights sum above 1");
  LogOddsVector out(h_i.size());
  kernel::consensus(h_i.span(), rows, weights, epsilon, out.span());
  return out;
}

LogOddsVector gradient(const LogOddsVector& h_tilde, const LogProbVector& logq, GradientForm form) {
  if (h_tilde.size() != logq.size() || h_tilde.size() == 0) throw InvalidInput("gradient: length mismatch");
  if (!all_finite(h_tilde.span()) || !all_finite(logq.span())) throw InvalidInput("gradient: non-finite input");
  LogOddsVector g(h_tilde.size());
  if (form == GradientForm::Literal) {
    kernel::gradient_literal(h_tilde.span(), logq.span(), g.span());
  } else {
    kernel::gradient_stabilized(h_tilde.span(), logq.span(), g.span());
  }
  return g;
}

LogOddsVector apply_gradient(const LogOddsVector& h_tilde, const LogOddsVector& g, double gamma) {
  if (h_tilde.size() != g.size()) throw InvalidInput("apply_gradient: length mismatch");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidInput("apply_gradient: gamma must be >= 0");
  if (!all_finite(h_tilde.span()) || !all_finite(g.span())) throw InvalidInput("apply_gradient: non-finite input");
  LogOddsVector out(h_tilde.size());
  kernel::apply_gradient(h_tilde.span(), g.span(), gamma, kLogOddsLimit, out.span());
  return out;
}

double objective_value(const LogOddsVector& h, const LogProbVector& logq) {
  if (h.size() != logq.size()) throw InvalidInput("objective_value: length mismatch");
  if (!all_finite(logq.span())) throw InvalidInput("objective_value: non-finite log q");
  const ClassDistribution p = softmax(h);
  const LogProbVector logp = log_softmax(h);
  double total = 0.0;
  for (std::size_t m = 0; m < h.size(); ++m) total += p[m] * (logq[m] - logp[m]);
  return total;
}

ExactSum pair_residual(const SemanticOctree& a, const SemanticOctree& b, double weight) {
  ExactSum sum;
  const std::array<const SemanticOctree*, 2> trees{&a, &b};
  const int depth = a.config().depth;
  refine(trees, [&](const RefinedRegion& r) {
    const auto& ha = r.values[0] ? r.values[0]->h : a.prior();
    const auto& hb = r.values[1] ? r.values[1]->h : b.prior();
    sum.add_scaled(weight * squared_distance(hb.span(), ha.span()), 3 * (depth - r.key.level));
  });
  return sum;
}

double constraint_residual(std::span<const SemanticOctree> maps, const RobotGraph& graph, bool weighted) {
  if (maps.size() != graph.size()) throw InvalidInput("constraint_residual: one map per robot required");
  for (const auto& m : maps) {
    if (!(m.config() == maps[0].config())) throw InvalidInput("constraint_residual: map configs differ");
  }
  ExactSum total;
  for (auto [i, j] : graph.edges()) {
    total.merge(pair_residual(maps[i], maps[j], weighted ? graph.weight(i, j) : 1.0));
  }
  return total.value();
}

double constraint_residual(std::span<const DenseMap> maps, const RobotGraph& graph, bool weighted, Execution exec) {
  if (maps.size() != graph.size()) throw InvalidInput("constraint_residual: one map per robot required");
  for (const auto& m : maps) {
    if (!(m.config() == maps[0].config())) throw InvalidInput("constraint_residual: map configs differ");
  }
  ExactSum total;
  for (auto [i, j] : graph.edges()) {
    total.merge(grid_squared_distance(maps[j].h_data(), maps[i].h_data(), maps[i].classes(),
                                      weighted ? graph.weight(i, j) : 1.0, exec));
  }
  return total.value();
}

namespace {

CellUpdateParams cell_params(const IterationParams& params, int k) {
  params.validate();
  return {params.epsilon, params.gamma_at(k), params.form, kLogOddsLimit};
}

}  // namespace

IterateResult iterate(SemanticOctree& own, std::span<const SemanticOctree* const> neighbor_maps,
                      std::span<const double> weights, const IterationParams& params, int k, Execution exec) {
  if (neighbor_maps.size() != weights.size()) throw InvalidInput("iterate: one weight per neighbor required");
  const CellUpdateParams cp = cell_params(params, k);
  const std::size_t classes = own.prior().size();
  const std::size_t m = neighbor_maps.size();

  std::vector<const SemanticOctree*> trees{&own};
  trees.insert(trees.end(), neighbor_maps.begin(), neighbor_maps.end());

  std::vector<NodeKey> keys;
  std::vector<double> own_h, logq, neighbor_h;
  const LogProbVector prior_logq = log_softmax(own.prior());
  refine(trees, [&](const RefinedRegion& r) {
    keys.push_back(r.key);
    const CellValue* mine = r.values[0];
    const LogOddsVector& h = mine ? mine->h : own.prior();
    own_h.insert(own_h.end(), h.begin(), h.end());
    if (mine && mine->acc.count > 0) {
      const LogProbVector q = log_q(mine->acc, own.prior());
      logq.insert(logq.end(), q.begin(), q.end());
    } else {
      logq.insert(logq.end(), prior_logq.begin(), prior_logq.end());
    }
    for (std::size_t j = 0; j < m; ++j) {
      const CellValue* theirs = r.values[j + 1];
      const LogOddsVector& hj = theirs ? theirs->h : neighbor_maps[j]->prior();
      neighbor_h.insert(neighbor_h.end(), hj.begin(), hj.end());
    }
  });

  const CellBatch batch{keys.size(), classes, m, own_h, logq, neighbor_h, weights};
  std::vector<double> out(own_h.size());
  IterateResult result;
  result.regions = keys.size();
  result.update_norm = update_cells(batch, cp, out, exec);

  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto row = std::span<const double>(out).subspan(i * classes, classes);
    const auto old = std::span<const double>(own_h).subspan(i * classes, classes);
    if (std::equal(row.begin(), row.end(), old.begin())) continue;
    own.update_region(keys[i], [&row](CellValue& v) { std::copy(row.begin(), row.end(), v.h.begin()); });
  }
  own.prune();
  return result;
}

IterateResult iterate(DenseMap& own, std::span<const DenseSnapshot* const> neighbor_maps,
                      std::span<const double> weights, const IterationParams& params, int k, Execution exec) {
  if (neighbor_maps.size() != weights.size()) throw InvalidInput("iterate: one weight per neighbor required");
  const CellUpdateParams cp = cell_params(params, k);
  const std::size_t classes = own.classes();
  const std::size_t m = neighbor_maps.size();
  const std::size_t cells = own.cells();
  for (const DenseSnapshot* s : neighbor_maps) {
    if (!(s->config == own.config())) throw InvalidInput("iterate: map configs differ");
  }

  const std::vector<double> logq = own.log_q_rows();
  std::vector<double> neighbor_h(cells * m * classes);
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t j = 0; j < m; ++j)
      std::copy_n(neighbor_maps[j]->h.begin() + static_cast<std::ptrdiff_t>(i * classes), classes,
                  neighbor_h.begin() + static_cast<std::ptrdiff_t>((i * m + j) * classes));

  const CellBatch batch{cells, classes, m, own.h_data(), logq, neighbor_h, weights};
  std::vector<double> out(cells * classes);
  IterateResult result;
  result.regions = cells;
  result.update_norm = update_cells(batch, cp, out, exec);
  std::copy(out.begin(), out.end(), own.h_data().begin());
  return result;
}

SolveResult solve(SemanticOctree& own, std::span<const SemanticOctree* const> neighbor_maps,
                  std::span<const double> weights, const IterationParams& params, Execution exec) {
  SolveResult out;
  for (int k = 1; k <= params.k_max; ++k) {
    out.last_update_norm = iterate(own, neighbor_maps, weights, params, k, exec).update_norm;
    out.iterations = k;
    if (out.last_update_norm < params.update_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace semap

#include "semap/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semap/errors.hpp"

namespace semap {

void InverseModelParams::validate(int num_classes) const {
  const double uninformative = 1.0 / (num_classes + 1);
  if (!(p_hit > uninformative && p_hit < 1.0)) {
    throw InvalidInput("inverse model: p_hit must lie in (1/(C+1), 1)");
  }
  if (!(p_free > uninformative && p_free < 1.0)) {
    throw InvalidInput("inverse model: p_free must lie in (1/(C+1), 1)");
  }
}

bool walk_ray(Vec3 origin, Vec3 direction, double length, const MapConfig& cfg, const RayVisitor& visit) {
  if (!cfg.contains(origin)) {
    throw InvalidInput("ray origin outside the map");
  }
  if (!(length >= 0.0) || !std::isfinite(length)) {
    throw InvalidInput("ray length must be finite and non-negative");
  }
  const double inf = std::numeric_limits<double>::infinity();
  const Vec3 rel = origin - cfg.origin;
  CellIndex cell = cfg.cell_of(origin);
  int cell_coord[3] = {cell.ix, cell.iy, cell.iz};
  int step[3] = {0, 0, 0};
  double t_max[3] = {inf, inf, inf};
  double t_delta[3] = {inf, inf, inf};
  for (int a = 0; a < 3; ++a) {
    const double d = direction[a];
    if (d > 0.0) {
      step[a] = 1;
      t_max[a] = ((cell_coord[a] + 1) * cfg.cell_size - rel[a]) / d;
      t_delta[a] = cfg.cell_size / d;
    } else if (d < 0.0) {
      step[a] = -1;
      t_max[a] = (cell_coord[a] * cfg.cell_size - rel[a]) / d;
      t_delta[a] = -cfg.cell_size / d;
    }
  }

  if (!visit(cell, 0.0)) return true;
  const int n = cfg.cells_per_axis();
  while (true) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    const double t = t_max[axis];
    if (t > length) return true;
    cell_coord[axis] += step[axis];
    if (cell_coord[axis] < 0 || cell_coord[axis] >= n) return false;
    t_max[axis] += t_delta[axis];
    if (!visit({cell_coord[0], cell_coord[1], cell_coord[2]}, t)) return true;
    if (t == length) return true;
  }
}

namespace {

struct Traversal {
  std::vector<CellIndex> cells;
  bool truncated = false;
};

Traversal traverse(const RayObservation& z, const MapConfig& cfg) {
  Traversal out;
  const bool complete = walk_ray(z.origin, z.direction, z.range, cfg, [&](CellIndex c, double) {
    out.cells.push_back(c);
    return true;
  });
  out.truncated = !complete;
  return out;
}

bool has_terminal_hit(const RayObservation& z, const Traversal& tr) {
  return !z.max_range_hit && !tr.truncated && !tr.cells.empty();
}

}  // namespace

std::vector<CellIndex> traverse_ray(const RayObservation& z, const MapConfig& cfg) {
  return traverse(z, cfg).cells;
}

ClassDistribution hit_distribution(ClassId category, double p_hit, int num_classes) {
  if (category.value < 0 || category.value > num_classes) {
    throw InvalidInput("category out of range");
  }
  ClassDistribution p(static_cast<std::size_t>(num_classes + 1), (1.0 - p_hit) / num_classes);
  p[static_cast<std::size_t>(category.value)] = p_hit;
  return p;
}

ClassDistribution free_distribution(double p_free, int num_classes) {
  return hit_distribution(ClassId(0), p_free, num_classes);
}

ClassDistribution inverse_observation(const RayObservation& z, CellIndex cell,
                                      const InverseModelParams& params, const MapConfig& cfg) {
  const Traversal tr = traverse(z, cfg);
  const auto it = std::find(tr.cells.begin(), tr.cells.end(), cell);
  if (it == tr.cells.end()) {
    throw InvalidInput("inverse_observation: cell is not on the ray");
  }
  const bool terminal = has_terminal_hit(z, tr) && std::next(it) == tr.cells.end();
  return terminal ? hit_distribution(z.category, params.p_hit, cfg.num_classes)
                  : free_distribution(params.p_free, cfg.num_classes);
}

void observe_ray(const RayObservation& z, const InverseModelParams& params, const MapConfig& cfg,
                 const std::function<void(CellIndex, const ClassDistribution&)>& sink) {
  const Traversal tr = traverse(z, cfg);
  if (tr.cells.empty()) return;
  const ClassDistribution free = free_distribution(params.p_free, cfg.num_classes);
  const bool hit = has_terminal_hit(z, tr);
  const std::size_t free_cells = hit ? tr.cells.size() - 1 : tr.cells.size();
  for (std::size_t i = 0; i < free_cells; ++i) sink(tr.cells[i], free);
  if (hit) sink(tr.cells.back(), hit_distribution(z.category, params.p_hit, cfg.num_classes));
}

void accumulate_in_place(LogQAccumulator& acc, const ClassDistribution& p) {
  if (acc.sum_log.empty()) acc.sum_log.assign(p.size(), 0.0);
  if (acc.sum_log.size() != p.size()) {
    throw InvalidInput("accumulate: class count mismatch");
  }
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (!(p[c] > 0.0) || !std::isfinite(p[c])) {
      throw InvalidInput("accumulate: probabilities must be positive and finite");
    }
  }
  for (std::size_t c = 0; c < p.size(); ++c) acc.sum_log[c] += std::log(p[c]);
  ++acc.count;
}

LogQAccumulator accumulate(LogQAccumulator acc, const ClassDistribution& p) {
  accumulate_in_place(acc, p);
  return acc;
}

LogProbVector log_q(const LogQAccumulator& acc, const LogOddsVector& prior) {
  if (acc.count == 0) return log_softmax(prior);
  LogProbVector out(acc.sum_log.size());
  const double n = static_cast<double>(acc.count);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = acc.sum_log[c] / n;
  return out;
}

}  // namespace semap

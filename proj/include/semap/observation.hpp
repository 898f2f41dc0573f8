#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/logodds.hpp"

namespace semap {

/// One range + category return. When `max_range_hit` is set nothing was hit
/// within sensor range and `category` carries no information.
struct RayObservation {
  Vec3 origin;
  Vec3 direction;  // unit norm
  double range = 0.0;
  ClassId category;
  bool max_range_hit = false;
};

/// Hit/free categorical inverse sensor model. The residual mass of each case
/// is split uniformly over the other C classes.
struct InverseModelParams {
  double p_hit = 0.7;
  double p_free = 0.7;

  void validate(int num_classes) const;
};

/// Running sum of log p(m|z) for one cell; the log of the temporal geometric
/// mean of the inverse model is sum_log / count.
struct LogQAccumulator {
  std::vector<double> sum_log;
  std::uint32_t count = 0;

  LogQAccumulator() = default;
  explicit LogQAccumulator(std::size_t classes) : sum_log(classes, 0.0) {}

  bool empty() const { return count == 0; }
  friend bool operator==(const LogQAccumulator&, const LogQAccumulator&) = default;
};

/// Called for each visited cell with the distance along the ray at which the
/// cell is entered. Return false to stop the walk.
using RayVisitor = std::function<bool(CellIndex cell, double t_entry)>;

/// Incremental voxel stepping from `origin` along unit `direction` up to
/// `length`. A cell is visited when the ray enters it strictly before
/// `length`, or exactly at `length` (the endpoint sits on the cell's entry
/// face); the walk stops after that cell. Consecutive cells differ in one
/// coordinate by one. Returns false if the walk left the map before `length`.
bool walk_ray(Vec3 origin, Vec3 direction, double length, const MapConfig& cfg, const RayVisitor& visit);

/// Ordered finest cells traversed by the observation's segment.
std::vector<CellIndex> traverse_ray(const RayObservation& z, const MapConfig& cfg);

/// p(m | z) for `cell`, which must lie on the ray.
ClassDistribution inverse_observation(const RayObservation& z, CellIndex cell,
                                      const InverseModelParams& params, const MapConfig& cfg);

/// Distribution assigned to a traversed cell: the observed class at the
/// terminal cell of a ray that hit something inside the map, free otherwise.
ClassDistribution hit_distribution(ClassId category, double p_hit, int num_classes);
ClassDistribution free_distribution(double p_free, int num_classes);

/// Walks the ray once and reports p(m|z) for every traversed cell in order.
void observe_ray(const RayObservation& z, const InverseModelParams& params, const MapConfig& cfg,
                 const std::function<void(CellIndex, const ClassDistribution&)>& sink);

LogQAccumulator accumulate(LogQAccumulator acc, const ClassDistribution& p);
void accumulate_in_place(LogQAccumulator& acc, const ClassDistribution& p);

/// Mean log inverse-model probability; for an unobserved cell, the prior's
/// log-probabilities.
LogProbVector log_q(const LogQAccumulator& acc, const LogOddsVector& prior);

}  // namespace semap

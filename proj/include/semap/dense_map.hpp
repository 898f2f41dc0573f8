#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/logodds.hpp"
#include "semap/octree.hpp"

namespace semap {

/// Uniform-resolution map over every finest cell. Reference backend for the
/// octree and the communication baseline.
class DenseMap {
 public:
  DenseMap(MapConfig config, LogOddsVector prior, std::uint64_t max_entries = SemanticOctree::kDefaultDenseLimit);

  const MapConfig& config() const { return config_; }
  const LogOddsVector& prior() const { return prior_; }
  std::size_t classes() const { return prior_.size(); }
  std::uint64_t cells() const { return count_.size(); }

  std::span<const double> h_data() const { return h_; }
  std::span<double> h_data() { return h_; }
  std::span<const double> h_row(std::uint64_t cell) const { return std::span(h_).subspan(cell * classes(), classes()); }
  std::uint32_t count(std::uint64_t cell) const { return count_[cell]; }
  std::span<const double> sum_log_row(std::uint64_t cell) const {
    return std::span(sum_log_).subspan(cell * classes(), classes());
  }
  /// True when the cell holds exactly the prior value, the state an octree
  /// stores as an absent node.
  bool at_prior(std::uint64_t cell) const;

  CellValue value_at(CellIndex cell) const;
  void update_cell(CellIndex cell, const std::function<void(CellValue&)>& f);
  void accumulate(CellIndex cell, const ClassDistribution& p);

  /// log q per cell, row-major (prior log-probabilities where unobserved).
  std::vector<double> log_q_rows() const;

  std::vector<LogOddsVector> to_dense_grid() const;

  /// The same map as a pruned octree (built through update_leaf).
  SemanticOctree to_octree(double prune_tolerance = 0.0) const;

 private:
  MapConfig config_;
  LogOddsVector prior_;
  std::vector<double> h_;
  std::vector<double> sum_log_;
  std::vector<std::uint32_t> count_;
};

/// What a dense-backend robot receives: h at wire precision, with cells still
/// at the sender's prior replaced by the receiver's prior, as the octree wire
/// format does for absent nodes.
struct DenseSnapshot {
  MapConfig config;
  std::vector<double> h;
};

DenseSnapshot make_snapshot(const DenseMap& sender, const LogOddsVector& receiver_prior);

}  // namespace semap

#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "semap/environment.hpp"
#include "semap/kernels.hpp"
#include "semap/octree.hpp"
#include "semap/scenario.hpp"

namespace semap {

struct MetricsRecord {
  int tick = 0;
  bool observing = false;
  double residual_unweighted = 0.0;  // graph edges, w = 1
  double residual_weighted = 0.0;    // graph edges, w = A_ij
  double residual_all_pairs = 0.0;   // every robot pair, w = 1
  double max_update_norm = 0.0;
  double octree_bytes_mean = 0.0;
  double octree_bytes_std = 0.0;
  std::uint64_t grid_bytes = 0;
  std::vector<std::uint64_t> octree_bytes;  // per robot; the grid baseline for the dense backend
  std::vector<std::uint64_t> leaves;        // per robot; observed cells for the dense backend
  std::vector<double> accuracy;             // per robot
};

struct RunOptions {
  Execution exec = Execution::Serial;
};

struct RunResult {
  Environment environment;
  std::vector<MetricsRecord> records;
  std::vector<SemanticOctree> maps;  // final robot maps
};

/// Runs the observe, publish, iterate loop. Errors are rethrown as
/// InvalidInput/InternalError with the tick and robot in the message.
RunResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Fraction of observed cells (count > 0) whose argmax class equals the label.
/// 0 when nothing has been observed.
double map_accuracy(const SemanticOctree& map, const Environment& env);
/// Same fraction restricted to cells whose true label is not free.
double occupied_accuracy(const SemanticOctree& map, const Environment& env);

/// max over robot pairs and cells of ||h_i - h_j||_inf.
double max_pairwise_deviation(std::span<const SemanticOctree> maps);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records, std::size_t num_robots);
/// metrics.csv and robot_<i>.som under `dir` (created if missing).
void write_outputs(const std::filesystem::path& dir, const RunResult& result);

}  // namespace semap

#include "semap/dense_map.hpp"

#include <algorithm>
#include <bit>

#include "semap/errors.hpp"

namespace semap {

DenseMap::DenseMap(MapConfig config, LogOddsVector prior, std::uint64_t max_entries)
    : config_(config), prior_(std::move(prior)) {
  config_.validate();
  if (prior_.size() != static_cast<std::size_t>(config_.classes())) {
    throw InvalidInput("dense map: prior length must be C+1");
  }
  const std::uint64_t n = config_.num_cells();
  if (n > max_entries / prior_.size()) throw ResourceError("dense map: grid exceeds the size limit");
  h_.resize(n * prior_.size());
  for (std::uint64_t i = 0; i < n; ++i) std::copy(prior_.begin(), prior_.end(), h_.begin() + static_cast<std::ptrdiff_t>(i * prior_.size()));
  sum_log_.assign(n * prior_.size(), 0.0);
  count_.assign(n, 0);
}

CellValue DenseMap::value_at(CellIndex cell) const {
  if (!config_.in_bounds(cell)) throw InvalidInput("dense map: cell out of bounds");
  const std::uint64_t i = config_.linear_index(cell);
  const std::size_t k = classes();
  CellValue v;
  v.h = LogOddsVector(std::span(h_).subspan(i * k, k));
  v.acc.sum_log.assign(sum_log_.begin() + static_cast<std::ptrdiff_t>(i * k),
                       sum_log_.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  v.acc.count = count_[i];
  return v;
}

void DenseMap::update_cell(CellIndex cell, const std::function<void(CellValue&)>& f) {
  CellValue v = value_at(cell);
  f(v);
  const std::size_t k = classes();
  if (v.h.size() != k || v.acc.sum_log.size() != k) throw InvalidInput("dense map: update changed the vector length");
  const std::uint64_t i = config_.linear_index(cell);
  std::copy(v.h.begin(), v.h.end(), h_.begin() + static_cast<std::ptrdiff_t>(i * k));
  std::copy(v.acc.sum_log.begin(), v.acc.sum_log.end(), sum_log_.begin() + static_cast<std::ptrdiff_t>(i * k));
  count_[i] = v.acc.count;
}

void DenseMap::accumulate(CellIndex cell, const ClassDistribution& p) {
  update_cell(cell, [&p](CellValue& v) { accumulate_in_place(v.acc, p); });
}

std::vector<double> DenseMap::log_q_rows() const {
  const std::size_t k = classes();
  const LogProbVector prior_log = log_softmax(prior_);
  std::vector<double> out(h_.size());
  for (std::uint64_t i = 0; i < cells(); ++i) {
    double* row = out.data() + i * k;
    if (count_[i] == 0) {
      std::copy(prior_log.begin(), prior_log.end(), row);
    } else {
      const double n = static_cast<double>(count_[i]);
      for (std::size_t c = 0; c < k; ++c) row[c] = sum_log_[i * k + c] / n;
    }
  }
  return out;
}

std::vector<LogOddsVector> DenseMap::to_dense_grid() const {
  std::vector<LogOddsVector> grid;
  grid.reserve(cells());
  for (std::uint64_t i = 0; i < cells(); ++i) grid.emplace_back(h_row(i));
  return grid;
}

SemanticOctree DenseMap::to_octree(double prune_tolerance) const {
  SemanticOctree tree(config_, prior_, prune_tolerance);
  for (std::uint64_t i = 0; i < cells(); ++i) {
    const CellIndex cell = config_.cell_at(i);
    CellValue v = value_at(cell);
    if (tree.is_prior(v)) continue;
    tree.update_leaf(cell, [&v](CellValue& slot) { slot = v; });
  }
  tree.prune();
  return tree;
}

bool DenseMap::at_prior(std::uint64_t cell) const {
  if (count_[cell] != 0) return false;
  const auto bits = [](double x) { return std::bit_cast<std::uint64_t>(x); };
  const auto h = h_row(cell);
  for (std::size_t c = 0; c < classes(); ++c) {
    if (bits(h[c]) != bits(prior_[c])) return false;
  }
  const auto s = sum_log_row(cell);
  return std::all_of(s.begin(), s.end(), [&](double x) { return bits(x) == 0; });
}

DenseSnapshot make_snapshot(const DenseMap& sender, const LogOddsVector& receiver_prior) {
  if (receiver_prior.size() != sender.classes()) throw InvalidInput("snapshot: class count mismatch");
  DenseSnapshot s{sender.config(), std::vector<double>(sender.h_data().begin(), sender.h_data().end())};
  const std::size_t k = sender.classes();
  for (std::uint64_t cell = 0; cell < sender.cells(); ++cell) {
    double* row = s.h.data() + cell * k;
    if (sender.at_prior(cell)) {
      std::copy(receiver_prior.begin(), receiver_prior.end(), row);
    } else {
      for (std::size_t c = 0; c < k; ++c) row[c] = static_cast<double>(static_cast<float>(row[c]));
    }
  }
  return s;
}

}  // namespace semap

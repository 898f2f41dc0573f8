#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/logodds.hpp"
#include "semap/observation.hpp"

namespace semap {

/// Payload of a leaf: its log-odds and the observation accumulator shared by
/// every finest cell it covers.
struct CellValue {
  LogOddsVector h;
  LogQAccumulator acc;

  friend bool operator==(const CellValue&, const CellValue&) = default;
};

struct OctreeNode {
  using Children = std::array<std::unique_ptr<OctreeNode>, 8>;

  std::variant<CellValue, Children> content;

  bool is_leaf() const { return std::holds_alternative<CellValue>(content); }
  CellValue& value() { return std::get<CellValue>(content); }
  const CellValue& value() const { return std::get<CellValue>(content); }
  Children& children() { return std::get<Children>(content); }
  const Children& children() const { return std::get<Children>(content); }

  std::unique_ptr<OctreeNode> clone() const;
};

/// Preorder traversal events: root first, children in Morton order, absent
/// children reported explicitly.
enum class NodeTag : std::uint8_t { Absent = 0, Inner = 1, Leaf = 2 };

struct QueryResult {
  LogOddsVector h;
  int level = 0;
};

/// One cell of a common refinement: the node key and each tree's value
/// there (nullptr where the tree's subtree is absent, i.e. at the prior).
struct RefinedRegion {
  NodeKey key;
  std::uint64_t cell_count = 0;
  std::span<const CellValue* const> values;
};

/// Sparse adaptive-resolution multi-class map. An absent subtree stands for
/// the prior with an empty accumulator. With a zero prune tolerance, merging
/// is exact and the tree represents its dense grid losslessly.
class SemanticOctree {
 public:
  SemanticOctree(MapConfig config, LogOddsVector prior, double prune_tolerance = 0.0);
  SemanticOctree(const SemanticOctree& other);
  SemanticOctree& operator=(const SemanticOctree& other);
  SemanticOctree(SemanticOctree&&) noexcept = default;
  SemanticOctree& operator=(SemanticOctree&&) noexcept = default;

  const MapConfig& config() const { return config_; }
  const LogOddsVector& prior() const { return prior_; }
  double prune_tolerance() const { return prune_tolerance_; }
  bool empty() const { return root_ == nullptr; }
  const OctreeNode* root() const { return root_.get(); }

  /// Replace the whole tree. Used by decoders; the caller vouches for depth
  /// and vector sizes (checked).
  void reset_root(std::unique_ptr<OctreeNode> root);

  QueryResult query(Vec3 point) const;
  /// Value covering `cell` (prior/empty when absent) and its resolved level.
  CellValue value_at(CellIndex cell, int* level = nullptr) const;

  /// Materialize the finest leaf at `cell`, apply `f` to it, then re-prune
  /// the ancestors.
  void update_leaf(CellIndex cell, const std::function<void(CellValue&)>& f);

  /// Same as update_leaf for the whole cube `key`. The tree must not be
  /// subdivided below `key`.
  void update_region(NodeKey key, const std::function<void(CellValue&)>& f);

  /// Bring the whole tree to pruned-canonical form. Returns nodes removed.
  std::size_t prune();

  std::size_t leaf_count() const;
  std::size_t node_count() const;
  bool is_canonical() const;

  void visit_preorder(const std::function<void(NodeTag, const CellValue*)>& visit) const;
  void for_each_leaf(const std::function<void(NodeKey, const CellValue&)>& visit) const;

  /// Dense h grid in MapConfig::linear_index order. Throws ResourceError when
  /// 8^d * (C+1) exceeds `max_entries`.
  std::vector<LogOddsVector> to_dense_grid(std::uint64_t max_entries = kDefaultDenseLimit) const;

  CellValue prior_value() const;
  bool is_prior(const CellValue& v) const;

  static constexpr std::uint64_t kDefaultDenseLimit = std::uint64_t{1} << 26;

  friend bool operator==(const SemanticOctree& a, const SemanticOctree& b);

 private:
  OctreeNode* materialize(NodeKey key, std::vector<OctreeNode*>& path);
  void reprune_path(NodeKey key, std::vector<OctreeNode*>& path);
  bool collapse(std::unique_ptr<OctreeNode>& slot);
  bool mergeable(const OctreeNode::Children& children) const;
  std::size_t prune_subtree(std::unique_ptr<OctreeNode>& slot);
  std::unique_ptr<OctreeNode>* slot_for(NodeKey key, std::vector<OctreeNode*>& path);

  MapConfig config_;
  LogOddsVector prior_;
  double prune_tolerance_ = 0.0;
  std::unique_ptr<OctreeNode> root_;
};

/// Walk the coarsest partition refining every tree in `trees` (identical
/// configs required). Regions tile the map exactly once, in Morton order.
void refine(std::span<const SemanticOctree* const> trees,
            const std::function<void(const RefinedRegion&)>& visit);

struct RegionPair {
  NodeKey key;
  LogOddsVector h_a;
  LogOddsVector h_b;
  std::uint64_t cell_count = 0;
};

/// Pairwise common refinement with absent sides resolved to the prior.
std::vector<RegionPair> common_refinement(const SemanticOctree& a, const SemanticOctree& b);

}  // namespace semap

#include "semap/octree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "semap/errors.hpp"

namespace semap {

std::unique_ptr<OctreeNode> OctreeNode::clone() const {
  auto out = std::make_unique<OctreeNode>();
  if (is_leaf()) {
    out->content = value();
  } else {
    Children copy;
    for (int i = 0; i < 8; ++i) {
      if (children()[i]) copy[i] = children()[i]->clone();
    }
    out->content = std::move(copy);
  }
  return out;
}

namespace {

std::unique_ptr<OctreeNode> make_leaf(CellValue v) {
  auto node = std::make_unique<OctreeNode>();
  node->content = std::move(v);
  return node;
}

std::unique_ptr<OctreeNode> make_inner() {
  auto node = std::make_unique<OctreeNode>();
  node->content = OctreeNode::Children{};
  return node;
}

std::size_t subtree_size(const OctreeNode* node) {
  if (!node) return 0;
  if (node->is_leaf()) return 1;
  std::size_t n = 1;
  for (const auto& c : node->children()) n += subtree_size(c.get());
  return n;
}

bool nodes_equal(const OctreeNode* a, const OctreeNode* b) {
  if (!a || !b) return a == b;
  if (a->is_leaf() != b->is_leaf()) return false;
  if (a->is_leaf()) return a->value() == b->value();
  for (int i = 0; i < 8; ++i) {
    if (!nodes_equal(a->children()[i].get(), b->children()[i].get())) return false;
  }
  return true;
}

}  // namespace

SemanticOctree::SemanticOctree(MapConfig config, LogOddsVector prior, double prune_tolerance)
    : config_(config), prior_(std::move(prior)), prune_tolerance_(prune_tolerance) {
  config_.validate();
  if (prior_.size() != static_cast<std::size_t>(config_.classes())) {
    throw InvalidInput("octree: prior length must be C+1");
  }
  if (!all_finite(prior_.span())) throw InvalidInput("octree: prior must be finite");
  if (!(prune_tolerance_ >= 0.0)) throw InvalidInput("octree: prune tolerance must be >= 0");
}

SemanticOctree::SemanticOctree(const SemanticOctree& other)
    : config_(other.config_),
      prior_(other.prior_),
      prune_tolerance_(other.prune_tolerance_),
      root_(other.root_ ? other.root_->clone() : nullptr) {}

SemanticOctree& SemanticOctree::operator=(const SemanticOctree& other) {
  if (this != &other) {
    SemanticOctree copy(other);
    *this = std::move(copy);
  }
  return *this;
}

bool operator==(const SemanticOctree& a, const SemanticOctree& b) {
  return a.config_ == b.config_ && a.prior_ == b.prior_ && nodes_equal(a.root_.get(), b.root_.get());
}

CellValue SemanticOctree::prior_value() const {
  return {prior_, LogQAccumulator(prior_.size())};
}

namespace {

// Exact merging compares bit patterns so that -0.0 and +0.0 stay distinct
// and pruning never changes a stored value.
bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

bool same_bits(const CellValue& a, const CellValue& b) {
  return a.acc.count == b.acc.count && same_bits(a.h.span(), b.h.span()) && same_bits(a.acc.sum_log, b.acc.sum_log);
}

}  // namespace

bool SemanticOctree::is_prior(const CellValue& v) const {
  if (v.acc.count != 0 || !same_bits(v.h.span(), prior_.span())) return false;
  return std::all_of(v.acc.sum_log.begin(), v.acc.sum_log.end(),
                     [](double x) { return std::bit_cast<std::uint64_t>(x) == 0; });
}

void SemanticOctree::reset_root(std::unique_ptr<OctreeNode> root) {
  const std::size_t classes = prior_.size();
  std::function<void(const OctreeNode*, int)> check = [&](const OctreeNode* node, int level) {
    if (!node) return;
    if (node->is_leaf()) {
      const CellValue& v = node->value();
      if (v.h.size() != classes || v.acc.sum_log.size() != classes) {
        throw InvalidInput("octree: leaf vector length must be C+1");
      }
      return;
    }
    if (level >= config_.depth) throw InvalidInput("octree: inner node below finest level");
    for (const auto& c : node->children()) check(c.get(), level + 1);
  };
  check(root.get(), 0);
  root_ = std::move(root);
}

CellValue SemanticOctree::value_at(CellIndex cell, int* level) const {
  if (!config_.in_bounds(cell)) throw InvalidInput("octree: cell out of bounds");
  const NodeKey key = leaf_key(cell, config_.depth);
  const OctreeNode* node = root_.get();
  int lvl = 0;
  while (node && !node->is_leaf()) {
    node = node->children()[key.child_index_at(lvl)].get();
    ++lvl;
  }
  if (level) *level = lvl;
  return node ? node->value() : prior_value();
}

QueryResult SemanticOctree::query(Vec3 point) const {
  if (!config_.contains(point)) throw InvalidInput("octree: query point outside the map");
  int level = 0;
  CellValue v = value_at(config_.cell_of(point), &level);
  return {std::move(v.h), level};
}

std::unique_ptr<OctreeNode>* SemanticOctree::slot_for(NodeKey key, std::vector<OctreeNode*>& path) {
  path.clear();
  std::unique_ptr<OctreeNode>* slot = &root_;
  for (int level = 0; level < key.level; ++level) {
    OctreeNode* node = slot->get();
    if (!node) {
      *slot = make_inner();
    } else if (node->is_leaf()) {
      CellValue v = std::move(node->value());
      const bool at_prior = is_prior(v);
      node->content = OctreeNode::Children{};
      if (!at_prior) {
        for (auto& child : node->children()) child = make_leaf(v);
      }
    }
    path.push_back(slot->get());
    slot = &slot->get()->children()[key.child_index_at(level)];
  }
  return slot;
}

OctreeNode* SemanticOctree::materialize(NodeKey key, std::vector<OctreeNode*>& path) {
  std::unique_ptr<OctreeNode>* slot = slot_for(key, path);
  if (!*slot) {
    *slot = make_leaf(prior_value());
  } else if (!(*slot)->is_leaf()) {
    throw InternalError("octree: region is subdivided");
  }
  return slot->get();
}

bool SemanticOctree::mergeable(const OctreeNode::Children& children) const {
  const CellValue prior = prior_value();
  std::array<const CellValue*, 8> vals{};
  for (int i = 0; i < 8; ++i) {
    const OctreeNode* c = children[i].get();
    if (c && !c->is_leaf()) return false;
    vals[i] = c ? &c->value() : &prior;
  }
  const CellValue& first = *vals[0];
  if (prune_tolerance_ == 0.0) {
    return std::all_of(vals.begin() + 1, vals.end(), [&](const CellValue* v) { return same_bits(*v, first); });
  }
  for (const CellValue* v : vals) {
    if (v->acc.count != first.acc.count) return false;
  }
  const std::size_t k = prior_.size();
  const double n = first.acc.count > 0 ? static_cast<double>(first.acc.count) : 1.0;
  for (std::size_t c = 0; c < k; ++c) {
    double h_lo = first.h[c], h_hi = first.h[c];
    double q_lo = first.acc.sum_log[c] / n, q_hi = q_lo;
    for (const CellValue* v : vals) {
      h_lo = std::min(h_lo, v->h[c]);
      h_hi = std::max(h_hi, v->h[c]);
      const double q = v->acc.sum_log[c] / n;
      q_lo = std::min(q_lo, q);
      q_hi = std::max(q_hi, q);
    }
    if (h_hi - h_lo > prune_tolerance_ || q_hi - q_lo > prune_tolerance_) return false;
  }
  return true;
}

bool SemanticOctree::collapse(std::unique_ptr<OctreeNode>& slot) {
  OctreeNode* node = slot.get();
  if (!node) return false;
  if (node->is_leaf()) {
    if (is_prior(node->value())) {
      slot.reset();
      return true;
    }
    return false;
  }
  auto& children = node->children();
  if (std::all_of(children.begin(), children.end(), [](const auto& c) { return c == nullptr; })) {
    slot.reset();
    return true;
  }
  if (!mergeable(children)) return false;
  CellValue merged = children[0] ? children[0]->value() : prior_value();
  if (is_prior(merged)) {
    slot.reset();
  } else {
    slot = make_leaf(std::move(merged));
  }
  return true;
}

void SemanticOctree::reprune_path(NodeKey key, std::vector<OctreeNode*>& path) {
  // path[i] is the node at level i on the way to key; rebuild slots from it.
  std::vector<std::unique_ptr<OctreeNode>*> slots;
  slots.reserve(static_cast<std::size_t>(key.level) + 1);
  slots.push_back(&root_);
  for (int level = 0; level < key.level; ++level) {
    slots.push_back(&path[static_cast<std::size_t>(level)]->children()[key.child_index_at(level)]);
  }
  for (int level = key.level; level >= 0; --level) collapse(*slots[static_cast<std::size_t>(level)]);
}

void SemanticOctree::update_region(NodeKey key, const std::function<void(CellValue&)>& f) {
  if (key.level < 0 || key.level > config_.depth || key.morton >= (std::uint64_t{1} << (3 * key.level))) {
    throw InvalidInput("octree: node key out of range");
  }
  std::vector<OctreeNode*> path;
  OctreeNode* node = materialize(key, path);
  f(node->value());
  const CellValue& v = node->value();
  if (v.h.size() != prior_.size() || v.acc.sum_log.size() != prior_.size()) {
    throw InvalidInput("octree: update changed the vector length");
  }
  reprune_path(key, path);
}

void SemanticOctree::update_leaf(CellIndex cell, const std::function<void(CellValue&)>& f) {
  if (!config_.in_bounds(cell)) throw InvalidInput("octree: cell out of bounds");
  update_region(leaf_key(cell, config_.depth), f);
}

std::size_t SemanticOctree::prune_subtree(std::unique_ptr<OctreeNode>& slot) {
  OctreeNode* node = slot.get();
  if (!node) return 0;
  std::size_t removed = 0;
  if (!node->is_leaf()) {
    for (auto& child : node->children()) removed += prune_subtree(child);
  }
  const std::size_t before = subtree_size(node);
  if (collapse(slot)) removed += before - subtree_size(slot.get());
  return removed;
}

std::size_t SemanticOctree::prune() { return prune_subtree(root_); }

std::size_t SemanticOctree::leaf_count() const {
  std::size_t n = 0;
  for_each_leaf([&n](NodeKey, const CellValue&) { ++n; });
  return n;
}

std::size_t SemanticOctree::node_count() const { return subtree_size(root_.get()); }

bool SemanticOctree::is_canonical() const {
  std::function<bool(const OctreeNode*)> ok = [&](const OctreeNode* node) {
    if (!node) return true;
    if (node->is_leaf()) return !is_prior(node->value());
    const auto& ch = node->children();
    if (std::all_of(ch.begin(), ch.end(), [](const auto& c) { return c == nullptr; })) return false;
    if (mergeable(ch)) return false;
    return std::all_of(ch.begin(), ch.end(), [&](const auto& c) { return ok(c.get()); });
  };
  return ok(root_.get());
}

void SemanticOctree::visit_preorder(const std::function<void(NodeTag, const CellValue*)>& visit) const {
  if (!root_) {
    const CellValue prior = prior_value();
    visit(NodeTag::Leaf, &prior);
    return;
  }
  std::function<void(const OctreeNode*)> rec = [&](const OctreeNode* node) {
    if (!node) {
      visit(NodeTag::Absent, nullptr);
    } else if (node->is_leaf()) {
      visit(NodeTag::Leaf, &node->value());
    } else {
      visit(NodeTag::Inner, nullptr);
      for (const auto& c : node->children()) rec(c.get());
    }
  };
  rec(root_.get());
}

void SemanticOctree::for_each_leaf(const std::function<void(NodeKey, const CellValue&)>& visit) const {
  std::function<void(const OctreeNode*, NodeKey)> rec = [&](const OctreeNode* node, NodeKey key) {
    if (!node) return;
    if (node->is_leaf()) {
      visit(key, node->value());
      return;
    }
    for (int i = 0; i < 8; ++i) rec(node->children()[i].get(), key.child(i));
  };
  rec(root_.get(), NodeKey{});
}

std::vector<LogOddsVector> SemanticOctree::to_dense_grid(std::uint64_t max_entries) const {
  const std::uint64_t cells = config_.num_cells();
  if (cells > max_entries / static_cast<std::uint64_t>(config_.classes())) {
    throw ResourceError("to_dense_grid: grid exceeds the size limit");
  }
  std::vector<LogOddsVector> grid(cells, prior_);
  const int depth = config_.depth;
  for_each_leaf([&](NodeKey key, const CellValue& v) {
    const CellIndex lo = key_min_cell(key, depth);
    const int edge = static_cast<int>(key_edge_cells(key, depth));
    for (int z = lo.iz; z < lo.iz + edge; ++z)
      for (int y = lo.iy; y < lo.iy + edge; ++y)
        for (int x = lo.ix; x < lo.ix + edge; ++x) grid[config_.linear_index({x, y, z})] = v.h;
  });
  return grid;
}

namespace {

void refine_rec(std::vector<std::vector<const OctreeNode*>>& levels, std::vector<const CellValue*>& values,
                NodeKey key, int depth, const std::function<void(const RefinedRegion&)>& visit) {
  const auto& nodes = levels[static_cast<std::size_t>(key.level)];
  const bool any_inner =
      std::any_of(nodes.begin(), nodes.end(), [](const OctreeNode* n) { return n && !n->is_leaf(); });
  if (!any_inner) {
    for (std::size_t i = 0; i < nodes.size(); ++i) values[i] = nodes[i] ? &nodes[i]->value() : nullptr;
    visit(RefinedRegion{key, key_cell_count(key, depth), values});
    return;
  }
  auto& next = levels[static_cast<std::size_t>(key.level) + 1];
  for (int c = 0; c < 8; ++c) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const OctreeNode* n = nodes[i];
      next[i] = (n && !n->is_leaf()) ? n->children()[c].get() : n;
    }
    refine_rec(levels, values, key.child(c), depth, visit);
  }
}

}  // namespace

void refine(std::span<const SemanticOctree* const> trees, const std::function<void(const RefinedRegion&)>& visit) {
  if (trees.empty()) return;
  const MapConfig& cfg = trees[0]->config();
  for (const SemanticOctree* t : trees) {
    if (!(t->config() == cfg)) throw InvalidInput("refine: map configs differ");
  }
  std::vector<std::vector<const OctreeNode*>> levels(static_cast<std::size_t>(cfg.depth) + 1,
                                                     std::vector<const OctreeNode*>(trees.size()));
  for (std::size_t i = 0; i < trees.size(); ++i) levels[0][i] = trees[i]->root();
  std::vector<const CellValue*> values(trees.size());
  refine_rec(levels, values, NodeKey{}, cfg.depth, visit);
}

std::vector<RegionPair> common_refinement(const SemanticOctree& a, const SemanticOctree& b) {
  std::vector<RegionPair> out;
  const std::array<const SemanticOctree*, 2> trees{&a, &b};
  refine(trees, [&](const RefinedRegion& r) {
    out.push_back({r.key, r.values[0] ? r.values[0]->h : a.prior(), r.values[1] ? r.values[1]->h : b.prior(),
                   r.cell_count});
  });
  return out;
}

}  // namespace semap

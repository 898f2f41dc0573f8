#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "semap/errors.hpp"
#include "semap/octree.hpp"
#include "test_support.hpp"

using namespace semap;

namespace {

SemanticOctree empty_tree(int depth, int C, double tau = 0.0) {
  return SemanticOctree(test::small_config(depth, C), LogOddsVector(static_cast<std::size_t>(C + 1), 0.0), tau);
}

auto set_to(const CellValue& v) {
  return [v](CellValue& x) { x = v; };
}

CellValue value_with_h(std::size_t classes, double h1) {
  CellValue v;
  v.h = LogOddsVector(classes, 0.0);
  v.h[1] = h1;
  v.acc = LogQAccumulator(classes);
  return v;
}

}  // namespace

TEST_CASE("empty tree queries the prior at level 0") {
  const auto tree = empty_tree(3, 2);
  CHECK(tree.empty());
  const auto q = tree.query({1.5, 2.5, 7.9});
  CHECK(q.h == tree.prior());
  CHECK(q.level == 0);
  CHECK_THROWS_AS(tree.query({8.0, 0.0, 0.0}), InvalidInput);
  CHECK(tree.leaf_count() == 0);
  CHECK(tree.is_canonical());
}

TEST_CASE("update_leaf materializes one path and reads back") {
  auto tree = empty_tree(3, 2);
  const CellValue v = value_with_h(3, 1.5);
  tree.update_leaf({1, 2, 3}, set_to(v));
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.node_count() == 4);  // three inner nodes and the leaf
  const auto q = tree.query({1.5, 2.5, 3.5});
  CHECK(q.h == v.h);
  CHECK(q.level == 3);
  // A sibling of the leaf is absent, so it resolves at the parent's child level.
  const auto sib = tree.query({0.5, 2.5, 3.5});
  CHECK(sib.h == tree.prior());
  CHECK_THROWS_AS(tree.update_leaf({8, 0, 0}, [](CellValue&) {}), InvalidInput);
  int visits = 0;
  tree.visit_preorder([&](NodeTag tag, const CellValue*) { visits += tag == NodeTag::Absent ? 0 : 1; });
  CHECK(visits == 4);
}

TEST_CASE("identity updates leave every query unchanged") {
  std::mt19937_64 rng(21);
  auto tree = empty_tree(2, 2);
  for (int i = 0; i < 20; ++i) {
    tree.update_leaf({static_cast<int>(rng() % 4), static_cast<int>(rng() % 4), static_cast<int>(rng() % 4)},
                     set_to(test::palette_value(rng, 3, 3)));
  }
  const auto before = tree.to_dense_grid();
  const SemanticOctree copy = tree;
  for (int i = 0; i < 64; ++i) tree.update_leaf(tree.config().cell_at(static_cast<std::uint64_t>(i)), [](CellValue&) {});
  CHECK(tree.to_dense_grid() == before);
  CHECK(tree == copy);
}

TEST_CASE("eight equal siblings collapse into their parent") {
  auto tree = empty_tree(2, 2);
  const CellValue v = value_with_h(3, 2.0);
  tree.update_leaf({0, 0, 0}, set_to(v));
  tree.update_leaf({1, 0, 0}, set_to(v));
  CHECK(tree.leaf_count() == 2);
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) tree.update_leaf({x, y, z}, set_to(v));
  CHECK(tree.leaf_count() == 1);
  const auto q = tree.query({1.9, 0.1, 1.2});
  CHECK(q.h == v.h);
  CHECK(q.level == 1);
  // Outside the collapsed octant nothing changed.
  CHECK(tree.query({3.5, 3.5, 3.5}).h == tree.prior());
}

TEST_CASE("prune examples") {
  SUBCASE("already canonical tree") {
    auto tree = empty_tree(2, 1);
    tree.update_leaf({1, 1, 1}, set_to(value_with_h(2, 1.0)));
    CHECK(tree.prune() == 0);
  }
  SUBCASE("uniform depth-1 tree collapses to a root leaf") {
    auto tree = empty_tree(1, 1);
    auto root = std::make_unique<OctreeNode>();
    OctreeNode::Children kids;
    for (auto& k : kids) k = std::make_unique<OctreeNode>(OctreeNode{value_with_h(2, 3.0)});
    root->content = std::move(kids);
    tree.reset_root(std::move(root));
    CHECK_FALSE(tree.is_canonical());
    CHECK(tree.prune() == 8);
    CHECK(tree.is_canonical());
    REQUIRE(tree.root() != nullptr);
    CHECK(tree.root()->is_leaf());
    CHECK(tree.query({0.2, 0.2, 0.2}).level == 0);
  }
  SUBCASE("one divergent child blocks the merge") {
    auto tree = empty_tree(1, 1);
    for (int i = 0; i < 8; ++i) tree.update_leaf(tree.config().cell_at(static_cast<std::uint64_t>(i)), set_to(value_with_h(2, i == 5 ? 1.0 : 3.0)));
    CHECK(tree.leaf_count() == 8);
    CHECK(tree.prune() == 0);
  }
}

TEST_CASE("accumulators must agree for a merge") {
  auto tree = empty_tree(1, 1);
  CellValue v = value_with_h(2, 1.0);
  for (int i = 0; i < 8; ++i) {
    CellValue w = v;
    if (i == 3) w.acc.count = 1;
    tree.update_leaf(tree.config().cell_at(static_cast<std::uint64_t>(i)), set_to(w));
  }
  CHECK(tree.leaf_count() == 8);
}

TEST_CASE("prior-valued leaves disappear") {
  auto tree = empty_tree(3, 2);
  tree.update_leaf({4, 4, 4}, set_to(value_with_h(3, 1.0)));
  tree.update_leaf({4, 4, 4}, set_to(tree.prior_value()));
  CHECK(tree.empty());
}

TEST_CASE("positive tolerance merges near-equal leaves") {
  auto tree = empty_tree(1, 1, 0.1);
  for (int i = 0; i < 8; ++i) tree.update_leaf(tree.config().cell_at(static_cast<std::uint64_t>(i)), set_to(value_with_h(2, 1.0 + 0.01 * i)));
  CHECK(tree.leaf_count() == 1);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(tree.value_at(tree.config().cell_at(static_cast<std::uint64_t>(i))).h[1] - (1.0 + 0.01 * i)) <= 0.1);
}

TEST_CASE("common refinement examples") {
  SUBCASE("two empty trees") {
    const auto a = empty_tree(2, 1);
    const auto b = empty_tree(2, 1);
    const auto regions = common_refinement(a, b);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].key == NodeKey{0, 0});
    CHECK(regions[0].cell_count == 64);
    CHECK(regions[0].h_a == a.prior());
    CHECK(regions[0].h_b == b.prior());
  }
  SUBCASE("one materialized leaf against an empty tree") {
    auto a = empty_tree(2, 1);
    const auto b = empty_tree(2, 1);
    const CellValue v = value_with_h(2, 4.0);
    a.update_leaf({3, 2, 1}, set_to(v));
    const auto regions = common_refinement(a, b);
    // Root split into 8 octants, one of which splits into 8 cells.
    CHECK(regions.size() == 15);
    int marked = 0;
    for (const auto& r : regions) {
      CHECK(r.h_b == b.prior());
      if (r.h_a == v.h) {
        ++marked;
        CHECK(r.key == leaf_key({3, 2, 1}, 2));
        CHECK(r.cell_count == 1);
      } else {
        CHECK(r.h_a == a.prior());
      }
    }
    CHECK(marked == 1);
  }
  SUBCASE("identical trees give their own leaves") {
    std::mt19937_64 rng(22);
    auto a = empty_tree(2, 2);
    for (int i = 0; i < 10; ++i) a.update_leaf({static_cast<int>(rng() % 4), static_cast<int>(rng() % 4), 0}, set_to(test::palette_value(rng, 3, 4)));
    const auto regions = common_refinement(a, a);
    std::size_t leaves = 0;
    for (const auto& r : regions) {
      CHECK(r.h_a == r.h_b);
      leaves += r.h_a == a.prior() ? 0 : 1;
    }
    std::size_t non_prior = 0;
    a.for_each_leaf([&](NodeKey, const CellValue& v) { non_prior += v.h == a.prior() ? 0 : 1; });
    CHECK(leaves == non_prior);
  }
  CHECK_THROWS_AS(common_refinement(empty_tree(2, 1), empty_tree(3, 1)), InvalidInput);
}

TEST_CASE("refinement regions tile the map") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int depth = 1 + trial % 3;
    const int n = 1 << depth;
    std::vector<SemanticOctree> trees;
    for (int t = 0; t < 3; ++t) {
      trees.push_back(empty_tree(depth, 2));
      const int updates = static_cast<int>(rng() % 30);
      for (int i = 0; i < updates; ++i) {
        trees.back().update_leaf({static_cast<int>(rng() % n), static_cast<int>(rng() % n), static_cast<int>(rng() % n)},
                                 set_to(test::palette_value(rng, 3, 3)));
      }
    }
    std::vector<const SemanticOctree*> ptrs{&trees[0], &trees[1], &trees[2]};
    std::uint64_t total = 0;
    std::vector<int> covered(static_cast<std::size_t>(n * n * n), 0);
    refine(ptrs, [&](const RefinedRegion& r) {
      total += r.cell_count;
      const CellIndex lo = key_min_cell(r.key, depth);
      const int e = static_cast<int>(key_edge_cells(r.key, depth));
      for (int z = 0; z < e; ++z)
        for (int y = 0; y < e; ++y)
          for (int x = 0; x < e; ++x) {
            const CellIndex c{lo.ix + x, lo.iy + y, lo.iz + z};
            ++covered[trees[0].config().linear_index(c)];
            for (std::size_t t = 0; t < 3; ++t) {
              const CellValue expect = trees[t].value_at(c);
              const CellValue got = r.values[t] ? *r.values[t] : trees[t].prior_value();
              CHECK(got == expect);
            }
          }
    });
    CHECK(total == trees[0].config().num_cells());
    CHECK(std::all_of(covered.begin(), covered.end(), [](int k) { return k == 1; }));
  }
}

TEST_CASE("dense grid examples and size guard") {
  const auto tree = empty_tree(2, 2);
  for (const auto& h : tree.to_dense_grid()) CHECK(h == tree.prior());
  auto one = empty_tree(2, 2);
  auto root = std::make_unique<OctreeNode>(OctreeNode{value_with_h(3, 0.75)});
  one.reset_root(std::move(root));
  for (const auto& h : one.to_dense_grid()) CHECK(h[1] == 0.75);
  CHECK_THROWS_AS(tree.to_dense_grid(64 * 3 - 1), ResourceError);
}

TEST_CASE("a random grid round-trips through update_leaf") {
  std::mt19937_64 rng(24);
  for (int depth = 1; depth <= 3; ++depth) {
    auto tree = empty_tree(depth, 3);
    std::vector<LogOddsVector> grid;
    for (std::uint64_t i = 0; i < tree.config().num_cells(); ++i) {
      CellValue v = test::palette_value(rng, 4, 2);
      v.h[2] += static_cast<double>(rng() % 2) * 0.1;
      grid.push_back(v.h);
      tree.update_leaf(tree.config().cell_at(i), set_to(v));
    }
    CHECK(tree.to_dense_grid() == grid);
    CHECK(tree.is_canonical());
  }
}

// Octree against a plain array under random update sequences. Values come
// from a small palette so that merges and re-expansions happen constantly.
TEST_CASE("exact pruning is lossless") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 1000; ++trial) {
    const int depth = 1 + trial % 3;
    const int C = 1 + (trial / 3) % 4;
    const auto classes = static_cast<std::size_t>(C + 1);
    auto tree = empty_tree(depth, C);
    const MapConfig& cfg = tree.config();
    std::vector<CellValue> dense(cfg.num_cells(), tree.prior_value());
    const int n = cfg.cells_per_axis();
    const int steps = 1 + static_cast<int>(rng() % 200);
    for (int s = 0; s < steps; ++s) {
      // Clustered cells make full octants likely.
      const int base = static_cast<int>(rng() % 2) * (n / 2);
      const CellIndex c{base + static_cast<int>(rng() % (n / 2 == 0 ? 1 : n / 2)) % n, static_cast<int>(rng() % n),
                        static_cast<int>(rng() % n)};
      std::function<void(CellValue&)> f;
      switch (rng() % 4) {
        case 0: f = set_to(test::palette_value(rng, classes, 2)); break;
        case 1: f = set_to(tree.prior_value()); break;
        case 2: {
          const auto p = test::random_distribution(rng, classes);
          f = [p](CellValue& v) { accumulate_in_place(v.acc, p); };
          break;
        }
        default: {
          const double d = 0.25 * static_cast<double>(rng() % 3);
          f = [d](CellValue& v) { v.h[v.h.size() - 1] += d; };
        }
      }
      tree.update_leaf(c, f);
      f(dense[cfg.linear_index(c)]);
    }
    REQUIRE(tree.is_canonical());
    const auto grid = tree.to_dense_grid();
    bool same = true;
    for (std::uint64_t i = 0; i < cfg.num_cells(); ++i) {
      same = same && test::bitwise_equal(grid[i].span(), dense[i].h.span());
      const CellValue v = tree.value_at(cfg.cell_at(i));
      same = same && v.acc.count == dense[i].acc.count &&
             test::bitwise_equal(v.acc.sum_log, dense[i].acc.sum_log);
    }
    CHECK(same);
    CHECK(tree.leaf_count() <= cfg.num_cells());
  }
}

TEST_CASE("canonical form does not depend on update order") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    const int depth = 1 + trial % 3;
    auto a = empty_tree(depth, 2);
    auto b = empty_tree(depth, 2);
    const MapConfig& cfg = a.config();
    std::vector<CellValue> target(cfg.num_cells());
    for (auto& v : target) v = rng() % 3 == 0 ? a.prior_value() : test::palette_value(rng, 3, 2);
    std::vector<std::uint64_t> order(cfg.num_cells());
    std::iota(order.begin(), order.end(), 0);
    for (auto i : order) a.update_leaf(cfg.cell_at(i), set_to(target[i]));
    std::shuffle(order.begin(), order.end(), rng);
    // b first passes through unrelated values before settling on the target.
    for (auto i : order) b.update_leaf(cfg.cell_at(i), set_to(test::palette_value(rng, 3, 4)));
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) b.update_leaf(cfg.cell_at(i), set_to(target[i]));
    CHECK(a == b);
    CHECK(a.node_count() == b.node_count());
  }
}

TEST_CASE("update_region requires an unsubdivided target") {
  auto tree = empty_tree(2, 1);
  tree.update_leaf({0, 0, 0}, set_to(value_with_h(2, 1.0)));
  CHECK_THROWS(tree.update_region(NodeKey{0, 0}, [](CellValue&) {}));
  const NodeKey far = NodeKey{0, 0}.child(7);
  tree.update_region(far, set_to(value_with_h(2, 2.0)));
  CHECK(tree.query({3.5, 3.5, 3.5}).h[1] == 2.0);
  CHECK(tree.query({3.5, 3.5, 3.5}).level == 1);
}

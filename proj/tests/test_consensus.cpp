#include <doctest.h>

#include <cmath>
#include <random>

#include "semap/consensus.hpp"
#include "semap/errors.hpp"
#include "test_support.hpp"

using namespace semap;

namespace {

// Numerical derivative of the per-cell objective, the oracle for the
// analytic gradient.
LogOddsVector finite_difference(const LogOddsVector& h, const LogProbVector& logq, double step) {
  LogOddsVector g(h.size());
  for (std::size_t c = 0; c < h.size(); ++c) {
    LogOddsVector hp = h, hm = h;
    hp[c] += step;
    hm[c] -= step;
    g[c] = (objective_value(hp, logq) - objective_value(hm, logq)) / (2.0 * step);
  }
  return g;
}

SemanticOctree tree(int depth, int C) {
  return SemanticOctree(test::small_config(depth, C), LogOddsVector(static_cast<std::size_t>(C + 1), 0.0));
}

LogProbVector logp(const ClassDistribution& p) {
  LogProbVector out(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) out[c] = std::log(p[c]);
  return out;
}

}  // namespace

TEST_CASE("graph validation") {
  CHECK_THROWS_AS(RobotGraph(2, {0.0, 1.0, 0.5, 0.5}), InvalidInput);                      // asymmetric
  CHECK_NOTHROW(RobotGraph(2, {0.0, 1.0, 0.5, 0.5}, true));                                 // allowed
  CHECK_THROWS_AS(RobotGraph(2, {0.0, 1.0, 0.0, 1.0}, true), InvalidInput);                 // one-way edge
  CHECK_THROWS_AS(RobotGraph(2, {0.5, 0.4, 0.4, 0.5}), InvalidInput);                       // row sum
  CHECK_THROWS_AS(RobotGraph(2, {1.5, -0.5, -0.5, 1.5}), InvalidInput);                     // negative
  CHECK_THROWS_AS(RobotGraph(2, {1.0, 0.0, 0.0}), InvalidInput);
}

TEST_CASE("metropolis weights") {
  const auto star = RobotGraph::star(4);
  CHECK(star.weight(0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(star.weight(1, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(star.weight(0, 0) == doctest::Approx(0.0));
  CHECK(star.edges().size() == 3);
  CHECK(star.connected());
  CHECK_FALSE(RobotGraph::edgeless(3).connected());
  const auto full = RobotGraph::complete(4);
  CHECK(full.neighbors(2).size() == 3);
  CHECK(full.weight(2, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(RobotGraph::ring(5).neighbors(0).size() == 2);
  CHECK(RobotGraph::path(3).edges().size() == 2);
}

TEST_CASE("consensus step examples") {
  const LogOddsVector h{0.0, 2.0, -1.0};
  const std::vector<WeightedNeighbor> same{{0.5, h}, {0.5, h}};
  CHECK(consensus_step(h, same, 0.25) == h);
  const std::vector<WeightedNeighbor> other{{1.0, LogOddsVector{0.0, 5.0, 5.0}}};
  CHECK(consensus_step(h, other, 0.0) == h);

  const LogOddsVector h1{0.0, 2.0}, h2{0.0, 0.0};
  const std::vector<WeightedNeighbor> n1{{1.0, h2}}, n2{{1.0, h1}};
  CHECK(consensus_step(h1, n1, 0.25) == LogOddsVector{0.0, 1.0});
  CHECK(consensus_step(h2, n2, 0.25) == LogOddsVector{0.0, 1.0});

  const std::vector<WeightedNeighbor> heavy{{0.7, h2}, {0.7, h2}};
  CHECK_THROWS_AS(consensus_step(h1, heavy, 0.25), InvalidInput);
  CHECK_THROWS_AS(consensus_step(h1, n1, -0.1), InvalidInput);
}

TEST_CASE("gradient examples") {
  const auto g = gradient(LogOddsVector{0.0, 0.0}, LogProbVector{0.0, -1.0});
  CHECK(std::abs(g[0] - 0.25) < 1e-15);
  CHECK(std::abs(g[1] + 0.25) < 1e-15);
  const auto gl = gradient(LogOddsVector{0.0, 0.0}, LogProbVector{0.0, -1.0}, GradientForm::Literal);
  CHECK(std::abs(gl[0] - 0.25) < 1e-15);
  CHECK(std::abs(gl[1] + 0.25) < 1e-15);

  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const auto h = test::random_h(rng, 4, 5.0);
    LogProbVector q(4);
    const double a = std::uniform_real_distribution<double>(-10.0, 10.0)(rng);
    for (std::size_t c = 0; c < 4; ++c) q[c] = h[c] + a;
    for (double x : gradient(h, q)) CHECK(std::abs(x) < 1e-12);
  }
  CHECK_THROWS_AS(gradient(LogOddsVector{0.0, 0.0}, LogProbVector{0.0}), InvalidInput);
  CHECK_THROWS_AS(gradient(LogOddsVector{0.0, NAN}, LogProbVector{0.0, 0.0}), InvalidInput);
}

TEST_CASE("gradient matches finite differences and the literal form") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  double worst_rel = 0.0, worst_forms = 0.0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);  // C = 1..4
    const auto h = test::random_h(rng, n, 5.0);
    LogProbVector q(n);
    for (auto& x : q) x = u(rng);
    const auto g = gradient(h, q);
    const auto gl = gradient(h, q, GradientForm::Literal);
    const auto fd = finite_difference(h, q, 1e-5);
    double scale = 0.0;
    for (double x : fd) scale = std::max(scale, std::abs(x));
    worst_rel = std::max(worst_rel, test::max_abs_diff(g.span(), fd.span()) / std::max(scale, 1e-3));
    worst_forms = std::max(worst_forms, test::max_abs_diff(g.span(), gl.span()));
  }
  CHECK(worst_rel < 1e-6);
  CHECK(worst_forms < 1e-9);
}

TEST_CASE("gradient vanishes only for constant differences") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto h = test::random_h(rng, 3, 3.0);
    LogProbVector q(3);
    for (std::size_t c = 0; c < 3; ++c) q[c] = h[c] - 1.0;
    double last = 0.0;
    for (double eps : {1e-4, 1e-3, 1e-2, 1e-1}) {
      LogProbVector p = q;
      p[2] += eps;
      const auto g = gradient(h, p);
      double norm = 0.0;
      for (double x : g) norm = std::max(norm, std::abs(x));
      CHECK(norm > last);
      last = norm;
    }
  }
}

TEST_CASE("apply_gradient examples") {
  const LogOddsVector ht{0.5, 1.0};
  CHECK(apply_gradient(ht, LogOddsVector{0.0, 0.0}, 1.0) == normalize(ht));
  CHECK(apply_gradient(ht, LogOddsVector{3.0, 1.0}, 0.0) == normalize(ht));
  CHECK(apply_gradient(LogOddsVector{0.0, 0.0}, LogOddsVector{0.25, -0.25}, 1.0) == LogOddsVector{0.0, -0.5});
  const auto clamped = apply_gradient(LogOddsVector{0.0, 49.0}, LogOddsVector{-5.0, 5.0}, 1.0);
  CHECK(clamped == LogOddsVector{0.0, 55.0});
  CHECK_THROWS_AS(apply_gradient(ht, LogOddsVector{0.0, 0.0}, -1.0), InvalidInput);
}

TEST_CASE("objective examples") {
  const LogOddsVector h{0.0, 1.0, -0.5};
  CHECK(std::abs(objective_value(h, log_softmax(h))) < 1e-15);
  CHECK(std::abs(objective_value(LogOddsVector{0.0, 0.0}, LogProbVector{std::log(0.25), std::log(0.25)}) - std::log(0.5)) <
        1e-15);
}

TEST_CASE("objective is maximized at normalize(log q)") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 3);
    const LogProbVector q = logp(test::random_distribution(rng, n));
    // Coordinate ascent with shrinking steps as a black-box maximizer.
    LogOddsVector h(n, 0.0);
    double best = objective_value(h, q);
    for (double step = 1.0; step > 1e-9; step *= 0.5) {
      bool improved = true;
      while (improved) {
        improved = false;
        for (std::size_t c = 1; c < n; ++c) {
          for (double s : {step, -step}) {
            LogOddsVector t = h;
            t[c] += s;
            const double v = objective_value(t, q);
            if (v > best) {
              best = v;
              h = t;
              improved = true;
            }
          }
        }
      }
    }
    LogOddsVector expect(n);
    for (std::size_t c = 0; c < n; ++c) expect[c] = q[c] - q[0];
    CHECK(test::max_abs_diff(h.span(), expect.span()) < 1e-4);
    CHECK(objective_value(expect, q) >= best - 1e-12);
  }
}

TEST_CASE("residual examples") {
  auto a = tree(1, 1);
  auto b = tree(1, 1);
  const RobotGraph g = RobotGraph::complete(2);
  std::vector<SemanticOctree> same{a, b};
  CHECK(constraint_residual(same, g, false) == 0.0);

  CellValue v;
  v.h = LogOddsVector{0.0, 1.0};
  v.acc = LogQAccumulator(2);
  auto root = std::make_unique<OctreeNode>(OctreeNode{v});
  b.reset_root(std::move(root));
  std::vector<SemanticOctree> maps{a, b};
  CHECK(constraint_residual(maps, g, false) == 8.0);
  CHECK(constraint_residual(maps, g, true) == 8.0);  // A_12 = 1 for two robots
  const RobotGraph half(2, {0.5, 0.5, 0.5, 0.5});
  CHECK(constraint_residual(maps, half, true) == 4.0);

  std::vector<SemanticOctree> mismatched{tree(1, 1), tree(2, 1)};
  CHECK_THROWS_AS(constraint_residual(mismatched, g, false), InvalidInput);
}

TEST_CASE("octree and dense residuals agree exactly") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    const int depth = 1 + trial % 3;
    std::vector<SemanticOctree> trees;
    std::vector<DenseMap> dense;
    for (int r = 0; r < 3; ++r) {
      trees.push_back(tree(depth, 2));
      for (int i = 0; i < 20; ++i) {
        const CellIndex c = trees.back().config().cell_at(rng() % trees.back().config().num_cells());
        const CellValue v = test::palette_value(rng, 3, 3);
        trees.back().update_leaf(c, [&](CellValue& x) { x = v; });
      }
      dense.push_back(DenseMap(trees.back().config(), trees.back().prior()));
      const auto grid = trees.back().to_dense_grid();
      for (std::uint64_t i = 0; i < grid.size(); ++i) {
        std::copy(grid[i].begin(), grid[i].end(), dense.back().h_data().begin() + static_cast<std::ptrdiff_t>(i * 3));
      }
    }
    const RobotGraph g = RobotGraph::complete(3);
    CHECK(constraint_residual(trees, g, true) == constraint_residual(dense, g, true));
    CHECK(constraint_residual(trees, g, false) == constraint_residual(dense, g, false, Execution::Parallel));
  }
}

// Consensus alone (gamma = 0) on random connected graphs.
TEST_CASE("consensus rounds contract the residual") {
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 5);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 1; i < n; ++i) edges.emplace_back(rng() % i, i);  // random spanning tree
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t i = rng() % n, j = rng() % n;
      if (i != j) edges.emplace_back(i, j);
    }
    const RobotGraph g = RobotGraph::metropolis(n, edges);
    REQUIRE(g.connected());
    const double eps = trial % 2 ? 0.25 : 0.1;
    std::vector<SemanticOctree> maps;
    for (std::size_t i = 0; i < n; ++i) {
      maps.push_back(tree(2, 2));
      for (int k = 0; k < 10; ++k) {
        const CellValue v = test::palette_value(rng, 3, 5);
        maps.back().update_leaf(maps.back().config().cell_at(rng() % 64), [&](CellValue& x) { x.h = v.h; });
      }
    }
    IterationParams params;
    params.epsilon = eps;
    params.gamma = 0.0;
    double last = constraint_residual(maps, g, false);
    const int rounds = static_cast<int>(10.0 * static_cast<double>(n) / eps);
    bool monotone = true;
    for (int k = 1; k <= rounds; ++k) {
      const std::vector<SemanticOctree> snapshot = maps;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<const SemanticOctree*> nbr;
        std::vector<double> w;
        for (const Neighbor& nb : g.neighbors(i)) {
          nbr.push_back(&snapshot[nb.index]);
          w.push_back(nb.weight);
        }
        iterate(maps[i], nbr, w, params, k);
      }
      const double r = constraint_residual(maps, g, false);
      monotone = monotone && r <= last;
      if (k == 1 && last > 0.0) CHECK(r < last);
      last = r;
    }
    CHECK(monotone);
    CHECK(last < 1e-12);
  }
}

TEST_CASE("single robot converges to normalize(log q)") {
  std::mt19937_64 rng(47);
  auto own = tree(2, 3);
  std::vector<std::pair<CellIndex, ClassDistribution>> seen;
  for (int i = 0; i < 20; ++i) {
    const CellIndex c = own.config().cell_at(rng() % 64);
    const auto p = clamp_probabilities(test::random_distribution(rng, 4));
    own.update_leaf(c, [&](CellValue& v) { accumulate_in_place(v.acc, p); });
  }
  IterationParams params;
  params.k_max = 200;
  params.update_tol = 0.0;
  const SolveResult res = solve(own, {}, {}, params);
  CHECK(res.iterations == 200);
  double worst = 0.0;
  own.for_each_leaf([&](NodeKey, const CellValue& v) {
    CHECK(v.h[0] == 0.0);
    if (v.acc.count == 0) return;
    const auto q = log_q(v.acc, own.prior());
    for (std::size_t c = 0; c < 4; ++c) worst = std::max(worst, std::abs(v.h[c] - (q[c] - q[0])));
  });
  CHECK(worst < 1e-3);
}

TEST_CASE("fixed points stay put") {
  SUBCASE("two robots at the prior") {
    auto a = tree(2, 2);
    auto b = tree(2, 2);
    const std::vector<const SemanticOctree*> na{&b}, nb{&a};
    const std::vector<double> w{1.0};
    const auto ra = iterate(a, na, w, IterationParams{}, 1);
    const auto rb = iterate(b, nb, w, IterationParams{}, 1);
    CHECK(ra.update_norm == 0.0);
    CHECK(rb.update_norm == 0.0);
    CHECK(a.empty());
    CHECK(b.empty());
  }
  SUBCASE("identical maps at the gradient fixed point") {
    auto a = tree(2, 2);
    const ClassDistribution p{0.2, 0.5, 0.3};
    a.update_leaf({1, 1, 1}, [&](CellValue& v) {
      accumulate_in_place(v.acc, p);
      v.h = from_distribution(p);
    });
    // Exact fixed point: h equals the normalized log q bit for bit.
    a.update_leaf({1, 1, 1}, [&](CellValue& v) {
      const auto q = log_q(v.acc, a.prior());
      for (std::size_t c = 0; c < 3; ++c) v.h[c] = q[c] - q[0];
    });
    const auto b = a;
    const std::vector<const SemanticOctree*> nbr{&b};
    const std::vector<double> w{1.0};
    const auto r = iterate(a, nbr, w, IterationParams{}, 1);
    CHECK(r.update_norm < 1e-15);
  }
}

TEST_CASE("octree and dense iterate agree bitwise") {
  std::mt19937_64 rng(48);
  for (int trial = 0; trial < 20; ++trial) {
    const int depth = 1 + trial % 3;
    const MapConfig cfg = test::small_config(depth, 2);
    const LogOddsVector prior(3, 0.0);
    std::vector<SemanticOctree> trees(3, SemanticOctree(cfg, prior));
    std::vector<DenseMap> dense(3, DenseMap(cfg, prior));
    for (std::size_t r = 0; r < 3; ++r) {
      for (int i = 0; i < 15; ++i) {
        const CellIndex c = cfg.cell_at(rng() % cfg.num_cells());
        const auto p = clamp_probabilities(test::random_distribution(rng, 3));
        trees[r].update_leaf(c, [&](CellValue& v) { accumulate_in_place(v.acc, p); });
        dense[r].accumulate(c, p);
      }
    }
    const RobotGraph g = RobotGraph::complete(3);
    for (int k = 1; k <= 5; ++k) {
      const auto tree_snap = trees;
      std::vector<DenseSnapshot> dense_snap;
      for (const auto& d : dense) dense_snap.push_back(DenseSnapshot{cfg, {d.h_data().begin(), d.h_data().end()}});
      for (std::size_t i = 0; i < 3; ++i) {
        std::vector<const SemanticOctree*> tn;
        std::vector<const DenseSnapshot*> dn;
        std::vector<double> w;
        for (const Neighbor& nb : g.neighbors(i)) {
          tn.push_back(&tree_snap[nb.index]);
          dn.push_back(&dense_snap[nb.index]);
          w.push_back(nb.weight);
        }
        const auto rt = iterate(trees[i], tn, w, IterationParams{}, k);
        const auto rd = iterate(dense[i], dn, w, IterationParams{}, k, Execution::Parallel);
        CHECK(rt.update_norm == rd.update_norm);
      }
    }
    for (std::size_t r = 0; r < 3; ++r) {
      const auto grid = trees[r].to_dense_grid();
      std::vector<double> flat;
      for (const auto& h : grid) flat.insert(flat.end(), h.begin(), h.end());
      CHECK(test::bitwise_equal(flat, dense[r].h_data()));
      CHECK(trees[r].is_canonical());
    }
  }
}

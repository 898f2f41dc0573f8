#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "semap/errors.hpp"
#include "semap/observation.hpp"
#include "test_support.hpp"

using namespace semap;

namespace {

const MapConfig kCfg{{0.0, 0.0, 0.0}, 1.0, 3, 2};

RayObservation ray(Vec3 origin, Vec3 dir, double range, int category = 2, bool max_hit = false) {
  const double n = dir.norm();
  return {origin, (1.0 / n) * dir, range, ClassId(category), max_hit};
}

}  // namespace

TEST_CASE("inverse model examples") {
  const InverseModelParams params{0.7, 0.7};
  const auto z = ray({0.5, 0.5, 0.5}, {1, 0, 0}, 2.0, 2);
  const auto cells = traverse_ray(z, kCfg);
  REQUIRE(cells.size() == 3);
  const auto hit = inverse_observation(z, cells.back(), params, kCfg);
  CHECK(hit[0] == doctest::Approx(0.15));
  CHECK(hit[1] == doctest::Approx(0.15));
  CHECK(hit[2] == doctest::Approx(0.7));
  const auto free = inverse_observation(z, cells.front(), params, kCfg);
  CHECK(free[0] == doctest::Approx(0.7));
  CHECK(free[1] == doctest::Approx(0.15));
  CHECK(free[2] == doctest::Approx(0.15));
  CHECK_THROWS_AS(inverse_observation(z, CellIndex{5, 5, 5}, params, kCfg), InvalidInput);
}

TEST_CASE("max-range rays mark every traversed cell free") {
  const InverseModelParams params{0.7, 0.7};
  const auto z = ray({0.5, 0.5, 0.5}, {1, 0, 0}, 2.0, 2, true);
  for (const CellIndex& c : traverse_ray(z, kCfg)) CHECK(inverse_observation(z, c, params, kCfg)[0] == doctest::Approx(0.7));
}

TEST_CASE("inverse model parameters must be informative") {
  CHECK_THROWS_AS((InverseModelParams{0.5, 0.7}.validate(1)), InvalidInput);
  CHECK_THROWS_AS((InverseModelParams{0.7, 1.0}.validate(2)), InvalidInput);
  CHECK_NOTHROW((InverseModelParams{0.51, 0.51}.validate(1)));
  const auto p = hit_distribution(ClassId(1), 0.5 + 1e-9, 1);
  CHECK(std::abs(p[0] - 0.5) < 1e-8);
  CHECK(std::abs(p[1] - 0.5) < 1e-8);
}

TEST_CASE("inverse model outputs sum to one") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = 1 + trial % 4;
    const double lo = 1.0 / (C + 1);
    const InverseModelParams params{lo + (1 - lo) * (0.01 + 0.98 * u(rng)), lo + (1 - lo) * (0.01 + 0.98 * u(rng))};
    const MapConfig cfg{{0, 0, 0}, 1.0, 3, C};
    const auto z = ray({0.5 + 7 * u(rng), 0.5 + 7 * u(rng), 0.5 + 7 * u(rng)}, {u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5},
                       6 * u(rng), 1 + trial % C);
    for (const CellIndex& c : traverse_ray(z, cfg)) {
      double total = 0.0;
      for (double p : inverse_observation(z, c, params, cfg)) total += p;
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("axis-aligned traversal from a cell center") {
  // Short of the third face: three cells.
  auto cells = traverse_ray(ray({0.5, 0.5, 0.5}, {1, 0, 0}, 2.4), kCfg);
  REQUIRE(cells.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(cells[static_cast<std::size_t>(i)] == CellIndex{i, 0, 0});
  // Ending exactly on a face: the cell behind the face is the terminal cell.
  cells = traverse_ray(ray({0.5, 0.5, 0.5}, {1, 0, 0}, 2.5), kCfg);
  REQUIRE(cells.size() == 4);
  CHECK(cells.back() == CellIndex{3, 0, 0});
  // Shorter than one cell.
  cells = traverse_ray(ray({2.5, 2.5, 2.5}, {0, 1, 0}, 0.3), kCfg);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0] == CellIndex{2, 2, 2});
}

TEST_CASE("reversed symmetric segment gives the reversed sequence") {
  const Vec3 center{3.5, 3.5, 3.5};
  const Vec3 d{1.0, 0.3, -0.2};
  const Vec3 u = (1.0 / d.norm()) * d;
  const double half = 2.2;
  const auto fwd = traverse_ray(ray(center - half * u, u, 2 * half), kCfg);
  const auto bwd = traverse_ray(ray(center + half * u, -1.0 * u, 2 * half), kCfg);
  REQUIRE(fwd.size() == bwd.size());
  CHECK(std::equal(fwd.begin(), fwd.end(), bwd.rbegin()));
}

TEST_CASE("traversed cells are face-adjacent and truncated at the map boundary") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = ray({8 * u(rng), 8 * u(rng), 8 * u(rng)}, {u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5}, 20 * u(rng));
    const auto cells = traverse_ray(z, kCfg);
    REQUIRE(!cells.empty());
    CHECK(cells.front() == kCfg.cell_of(z.origin));
    for (std::size_t i = 1; i < cells.size(); ++i) {
      int diff = 0;
      for (int a = 0; a < 3; ++a) diff += std::abs(cells[i][a] - cells[i - 1][a]);
      CHECK(diff == 1);
      CHECK(kCfg.in_bounds(cells[i]));
    }
  }
  CHECK_THROWS_AS(traverse_ray(ray({-1, 0, 0}, {1, 0, 0}, 2.0), kCfg), InvalidInput);
}

TEST_CASE("hit against the boundary truncates without a terminal hit") {
  const InverseModelParams params{0.7, 0.7};
  // The ray would end outside the map; every traversed cell is free.
  const auto z = ray({6.5, 0.5, 0.5}, {1, 0, 0}, 4.0, 2);
  int visited = 0;
  observe_ray(z, params, kCfg, [&](CellIndex, const ClassDistribution& p) {
    ++visited;
    CHECK(p[0] == doctest::Approx(0.7));
  });
  CHECK(visited == 2);
}

TEST_CASE("accumulator examples") {
  const LogOddsVector prior{0.0, 0.0, 0.0};
  const auto q0 = log_q(LogQAccumulator(3), prior);
  for (double x : q0) CHECK(std::abs(x - std::log(1.0 / 3.0)) < 1e-15);

  const ClassDistribution p{0.2, 0.3, 0.5};
  const auto one = accumulate(LogQAccumulator(3), p);
  CHECK(one.count == 1);
  for (std::size_t c = 0; c < 3; ++c) CHECK(log_q(one, prior)[c] == std::log(p[c]));
  const auto two = accumulate(one, p);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(log_q(two, prior)[c] - std::log(p[c])) < 1e-15);

  const LogOddsVector prior2{0.0, 0.0};
  auto acc = accumulate(LogQAccumulator(2), ClassDistribution{0.8, 0.2});
  acc = accumulate(acc, ClassDistribution{0.2, 0.8});
  const auto q = log_q(acc, prior2);
  CHECK(std::abs(q[0] - std::log(0.4)) < 1e-12);
  CHECK(std::abs(q[1] - std::log(0.4)) < 1e-12);
}

TEST_CASE("n copies of the same observation reproduce log p") {
  const ClassDistribution p{0.15, 0.15, 0.7};
  LogQAccumulator acc(3);
  const int n = 1000;
  for (int i = 0; i < n; ++i) accumulate_in_place(acc, p);
  const auto q = log_q(acc, LogOddsVector{0.0, 0.0, 0.0});
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(q[c] - std::log(p[c])) <= 1e-15 * n);
}

TEST_CASE("accumulation order does not matter") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ClassDistribution> obs;
    for (int i = 0; i < 100; ++i) obs.push_back(test::random_distribution(rng, 4));
    LogQAccumulator a(4), b(4);
    for (const auto& p : obs) accumulate_in_place(a, p);
    std::shuffle(obs.begin(), obs.end(), rng);
    for (const auto& p : obs) accumulate_in_place(b, p);
    const LogOddsVector prior(4, 0.0);
    CHECK(a.count == b.count);
    CHECK(test::max_abs_diff(log_q(a, prior).span(), log_q(b, prior).span()) < 1e-12);
  }
}

TEST_CASE("accumulate rejects non-positive probabilities") {
  CHECK_THROWS_AS(accumulate(LogQAccumulator(2), ClassDistribution{0.0, 1.0}), InvalidInput);
}

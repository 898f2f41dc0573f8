#include "semap/runner.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <string>

#include <fmt/format.h>

#include "semap/consensus.hpp"
#include "semap/dense_map.hpp"
#include "semap/errors.hpp"
#include "semap/netsim.hpp"
#include "semap/rng.hpp"
#include "semap/sensor.hpp"

namespace semap {

namespace {

constexpr std::uint64_t kScanDomain = 1;

[[noreturn]] void rethrow_with_context(std::exception_ptr error, int tick, std::size_t robot) {
  const std::string where = fmt::format("tick {} robot {}: ", tick, robot);
  try {
    std::rethrow_exception(error);
  } catch (const InvalidInput& e) {
    throw InvalidInput(where + e.what());
  } catch (const ResourceError& e) {
    throw ResourceError(where + e.what());
  } catch (const GenerationError& e) {
    throw GenerationError(where + e.what());
  } catch (const std::exception& e) {
    throw InternalError(where + e.what());
  }
}

/// Runs f(i) for every robot, in parallel when asked. Errors are collected
/// per robot and the lowest robot's error is rethrown, so both modes report
/// the same failure.
template <class F>
void for_each_robot(std::size_t n, Execution exec, int tick, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        f(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        f(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        break;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_with_context(errors[i], tick, i);
  }
}

template <class Visit>
void scan_into(const Environment& env, const Scenario& s, const Pose& pose, std::size_t robot, int tick,
               Visit&& visit) {
  CounterRng rng(s.seed, CounterRng::stream_id(kScanDomain, robot, static_cast<std::uint64_t>(tick)));
  const auto rays = simulate_scan(env, pose, s.sensor, rng);
  for (const RayObservation& z : rays) {
    observe_ray(z, s.inverse_model, env.config, [&](CellIndex cell, const ClassDistribution& p) {
      visit(cell, clamp_probabilities(p));
    });
  }
}

bool correct(const double* h, std::size_t classes, int label) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (h[c] > h[best]) best = c;
  }
  return static_cast<int>(best) == label;
}

struct Tally {
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

Tally tally(const SemanticOctree& map, const Environment& env, bool occupied_only) {
  const MapConfig& cfg = map.config();
  const int depth = cfg.depth;
  Tally t;
  map.for_each_leaf([&](NodeKey key, const CellValue& v) {
    if (v.acc.count == 0) return;
    const CellIndex lo = key_min_cell(key, depth);
    const int edge = static_cast<int>(key_edge_cells(key, depth));
    for (int z = 0; z < edge; ++z) {
      for (int y = 0; y < edge; ++y) {
        for (int x = 0; x < edge; ++x) {
          const int label = env.label_at({lo.ix + x, lo.iy + y, lo.iz + z}).value;
          if (occupied_only && label == 0) continue;
          ++t.total;
          if (correct(v.h.data(), v.h.size(), label)) ++t.hits;
        }
      }
    }
  });
  return t;
}

Tally tally(const DenseMap& map, const Environment& env) {
  Tally t;
  for (std::uint64_t i = 0; i < map.cells(); ++i) {
    if (map.count(i) == 0) continue;
    ++t.total;
    if (correct(map.h_row(i).data(), map.classes(), env.labels[i])) ++t.hits;
  }
  return t;
}

struct OctreeBackend {
  using Map = SemanticOctree;
  using Snapshot = SemanticOctree;

  static Map make(const Scenario& s) { return SemanticOctree(s.map(), s.prior_or_uniform(), s.prune_tolerance); }

  static void observe(Map& m, CellIndex cell, const ClassDistribution& p) {
    m.update_leaf(cell, [&](CellValue& v) { accumulate_in_place(v.acc, p); });
  }

  static MapMessage publish(const Map& m, std::uint16_t id, std::uint32_t seq) { return encode(m, id, seq); }

  static Snapshot receive(const MapMessage& msg, const Map& /*sender*/, const Map& receiver) {
    return decode_payload(msg.payload, receiver.prior(), 0.0, &receiver.config());
  }

  static double residual(const std::vector<Map>& maps, const RobotGraph& g, bool weighted, Execution) {
    return constraint_residual(std::span<const Map>(maps), g, weighted);
  }

  static std::uint64_t bytes(const MapMessage& msg, std::uint64_t) { return msg.payload.size(); }
  static std::uint64_t leaves(const Map& m) { return m.leaf_count(); }
  static double accuracy(const Map& m, const Environment& env) { return tally(m, env, false).fraction(); }
  static SemanticOctree finish(const Map& m, double) { return m; }
};

struct DenseBackend {
  using Map = DenseMap;
  using Snapshot = DenseSnapshot;

  static Map make(const Scenario& s) { return DenseMap(s.map(), s.prior_or_uniform()); }

  static void observe(Map& m, CellIndex cell, const ClassDistribution& p) { m.accumulate(cell, p); }

  static MapMessage publish(const Map& m, std::uint16_t id, std::uint32_t seq) {
    MapMessage msg;
    msg.robot_id = id;
    msg.seq = seq;
    msg.config_digest = m.config().digest();
    return msg;
  }

  static Snapshot receive(const MapMessage&, const Map& sender, const Map& receiver) {
    return make_snapshot(sender, receiver.prior());
  }

  static double residual(const std::vector<Map>& maps, const RobotGraph& g, bool weighted, Execution exec) {
    return constraint_residual(std::span<const Map>(maps), g, weighted, exec);
  }

  static std::uint64_t bytes(const MapMessage&, std::uint64_t grid) { return grid; }
  static std::uint64_t leaves(const Map& m) {
    std::uint64_t n = 0;
    for (std::uint64_t i = 0; i < m.cells(); ++i) n += m.count(i) > 0 ? 1 : 0;
    return n;
  }
  static double accuracy(const Map& m, const Environment& env) { return tally(m, env).fraction(); }
  static SemanticOctree finish(const Map& m, double tau) { return m.to_octree(tau); }
};

Environment scenario_environment(const Scenario& s) {
  if (s.environment_file.empty()) return generate_environment(s.environment, s.seed).environment;
  Environment env = load_environment(s.environment_file);
  if (env.config.digest() != s.map().digest() || env.config.num_classes != s.map().num_classes) {
    throw InvalidInput("environment file " + s.environment_file.string() + " does not match the scenario map");
  }
  env.config = s.map();
  return env;
}

std::vector<std::vector<Pose>> scenario_poses(const Scenario& s) {
  std::vector<std::vector<Vec3>> routes;
  if (s.robots.empty()) {
    routes = lawnmower_routes(s);
  } else {
    for (const RobotSpec& r : s.robots) routes.push_back(r.waypoints);
  }
  std::vector<std::vector<Pose>> poses;
  for (const auto& route : routes) poses.push_back(route_poses(route, s.speed, s.spin_deg, s.total_ticks));
  return poses;
}

template <class B>
RunResult run(const Scenario& s, const RunOptions& options) {
  s.validate();
  const auto n = static_cast<std::size_t>(s.num_robots);
  RunResult result;
  result.environment = scenario_environment(s);
  const Environment& env = result.environment;
  const RobotGraph graph = build_graph(s);
  if (graph.size() != n) throw InvalidInput("scenario: graph size differs from the robot count");
  const RobotGraph all_pairs = RobotGraph::complete(n);
  const auto poses = scenario_poses(s);
  const std::uint64_t grid = grid_baseline_bytes(s.map());
  const Execution exec = options.exec;

  std::vector<typename B::Map> maps;
  maps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) maps.push_back(B::make(s));
  const std::vector<std::uint64_t> digests(n, s.map().digest());

  IterationParams tail = s.iteration;
  if (!s.tail_gradient) tail.gamma = 0.0;

  int round = 0;
  for (int tick = 1; tick <= s.total_ticks; ++tick) {
    const bool observing = tick <= s.observe_ticks;
    if (observing) {
      for_each_robot(n, exec, tick, [&](std::size_t i) {
        scan_into(env, s, poses[i][static_cast<std::size_t>(tick - 1)], i, tick,
                  [&](CellIndex cell, const ClassDistribution& p) { B::observe(maps[i], cell, p); });
      });
    }
    if (tick % s.publish_period != 0) continue;
    ++round;

    std::vector<Publication> pubs(n);
    for_each_robot(n, exec, tick, [&](std::size_t i) {
      pubs[i].message = B::publish(maps[i], static_cast<std::uint16_t>(i), static_cast<std::uint32_t>(round));
      pubs[i].grid_baseline_bytes = grid;
    });
    const ExchangeResult ex = exchange(pubs, digests, graph, static_cast<std::uint64_t>(tick));
    if (!ex.rejected.empty()) {
      rethrow_with_context(std::make_exception_ptr(InvalidInput("message rejected: config digest mismatch")), tick,
                           ex.rejected.front().receiver);
    }
    std::vector<std::vector<const Delivery*>> inbox(n);
    for (const Delivery& d : ex.delivered) inbox[d.receiver].push_back(&d);

    // Every robot iterates against the maps published this round, so all
    // snapshots are taken before any robot updates.
    std::vector<std::vector<typename B::Snapshot>> received(n);
    for_each_robot(n, exec, tick, [&](std::size_t i) {
      for (const Delivery* d : inbox[i]) received[i].push_back(B::receive(*d->message, maps[d->sender], maps[i]));
    });
    std::vector<double> norms(n, 0.0);
    const IterationParams& params = observing ? s.iteration : tail;
    for_each_robot(n, exec, tick, [&](std::size_t i) {
      std::vector<const typename B::Snapshot*> nbr;
      std::vector<double> weights;
      for (std::size_t k = 0; k < inbox[i].size(); ++k) {
        nbr.push_back(&received[i][k]);
        weights.push_back(graph.weight(i, inbox[i][k]->sender));
      }
      norms[i] = iterate(maps[i], nbr, weights, params, round, Execution::Serial).update_norm;
    });

    MetricsRecord rec;
    rec.tick = tick;
    rec.observing = observing;
    rec.residual_unweighted = B::residual(maps, graph, false, exec);
    rec.residual_weighted = B::residual(maps, graph, true, exec);
    rec.residual_all_pairs = B::residual(maps, all_pairs, false, exec);
    rec.max_update_norm = *std::max_element(norms.begin(), norms.end());
    rec.grid_bytes = grid;
    rec.octree_bytes.resize(n);
    rec.leaves.resize(n);
    rec.accuracy.resize(n);
    for_each_robot(n, exec, tick, [&](std::size_t i) {
      rec.octree_bytes[i] = B::bytes(pubs[i].message, grid);
      rec.leaves[i] = B::leaves(maps[i]);
      rec.accuracy[i] = B::accuracy(maps[i], env);
    });
    double sum = 0.0;
    for (auto b : rec.octree_bytes) sum += static_cast<double>(b);
    rec.octree_bytes_mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (auto b : rec.octree_bytes) sq += (static_cast<double>(b) - rec.octree_bytes_mean) * (static_cast<double>(b) - rec.octree_bytes_mean);
    rec.octree_bytes_std = std::sqrt(sq / static_cast<double>(n));
    result.records.push_back(std::move(rec));
  }

  for (const auto& m : maps) result.maps.push_back(B::finish(m, s.prune_tolerance));
  return result;
}

}  // namespace

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  if (scenario.backend == Backend::Dense) return run<DenseBackend>(scenario, options);
  return run<OctreeBackend>(scenario, options);
}

double map_accuracy(const SemanticOctree& map, const Environment& env) { return tally(map, env, false).fraction(); }

double occupied_accuracy(const SemanticOctree& map, const Environment& env) {
  return tally(map, env, true).fraction();
}

double max_pairwise_deviation(std::span<const SemanticOctree> maps) {
  double worst = 0.0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (std::size_t j = i + 1; j < maps.size(); ++j) {
      for (const RegionPair& r : common_refinement(maps[i], maps[j])) {
        for (std::size_t c = 0; c < r.h_a.size(); ++c) worst = std::max(worst, std::abs(r.h_a[c] - r.h_b[c]));
      }
    }
  }
  return worst;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records, std::size_t num_robots) {
  std::string line =
      "tick,observing,residual_unweighted,residual_weighted,residual_all_pairs,max_update_norm,"
      "octree_bytes_mean,octree_bytes_std,grid_bytes";
  for (const char* col : {"octree_bytes", "leaves", "accuracy"}) {
    for (std::size_t i = 0; i < num_robots; ++i) line += fmt::format(",{}_{}", col, i);
  }
  out << line << '\n';
  for (const MetricsRecord& r : records) {
    line = fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}", r.tick, r.observing ? 1 : 0,
                       r.residual_unweighted, r.residual_weighted, r.residual_all_pairs, r.max_update_norm,
                       r.octree_bytes_mean, r.octree_bytes_std, r.grid_bytes);
    for (auto b : r.octree_bytes) line += fmt::format(",{}", b);
    for (auto l : r.leaves) line += fmt::format(",{}", l);
    for (double a : r.accuracy) line += fmt::format(",{:.17g}", a);
    out << line << '\n';
  }
}

void write_outputs(const std::filesystem::path& dir, const RunResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "metrics.csv", std::ios::binary);
    if (!csv) throw ResourceError("cannot write " + (dir / "metrics.csv").string());
    write_metrics_csv(csv, result.records, result.maps.size());
  }
  for (std::size_t i = 0; i < result.maps.size(); ++i) {
    const auto path = dir / fmt::format("robot_{}.som", i);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResourceError("cannot write " + path.string());
    const auto bytes = encode_payload(result.maps[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

}  // namespace semap

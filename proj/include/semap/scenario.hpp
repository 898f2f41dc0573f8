#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "semap/consensus.hpp"
#include "semap/environment.hpp"
#include "semap/observation.hpp"
#include "semap/sensor.hpp"

namespace semap {

enum class Backend { Octree, Dense };

struct GraphSpec {
  std::string topology = "complete";  // complete | edgeless | ring | path | star | custom
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // custom topology, Metropolis weights
  std::vector<double> weights;  // optional explicit n x n matrix, overrides the topology
  bool allow_asymmetric = false;
};

struct RobotSpec {
  std::vector<Vec3> waypoints;  // empty: generated lawnmower route
};

struct Scenario {
  std::uint64_t seed = 1;
  int total_ticks = 500;
  int observe_ticks = 300;  // scans stop after this tick; exchange continues
  int publish_period = 1;
  Backend backend = Backend::Octree;

  EnvironmentSpec environment;
  std::filesystem::path environment_file;  // overrides generation when set

  LogOddsVector prior;  // empty: uniform
  double prune_tolerance = 0.0;
  InverseModelParams inverse_model;
  SensorSpec sensor;
  GraphSpec graph;
  IterationParams iteration;
  bool tail_gradient = false;  // apply gradient steps after observations stop

  int num_robots = 4;
  double robot_height = 0.75;  // meters above the map origin
  double speed = 0.5;          // meters per tick along the route
  double spin_deg = 0.0;       // extra heading rotation per tick
  int lane_spacing = 8;        // cells between lawnmower lanes when there are no roads
  std::vector<RobotSpec> robots;

  void validate() const;
  const MapConfig& map() const { return environment.config; }
  LogOddsVector prior_or_uniform() const;
};

/// Desk-scale default: 32^3 cells, 4 classes, 4 robots, 500 ticks.
Scenario default_scenario();

/// Flat key = value file with [sections]; unknown keys are errors. See
/// scenarios/default.ini for every key.
Scenario parse_scenario(std::istream& in);
Scenario load_scenario(const std::filesystem::path& path);

RobotGraph build_graph(const Scenario& s);

/// Lawnmower routes: one lane per road strip (or every lane_spacing cells),
/// lanes dealt round-robin to robots, traversed boustrophedon.
std::vector<std::vector<Vec3>> lawnmower_routes(const Scenario& s);

/// Pose at each tick 1..ticks (index 0 is tick 1): constant speed along the
/// route, reversing at its ends, heading along the direction of travel.
std::vector<Pose> route_poses(const std::vector<Vec3>& route, double speed, double spin_deg, int ticks);

}  // namespace semap

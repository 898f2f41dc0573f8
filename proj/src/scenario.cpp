#include "semap/scenario.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "semap/errors.hpp"

namespace semap {

namespace pt = boost::property_tree;

void Scenario::validate() const {
  environment.validate();
  if (total_ticks < 1) throw InvalidInput("scenario: total_ticks must be >= 1");
  if (observe_ticks < 0 || observe_ticks > total_ticks) throw InvalidInput("scenario: observe_ticks out of range");
  if (publish_period < 1) throw InvalidInput("scenario: publish_period must be >= 1");
  if (num_robots < 1 || num_robots > 65535) throw InvalidInput("scenario: bad robot count");
  if (!robots.empty() && robots.size() != static_cast<std::size_t>(num_robots)) {
    throw InvalidInput("scenario: robot sections must cover every robot");
  }
  if (!prior.values().empty() && prior.size() != static_cast<std::size_t>(map().classes())) {
    throw InvalidInput("scenario: prior needs C+1 entries");
  }
  if (!(speed >= 0.0)) throw InvalidInput("scenario: speed must be >= 0");
  if (lane_spacing < 1) throw InvalidInput("scenario: lane_spacing must be >= 1");
  inverse_model.validate(map().num_classes);
  sensor.validate();
  iteration.validate();
  for (const RobotSpec& r : robots) {
    for (const Vec3& w : r.waypoints) {
      if (!map().contains(w)) throw InvalidInput("scenario: waypoint outside the map");
    }
  }
  const Vec3 probe = map().origin + Vec3{0.0, 0.0, robot_height};
  if (robots.empty() && !map().contains(probe)) throw InvalidInput("scenario: robot_height outside the map");
}

LogOddsVector Scenario::prior_or_uniform() const {
  if (!prior.values().empty()) return prior;
  return LogOddsVector(static_cast<std::size_t>(map().classes()), 0.0);
}

Scenario default_scenario() {
  Scenario s;
  s.seed = 7;
  s.total_ticks = 500;
  s.observe_ticks = 300;
  s.environment.config = MapConfig{{0.0, 0.0, 0.0}, 0.5, 5, 4};
  s.environment.ground_class = 1;
  s.environment.road_class = 2;
  s.environment.road_spacing = 8;
  s.environment.road_width = 2;
  s.environment.num_boxes = 12;
  s.environment.box_min = {2, 2, 2};
  s.environment.box_max = {5, 4, 8};
  s.environment.box_classes = {3, 4};
  s.sensor = SensorSpec{};
  s.sensor.v_fov_deg = 20.0;
  s.sensor.max_range = 4.0;
  s.num_robots = 4;
  s.robot_height = 0.75;
  s.speed = 0.5;
  return s;
}

namespace {

std::vector<std::string> split(const std::string& text, const char* seps) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(seps));
  for (auto& p : parts) boost::trim(p);
  parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
  return parts;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("scenario: '" + key + "' expects a number, got '" + text + "'");
  }
}

long long to_int(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("scenario: '" + key + "' expects an integer, got '" + text + "'");
  }
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = boost::to_lower_copy(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw InvalidInput("scenario: '" + key + "' expects a boolean, got '" + text + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& p : split(text, ",")) out.push_back(to_double(key, p));
  return out;
}

Vec3 to_vec3(const std::string& key, const std::string& text) {
  const auto v = to_doubles(key, text);
  if (v.size() != 3) throw InvalidInput("scenario: '" + key + "' expects x,y,z");
  return {v[0], v[1], v[2]};
}

CellIndex to_cell(const std::string& key, const std::string& text) {
  const auto parts = split(text, ",");
  if (parts.size() != 3) throw InvalidInput("scenario: '" + key + "' expects three integers");
  return {static_cast<int>(to_int(key, parts[0])), static_cast<int>(to_int(key, parts[1])),
          static_cast<int>(to_int(key, parts[2]))};
}

class Section {
 public:
  Section(const pt::ptree& tree, std::string name) : tree_(tree), name_(std::move(name)) {
    for (const auto& [key, child] : tree_) {
      if (!child.empty()) throw InvalidInput("scenario: nested key '" + key + "' in [" + name_ + "]");
    }
  }

  template <class F>
  void read(const char* key, F&& apply) {
    used_.insert(key);
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0'))) {
      apply(qualified(key), *v);
    }
  }

  void finish() const {
    for (const auto& [key, child] : tree_) {
      if (!used_.count(key)) throw InvalidInput("scenario: unknown key '" + qualified(key) + "'");
    }
  }

 private:
  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const pt::ptree& tree_;
  std::string name_;
  std::set<std::string> used_;
};

}  // namespace

Scenario parse_scenario(std::istream& in) {
  pt::ptree root;
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidInput(std::string("scenario: ") + e.what());
  }
  Scenario s = default_scenario();
  pt::ptree top;
  std::map<std::size_t, RobotSpec> robot_sections;

  for (const auto& [name, child] : root) {
    if (child.empty()) {
      top.push_back({name, child});
      continue;
    }
    Section sec(child, name);
    if (name == "map") {
      sec.read("origin", [&](const auto& k, const auto& v) { s.environment.config.origin = to_vec3(k, v); });
      sec.read("cell_size", [&](const auto& k, const auto& v) { s.environment.config.cell_size = to_double(k, v); });
      sec.read("depth", [&](const auto& k, const auto& v) { s.environment.config.depth = static_cast<int>(to_int(k, v)); });
      sec.read("num_classes", [&](const auto& k, const auto& v) { s.environment.config.num_classes = static_cast<int>(to_int(k, v)); });
      sec.read("prune_tolerance", [&](const auto& k, const auto& v) { s.prune_tolerance = to_double(k, v); });
      sec.read("prior", [&](const auto& k, const auto& v) { s.prior = LogOddsVector(to_doubles(k, v)); });
    } else if (name == "environment") {
      auto& e = s.environment;
      sec.read("file", [&](const auto&, const auto& v) { s.environment_file = v; });
      sec.read("num_boxes", [&](const auto& k, const auto& v) { e.num_boxes = static_cast<int>(to_int(k, v)); });
      sec.read("box_min", [&](const auto& k, const auto& v) { e.box_min = to_cell(k, v); });
      sec.read("box_max", [&](const auto& k, const auto& v) { e.box_max = to_cell(k, v); });
      sec.read("box_classes", [&](const auto& k, const auto& v) {
        e.box_classes.clear();
        for (const auto& p : split(v, ",")) e.box_classes.push_back(static_cast<int>(to_int(k, p)));
      });
      sec.read("ground_class", [&](const auto& k, const auto& v) { e.ground_class = static_cast<int>(to_int(k, v)); });
      sec.read("road_class", [&](const auto& k, const auto& v) { e.road_class = static_cast<int>(to_int(k, v)); });
      sec.read("road_spacing", [&](const auto& k, const auto& v) { e.road_spacing = static_cast<int>(to_int(k, v)); });
      sec.read("road_width", [&](const auto& k, const auto& v) { e.road_width = static_cast<int>(to_int(k, v)); });
      sec.read("max_retries", [&](const auto& k, const auto& v) { e.max_retries = static_cast<int>(to_int(k, v)); });
      sec.read("class_names", [&](const auto&, const auto& v) { e.class_names = split(v, ","); });
    } else if (name == "sensor") {
      auto& z = s.sensor;
      sec.read("rays_h", [&](const auto& k, const auto& v) { z.rays_h = static_cast<int>(to_int(k, v)); });
      sec.read("rays_v", [&](const auto& k, const auto& v) { z.rays_v = static_cast<int>(to_int(k, v)); });
      sec.read("h_fov_deg", [&](const auto& k, const auto& v) { z.h_fov_deg = to_double(k, v); });
      sec.read("v_fov_deg", [&](const auto& k, const auto& v) { z.v_fov_deg = to_double(k, v); });
      sec.read("pitch_deg", [&](const auto& k, const auto& v) { z.pitch_deg = to_double(k, v); });
      sec.read("max_range", [&](const auto& k, const auto& v) { z.max_range = to_double(k, v); });
      sec.read("sigma_range", [&](const auto& k, const auto& v) { z.sigma_range = to_double(k, v); });
      sec.read("p_mis", [&](const auto& k, const auto& v) { z.p_mis = to_double(k, v); });
    } else if (name == "inverse_model") {
      sec.read("p_hit", [&](const auto& k, const auto& v) { s.inverse_model.p_hit = to_double(k, v); });
      sec.read("p_free", [&](const auto& k, const auto& v) { s.inverse_model.p_free = to_double(k, v); });
    } else if (name == "graph") {
      sec.read("topology", [&](const auto&, const auto& v) { s.graph.topology = v; });
      sec.read("edges", [&](const auto& k, const auto& v) {
        for (const auto& e : split(v, ",")) {
          const auto ends = split(e, "-");
          if (ends.size() != 2) throw InvalidInput("scenario: '" + k + "' expects i-j pairs");
          s.graph.edges.emplace_back(static_cast<std::size_t>(to_int(k, ends[0])),
                                     static_cast<std::size_t>(to_int(k, ends[1])));
        }
      });
      sec.read("weights", [&](const auto& k, const auto& v) {
        for (const auto& row : split(v, ";")) {
          const auto r = to_doubles(k, row);
          s.graph.weights.insert(s.graph.weights.end(), r.begin(), r.end());
        }
      });
      sec.read("allow_asymmetric", [&](const auto& k, const auto& v) { s.graph.allow_asymmetric = to_bool(k, v); });
    } else if (name == "iteration") {
      auto& it = s.iteration;
      sec.read("epsilon", [&](const auto& k, const auto& v) { it.epsilon = to_double(k, v); });
      sec.read("gamma", [&](const auto& k, const auto& v) { it.gamma = to_double(k, v); });
      sec.read("gamma_schedule", [&](const auto& k, const auto& v) {
        if (v == "constant") it.schedule = GammaSchedule::Constant;
        else if (v == "inv_sqrt") it.schedule = GammaSchedule::InverseSqrt;
        else throw InvalidInput("scenario: '" + k + "' must be constant or inv_sqrt");
      });
      sec.read("gradient_form", [&](const auto& k, const auto& v) {
        if (v == "stabilized") it.form = GradientForm::Stabilized;
        else if (v == "literal") it.form = GradientForm::Literal;
        else throw InvalidInput("scenario: '" + k + "' must be stabilized or literal");
      });
      sec.read("k_max", [&](const auto& k, const auto& v) { it.k_max = static_cast<int>(to_int(k, v)); });
      sec.read("update_tol", [&](const auto& k, const auto& v) { it.update_tol = to_double(k, v); });
      sec.read("tail_gradient", [&](const auto& k, const auto& v) { s.tail_gradient = to_bool(k, v); });
    } else if (name == "robots") {
      sec.read("count", [&](const auto& k, const auto& v) { s.num_robots = static_cast<int>(to_int(k, v)); });
      sec.read("height", [&](const auto& k, const auto& v) { s.robot_height = to_double(k, v); });
      sec.read("speed", [&](const auto& k, const auto& v) { s.speed = to_double(k, v); });
      sec.read("spin_deg", [&](const auto& k, const auto& v) { s.spin_deg = to_double(k, v); });
      sec.read("lane_spacing", [&](const auto& k, const auto& v) { s.lane_spacing = static_cast<int>(to_int(k, v)); });
    } else if (name.rfind("robot_", 0) == 0) {
      const auto id = static_cast<std::size_t>(to_int(name, name.substr(6)));
      RobotSpec r;
      sec.read("waypoints", [&](const auto& k, const auto& v) {
        for (const auto& w : split(v, ";")) r.waypoints.push_back(to_vec3(k, w));
      });
      robot_sections[id] = std::move(r);
    } else {
      throw InvalidInput("scenario: unknown section [" + name + "]");
    }
    sec.finish();
  }

  Section head(top, "");
  head.read("seed", [&](const auto& k, const auto& v) { s.seed = static_cast<std::uint64_t>(to_int(k, v)); });
  head.read("total_ticks", [&](const auto& k, const auto& v) { s.total_ticks = static_cast<int>(to_int(k, v)); });
  head.read("observe_ticks", [&](const auto& k, const auto& v) { s.observe_ticks = static_cast<int>(to_int(k, v)); });
  head.read("publish_period", [&](const auto& k, const auto& v) { s.publish_period = static_cast<int>(to_int(k, v)); });
  head.read("backend", [&](const auto& k, const auto& v) {
    if (v == "octree") s.backend = Backend::Octree;
    else if (v == "dense") s.backend = Backend::Dense;
    else throw InvalidInput("scenario: '" + k + "' must be octree or dense");
  });
  head.finish();

  if (!robot_sections.empty()) {
    s.robots.assign(static_cast<std::size_t>(s.num_robots), RobotSpec{});
    for (auto& [id, r] : robot_sections) {
      if (id >= s.robots.size()) throw InvalidInput("scenario: robot section beyond robots.count");
      s.robots[id] = std::move(r);
    }
    for (const RobotSpec& r : s.robots) {
      if (r.waypoints.empty()) throw InvalidInput("scenario: every robot section needs waypoints");
    }
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open scenario " + path.string());
  return parse_scenario(in);
}

RobotGraph build_graph(const Scenario& s) {
  const auto n = static_cast<std::size_t>(s.num_robots);
  if (!s.graph.weights.empty()) return RobotGraph(n, s.graph.weights, s.graph.allow_asymmetric);
  const std::string& t = s.graph.topology;
  if (t == "complete") return RobotGraph::complete(n);
  if (t == "edgeless") return RobotGraph::edgeless(n);
  if (t == "ring") return RobotGraph::ring(n);
  if (t == "path") return RobotGraph::path(n);
  if (t == "star") return RobotGraph::star(n);
  if (t == "custom") return RobotGraph::metropolis(n, s.graph.edges);
  throw InvalidInput("scenario: unknown graph topology '" + t + "'");
}

std::vector<std::vector<Vec3>> lawnmower_routes(const Scenario& s) {
  const MapConfig& cfg = s.map();
  const int n = cfg.cells_per_axis();
  std::vector<int> lanes;
  for (auto [lo, hi] : s.environment.road_rows()) lanes.push_back((lo + hi) / 2);
  if (lanes.empty()) {
    for (int y = s.lane_spacing / 2; y < n; y += s.lane_spacing) lanes.push_back(y);
  }
  const double z = cfg.origin.z + s.robot_height;
  const double x_lo = cfg.origin.x + 0.5 * cfg.cell_size;
  const double x_hi = cfg.origin.x + (n - 0.5) * cfg.cell_size;
  std::vector<std::vector<Vec3>> routes(static_cast<std::size_t>(s.num_robots));
  for (int r = 0; r < s.num_robots; ++r) {
    auto& route = routes[static_cast<std::size_t>(r)];
    bool forward = true;
    for (std::size_t l = static_cast<std::size_t>(r) % lanes.size(); l < lanes.size();
         l += static_cast<std::size_t>(s.num_robots)) {
      const double y = cfg.origin.y + (lanes[l] + 0.5) * cfg.cell_size;
      route.push_back({forward ? x_lo : x_hi, y, z});
      route.push_back({forward ? x_hi : x_lo, y, z});
      forward = !forward;
    }
    if (route.empty()) {
      // more robots than lanes: share lanes, starting from the far end
      const double y = cfg.origin.y + (lanes[static_cast<std::size_t>(r) % lanes.size()] + 0.5) * cfg.cell_size;
      route = {{x_hi, y, z}, {x_lo, y, z}};
    }
  }
  return routes;
}

std::vector<Pose> route_poses(const std::vector<Vec3>& route, double speed, double spin_deg, int ticks) {
  if (route.empty()) throw InvalidInput("route: need at least one waypoint");
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < route.size(); ++i) cumulative.push_back(cumulative.back() + (route[i] - route[i - 1]).norm());
  const double length = cumulative.back();
  constexpr double deg = std::numbers::pi / 180.0;
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(ticks));
  for (int t = 0; t < ticks; ++t) {
    Pose p;
    double yaw = 0.0;
    if (length == 0.0) {
      p.position = route.front();
    } else {
      double s = std::fmod(speed * t, 2.0 * length);
      bool reverse = false;
      if (s > length) {
        s = 2.0 * length - s;
        reverse = true;
      }
      std::size_t seg = 1;
      while (seg + 1 < route.size() && cumulative[seg] < s) ++seg;
      while (seg > 1 && cumulative[seg - 1] == cumulative[seg]) --seg;
      const Vec3 a = route[seg - 1];
      const Vec3 b = route[seg];
      const double span = cumulative[seg] - cumulative[seg - 1];
      const double f = span > 0.0 ? (s - cumulative[seg - 1]) / span : 0.0;
      p.position = a + f * (b - a);
      const Vec3 d = reverse ? a - b : b - a;
      yaw = std::atan2(d.y, d.x);
    }
    p.yaw = yaw + spin_deg * deg * t;
    poses.push_back(p);
  }
  return poses;
}

}  // namespace semap

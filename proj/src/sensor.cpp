#include "semap/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semap/errors.hpp"

namespace semap {

void SensorSpec::validate() const {
  if (rays_h < 1 || rays_v < 1) throw InvalidInput("sensor: need at least one ray per axis");
  if (!(h_fov_deg >= 0.0 && h_fov_deg <= 360.0) || !(v_fov_deg >= 0.0 && v_fov_deg < 180.0)) {
    throw InvalidInput("sensor: bad field of view");
  }
  if (!(max_range > 0.0)) throw InvalidInput("sensor: max_range must be positive");
  if (!(sigma_range >= 0.0)) throw InvalidInput("sensor: sigma_range must be >= 0");
  if (!(p_mis >= 0.0 && p_mis <= 1.0)) throw InvalidInput("sensor: p_mis must lie in [0, 1]");
}

namespace {

double spread(int i, int n, double fov) {
  if (n == 1) return 0.0;
  return -0.5 * fov + fov * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

std::vector<Vec3> ray_directions(const Pose& pose, const SensorSpec& spec) {
  constexpr double deg = std::numbers::pi / 180.0;
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(spec.rays_h * spec.rays_v));
  for (int v = 0; v < spec.rays_v; ++v) {
    const double pitch = (spec.pitch_deg + spread(v, spec.rays_v, spec.v_fov_deg)) * deg;
    for (int h = 0; h < spec.rays_h; ++h) {
      const double yaw = pose.yaw + spread(h, spec.rays_h, spec.h_fov_deg) * deg;
      dirs.push_back({std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)});
    }
  }
  return dirs;
}

std::vector<RayObservation> simulate_scan(const Environment& env, const Pose& pose, const SensorSpec& spec,
                                          CounterRng& rng) {
  spec.validate();
  std::vector<RayObservation> out;
  const int classes = env.config.num_classes;
  for (const Vec3& dir : ray_directions(pose, spec)) {
    RayObservation z;
    z.origin = pose.position;
    z.direction = dir;
    bool hit = false;
    double hit_range = 0.0;
    ClassId label;
    walk_ray(pose.position, dir, spec.max_range, env.config, [&](CellIndex cell, double t) {
      const ClassId l = env.label_at(cell);
      if (l.is_free()) return true;
      hit = true;
      hit_range = t;
      label = l;
      return false;
    });
    const double noise = rng.normal();
    const double flip = rng.uniform();
    const std::uint64_t pick = classes > 1 ? rng.below(static_cast<std::uint64_t>(classes - 1)) : 0;
    if (!hit) {
      z.max_range_hit = true;
      z.range = spec.max_range;
      out.push_back(z);
      continue;
    }
    z.range = std::clamp(hit_range + spec.sigma_range * noise, 0.0, spec.max_range);
    z.category = label;
    if (classes > 1 && flip < spec.p_mis) {
      // uniform over {1..C} without the true class
      int wrong = 1 + static_cast<int>(pick);
      if (wrong >= label.value) ++wrong;
      z.category = ClassId(wrong);
    }
    out.push_back(z);
  }
  return out;
}

}  // namespace semap

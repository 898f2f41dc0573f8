#pragma once

#include <vector>

#include "semap/environment.hpp"
#include "semap/observation.hpp"
#include "semap/rng.hpp"

namespace semap {

/// Range + segmentation sensor: a rays_h x rays_v grid of rays spanning the
/// field of view around the heading, tilted by `pitch_deg`.
struct SensorSpec {
  int rays_h = 16;
  int rays_v = 4;
  double h_fov_deg = 90.0;
  double v_fov_deg = 30.0;
  double pitch_deg = 0.0;
  double max_range = 5.0;    // meters
  double sigma_range = 0.02; // meters
  double p_mis = 0.05;

  void validate() const;
};

struct Pose {
  Vec3 position;
  double yaw = 0.0;  // radians about +z
};

std::vector<Vec3> ray_directions(const Pose& pose, const SensorSpec& spec);

/// Casts every ray through the ground-truth labels. The first non-free cell
/// gives a hit at its entry distance, perturbed by Gaussian range noise and
/// reported with a wrong class with probability p_mis.
std::vector<RayObservation> simulate_scan(const Environment& env, const Pose& pose, const SensorSpec& spec,
                                          CounterRng& rng);

}  // namespace semap

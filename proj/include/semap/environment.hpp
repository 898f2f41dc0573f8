#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/logodds.hpp"

namespace semap {

/// Synthetic village: a ground layer at z = 0 (with optional road strips
/// running along x) and non-overlapping boxes standing on it.
struct EnvironmentSpec {
  MapConfig config;
  int ground_class = 1;
  int road_class = 2;      // 0 disables roads
  int road_spacing = 0;    // cells between road strips along y; 0 disables
  int road_width = 2;
  int num_boxes = 0;
  CellIndex box_min{2, 2, 2};  // box extents in cells, inclusive range
  CellIndex box_max{5, 5, 6};
  std::vector<int> box_classes{3};
  int max_retries = 1000;
  std::vector<std::string> class_names;

  void validate() const;
  /// y-ranges [lo, hi) of the road strips.
  std::vector<std::pair<int, int>> road_rows() const;
};

struct PlacedBox {
  CellIndex lo;
  CellIndex hi;  // exclusive
  ClassId label;

  std::uint64_t volume() const {
    return static_cast<std::uint64_t>(hi.ix - lo.ix) * static_cast<std::uint64_t>(hi.iy - lo.iy) *
           static_cast<std::uint64_t>(hi.iz - lo.iz);
  }
};

struct Environment {
  MapConfig config;
  std::vector<std::uint8_t> labels;  // MapConfig::linear_index order
  std::vector<std::string> class_names;

  ClassId label_at(CellIndex c) const { return ClassId(labels[config.linear_index(c)]); }
  std::uint64_t count(ClassId c) const;
};

struct GeneratedEnvironment {
  Environment environment;
  std::vector<PlacedBox> boxes;
};

/// Deterministic in `seed`. Throws GenerationError if a box cannot be
/// placed within max_retries attempts.
GeneratedEnvironment generate_environment(const EnvironmentSpec& spec, std::uint64_t seed);

std::vector<std::string> default_class_names(int num_classes);

void save_environment(const Environment& env, const std::filesystem::path& path);
Environment load_environment(const std::filesystem::path& path);

}  // namespace semap

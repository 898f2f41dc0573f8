#pragma once

#include <cmath>
#include <cstdint>

namespace semap {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
  friend constexpr bool operator==(Vec3, Vec3) = default;

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Finest-resolution grid coordinates.
struct CellIndex {
  int ix = 0;
  int iy = 0;
  int iz = 0;

  constexpr int operator[](int axis) const { return axis == 0 ? ix : (axis == 1 ? iy : iz); }
  friend constexpr bool operator==(CellIndex, CellIndex) = default;
};

/// Geometry of the mapped cube: 2^depth cells per axis of edge `cell_size`,
/// anchored at `origin` (minimum corner).
struct MapConfig {
  Vec3 origin;
  double cell_size = 1.0;
  int depth = 1;
  int num_classes = 1;  // C; vectors have C+1 components

  void validate() const;

  int classes() const { return num_classes + 1; }
  int cells_per_axis() const { return 1 << depth; }
  std::uint64_t num_cells() const { return std::uint64_t{1} << (3 * depth); }
  double edge_length() const { return cell_size * cells_per_axis(); }

  bool contains(Vec3 p) const;
  bool in_bounds(CellIndex c) const;
  CellIndex cell_of(Vec3 p) const;
  Vec3 center(CellIndex c) const;
  std::uint64_t linear_index(CellIndex c) const;
  CellIndex cell_at(std::uint64_t linear) const;

  /// FNV-1a over the fields as they appear in the wire header.
  std::uint64_t digest() const;

  friend bool operator==(const MapConfig&, const MapConfig&) = default;
};

/// Cube at `level` (0 = root) identified by its Morton code, x bit lowest.
struct NodeKey {
  int level = 0;
  std::uint64_t morton = 0;

  NodeKey child(int index) const { return {level + 1, (morton << 3) | static_cast<std::uint64_t>(index)}; }
  int child_index_at(int lvl) const {
    return static_cast<int>((morton >> (3 * (level - lvl - 1))) & 7u);
  }
  friend constexpr bool operator==(NodeKey, NodeKey) = default;
};

std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z);
void morton_decode(std::uint64_t code, std::uint32_t& x, std::uint32_t& y, std::uint32_t& z);

/// Key of the finest cell `c` in a tree of the given depth.
NodeKey leaf_key(CellIndex c, int depth);

/// Minimum-corner finest cell covered by `key` and the edge length in cells.
CellIndex key_min_cell(NodeKey key, int depth);
inline std::uint64_t key_edge_cells(NodeKey key, int depth) { return std::uint64_t{1} << (depth - key.level); }
inline std::uint64_t key_cell_count(NodeKey key, int depth) { return std::uint64_t{1} << (3 * (depth - key.level)); }

}  // namespace semap

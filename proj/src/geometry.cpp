#include "semap/geometry.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "semap/errors.hpp"

namespace semap {

void MapConfig::validate() const {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw InvalidInput("map config: cell_size must be positive");
  }
  if (depth < 1 || depth > 16) {
    throw InvalidInput("map config: depth must be in [1, 16]");
  }
  if (num_classes < 1 || num_classes > 254) {
    throw InvalidInput("map config: num_classes must be in [1, 254]");
  }
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y) || !std::isfinite(origin.z)) {
    throw InvalidInput("map config: origin must be finite");
  }
}

bool MapConfig::contains(Vec3 p) const {
  const double edge = edge_length();
  const Vec3 r = p - origin;
  return r.x >= 0.0 && r.y >= 0.0 && r.z >= 0.0 && r.x < edge && r.y < edge && r.z < edge;
}

bool MapConfig::in_bounds(CellIndex c) const {
  const int n = cells_per_axis();
  return c.ix >= 0 && c.iy >= 0 && c.iz >= 0 && c.ix < n && c.iy < n && c.iz < n;
}

CellIndex MapConfig::cell_of(Vec3 p) const {
  const Vec3 r = p - origin;
  return {static_cast<int>(std::floor(r.x / cell_size)),
          static_cast<int>(std::floor(r.y / cell_size)),
          static_cast<int>(std::floor(r.z / cell_size))};
}

Vec3 MapConfig::center(CellIndex c) const {
  return {origin.x + (c.ix + 0.5) * cell_size, origin.y + (c.iy + 0.5) * cell_size,
          origin.z + (c.iz + 0.5) * cell_size};
}

std::uint64_t MapConfig::linear_index(CellIndex c) const {
  const std::uint64_t n = static_cast<std::uint64_t>(cells_per_axis());
  return static_cast<std::uint64_t>(c.ix) + n * (static_cast<std::uint64_t>(c.iy) + n * static_cast<std::uint64_t>(c.iz));
}

CellIndex MapConfig::cell_at(std::uint64_t linear) const {
  const std::uint64_t n = static_cast<std::uint64_t>(cells_per_axis());
  return {static_cast<int>(linear % n), static_cast<int>((linear / n) % n), static_cast<int>(linear / (n * n))};
}

std::uint64_t MapConfig::digest() const {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  auto mix = [&hash](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ull;
    }
  };
  const std::uint8_t c = static_cast<std::uint8_t>(num_classes);
  const std::uint8_t d = static_cast<std::uint8_t>(depth);
  const std::array<float, 4> f{static_cast<float>(origin.x), static_cast<float>(origin.y),
                               static_cast<float>(origin.z), static_cast<float>(cell_size)};
  mix(&c, 1);
  mix(&d, 1);
  for (float v : f) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const std::array<std::uint8_t, 4> le{static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
                                         static_cast<std::uint8_t>(bits >> 16), static_cast<std::uint8_t>(bits >> 24)};
    mix(le.data(), le.size());
  }
  return hash;
}

std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  std::uint64_t code = 0;
  for (int b = 0; b < 21; ++b) {
    code |= static_cast<std::uint64_t>((x >> b) & 1u) << (3 * b);
    code |= static_cast<std::uint64_t>((y >> b) & 1u) << (3 * b + 1);
    code |= static_cast<std::uint64_t>((z >> b) & 1u) << (3 * b + 2);
  }
  return code;
}

void morton_decode(std::uint64_t code, std::uint32_t& x, std::uint32_t& y, std::uint32_t& z) {
  x = y = z = 0;
  for (int b = 0; b < 21; ++b) {
    x |= static_cast<std::uint32_t>((code >> (3 * b)) & 1u) << b;
    y |= static_cast<std::uint32_t>((code >> (3 * b + 1)) & 1u) << b;
    z |= static_cast<std::uint32_t>((code >> (3 * b + 2)) & 1u) << b;
  }
}

NodeKey leaf_key(CellIndex c, int depth) {
  return {depth, morton_encode(static_cast<std::uint32_t>(c.ix), static_cast<std::uint32_t>(c.iy),
                               static_cast<std::uint32_t>(c.iz))};
}

CellIndex key_min_cell(NodeKey key, int depth) {
  std::uint32_t x = 0, y = 0, z = 0;
  morton_decode(key.morton, x, y, z);
  const int shift = depth - key.level;
  return {static_cast<int>(x << shift), static_cast<int>(y << shift), static_cast<int>(z << shift)};
}

}  // namespace semap

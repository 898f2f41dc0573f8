#pragma once

#include <array>
#include <cstdint>

namespace semap {

/// Order-independent accumulator for non-negative doubles. Terms are added
/// exactly into a wide fixed-point register, so any grouping or ordering of
/// the same multiset (including x * 2^k added once versus x added 2^k times)
/// yields the same result.
class ExactSum {
 public:
  void add(double x) { add_scaled(x, 0); }
  /// Adds x * 2^exp2 exactly.
  void add_scaled(double x, int exp2);
  void merge(const ExactSum& other);
  double value() const;
  bool is_zero() const;

  friend bool operator==(const ExactSum&, const ExactSum&) = default;

 private:
  void add_bits(std::uint64_t mantissa, int position);

  // Bit 0 weighs 2^-1074 (smallest subnormal).
  static constexpr int kLimbs = 40;
  static constexpr int kBias = 1074;
  std::array<std::uint64_t, kLimbs> limbs_{};
};

}  // namespace semap

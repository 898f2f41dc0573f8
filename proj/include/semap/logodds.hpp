#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace semap {

inline constexpr double kProbabilityFloor = 1e-6;
inline constexpr double kLogOddsLimit = 50.0;

// Semantic category; 0 is free space.
struct ClassId {
  int value = 0;

  constexpr ClassId() = default;
  constexpr explicit ClassId(int v) : value(v) {}
  constexpr bool is_free() const { return value == 0; }
  friend constexpr bool operator==(ClassId, ClassId) = default;
};

/// Fixed-length per-class vector. The tag keeps log-odds, probabilities and
/// log-probabilities from being mixed up at call sites.
template <class Tag>
class ClassVector {
 public:
  ClassVector() = default;
  explicit ClassVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ClassVector(std::vector<double> values) : values_(std::move(values)) {}
  ClassVector(std::initializer_list<double> values) : values_(values) {}
  explicit ClassVector(std::span<const double> values)
      : values_(values.begin(), values.end()) {}

  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const ClassVector&, const ClassVector&) = default;

 private:
  std::vector<double> values_;
};

struct LogOddsTag;
struct ProbabilityTag;
struct LogProbabilityTag;

// h: log p(m=c)/p(m=0) per class.
using LogOddsVector = ClassVector<LogOddsTag>;
using ClassDistribution = ClassVector<ProbabilityTag>;
// log q: per-class log probabilities, not necessarily normalized.
using LogProbVector = ClassVector<LogProbabilityTag>;

bool all_finite(std::span<const double> v);

ClassDistribution softmax(const LogOddsVector& h);
LogProbVector log_softmax(const LogOddsVector& h);

/// Shift so that component 0 is exactly zero. The softmax is unchanged.
LogOddsVector normalize(const LogOddsVector& h);

/// Component-wise clamp to [-limit, limit].
LogOddsVector clamp_log_odds(const LogOddsVector& h, double limit = kLogOddsLimit);

/// Raise every probability to at least `floor`, then renormalize.
ClassDistribution clamp_probabilities(const ClassDistribution& p,
                                      double floor = kProbabilityFloor);

/// h[c] = ln(p[c]/p[0]). Every probability must be strictly positive.
LogOddsVector from_distribution(const ClassDistribution& p);

double squared_distance(std::span<const double> a, std::span<const double> b);

template <class Tag>
double squared_distance(const ClassVector<Tag>& a, const ClassVector<Tag>& b) {
  return squared_distance(a.span(), b.span());
}

/// Most probable class; ties resolve to the lowest index.
ClassId argmax(const LogOddsVector& h);

}  // namespace semap

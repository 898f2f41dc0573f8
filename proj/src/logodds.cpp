#include "semap/logodds.hpp"

#include <algorithm>
#include <cmath>

#include "semap/errors.hpp"

namespace semap {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  if (v.empty()) {
    throw InvalidInput(std::string(what) + ": empty vector");
  }
  if (!all_finite(v)) {
    throw InvalidInput(std::string(what) + ": non-finite component");
  }
}

}  // namespace

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ClassDistribution softmax(const LogOddsVector& h) {
  require_finite(h.span(), "softmax");
  const double top = *std::max_element(h.begin(), h.end());
  ClassDistribution p(h.size());
  double total = 0.0;
  for (std::size_t c = 0; c < h.size(); ++c) {
    p[c] = std::exp(h[c] - top);
    total += p[c];
  }
  for (double& x : p) x /= total;
  return p;
}

LogProbVector log_softmax(const LogOddsVector& h) {
  require_finite(h.span(), "log_softmax");
  const double top = *std::max_element(h.begin(), h.end());
  double total = 0.0;
  for (double x : h) total += std::exp(x - top);
  const double lse = top + std::log(total);
  LogProbVector out(h.size());
  for (std::size_t c = 0; c < h.size(); ++c) out[c] = h[c] - lse;
  return out;
}

LogOddsVector normalize(const LogOddsVector& h) {
  require_finite(h.span(), "normalize");
  LogOddsVector out = h;
  const double base = h[0];
  for (double& x : out) x -= base;
  out[0] = 0.0;
  return out;
}

LogOddsVector clamp_log_odds(const LogOddsVector& h, double limit) {
  require_finite(h.span(), "clamp_log_odds");
  LogOddsVector out = h;
  for (double& x : out) x = std::clamp(x, -limit, limit);
  return out;
}

ClassDistribution clamp_probabilities(const ClassDistribution& p, double floor) {
  require_finite(p.span(), "clamp_probabilities");
  ClassDistribution out = p;
  double total = 0.0;
  for (double& x : out) {
    if (x < 0.0) throw InvalidInput("clamp_probabilities: negative probability");
    x = std::max(x, floor);
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

LogOddsVector from_distribution(const ClassDistribution& p) {
  require_finite(p.span(), "from_distribution");
  for (double x : p) {
    if (!(x > 0.0)) throw InvalidInput("from_distribution: probability must be > 0");
  }
  LogOddsVector h(p.size());
  const double log_free = std::log(p[0]);
  for (std::size_t c = 1; c < p.size(); ++c) h[c] = std::log(p[c]) - log_free;
  h[0] = 0.0;
  return h;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("squared_distance: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double d = a[c] - b[c];
    sum += d * d;
  }
  return sum;
}

ClassId argmax(const LogOddsVector& h) {
  const auto it = std::max_element(h.begin(), h.end());
  return ClassId(static_cast<int>(it - h.begin()));
}

}  // namespace semap

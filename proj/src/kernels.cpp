#include "semap/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include <omp.h>

#include "semap/errors.hpp"

namespace semap {

void ExactSum::add_bits(std::uint64_t mantissa, int position) {
  int limb = position / 64;
  const int offset = position % 64;
  unsigned __int128 wide = static_cast<unsigned __int128>(mantissa) << offset;
  while (wide != 0) {
    if (limb >= kLimbs) throw InternalError("ExactSum overflow");
    const unsigned __int128 sum = static_cast<unsigned __int128>(limbs_[limb]) + static_cast<std::uint64_t>(wide);
    limbs_[limb] = static_cast<std::uint64_t>(sum);
    wide = (wide >> 64) + (sum >> 64);
    ++limb;
  }
}

void ExactSum::add_scaled(double x, int exp2) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidInput("ExactSum: terms must be finite and non-negative");
  if (x == 0.0) return;
  const auto bits = std::bit_cast<std::uint64_t>(x);
  const int biased = static_cast<int>((bits >> 52) & 0x7ff);
  std::uint64_t mantissa = bits & ((std::uint64_t{1} << 52) - 1);
  int exponent = 0;
  if (biased == 0) {
    exponent = -1074;
  } else {
    mantissa |= std::uint64_t{1} << 52;
    exponent = biased - 1075;
  }
  const int position = exponent + exp2 + kBias;
  if (position < 0) throw InvalidInput("ExactSum: scaled term underflows");
  add_bits(mantissa, position);
}

void ExactSum::merge(const ExactSum& other) {
  unsigned __int128 carry = 0;
  for (int i = 0; i < kLimbs; ++i) {
    const unsigned __int128 sum =
        static_cast<unsigned __int128>(limbs_[i]) + other.limbs_[i] + carry;
    limbs_[i] = static_cast<std::uint64_t>(sum);
    carry = sum >> 64;
  }
  if (carry != 0) throw InternalError("ExactSum overflow");
}

bool ExactSum::is_zero() const {
  return std::all_of(limbs_.begin(), limbs_.end(), [](std::uint64_t l) { return l == 0; });
}

double ExactSum::value() const {
  int top = kLimbs - 1;
  while (top >= 0 && limbs_[top] == 0) --top;
  if (top < 0) return 0.0;
  double out = 0.0;
  for (int i = top; i >= std::max(0, top - 2); --i) {
    out += std::ldexp(static_cast<double>(limbs_[i]), 64 * i - kBias);
  }
  return out;
}

namespace kernel {

void consensus(std::span<const double> h, std::span<const double> neighbor_rows, std::span<const double> weights,
               double epsilon, std::span<double> out) {
  const std::size_t k = h.size();
  for (std::size_t c = 0; c < k; ++c) {
    double pull = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) pull += weights[j] * (neighbor_rows[j * k + c] - h[c]);
    out[c] = h[c] + 2.0 * epsilon * pull;
  }
}

void gradient_stabilized(std::span<const double> h_tilde, std::span<const double> logq, std::span<double> out) {
  const std::size_t k = h_tilde.size();
  const double top = *std::max_element(h_tilde.begin(), h_tilde.end());
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = std::exp(h_tilde[c] - top);
    total += out[c];
  }
  // Delta is shifted by Delta[0] so a constant Delta gives exactly zero.
  const double delta0 = h_tilde[0] - logq[0];
  double mean = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    out[c] /= total;
    mean += out[c] * ((h_tilde[c] - logq[c]) - delta0);
  }
  for (std::size_t c = 0; c < k; ++c) {
    const double shifted = (h_tilde[c] - logq[c]) - delta0;
    out[c] = out[c] * (mean - shifted);
  }
}

void gradient_literal(std::span<const double> h_tilde, std::span<const double> logq, std::span<double> out) {
  const std::size_t k = h_tilde.size();
  double total = 0.0;
  double alpha = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double e = std::exp(h_tilde[c]);
    total += e;
    alpha += e * (h_tilde[c] - logq[c]);
  }
  const double denom = total * total;
  for (std::size_t c = 0; c < k; ++c) {
    const double beta = total * (h_tilde[c] - logq[c]);
    out[c] = (alpha - beta) * (std::exp(h_tilde[c]) / denom);
  }
}

void apply_gradient(std::span<const double> h_tilde, std::span<const double> g, double gamma, double limit,
                    std::span<double> out) {
  const std::size_t k = h_tilde.size();
  for (std::size_t c = 0; c < k; ++c) out[c] = std::clamp(h_tilde[c] + gamma * g[c], -limit, limit);
  const double base = out[0];
  for (std::size_t c = 1; c < k; ++c) out[c] -= base;
  out[0] = 0.0;
}

double update_cell(std::span<const double> h, std::span<const double> logq, std::span<const double> neighbor_rows,
                   std::span<const double> weights, const CellUpdateParams& params, std::span<double> out,
                   std::span<double> scratch) {
  const std::size_t k = h.size();
  std::span<double> h_tilde = scratch.first(k);
  std::span<double> g = scratch.subspan(k, k);
  consensus(h, neighbor_rows, weights, params.epsilon, h_tilde);
  if (params.form == GradientForm::Literal) {
    gradient_literal(h_tilde, logq, g);
  } else {
    gradient_stabilized(h_tilde, logq, g);
  }
  apply_gradient(h_tilde, g, params.gamma, params.limit, out);
  double change = 0.0;
  for (std::size_t c = 0; c < k; ++c) change = std::max(change, std::abs(out[c] - h[c]));
  return change;
}

}  // namespace kernel

namespace {

void check_batch(const CellBatch& b, std::span<double> out_h) {
  const std::size_t rows = b.cells * b.classes;
  if (b.own_h.size() != rows || b.logq.size() != rows || out_h.size() != rows ||
      b.neighbor_h.size() != rows * b.neighbors || b.weights.size() != b.neighbors) {
    throw InvalidInput("update_cells: batch dimensions disagree");
  }
}

double update_range(const CellBatch& b, const CellUpdateParams& params, std::span<double> out_h, std::size_t begin,
                    std::size_t end, std::span<double> scratch) {
  const std::size_t k = b.classes;
  const std::size_t stride = b.neighbors * k;
  double norm = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double change = kernel::update_cell(b.own_h.subspan(i * k, k), b.logq.subspan(i * k, k),
                                              b.neighbor_h.subspan(i * stride, stride), b.weights, params,
                                              out_h.subspan(i * k, k), scratch);
    norm = std::max(norm, change);
  }
  return norm;
}

}  // namespace

double update_cells(const CellBatch& batch, const CellUpdateParams& params, std::span<double> out_h,
                    Execution exec) {
  check_batch(batch, out_h);
  if (exec == Execution::Serial || batch.cells < 256) {
    std::vector<double> scratch(2 * batch.classes);
    return update_range(batch, params, out_h, 0, batch.cells, scratch);
  }
  double norm = 0.0;
  const auto cells = static_cast<std::ptrdiff_t>(batch.cells);
#pragma omp parallel reduction(max : norm)
  {
    std::vector<double> scratch(2 * batch.classes);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < cells; ++i) {
      const auto u = static_cast<std::size_t>(i);
      norm = std::max(norm, update_range(batch, params, out_h, u, u + 1, scratch));
    }
  }
  return norm;
}

ExactSum grid_squared_distance(std::span<const double> a, std::span<const double> b, std::size_t classes,
                               double weight, Execution exec) {
  if (a.size() != b.size() || classes == 0 || a.size() % classes != 0) {
    throw InvalidInput("grid_squared_distance: dimensions disagree");
  }
  const auto cells = static_cast<std::ptrdiff_t>(a.size() / classes);
  auto term = [&](std::ptrdiff_t i) {
    const auto off = static_cast<std::size_t>(i) * classes;
    return weight * squared_distance(a.subspan(off, classes), b.subspan(off, classes));
  };
  ExactSum total;
  if (exec == Execution::Serial) {
    for (std::ptrdiff_t i = 0; i < cells; ++i) total.add(term(i));
    return total;
  }
#pragma omp parallel
  {
    ExactSum local;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < cells; ++i) local.add(term(i));
#pragma omp critical
    total.merge(local);
  }
  return total;
}

}  // namespace semap

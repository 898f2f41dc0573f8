#pragma once

#include <cstddef>
#include <span>

#include "semap/exact_sum.hpp"
#include "semap/logodds.hpp"

namespace semap {

enum class Execution { Serial, Parallel };

enum class GradientForm {
  Stabilized,  // softmax form, safe for any finite input
  Literal,     // alpha/beta form with raw exponentials; debug and testing only
};

struct CellUpdateParams {
  double epsilon = 0.25;
  double gamma = 1.0;
  GradientForm form = GradientForm::Stabilized;
  double limit = kLogOddsLimit;
};

/// Flattened per-cell inputs for one robot's update. Rows are `classes`
/// long; neighbor rows are laid out [cell][neighbor][class].
struct CellBatch {
  std::size_t cells = 0;
  std::size_t classes = 0;
  std::size_t neighbors = 0;
  std::span<const double> own_h;
  std::span<const double> logq;
  std::span<const double> neighbor_h;
  std::span<const double> weights;
};

namespace kernel {

// out = h + 2*eps * sum_j w_j (h_j - h), neighbors summed in order.
void consensus(std::span<const double> h, std::span<const double> neighbor_rows, std::span<const double> weights,
               double epsilon, std::span<double> out);

void gradient_stabilized(std::span<const double> h_tilde, std::span<const double> logq, std::span<double> out);
void gradient_literal(std::span<const double> h_tilde, std::span<const double> logq, std::span<double> out);

// out = normalize(clamp(h_tilde + gamma * g, +-limit)).
void apply_gradient(std::span<const double> h_tilde, std::span<const double> g, double gamma, double limit,
                    std::span<double> out);

/// Consensus, gradient and gradient application for one cell. `scratch`
/// needs 2 * classes doubles. Returns the infinity norm of out - h.
double update_cell(std::span<const double> h, std::span<const double> logq, std::span<const double> neighbor_rows,
                   std::span<const double> weights, const CellUpdateParams& params, std::span<double> out,
                   std::span<double> scratch);

}  // namespace kernel

/// Updates every row of `batch` into `out_h` (cells * classes). Returns the
/// largest per-cell infinity-norm change. Serial and parallel execution
/// produce bitwise-identical output.
double update_cells(const CellBatch& batch, const CellUpdateParams& params, std::span<double> out_h,
                    Execution exec = Execution::Serial);

/// Sum over cells of weight * ||a - b||^2 for two row-major grids.
ExactSum grid_squared_distance(std::span<const double> a, std::span<const double> b, std::size_t classes,
                               double weight, Execution exec = Execution::Serial);

}  // namespace semap

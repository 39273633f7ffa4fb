#pragma once

#include "loccforge/stiefel.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace loccforge {

struct OptimOptions {
  int max_iters = 1000;
  double grad_tol = 1e-6;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  double init_step = 1.0;
  int restarts = 10;
  std::uint64_t seed = 0;
  int max_backtracks = 60;

  void validate() const;
};

enum class OptimStatus { Converged, MaxIterations, LineSearchFailed };

std::string to_string(OptimStatus s);

struct IterationRecord {
  double value = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
};

struct OptimTrace {
  std::vector<IterationRecord> iterations;
  OptimStatus status = OptimStatus::MaxIterations;
  double max_orthonormality_error = 0.0;
  int restart_index = 0;
};

struct OptimResult {
  ProductPoint point;
  double value = 0.0;
  OptimTrace trace;
};

struct CostEvaluation {
  double value = 0.0;
  ProductTangent gradient;  // Euclidean, 2 df/dX*
};

/// A cost to minimize. `value` may be cheaper than `value_and_gradient`; if
/// empty, the latter is used for line-search trials.
struct CostFunction {
  std::function<double(const ProductPoint&)> value;
  std::function<CostEvaluation(const ProductPoint&)> value_and_gradient;
};

/// Riemannian gradient descent with Armijo backtracking and QR retraction.
OptimResult minimize(const CostFunction& f, ProductPoint initial, const OptimOptions& opts);
/// Starts from random_product_point(layout, opts.seed).
OptimResult minimize(const CostFunction& f, const Layout& layout, const OptimOptions& opts);

struct MultiRestartResult {
  OptimResult best;
  std::vector<OptimResult> runs;
  int best_index = 0;
};

/// Seed of restart `index` derived from the master seed.
std::uint64_t restart_seed(std::uint64_t seed, int index);

/// Runs opts.restarts independent minimizations from random starts and keeps
/// the lowest value (first one on ties).
MultiRestartResult multi_restart(const CostFunction& f, const Layout& layout, const OptimOptions& opts);

}  // namespace loccforge

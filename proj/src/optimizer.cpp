#include "loccforge/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace loccforge {

namespace {
constexpr double kMembershipTol = 1e-8;
}

void OptimOptions::validate() const {
  if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  if (!(grad_tol >= 0.0)) throw std::invalid_argument("grad_tol must be >= 0");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw std::invalid_argument("armijo_c must lie in (0, 1)");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
    throw std::invalid_argument("backtrack_factor must lie in (0, 1)");
  if (!(init_step > 0.0)) throw std::invalid_argument("init_step must be > 0");
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (max_backtracks < 1) throw std::invalid_argument("max_backtracks must be >= 1");
}

std::string to_string(OptimStatus s) {
  switch (s) {
    case OptimStatus::Converged: return "converged";
    case OptimStatus::MaxIterations: return "max_iterations";
    case OptimStatus::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

OptimResult minimize(const CostFunction& f, ProductPoint initial, const OptimOptions& opts) {
  opts.validate();
  auto trial_value = [&](const ProductPoint& p) { return f.value ? f.value(p) : f.value_and_gradient(p).value; };

  ProductPoint x = std::move(initial);
  CostEvaluation cur = f.value_and_gradient(x);
  OptimTrace trace;
  trace.max_orthonormality_error = x.max_orthonormality_error();
  double last_step = opts.init_step;

  for (int it = 0; it < opts.max_iters; ++it) {
    const ProductTangent rg = riemannian_gradient(x, cur.gradient);
    const double gn2 = inner(rg, rg);
    const double gn = std::sqrt(gn2);
    if (gn <= opts.grad_tol) {
      trace.iterations.push_back({cur.value, gn, 0.0});
      trace.status = OptimStatus::Converged;
      break;
    }
    ProductTangent dir = rg;
    for (auto& m : dir) m = -m;

    double t = it == 0 ? opts.init_step : std::min(opts.init_step, 2.0 * last_step);
    bool accepted = false;
    ProductPoint next;
    double next_value = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, t *= opts.backtrack_factor) {
      try {
        next = qr_retract(x, dir, t);
      } catch (const InvariantError&) {
        continue;
      }
      next_value = trial_value(next);
      if (next_value <= cur.value - opts.armijo_c * t * gn2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      trace.iterations.push_back({cur.value, gn, 0.0});
      trace.status = OptimStatus::LineSearchFailed;
      break;
    }
    const double err = next.max_orthonormality_error();
    if (err > kMembershipTol) throw InvariantError("optimizer iterate left the manifold");
    trace.max_orthonormality_error = std::max(trace.max_orthonormality_error, err);
    last_step = t;
    x = std::move(next);
    cur = f.value_and_gradient(x);
    trace.iterations.push_back({cur.value, gn, t});
  }
  return {std::move(x), cur.value, std::move(trace)};
}

OptimResult minimize(const CostFunction& f, const Layout& layout, const OptimOptions& opts) {
  return minimize(f, random_product_point(layout, opts.seed), opts);
}

std::uint64_t restart_seed(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t raw[2];
  seq.generate(raw, raw + 2);
  return (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
}

MultiRestartResult multi_restart(const CostFunction& f, const Layout& layout, const OptimOptions& opts) {
  opts.validate();
  MultiRestartResult out;
  for (int r = 0; r < opts.restarts; ++r) {
    OptimOptions o = opts;
    o.seed = restart_seed(opts.seed, r);
    OptimResult res = minimize(f, layout, o);
    res.trace.restart_index = r;
    out.runs.push_back(std::move(res));
  }
  for (int r = 1; r < opts.restarts; ++r)
    if (out.runs[r].value < out.runs[out.best_index].value) out.best_index = r;
  out.best = out.runs[out.best_index];
  return out;
}

}  // namespace loccforge

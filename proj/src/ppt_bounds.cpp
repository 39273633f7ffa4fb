#include "loccforge/ppt_bounds.hpp"

#include <algorithm>
#include <cmath>

namespace loccforge {

Matrix partial_transpose(const Matrix& op, const Dims& dims, const std::vector<int>& subsystems) {
  const int n = static_cast<int>(dims.size());
  const int total = total_dim(dims);
  if (op.rows() != total || op.cols() != total) throw DimensionError("partial_transpose: operator does not match dims");
  std::vector<bool> flip(n, false);
  for (int s : subsystems) {
    if (s < 0 || s >= n) throw DimensionError("partial_transpose: subsystem index out of range");
    flip[s] = true;
  }
  // index = t(index) + k(index), t collecting the transposed digits
  std::vector<int> t(total, 0), k(total, 0);
  for (int idx = 0; idx < total; ++idx) {
    int rest = idx, stride = 1;
    for (int s = n - 1; s >= 0; --s) {
      const int digit = rest % dims[s];
      rest /= dims[s];
      (flip[s] ? t[idx] : k[idx]) += digit * stride;
      stride *= dims[s];
    }
  }
  Matrix out(total, total);
  for (int c = 0; c < total; ++c)
    for (int r = 0; r < total; ++r) out(k[r] + t[c], k[c] + t[r]) = op(r, c);
  return out;
}

namespace {

void check_cut(const Matrix& rho, const Dims& cut, int d) {
  if (cut.size() != 2) throw DimensionError("PPT bound needs a bipartite cut");
  if (rho.rows() != total_dim(cut) || rho.cols() != rho.rows()) throw DimensionError("state does not match the cut");
  if (d < 2) throw std::invalid_argument("target dimension must be >= 2");
}

BlockMap scaled_pt(const Dims& cut, double s) {
  return [cut, s](const Matrix& x) -> Matrix { return s * partial_transpose(x, cut, {0}); };
}

BlockMap scaled(double s) {
  return [s](const Matrix& x) -> Matrix { return s * x; };
}

// E, F >= 0 with (1 - d) F^G <= E^G <= (1 + d) F^G, G the transpose on A.
// Returns the block indices of E and F.
std::pair<int, int> rains_blocks(SdpProblem& prob, const Dims& cut, int d) {
  const int dim = total_dim(cut);
  const int e = prob.add_block(dim);
  const int f = prob.add_block(dim);
  const Matrix zero = Matrix::Zero(dim, dim);
  prob.add_inequality({{e, scaled_pt(cut, -1.0)}, {f, scaled_pt(cut, 1.0 - d)}}, zero);
  prob.add_inequality({{e, scaled_pt(cut, 1.0)}, {f, scaled_pt(cut, -1.0 - d)}}, zero);
  return {e, f};
}

// The dual objective bounds the optimum from above whenever the dual iterate
// is feasible, which the interior-point method keeps to rounding error.
double bound_value(const SdpSolution& sol) {
  return std::isfinite(sol.dual_objective) ? sol.dual_objective : sol.objective;
}

}  // namespace

PptBound ppt_avg_fidelity_bound(const Matrix& rho_ab, const Dims& cut, int d, const SdpOptions& opts) {
  check_cut(rho_ab, cut, d);
  const int dim = total_dim(cut);
  SdpProblem prob;
  const auto [e, f] = rains_blocks(prob, cut, d);
  prob.add_equality({{e, scaled(1.0)}, {f, scaled(d * d - 1.0)}}, Matrix::Identity(dim, dim));
  prob.set_objective(e, rho_ab.transpose());
  PptBound out;
  out.solution = solve(prob, opts);
  out.value = bound_value(out.solution);
  return out;
}

PptBound ppt_fidelity_bound(const Matrix& rho_ab, const Dims& cut, int d, double p, const SdpOptions& opts) {
  check_cut(rho_ab, cut, d);
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("success probability must lie in (0, 1]");
  const int dim = total_dim(cut);
  const Matrix rt = rho_ab.transpose();
  SdpProblem prob;
  const auto [e, f] = rains_blocks(prob, cut, d);
  auto weight = [rt](double s) {
    return [rt, s](const Matrix& x) -> Matrix { return Matrix::Constant(1, 1, s * (rt * x).trace().real()); };
  };
  prob.add_equality({{e, weight(1.0)}, {f, weight(d * d - 1.0)}}, Matrix::Constant(1, 1, p));
  prob.add_inequality({{e, scaled(1.0)}, {f, scaled(d * d - 1.0)}}, Matrix::Identity(dim, dim));
  prob.set_objective(e, rt);
  PptBound out;
  out.solution = solve(prob, opts);
  out.value = bound_value(out.solution) / p;
  return out;
}

std::vector<PptBound> ppt_fidelity_bound_sweep(const Matrix& rho_ab, const Dims& cut, int d,
                                               const std::vector<double>& p_grid, const SdpOptions& opts) {
  std::vector<PptBound> out;
  for (double p : p_grid) out.push_back(ppt_fidelity_bound(rho_ab, cut, d, p, opts));
  return out;
}

Matrix merging_fidelity_operator(const PureState& psi_rab) {
  if (psi_rab.dims() != Dims{2, 2, 2}) throw DimensionError("merging bound expects qubit R, A, B");
  const Dims five{2, 2, 2, 2, 2};  // R, A, B, B', B''
  const Matrix psi_t = partial_transpose(psi_rab.projector(), {2, 2, 2}, {1, 2});
  const Matrix left = tensor(psi_t, Matrix::Identity(4, 4));
  // psi on (R, B', B'') with identity on (A, B): [R, B', B'', A, B] -> [R, A, B, B', B'']
  const Matrix right = permute_subsystems(tensor(psi_rab.projector(), Matrix::Identity(4, 4)), five, {0, 3, 4, 1, 2});
  return hermitian_part(partial_trace(left * right, five, {1, 2, 3, 4}));
}

PptBound ppt_merging_bound(const PureState& psi_rab, const SdpOptions& opts) {
  const Matrix x = merging_fidelity_operator(psi_rab);
  const Dims choi{2, 2, 2, 2};  // A, B, B', B''
  SdpProblem prob;
  const int j = prob.add_block(16);
  prob.add_equality({{j, [choi](const Matrix& m) -> Matrix { return partial_trace(m, choi, {0, 1}); }}},
                    Matrix::Identity(4, 4));
  prob.add_inequality({{j, [choi](const Matrix& m) -> Matrix { return -partial_transpose(m, choi, {0}); }}},
                      Matrix::Zero(16, 16));
  prob.set_objective(j, x);
  PptBound out;
  out.solution = solve(prob, opts);
  out.value = bound_value(out.solution);
  return out;
}

}  // namespace loccforge

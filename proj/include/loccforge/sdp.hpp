#pragma once

#include "loccforge/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace loccforge {

/// Linear map from one variable block to a Hermitian matrix.
using BlockMap = std::function<Matrix(const Matrix&)>;

struct LinearTerm {
  int block = 0;
  BlockMap map;
};

/// maximize  sum_b Re Tr[C_b X_b]
/// s.t.      sum_terms map(X_block) = rhs   (equalities)
///           sum_terms map(X_block) <= rhs  (matrix inequalities, via slack blocks)
///           X_b >= 0 for every block
/// All variables are Hermitian.
class SdpProblem {
 public:
  /// Adds a PSD variable block of the given dimension; returns its index.
  int add_block(int dim);
  void set_objective(int block, Matrix c);
  void add_equality(std::vector<LinearTerm> terms, Matrix rhs);
  /// Adds a slack block S >= 0 with sum map(X) + S = rhs; returns its index.
  int add_inequality(std::vector<LinearTerm> terms, Matrix rhs);

  int n_blocks() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& block_dims() const { return dims_; }
  const std::vector<Matrix>& objective() const { return objective_; }

  struct Constraint {
    std::vector<LinearTerm> terms;
    Matrix rhs;
  };
  const std::vector<Constraint>& equalities() const { return equalities_; }

  /// Throws DimensionError on inconsistent shapes and InvariantError on a
  /// non-Hermitian right-hand side or objective.
  void validate() const;

 private:
  std::vector<int> dims_;
  std::vector<Matrix> objective_;
  std::vector<Constraint> equalities_;
};

enum class SdpMethod { Auto, InteriorPoint, Admm };

std::string to_string(SdpMethod m);

struct SdpOptions {
  /// Auto picks the interior-point method when the equality system has at
  /// most `ipm_max_rows` scalar rows, ADMM otherwise.
  SdpMethod method = SdpMethod::Auto;
  int ipm_max_rows = 3000;
  double ipm_tol = 1e-9;
  int ipm_max_iters = 100;

  double tol = 1e-7;  // ADMM
  int max_iters = 100000;
  double over_relaxation = 1.6;
  double rho = 1.0;  // initial penalty, adapted by residual balancing

  double max_seconds = 0.0;  // wall-clock cap, 0 for none
};

/// Stalled: the interior-point residuals stopped decreasing; the best iterate
/// is returned and its residuals tell how accurate it is.
enum class SdpStatus { Solved, MaxIterations, Stalled, NumericalFailure, TimeLimit };

std::string to_string(SdpStatus s);

struct SdpSolution {
  std::vector<Matrix> blocks;
  double objective = 0.0;
  /// Dual objective (interior point only, NaN for ADMM); an upper bound on
  /// the optimum up to the dual residual.
  double dual_objective = 0.0;
  double primal_residual = 0.0;  // ||x - z|| relative, plus the affine residual of z
  double dual_residual = 0.0;
  /// |<X, S>| for the PSD point X and the cone part of the dual slack S.
  double complementary_slackness = 0.0;
  int iterations = 0;
  SdpStatus status = SdpStatus::MaxIterations;
  SdpMethod method = SdpMethod::Auto;  // the method actually used
};

/// Interior point: infeasible primal-dual path following with the HKM
/// direction and Mehrotra predictor-corrector steps.
/// ADMM: operator splitting alternating an affine projection onto the
/// equality constraints with eigenvalue clipping on every block.
SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts = {});

/// Symmetric vectorization with sqrt(2) off-diagonal scaling: the Euclidean
/// inner product equals Re Tr[A B] for Hermitian A, B.
Eigen::VectorXd svec(const Matrix& h);
Matrix smat(const Eigen::VectorXd& v, int n);

}  // namespace loccforge

#pragma once

#include "loccforge/types.hpp"

#include <cstdint>
#include <vector>

namespace loccforge {

inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kPsdTol = 1e-9;
inline constexpr double kTraceTol = 1e-9;
inline constexpr double kPureNormTol = 1e-12;
inline constexpr double kEntropyFloor = 1e-12;

class PureState;

/// Density operator on a composite space. Values are validated on
/// construction and immutable afterwards. Unnormalized (branch) states are
/// allowed when `trace_normalized` is false.
class QState {
 public:
  QState(Matrix data, Dims dims, bool trace_normalized = true);

  /// Skips the positivity eigen-check; Hermiticity is still enforced by
  /// symmetrization. Only for operators that are PSD by construction.
  static QState trusted(Matrix data, Dims dims, bool trace_normalized);

  static QState from_pure(const PureState& psi);

  const Matrix& matrix() const { return data_; }
  const Dims& dims() const { return dims_; }
  int dim() const { return static_cast<int>(data_.rows()); }
  bool trace_normalized() const { return normalized_; }
  double trace() const { return data_.trace().real(); }

 private:
  QState() = default;

  Matrix data_;
  Dims dims_;
  bool normalized_ = true;
};

class PureState {
 public:
  PureState(Vector amp, Dims dims);

  const Vector& amplitudes() const { return amp_; }
  const Dims& dims() const { return dims_; }
  int dim() const { return static_cast<int>(amp_.size()); }

  /// |psi><psi|
  Matrix projector() const { return amp_ * amp_.adjoint(); }

 private:
  Vector amp_;
  Dims dims_;
};

/// Ordered Kraus operators of a CP map, all of the same shape d_out x d_in.
struct KrausSet {
  std::vector<Matrix> ops;

  int dim_in() const;
  int dim_out() const;

  /// sum_i K_i^dagger K_i
  Matrix completeness() const;
  bool is_trace_preserving(double tol = kHermitianTol) const;
  bool is_trace_nonincreasing(double tol = kHermitianTol) const;

  /// sum_i K_i rho K_i^dagger
  Matrix apply(const Matrix& rho) const;
};

Matrix tensor(const Matrix& a, const Matrix& b);
QState tensor(const QState& a, const QState& b);
PureState tensor(const PureState& a, const PureState& b);

/// Partial trace of an operator on `dims`, keeping the listed subsystems in
/// ascending order.
Matrix partial_trace(const Matrix& op, const Dims& dims, std::vector<int> keep);
QState partial_trace(const QState& rho, std::vector<int> keep);

/// Reorders subsystems: new subsystem k is old subsystem perm[k].
Matrix permute_subsystems(const Matrix& op, const Dims& dims, const std::vector<int>& perm);
Vector permute_subsystems(const Vector& amp, const Dims& dims, const std::vector<int>& perm);
QState permute_subsystems(const QState& rho, const std::vector<int>& perm);
PureState permute_subsystems(const PureState& psi, const std::vector<int>& perm);

Dims permuted_dims(const Dims& dims, const std::vector<int>& perm);

/// (1/sqrt(local_dim)) sum_i |i>^{n_parties}
PureState max_entangled(int n_parties, int local_dim);

/// -sum lambda log2 lambda over eigenvalues above the entropy floor. Accepts
/// unnormalized PSD input; used for branch states.
double entropy_bits(const Matrix& hermitian);

/// Entropy of a normalized state in bits.
double von_neumann_entropy(const QState& rho);

/// S(B) - S(AB) where A is subsystems [0, cut) and B is [cut, n).
double coherent_information(const QState& rho_ab, int cut);

/// S(AB) - S(B) of a tripartite pure state with dims [R, A, B].
double conditional_entropy(const PureState& psi_rab);

/// <phi|rho|phi>
double fidelity_to_pure(const QState& rho, const PureState& phi);

PureState haar_random_pure(int dim, std::uint64_t seed);
PureState haar_random_pure(const Dims& dims, std::uint64_t seed);

}  // namespace loccforge

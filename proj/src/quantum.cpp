#include "loccforge/quantum.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace loccforge {

int total_dim(const Dims& dims) {
  int d = 1;
  for (int x : dims) {
    if (x < 1) throw DimensionError("subsystem dimension must be >= 1");
    d *= x;
  }
  return d;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

namespace {

void check_square_dims(const Matrix& op, const Dims& dims) {
  const int d = total_dim(dims);
  if (op.rows() != d || op.cols() != d) {
    std::ostringstream os;
    os << "operator is " << op.rows() << "x" << op.cols() << " but dims multiply to " << d;
    throw DimensionError(os.str());
  }
}

// Row-major strides: stride[k] = prod_{l>k} dims[l].
std::vector<int> strides_of(const Dims& dims) {
  std::vector<int> s(dims.size(), 1);
  for (int k = static_cast<int>(dims.size()) - 2; k >= 0; --k) s[k] = s[k + 1] * dims[k + 1];
  return s;
}

void check_perm(const std::vector<int>& perm, std::size_t n) {
  if (perm.size() != n) throw DimensionError("permutation length does not match subsystem count");
  std::vector<bool> seen(n, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= n || seen[p]) throw DimensionError("invalid permutation");
    seen[p] = true;
  }
}

// new composite index -> old composite index
std::vector<int> permutation_index_map(const Dims& dims, const std::vector<int>& perm) {
  check_perm(perm, dims.size());
  const Dims new_dims = permuted_dims(dims, perm);
  const auto old_strides = strides_of(dims);
  const int d = total_dim(dims);
  std::vector<int> map(d);
  std::vector<int> digits(dims.size(), 0);
  for (int idx = 0; idx < d; ++idx) {
    int old_idx = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) old_idx += digits[k] * old_strides[perm[k]];
    map[idx] = old_idx;
    for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
      if (++digits[k] < new_dims[k]) break;
      digits[k] = 0;
    }
  }
  return map;
}

}  // namespace

QState::QState(Matrix data, Dims dims, bool trace_normalized)
    : data_(std::move(data)), dims_(std::move(dims)), normalized_(trace_normalized) {
  check_square_dims(data_, dims_);
  if (max_abs(data_ - data_.adjoint()) > kHermitianTol) throw InvariantError("state is not Hermitian");
  data_ = hermitian_part(data_);
  Eigen::SelfAdjointEigenSolver<Matrix> es(data_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdTol) throw InvariantError("state is not positive semidefinite");
  if (normalized_ && std::abs(trace() - 1.0) > kTraceTol) throw InvariantError("state trace differs from 1");
}

QState QState::trusted(Matrix data, Dims dims, bool trace_normalized) {
  QState s;
  check_square_dims(data, dims);
  s.data_ = hermitian_part(data);
  s.dims_ = std::move(dims);
  s.normalized_ = trace_normalized;
  return s;
}

QState QState::from_pure(const PureState& psi) { return trusted(psi.projector(), psi.dims(), true); }

PureState::PureState(Vector amp, Dims dims) : amp_(std::move(amp)), dims_(std::move(dims)) {
  if (total_dim(dims_) != amp_.size()) throw DimensionError("amplitude length does not match dims");
  if (std::abs(amp_.norm() - 1.0) > kPureNormTol) throw InvariantError("pure state is not normalized");
}

int KrausSet::dim_in() const { return ops.empty() ? 0 : static_cast<int>(ops.front().cols()); }
int KrausSet::dim_out() const { return ops.empty() ? 0 : static_cast<int>(ops.front().rows()); }

Matrix KrausSet::completeness() const {
  Matrix acc = Matrix::Zero(dim_in(), dim_in());
  for (const auto& k : ops) acc.noalias() += k.adjoint() * k;
  return acc;
}

bool KrausSet::is_trace_preserving(double tol) const {
  return max_abs(completeness() - Matrix::Identity(dim_in(), dim_in())) <= tol;
}

bool KrausSet::is_trace_nonincreasing(double tol) const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(completeness()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() <= 1.0 + tol;
}

Matrix KrausSet::apply(const Matrix& rho) const {
  Matrix out = Matrix::Zero(dim_out(), dim_out());
  for (const auto& k : ops) out.noalias() += k * rho * k.adjoint();
  return out;
}

Matrix tensor(const Matrix& a, const Matrix& b) { return Eigen::kroneckerProduct(a, b).eval(); }

QState tensor(const QState& a, const QState& b) {
  Dims dims = a.dims();
  dims.insert(dims.end(), b.dims().begin(), b.dims().end());
  return QState::trusted(tensor(a.matrix(), b.matrix()), std::move(dims),
                         a.trace_normalized() && b.trace_normalized());
}

PureState tensor(const PureState& a, const PureState& b) {
  Dims dims = a.dims();
  dims.insert(dims.end(), b.dims().begin(), b.dims().end());
  Vector amp = Eigen::kroneckerProduct(a.amplitudes(), b.amplitudes()).eval();
  return PureState(amp.normalized(), std::move(dims));
}

Matrix partial_trace(const Matrix& op, const Dims& dims, std::vector<int> keep) {
  check_square_dims(op, dims);
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  for (int k : keep)
    if (k < 0 || static_cast<std::size_t>(k) >= dims.size()) throw DimensionError("partial_trace: subsystem index out of range");

  std::vector<int> traced;
  for (int k = 0; k < static_cast<int>(dims.size()); ++k)
    if (!std::binary_search(keep.begin(), keep.end(), k)) traced.push_back(k);

  // Reorder so kept subsystems lead; then the traced block is contiguous.
  std::vector<int> perm = keep;
  perm.insert(perm.end(), traced.begin(), traced.end());
  int dk = 1;
  for (int k : keep) dk *= dims[k];
  const int dt = total_dim(dims) / dk;

  const Matrix& src = op;
  const auto map = permutation_index_map(dims, perm);
  Matrix out = Matrix::Zero(dk, dk);
  for (int j = 0; j < dk; ++j)
    for (int i = 0; i < dk; ++i) {
      Complex acc = 0;
      for (int t = 0; t < dt; ++t) acc += src(map[i * dt + t], map[j * dt + t]);
      out(i, j) = acc;
    }
  return out;
}

QState partial_trace(const QState& rho, std::vector<int> keep) {
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  Matrix reduced = partial_trace(rho.matrix(), rho.dims(), keep);
  Dims dims;
  for (int k : keep) dims.push_back(rho.dims()[k]);
  return QState::trusted(std::move(reduced), std::move(dims), rho.trace_normalized());
}

Dims permuted_dims(const Dims& dims, const std::vector<int>& perm) {
  check_perm(perm, dims.size());
  Dims out(dims.size());
  for (std::size_t k = 0; k < perm.size(); ++k) out[k] = dims[perm[k]];
  return out;
}

Matrix permute_subsystems(const Matrix& op, const Dims& dims, const std::vector<int>& perm) {
  check_square_dims(op, dims);
  const auto map = permutation_index_map(dims, perm);
  const int d = static_cast<int>(map.size());
  Matrix out(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) out(i, j) = op(map[i], map[j]);
  return out;
}

Vector permute_subsystems(const Vector& amp, const Dims& dims, const std::vector<int>& perm) {
  if (amp.size() != total_dim(dims)) throw DimensionError("vector length does not match dims");
  const auto map = permutation_index_map(dims, perm);
  Vector out(amp.size());
  for (std::size_t i = 0; i < map.size(); ++i) out(i) = amp(map[i]);
  return out;
}

QState permute_subsystems(const QState& rho, const std::vector<int>& perm) {
  return QState::trusted(permute_subsystems(rho.matrix(), rho.dims(), perm), permuted_dims(rho.dims(), perm),
                         rho.trace_normalized());
}

PureState permute_subsystems(const PureState& psi, const std::vector<int>& perm) {
  return PureState(permute_subsystems(psi.amplitudes(), psi.dims(), perm), permuted_dims(psi.dims(), perm));
}

PureState max_entangled(int n_parties, int local_dim) {
  if (n_parties < 2 || local_dim < 2) throw DimensionError("max_entangled needs n_parties >= 2 and local_dim >= 2");
  Dims dims(n_parties, local_dim);
  Vector amp = Vector::Zero(total_dim(dims));
  // |i i ... i> has composite index i * (1 + d + d^2 + ...)
  int step = 0;
  for (int k = 0, p = 1; k < n_parties; ++k, p *= local_dim) step += p;
  for (int i = 0; i < local_dim; ++i) amp(i * step) = 1.0 / std::sqrt(static_cast<double>(local_dim));
  return PureState(amp, dims);
}

double entropy_bits(const Matrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(hermitian), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (double lam : es.eigenvalues())
    if (lam > kEntropyFloor) s -= lam * std::log2(lam);
  return s;
}

double von_neumann_entropy(const QState& rho) {
  if (std::abs(rho.trace() - 1.0) > kTraceTol) throw InvariantError("entropy requires a normalized state");
  return std::max(entropy_bits(rho.matrix()), 0.0);
}

double coherent_information(const QState& rho_ab, int cut) {
  const int n = static_cast<int>(rho_ab.dims().size());
  if (cut < 1 || cut >= n) throw DimensionError("coherent_information: cut must split the subsystems");
  std::vector<int> b(n - cut);
  std::iota(b.begin(), b.end(), cut);
  return von_neumann_entropy(partial_trace(rho_ab, b)) - von_neumann_entropy(rho_ab);
}

double conditional_entropy(const PureState& psi_rab) {
  if (psi_rab.dims().size() != 3) throw DimensionError("conditional_entropy expects dims [R, A, B]");
  const QState rho = QState::from_pure(psi_rab);
  return von_neumann_entropy(partial_trace(rho, {1, 2})) - von_neumann_entropy(partial_trace(rho, {2}));
}

double fidelity_to_pure(const QState& rho, const PureState& phi) {
  if (rho.dim() != phi.dim()) throw DimensionError("fidelity_to_pure: dimension mismatch");
  const auto& v = phi.amplitudes();
  return v.dot(rho.matrix() * v).real();
}

PureState haar_random_pure(int dim, std::uint64_t seed) { return haar_random_pure(Dims{dim}, seed); }

PureState haar_random_pure(const Dims& dims, std::uint64_t seed) {
  const int d = total_dim(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Vector amp(d);
  for (int i = 0; i < d; ++i) amp(i) = Complex(g(rng), g(rng));
  return PureState(amp.normalized(), dims);
}

}  // namespace loccforge

#include "loccforge/stiefel.hpp"

#include <cmath>
#include <random>

namespace loccforge {

StiefelPoint::StiefelPoint(Matrix x, double tol) : x_(std::move(x)) {
  if (x_.rows() < x_.cols() || x_.cols() < 1) throw DimensionError("Stiefel point needs n >= p >= 1");
  if (orthonormality_error() > tol) throw InvariantError("matrix columns are not orthonormal");
}

double StiefelPoint::orthonormality_error() const {
  return max_abs(x_.adjoint() * x_ - Matrix::Identity(x_.cols(), x_.cols()));
}

Layout ProductPoint::layout() const {
  Layout out;
  out.reserve(parts_.size());
  for (const auto& p : parts_) out.push_back({p.rows(), p.cols()});
  return out;
}

double ProductPoint::max_orthonormality_error() const {
  double e = 0.0;
  for (const auto& p : parts_) e = std::max(e, p.orthonormality_error());
  return e;
}

Matrix qf(const Matrix& a) {
  const auto n = a.rows();
  const auto p = a.cols();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, p);
  const Matrix& r = qr.matrixQR();
  const double scale = std::max(1.0, max_abs(a));
  for (Eigen::Index j = 0; j < p; ++j) {
    const Complex rjj = r(j, j);
    const double mag = std::abs(rjj);
    if (mag <= 1e-12 * scale) throw InvariantError("QR retraction: rank-deficient argument");
    q.col(j) *= rjj / mag;
  }
  return q;
}

StiefelPoint random_point(int n, int p, std::uint64_t seed) {
  if (n < p || p < 1) throw DimensionError("random_point needs n >= p >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix a(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = Complex(g(rng), g(rng));
  return StiefelPoint(qf(a));
}

TangentVector project_tangent(const StiefelPoint& x, const Matrix& v) {
  const Matrix& X = x.matrix();
  if (v.rows() != X.rows() || v.cols() != X.cols()) throw DimensionError("project_tangent: shape mismatch");
  const Matrix xv = X.adjoint() * v;
  return {v - 0.5 * X * (xv + xv.adjoint())};
}

TangentVector riemannian_gradient(const StiefelPoint& x, const Matrix& euclidean_grad) {
  return project_tangent(x, euclidean_grad);
}

StiefelPoint qr_retract(const StiefelPoint& x, const TangentVector& u, double t) {
  if (u.z.rows() != x.rows() || u.z.cols() != x.cols()) throw DimensionError("qr_retract: shape mismatch");
  return StiefelPoint(qf(x.matrix() + t * u.z));
}

double inner(const Matrix& z1, const Matrix& z2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw DimensionError("inner: shape mismatch");
  // Re Tr[Z1^dagger Z2] = sum Re(conj(z1) z2)
  return (z1.conjugate().cwiseProduct(z2)).sum().real();
}

double tangency_error(const StiefelPoint& x, const Matrix& z) {
  const Matrix m = z.adjoint() * x.matrix();
  return max_abs(m + m.adjoint());
}

ProductPoint random_product_point(const Layout& layout, std::uint64_t seed) {
  std::seed_seq seq{seed};
  std::vector<std::uint64_t> seeds(layout.size());
  {
    std::vector<std::uint32_t> raw(2 * layout.size());
    seq.generate(raw.begin(), raw.end());
    for (std::size_t k = 0; k < layout.size(); ++k)
      seeds[k] = (static_cast<std::uint64_t>(raw[2 * k]) << 32) | raw[2 * k + 1];
  }
  std::vector<StiefelPoint> parts;
  parts.reserve(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) parts.push_back(random_point(layout[k].rows, layout[k].cols, seeds[k]));
  return ProductPoint(std::move(parts));
}

namespace {
void check_parts(const ProductPoint& x, const ProductTangent& v) {
  if (x.size() != v.size()) throw DimensionError("product manifold: part-count mismatch");
}
}  // namespace

ProductTangent project_tangent(const ProductPoint& x, const ProductTangent& v) {
  check_parts(x, v);
  ProductTangent out;
  out.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(project_tangent(x[k], v[k]).z);
  return out;
}

ProductTangent riemannian_gradient(const ProductPoint& x, const ProductTangent& euclidean_grad) {
  return project_tangent(x, euclidean_grad);
}

ProductPoint qr_retract(const ProductPoint& x, const ProductTangent& u, double t) {
  check_parts(x, u);
  std::vector<StiefelPoint> parts;
  parts.reserve(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) parts.push_back(qr_retract(x[k], TangentVector{u[k]}, t));
  return ProductPoint(std::move(parts));
}

double inner(const ProductTangent& a, const ProductTangent& b) {
  if (a.size() != b.size()) throw DimensionError("product inner: part-count mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += inner(a[k], b[k]);
  return s;
}

}  // namespace loccforge

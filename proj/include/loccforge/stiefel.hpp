#pragma once

#include "loccforge/types.hpp"

#include <cstdint>
#include <vector>

namespace loccforge {

inline constexpr double kStiefelTol = 1e-10;

/// Point on the complex Stiefel manifold St(n, p): an n x p matrix with
/// orthonormal columns.
class StiefelPoint {
 public:
  /// Validates X^dagger X = I within `tol`.
  explicit StiefelPoint(Matrix x, double tol = kStiefelTol);

  const Matrix& matrix() const { return x_; }
  int rows() const { return static_cast<int>(x_.rows()); }
  int cols() const { return static_cast<int>(x_.cols()); }

  /// max abs entry of X^dagger X - I
  double orthonormality_error() const;

 private:
  Matrix x_;
};

/// Tangent vector at a StiefelPoint: Z^dagger X + X^dagger Z = 0.
struct TangentVector {
  Matrix z;
};

struct PartShape {
  int rows = 0;
  int cols = 0;
  bool operator==(const PartShape&) const = default;
};

using Layout = std::vector<PartShape>;

/// Ordered list of Stiefel points; one factor of the product manifold each.
class ProductPoint {
 public:
  ProductPoint() = default;
  explicit ProductPoint(std::vector<StiefelPoint> parts) : parts_(std::move(parts)) {}

  const std::vector<StiefelPoint>& parts() const { return parts_; }
  const StiefelPoint& operator[](std::size_t i) const { return parts_[i]; }
  std::size_t size() const { return parts_.size(); }
  Layout layout() const;

  double max_orthonormality_error() const;

 private:
  std::vector<StiefelPoint> parts_;
};

/// Per-part ambient matrices (gradients, tangent vectors) on a ProductPoint.
using ProductTangent = std::vector<Matrix>;

/// Complex Ginibre matrix orthonormalized by sign-fixed QR.
StiefelPoint random_point(int n, int p, std::uint64_t seed);

/// Q factor of a thin QR with the R diagonal forced real positive. Throws
/// InvariantError when `a` is (numerically) rank deficient.
Matrix qf(const Matrix& a);

/// U = V - X (X^dagger V + V^dagger X) / 2
TangentVector project_tangent(const StiefelPoint& x, const Matrix& v);

/// Riemannian gradient for the embedded metric Re Tr[Z1^dagger Z2], given the
/// Euclidean gradient G = 2 df/dX*.
TangentVector riemannian_gradient(const StiefelPoint& x, const Matrix& euclidean_grad);

/// R(t) = qf(X + t U)
StiefelPoint qr_retract(const StiefelPoint& x, const TangentVector& u, double t);

/// Re Tr[Z1^dagger Z2]
double inner(const Matrix& z1, const Matrix& z2);

/// max abs entry of Z^dagger X + X^dagger Z
double tangency_error(const StiefelPoint& x, const Matrix& z);

ProductPoint random_product_point(const Layout& layout, std::uint64_t seed);
ProductTangent project_tangent(const ProductPoint& x, const ProductTangent& v);
ProductTangent riemannian_gradient(const ProductPoint& x, const ProductTangent& euclidean_grad);
ProductPoint qr_retract(const ProductPoint& x, const ProductTangent& u, double t);
double inner(const ProductTangent& a, const ProductTangent& b);

}  // namespace loccforge

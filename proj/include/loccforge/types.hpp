#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace loccforge {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Subsystem dimensions of a composite space. The first subsystem is the most
/// significant digit of the composite index.
using Dims = std::vector<int>;

/// Raised when operand shapes or subsystem layouts disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value violates a stated numerical invariant (Hermiticity,
/// positivity, orthonormality, ...).
class InvariantError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

int total_dim(const Dims& dims);

double max_abs(const Matrix& m);

/// (m + m^dagger) / 2
Matrix hermitian_part(const Matrix& m);

}  // namespace loccforge

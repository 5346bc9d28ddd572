#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace nreg {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

/// Matrix-free linear action y = K x.
using LinearAction = std::function<Vector(const Vector&)>;

class SingularPivotError : public std::runtime_error {
 public:
  SingularPivotError(std::size_t row, double pivot);
  std::size_t row() const { return row_; }
  double pivot() const { return pivot_; }

 private:
  std::size_t row_;
  double pivot_;
};

class AsymmetricMatrixError : public std::invalid_argument {
 public:
  explicit AsymmetricMatrixError(double asymmetry);
};

/// Tridiagonal system with sub-, main- and super-diagonal.
///
/// Row i reads sub[i-1] x[i-1] + main[i] x[i] + super[i] x[i+1].
struct TridiagonalSystem {
  std::vector<double> sub;
  std::vector<double> main;
  std::vector<double> super;

  std::size_t size() const { return main.size(); }
  void validate() const;
  Vector multiply(const Vector& x) const;
  DenseMatrix to_dense() const;
};

/// Thomas elimination of a TridiagonalSystem, factored once and reusable
/// for any number of right-hand sides.
class TridiagonalFactorization {
 public:
  /// Throws SingularPivotError when |pivot| <= pivot_tol * max|main|.
  explicit TridiagonalFactorization(const TridiagonalSystem& sys,
                                    double pivot_tol = 1e-13);

  Vector solve(const Vector& rhs) const;
  void solve_in_place(std::span<double> x) const;
  std::size_t size() const { return pivots_.size(); }

 private:
  std::vector<double> sub_;
  std::vector<double> super_;
  std::vector<double> pivots_;
  std::vector<double> multipliers_;
};

Vector solve_tridiagonal(const TridiagonalSystem& sys, const Vector& rhs);

/// Eigenvalues in nonincreasing order, eigenvectors as matching columns.
struct SymmetricEigenDecomposition {
  Vector eigenvalues;
  DenseMatrix eigenvectors;

  DenseMatrix reconstruct() const;
};

/// Throws AsymmetricMatrixError if max|M - M^T| > sym_tol * max(1, max|M|).
SymmetricEigenDecomposition sym_eigen(const DenseMatrix& m,
                                      double sym_tol = 1e-12);

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PowerIterationOptions {
  int min_iterations = 50;
  int max_iterations = 1000;
  double rel_tol = 1e-6;
  unsigned seed = 12345;
};

/// Largest singular value of K by power iteration on K* K.
///
/// `apply` and `apply_adjoint` must be mutually adjoint in the inner product
/// the caller measures norms in; `inner` defaults to the Euclidean product.
NormEstimate estimate_operator_norm(
    const LinearAction& apply, const LinearAction& apply_adjoint,
    std::size_t dim_in, const PowerIterationOptions& opts = {},
    const std::function<double(const Vector&, const Vector&)>& inner = {});

/// Inner product and norm with uniform quadrature weight.
inline double weighted_dot(const Vector& a, const Vector& b, double weight) {
  return weight * a.dot(b);
}
inline double weighted_norm(const Vector& a, double weight) {
  return std::sqrt(weight * a.squaredNorm());
}

}  // namespace nreg

#include "nreg/linops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace nreg {

SingularPivotError::SingularPivotError(std::size_t row, double pivot)
    : std::runtime_error("tridiagonal elimination hit a singular pivot at row " +
                         std::to_string(row) + " (pivot " +
                         std::to_string(pivot) + ")"),
      row_(row),
      pivot_(pivot) {}

AsymmetricMatrixError::AsymmetricMatrixError(double asymmetry)
    : std::invalid_argument("matrix is not symmetric (max |M - M^T| = " +
                            std::to_string(asymmetry) + ")") {}

void TridiagonalSystem::validate() const {
  const std::size_t n = main.size();
  if (n == 0) throw std::invalid_argument("tridiagonal system must have n >= 1");
  if (sub.size() != n - 1 || super.size() != n - 1)
    throw std::invalid_argument("tridiagonal off-diagonals must have length n-1");
}

Vector TridiagonalSystem::multiply(const Vector& x) const {
  validate();
  const std::size_t n = size();
  if (static_cast<std::size_t>(x.size()) != n)
    throw std::invalid_argument("tridiagonal multiply: size mismatch");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = main[i] * x[i];
    if (i > 0) v += sub[i - 1] * x[i - 1];
    if (i + 1 < n) v += super[i] * x[i + 1];
    y[i] = v;
  }
  return y;
}

DenseMatrix TridiagonalSystem::to_dense() const {
  validate();
  const auto n = static_cast<Eigen::Index>(size());
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = main[i];
    if (i > 0) a(i, i - 1) = sub[i - 1];
    if (i + 1 < n) a(i, i + 1) = super[i];
  }
  return a;
}

TridiagonalFactorization::TridiagonalFactorization(const TridiagonalSystem& sys,
                                                   double pivot_tol)
    : sub_(sys.sub), super_(sys.super) {
  sys.validate();
  const std::size_t n = sys.size();
  double scale = 0.0;
  for (double d : sys.main) scale = std::max(scale, std::abs(d));
  const double threshold = pivot_tol * std::max(scale, 1.0);

  pivots_.resize(n);
  multipliers_.assign(n > 0 ? n - 1 : 0, 0.0);
  pivots_[0] = sys.main[0];
  if (!(std::abs(pivots_[0]) > threshold)) throw SingularPivotError(0, pivots_[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const double l = sub_[i - 1] / pivots_[i - 1];
    multipliers_[i - 1] = l;
    pivots_[i] = sys.main[i] - l * super_[i - 1];
    if (!(std::abs(pivots_[i]) > threshold) || !std::isfinite(pivots_[i]))
      throw SingularPivotError(i, pivots_[i]);
  }
}

void TridiagonalFactorization::solve_in_place(std::span<double> x) const {
  const std::size_t n = pivots_.size();
  if (x.size() != n) throw std::invalid_argument("tridiagonal solve: size mismatch");
  for (std::size_t i = 1; i < n; ++i) x[i] -= multipliers_[i - 1] * x[i - 1];
  x[n - 1] /= pivots_[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (x[i] - super_[i] * x[i + 1]) / pivots_[i];
}

Vector TridiagonalFactorization::solve(const Vector& rhs) const {
  Vector x = rhs;
  solve_in_place(std::span<double>(x.data(), static_cast<std::size_t>(x.size())));
  return x;
}

Vector solve_tridiagonal(const TridiagonalSystem& sys, const Vector& rhs) {
  return TridiagonalFactorization(sys).solve(rhs);
}

DenseMatrix SymmetricEigenDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

SymmetricEigenDecomposition sym_eigen(const DenseMatrix& m, double sym_tol) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw std::invalid_argument("sym_eigen: matrix must be square and nonempty");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (asym > sym_tol * scale) throw AsymmetricMatrixError(asym);

  const DenseMatrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(sym);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("sym_eigen: eigensolver failed to converge");

  // Eigen returns ascending order.
  SymmetricEigenDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

NormEstimate estimate_operator_norm(
    const LinearAction& apply, const LinearAction& apply_adjoint,
    std::size_t dim_in, const PowerIterationOptions& opts,
    const std::function<double(const Vector&, const Vector&)>& inner) {
  auto dot = [&](const Vector& a, const Vector& b) {
    return inner ? inner(a, b) : a.dot(b);
  };
  NormEstimate est;
  if (dim_in == 0) {
    est.converged = true;
    return est;
  }

  std::mt19937_64 gen(opts.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector v(static_cast<Eigen::Index>(dim_in));
  for (auto& e : v) e = dist(gen);
  v /= std::sqrt(dot(v, v));

  double lambda = 0.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    Vector w = apply_adjoint(apply(v));
    const double rayleigh = dot(v, w);
    const double wn = std::sqrt(dot(w, w));
    est.iterations = it;
    if (wn == 0.0) {
      // v lies in the null space; a zero operator has norm zero.
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    const double change = std::abs(rayleigh - lambda) / std::max(std::abs(rayleigh), 1e-300);
    lambda = rayleigh;
    v = w / wn;
    if (it >= opts.min_iterations && change <= opts.rel_tol) {
      est.converged = true;
      break;
    }
  }
  est.value = std::sqrt(std::max(lambda, 0.0));
  return est;
}

}  // namespace nreg

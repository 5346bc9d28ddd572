#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>

#include "nreg/linops.hpp"

namespace nreg {

/// Raised when a model vector leaves the forward operator's domain.
class DomainExitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Forward map, derivative and adjoint at one point x, sharing whatever
/// factorization the problem needs.
struct Linearization {
  Vector value;  ///< F(x)
  LinearAction derivative;  ///< h -> F'(x) h
  LinearAction adjoint;     ///< w -> F'(x)* w
  std::optional<DenseMatrix> jacobian;
};

/// Nonlinear forward operator F: D(F) in X -> Y.
///
/// X and Y carry inner products <a,b> = weight * sum a_i b_i; derivative and
/// adjoint must be mutually adjoint with respect to those weights.
class InverseProblem {
 public:
  virtual ~InverseProblem() = default;

  virtual std::size_t model_dim() const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual double model_weight() const { return 1.0; }
  virtual double data_weight() const { return 1.0; }

  virtual bool in_domain(const Vector& x) const = 0;
  /// Throws DomainExitError outside the domain.
  virtual Vector evaluate(const Vector& x) const = 0;
  virtual Vector derivative_apply(const Vector& x, const Vector& h) const = 0;
  virtual Vector adjoint_apply(const Vector& x, const Vector& w) const = 0;

  virtual bool has_jacobian() const { return false; }
  virtual std::optional<DenseMatrix> jacobian_matrix(const Vector& /*x*/) const {
    return std::nullopt;
  }

  /// Default wraps the point-wise virtuals; problems with an expensive
  /// factorization override this to share it between the actions.
  virtual Linearization linearize(const Vector& x, bool with_jacobian) const;

  double model_dot(const Vector& a, const Vector& b) const { return model_weight() * a.dot(b); }
  double data_dot(const Vector& a, const Vector& b) const { return data_weight() * a.dot(b); }
  double model_norm(const Vector& a) const { return std::sqrt(model_dot(a, a)); }
  double data_norm(const Vector& a) const { return std::sqrt(data_dot(a, a)); }
};

/// F(x) = T x with the Euclidean inner products.
class LinearProblem : public InverseProblem {
 public:
  explicit LinearProblem(DenseMatrix t) : t_(std::move(t)) {}

  std::size_t model_dim() const override { return static_cast<std::size_t>(t_.cols()); }
  std::size_t data_dim() const override { return static_cast<std::size_t>(t_.rows()); }
  bool in_domain(const Vector& x) const override { return x.allFinite(); }
  Vector evaluate(const Vector& x) const override { return t_ * x; }
  Vector derivative_apply(const Vector&, const Vector& h) const override { return t_ * h; }
  Vector adjoint_apply(const Vector&, const Vector& w) const override {
    return t_.transpose() * w;
  }
  bool has_jacobian() const override { return true; }
  std::optional<DenseMatrix> jacobian_matrix(const Vector&) const override { return t_; }

  const DenseMatrix& matrix() const { return t_; }

 private:
  DenseMatrix t_;
};

}  // namespace nreg

#pragma once

#include <functional>
#include <iosfwd>
#include <string>

#include "nreg/linops.hpp"
#include "nreg/problem.hpp"

namespace nreg::bvp {

/// Values at the interior nodes t_i = i h, i = 1..m.
using GridFunction = Vector;

/// -u'' + c u = f on (0,1), u(0) = g0, u(1) = g1, discretized by second
/// order central differences on m interior nodes.
struct BvpSpec {
  int m = 100;
  GridFunction f;
  double g0 = 0.0;
  double g1 = 0.0;

  double h() const { return 1.0 / (m + 1); }
  void validate() const;
};

GridFunction nodes(int m);
GridFunction sample(int m, const std::function<double(double)>& fn);

/// A(c) = tridiag(-1, 2, -1)/h^2 + diag(c).
TridiagonalSystem assemble(const BvpSpec& spec, const GridFunction& c);

/// Throws DomainExitError when A(c) is numerically singular.
GridFunction forward(const BvpSpec& spec, const GridFunction& c);

/// F'(c) hdir = -A(c)^{-1} (hdir u_c), homogeneous boundary data.
GridFunction derivative_apply(const BvpSpec& spec, const GridFunction& c,
                              const GridFunction& u_c, const GridFunction& hdir);

/// F'(c)* w = -u_c A(c)^{-1} w.
GridFunction adjoint_apply(const BvpSpec& spec, const GridFunction& c,
                           const GridFunction& u_c, const GridFunction& w);

inline constexpr int kMaxJacobianSize = 512;

/// Column j is derivative_apply on the j-th unit grid function.
DenseMatrix materialize_jacobian(const BvpSpec& spec, const GridFunction& c);

/// Parameter-to-solution map c -> u(c) with h-weighted L2 inner products.
class CoefficientProblem : public InverseProblem {
 public:
  explicit CoefficientProblem(BvpSpec spec);

  const BvpSpec& spec() const { return spec_; }

  std::size_t model_dim() const override { return static_cast<std::size_t>(spec_.m); }
  std::size_t data_dim() const override { return static_cast<std::size_t>(spec_.m); }
  double model_weight() const override { return spec_.h(); }
  double data_weight() const override { return spec_.h(); }

  bool in_domain(const Vector& c) const override;
  Vector evaluate(const Vector& c) const override;
  Vector derivative_apply(const Vector& c, const Vector& hdir) const override;
  Vector adjoint_apply(const Vector& c, const Vector& w) const override;
  bool has_jacobian() const override { return spec_.m <= kMaxJacobianSize; }
  std::optional<DenseMatrix> jacobian_matrix(const Vector& c) const override;
  Linearization linearize(const Vector& c, bool with_jacobian) const override;

 private:
  BvpSpec spec_;
};

/// Coefficient-identification test case: true coefficient, initial guess and
/// the BVP data that make u(c_true) the measured state.
struct Example {
  std::string name;
  BvpSpec spec;
  GridFunction c_true;
  GridFunction c0;
};

/// f = (1+t)(1+t-0.8 sin 2 pi t), g0 = 1, g1 = 2, c_true = 1+t-0.8 sin 2 pi t,
/// c0 = 1+t; u(c_true) = 1+t.
Example example1(int m = 100);
/// Same data with c0 = 2-t.
Example example2(int m = 100);

/// "node,value" rows, node = t_i.
void write_grid_csv(std::ostream& os, const GridFunction& values);
void write_grid_csv(const std::string& path, const GridFunction& values);

}  // namespace nreg::bvp

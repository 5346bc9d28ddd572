#include "nreg/bvp.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace nreg::bvp {

namespace {

void check_grid(const BvpSpec& spec, const GridFunction& v, const char* what) {
  if (v.size() != spec.m)
    throw std::invalid_argument(std::string(what) + " must have one value per interior node");
}

TridiagonalFactorization factorize(const BvpSpec& spec, const GridFunction& c) {
  try {
    return TridiagonalFactorization(assemble(spec, c));
  } catch (const SingularPivotError& e) {
    throw DomainExitError(std::string("A(c) is numerically singular: ") + e.what());
  }
}

GridFunction solve_state(const BvpSpec& spec, const TridiagonalFactorization& a) {
  const double inv_h2 = 1.0 / (spec.h() * spec.h());
  GridFunction rhs = spec.f;
  rhs[0] += spec.g0 * inv_h2;
  rhs[spec.m - 1] += spec.g1 * inv_h2;
  return a.solve(rhs);
}

// Column j solves A v = -u_j e_j, i.e. -u_j times column j of A^{-1}.
DenseMatrix jacobian_columns(const TridiagonalFactorization& a, const GridFunction& u) {
  const auto m = u.size();
  DenseMatrix jac(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    GridFunction e = GridFunction::Zero(m);
    e[j] = -u[j];
    jac.col(j) = a.solve(e);
  }
  return jac;
}

}  // namespace

void BvpSpec::validate() const {
  if (m < 2) throw std::invalid_argument("BVP grid needs m >= 2 interior nodes");
  if (f.size() != m) throw std::invalid_argument("BVP source f must have length m");
  if (!f.allFinite() || !std::isfinite(g0) || !std::isfinite(g1))
    throw std::invalid_argument("BVP data must be finite");
}

GridFunction nodes(int m) {
  GridFunction t(m);
  const double h = 1.0 / (m + 1);
  for (int i = 0; i < m; ++i) t[i] = (i + 1) * h;
  return t;
}

GridFunction sample(int m, const std::function<double(double)>& fn) {
  GridFunction t = nodes(m);
  for (auto& v : t) v = fn(v);
  return t;
}

TridiagonalSystem assemble(const BvpSpec& spec, const GridFunction& c) {
  spec.validate();
  check_grid(spec, c, "coefficient c");
  const auto m = static_cast<std::size_t>(spec.m);
  const double inv_h2 = 1.0 / (spec.h() * spec.h());
  TridiagonalSystem sys;
  sys.sub.assign(m - 1, -inv_h2);
  sys.super.assign(m - 1, -inv_h2);
  sys.main.resize(m);
  for (std::size_t i = 0; i < m; ++i) sys.main[i] = 2.0 * inv_h2 + c[static_cast<Eigen::Index>(i)];
  return sys;
}

GridFunction forward(const BvpSpec& spec, const GridFunction& c) {
  if (!c.allFinite()) throw DomainExitError("coefficient has non-finite entries");
  return solve_state(spec, factorize(spec, c));
}

GridFunction derivative_apply(const BvpSpec& spec, const GridFunction& c,
                              const GridFunction& u_c, const GridFunction& hdir) {
  check_grid(spec, u_c, "state u(c)");
  check_grid(spec, hdir, "direction");
  return factorize(spec, c).solve(-hdir.cwiseProduct(u_c));
}

GridFunction adjoint_apply(const BvpSpec& spec, const GridFunction& c,
                           const GridFunction& u_c, const GridFunction& w) {
  check_grid(spec, u_c, "state u(c)");
  check_grid(spec, w, "adjoint argument");
  return -u_c.cwiseProduct(factorize(spec, c).solve(w));
}

DenseMatrix materialize_jacobian(const BvpSpec& spec, const GridFunction& c) {
  if (spec.m > kMaxJacobianSize)
    throw std::length_error("Jacobian materialization is capped at m = " +
                            std::to_string(kMaxJacobianSize));
  const TridiagonalFactorization a = factorize(spec, c);
  return jacobian_columns(a, solve_state(spec, a));
}

CoefficientProblem::CoefficientProblem(BvpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

bool CoefficientProblem::in_domain(const Vector& c) const {
  if (c.size() != spec_.m || !c.allFinite()) return false;
  try {
    factorize(spec_, c);
    return true;
  } catch (const DomainExitError&) {
    return false;
  }
}

Vector CoefficientProblem::evaluate(const Vector& c) const { return forward(spec_, c); }

Vector CoefficientProblem::derivative_apply(const Vector& c, const Vector& hdir) const {
  return bvp::derivative_apply(spec_, c, forward(spec_, c), hdir);
}

Vector CoefficientProblem::adjoint_apply(const Vector& c, const Vector& w) const {
  return bvp::adjoint_apply(spec_, c, forward(spec_, c), w);
}

std::optional<DenseMatrix> CoefficientProblem::jacobian_matrix(const Vector& c) const {
  if (!has_jacobian()) return std::nullopt;
  return materialize_jacobian(spec_, c);
}

Linearization CoefficientProblem::linearize(const Vector& c, bool with_jacobian) const {
  if (!c.allFinite()) throw DomainExitError("coefficient has non-finite entries");
  auto a = std::make_shared<const TridiagonalFactorization>(factorize(spec_, c));
  auto u = std::make_shared<const GridFunction>(solve_state(spec_, *a));

  Linearization lin;
  lin.value = *u;
  lin.derivative = [a, u](const Vector& hdir) -> Vector { return a->solve(-hdir.cwiseProduct(*u)); };
  lin.adjoint = [a, u](const Vector& w) -> Vector { return -u->cwiseProduct(a->solve(w)); };
  if (with_jacobian && has_jacobian()) lin.jacobian = jacobian_columns(*a, *u);
  return lin;
}

namespace {

Example make_example(const char* name, int m, double (*initial)(double)) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Example ex;
  ex.name = name;
  ex.spec.m = m;
  ex.spec.g0 = 1.0;
  ex.spec.g1 = 2.0;
  ex.spec.f = sample(m, [&](double t) { return (1 + t) * (1 + t - 0.8 * std::sin(two_pi * t)); });
  ex.c_true = sample(m, [&](double t) { return 1 + t - 0.8 * std::sin(two_pi * t); });
  ex.c0 = sample(m, initial);
  return ex;
}

}  // namespace

Example example1(int m) {
  return make_example("example1", m, [](double t) { return 1.0 + t; });
}

Example example2(int m) {
  return make_example("example2", m, [](double t) { return 2.0 - t; });
}

void write_grid_csv(std::ostream& os, const GridFunction& values) {
  const int m = static_cast<int>(values.size());
  const GridFunction t = nodes(m);
  os.precision(17);
  os << "node,value\n";
  for (int i = 0; i < m; ++i) os << t[i] << ',' << values[i] << '\n';
}

void write_grid_csv(const std::string& path, const GridFunction& values) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_grid_csv(out, values);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace nreg::bvp

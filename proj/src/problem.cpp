#include "nreg/problem.hpp"

namespace nreg {

Linearization InverseProblem::linearize(const Vector& x, bool with_jacobian) const {
  Linearization lin;
  lin.value = evaluate(x);
  lin.derivative = [this, x](const Vector& h) { return derivative_apply(x, h); };
  lin.adjoint = [this, x](const Vector& w) { return adjoint_apply(x, w); };
  if (with_jacobian) lin.jacobian = jacobian_matrix(x);
  return lin;
}

}  // namespace nreg

#pragma once

#include <functional>
#include <vector>

#include "hiprec/linalg.hpp"

namespace hiprec {

using VectorOp = std::function<Vector(const Vector&)>;

struct SolveReport {
  Vector x;
  /// Preconditioned relative residual; entry 0 is the initial guess (1.0) and
  /// entry i follows global iteration i across restarts.
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

/// Left-preconditioned restarted GMRES from x0 = 0. apply_p applies P^{-1}.
SolveReport gmres(const VectorOp& apply_a, const VectorOp& apply_p, const Vector& b,
                  int restart = 10, double tol = 1e-9, int maxit = 30);

}  // namespace hiprec

#include "hiprec/krylov.hpp"

#include <cmath>

#include "hiprec/error.hpp"

namespace hiprec {

namespace {

void givens(double a, double b, double& c, double& s) {
  if (b == 0.0) {
    c = 1.0;
    s = 0.0;
    return;
  }
  const double r = std::hypot(a, b);
  c = a / r;
  s = b / r;
}

}  // namespace

SolveReport gmres(const VectorOp& apply_a, const VectorOp& apply_p, const Vector& b,
                  int restart, double tol, int maxit) {
  if (restart < 1 || maxit < 0 || !(tol > 0.0)) {
    throw InvalidOption("gmres: restart >= 1, maxit >= 0 and tol > 0 are required");
  }
  const Index n = b.size();
  const Vector pb = apply_p(b);
  if (pb.size() != n) throw DimensionMismatch("gmres: preconditioner changes the length");
  const double beta0 = pb.norm();
  if (!(beta0 > 0.0)) throw ZeroRhs("gmres: preconditioned right-hand side is zero");

  SolveReport rep;
  rep.x = Vector::Zero(n);
  rep.history.push_back(1.0);
  Vector r = pb;
  double rel = 1.0;
  while (rep.iterations < maxit && rel > tol) {
    const int m = std::min(restart, maxit - rep.iterations);
    Matrix v = Matrix::Zero(n, m + 1);
    Matrix h = Matrix::Zero(m + 1, m);
    Vector cs = Vector::Zero(m), sn = Vector::Zero(m);
    Vector g = Vector::Zero(m + 1);
    const double beta = r.norm();
    g(0) = beta;
    v.col(0) = r / beta;
    int k = 0;
    bool happy = false;
    while (k < m) {
      const Vector av = apply_a(v.col(k));
      if (av.size() != n) throw DimensionMismatch("gmres: operator changes the length");
      Vector w = apply_p(av);
      for (int i = 0; i <= k; ++i) {
        h(i, k) = v.col(i).dot(w);
        w -= h(i, k) * v.col(i);
      }
      h(k + 1, k) = w.norm();
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * h(i, k) + sn(i) * h(i + 1, k);
        h(i + 1, k) = -sn(i) * h(i, k) + cs(i) * h(i + 1, k);
        h(i, k) = t;
      }
      const double hk1 = h(k + 1, k);
      givens(h(k, k), hk1, cs(k), sn(k));
      h(k, k) = cs(k) * h(k, k) + sn(k) * hk1;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      ++k;
      ++rep.iterations;
      rel = std::abs(g(k)) / beta0;
      rep.history.push_back(rel);
      happy = hk1 <= 1e-14 * beta;
      if (rel <= tol || happy) break;
      v.col(k) = w / hk1;
    }
    const Vector y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    rep.x += v.leftCols(k) * y;
    r = pb - apply_p(apply_a(rep.x));
    rel = r.norm() / beta0;
    if (happy) break;
  }
  rep.converged = rel <= tol;
  return rep;
}

}  // namespace hiprec

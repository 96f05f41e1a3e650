#include "hiprec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hiprec {

LowRankFactor::LowRankFactor(Matrix l, Matrix r) : left(std::move(l)), right(std::move(r)) {
  if (left.cols() != right.cols()) {
    throw DimensionMismatch("low-rank factor: left and right ranks differ");
  }
}

LowRankFactor LowRankFactor::zero(Index rows, Index cols) {
  return LowRankFactor(Matrix(rows, 0), Matrix(cols, 0));
}

Matrix LowRankFactor::apply(const Matrix& x) const {
  if (x.rows() != cols()) throw DimensionMismatch("low-rank apply");
  if (rank() == 0) return Matrix::Zero(rows(), x.cols());
  return left * (right.transpose() * x);
}

Matrix LowRankFactor::apply_adjoint(const Matrix& y) const {
  if (y.rows() != rows()) throw DimensionMismatch("low-rank adjoint apply");
  if (rank() == 0) return Matrix::Zero(cols(), y.cols());
  return right * (left.transpose() * y);
}

Matrix LowRankFactor::dense() const {
  if (rank() == 0) return Matrix::Zero(rows(), cols());
  return left * right.transpose();
}

std::size_t LowRankFactor::stored_reals() const {
  return static_cast<std::size_t>(left.size() + right.size());
}

// ---------------------------------------------------------------------------

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x68697072u};
  engine_.seed(seq);
}

double RngStream::uniform_open() {
  // 53 random bits mapped to (0, 1].
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix gaussian_sample(RngStream& rng, Index m, Index n) {
  Matrix out(m, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) out(i, j) = rng.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------

LuFactorization::LuFactorization(const Matrix& a) : n_(a.rows()) {
  if (a.rows() != a.cols()) throw DimensionMismatch("lu_factor: matrix is not square");
  if (n_ == 0) return;
  lu_.compute(a);
  const double norm_inf = a.cwiseAbs().rowwise().sum().maxCoeff();
  const double threshold = std::numeric_limits<double>::epsilon() * norm_inf;
  const auto& diag = lu_.matrixLU().diagonal();
  for (Index i = 0; i < n_; ++i) {
    if (!(std::abs(diag(i)) > threshold)) {
      throw SingularMatrix("lu_factor: pivot " + std::to_string(i) + " is numerically zero");
    }
  }
}

Matrix LuFactorization::solve(const Matrix& b) const {
  if (b.rows() != n_) throw DimensionMismatch("lu solve: rhs size");
  if (n_ == 0) return Matrix(0, b.cols());
  return lu_.solve(b);
}

Matrix LuFactorization::solve_transpose(const Matrix& b) const {
  if (b.rows() != n_) throw DimensionMismatch("lu solve: rhs size");
  if (n_ == 0) return Matrix(0, b.cols());
  return lu_.transpose().solve(b);
}

LuFactorization lu_factor(const Matrix& a) { return LuFactorization(a); }

Vector lu_solve(const LuFactorization& f, const Vector& b) { return f.solve(b); }

// ---------------------------------------------------------------------------

PivotedQr pivoted_qr(const Matrix& a_in, double abs_tol, Index kmax) {
  Matrix a = a_in;
  const Index m = a.rows();
  const Index n = a.cols();
  const Index steps = std::min({m, n, std::max<Index>(kmax, 0)});
  PivotedQr out;
  out.perm.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) out.perm[static_cast<std::size_t>(j)] = j;

  Vector norms2(n);
  double first_max = 0.0;
  Index k = 0;
  for (;; ++k) {
    double tail2 = 0.0;
    for (Index j = k; j < n; ++j) {
      norms2(j) = (k < m) ? a.col(j).tail(m - k).squaredNorm() : 0.0;
      tail2 += norms2(j);
    }
    out.residual = std::sqrt(tail2);
    if (k >= steps || out.residual <= abs_tol) break;
    Index p = k;
    for (Index j = k + 1; j < n; ++j) {
      if (norms2(j) > norms2(p) ||
          (norms2(j) == norms2(p) && out.perm[static_cast<std::size_t>(j)] <
                                         out.perm[static_cast<std::size_t>(p)])) {
        p = j;
      }
    }
    const double pivot_norm = std::sqrt(norms2(p));
    if (k == 0) first_max = pivot_norm;
    if (pivot_norm <= 64.0 * std::numeric_limits<double>::epsilon() * first_max ||
        pivot_norm == 0.0) {
      break;
    }
    if (p != k) {
      a.col(k).swap(a.col(p));
      std::swap(out.perm[static_cast<std::size_t>(k)], out.perm[static_cast<std::size_t>(p)]);
    }
    double tau = 0.0;
    double beta = 0.0;
    Vector essential(m - k - 1);
    auto col = a.col(k).tail(m - k);
    col.makeHouseholder(essential, tau, beta);
    if (k + 1 < n) {
      Vector work(n - k - 1);
      a.bottomRightCorner(m - k, n - k - 1).applyHouseholderOnTheLeft(essential, tau, work.data());
    }
    a(k, k) = beta;
    a.col(k).tail(m - k - 1).setZero();
  }
  out.rank = k;
  out.r = a.topRows(k);
  for (Index j = 0; j < k; ++j) out.r.col(j).tail(k - j - 1).setZero();
  return out;
}

InterpolativeDecomposition row_id_absolute(const Matrix& m, double abs_tol, Index kmax) {
  // Column ID of m^T: m^T P = Q [R11 R12], rows J = P(:, :k).
  const Index rows = m.rows();
  InterpolativeDecomposition out;
  if (rows == 0) {
    out.interp = Matrix(0, 0);
    return out;
  }
  PivotedQr qr = pivoted_qr(m.transpose(), abs_tol, kmax);
  const Index k = qr.rank;
  out.residual = qr.residual;
  out.skeleton.assign(qr.perm.begin(), qr.perm.begin() + k);
  Matrix x;  // k x (rows - k)
  if (k > 0) {
    x = qr.r.leftCols(k).triangularView<Eigen::Upper>().solve(qr.r.rightCols(rows - k));
  } else {
    x = Matrix(0, rows - k);
  }
  out.interp = Matrix::Zero(rows, k);
  for (Index j = 0; j < k; ++j) out.interp(qr.perm[static_cast<std::size_t>(j)], j) = 1.0;
  for (Index j = k; j < rows; ++j) {
    out.interp.row(qr.perm[static_cast<std::size_t>(j)]) = x.col(j - k).transpose();
  }
  return out;
}

InterpolativeDecomposition interpolative_decomposition(const Matrix& m, double tol,
                                                       Index kmax) {
  if (tol < 0.0) throw InvalidOption("interpolative_decomposition: negative tolerance");
  return row_id_absolute(m, tol * std::max(1.0, m.norm()), kmax);
}

Index tail_rank(const Vector& s, double tol) {
  const Index n = s.size();
  double tail2 = 0.0;
  const double tol2 = tol * tol;
  Index k = n;
  while (k > 0 && tail2 + s(k - 1) * s(k - 1) <= tol2) {
    tail2 += s(k - 1) * s(k - 1);
    --k;
  }
  return k;
}

Matrix orthonormal_basis(const Matrix& y) {
  const Index m = y.rows();
  const Index k = std::min(m, y.cols());
  if (k == 0) return Matrix(m, 0);
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(m, k);
}

namespace {

LowRankFactor svd_truncate(const Matrix& m, double abs_tol) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Index k = tail_rank(s, abs_tol);
  return LowRankFactor(svd.matrixU().leftCols(k) * s.head(k).asDiagonal(),
                       svd.matrixV().leftCols(k));
}

}  // namespace

LowRankFactor truncated_svd(const Matrix& m, double abs_tol) {
  if (m.rows() == 0 || m.cols() == 0) return LowRankFactor::zero(m.rows(), m.cols());
  if (std::min(m.rows(), m.cols()) <= 32) return svd_truncate(m, abs_tol);
  // Rank-revealing QR first; the SVD then only acts on the retained rows.
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  const Index kmax = std::min(m.rows(), m.cols());
  const Matrix& f = qr.matrixQR();
  Vector tail(kmax + 1);
  tail(kmax) = 0.0;
  for (Index i = kmax - 1; i >= 0; --i) {
    tail(i) = tail(i + 1) + f.row(i).tail(m.cols() - i).squaredNorm();
  }
  const double qr_tol = 0.5 * abs_tol;
  Index k = 0;
  while (k < kmax && tail(k) > qr_tol * qr_tol) ++k;
  if (k == 0) return LowRankFactor::zero(m.rows(), m.cols());
  Matrix r = f.topRows(k).triangularView<Eigen::Upper>();
  r = r * qr.colsPermutation().transpose();
  const Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  const double rest = std::sqrt(std::max(0.0, abs_tol * abs_tol - tail(k)));
  // r^T = q2 t, so m ~ q t^T q2^T with a k x k core.
  Eigen::HouseholderQR<Matrix> qr2(r.transpose());
  const Matrix t = qr2.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Matrix q2 = qr2.householderQ() * Matrix::Identity(m.cols(), k);
  const LowRankFactor core = svd_truncate(t.transpose(), rest);
  return LowRankFactor(q * core.left, q2 * core.right);
}

LowRankFactor randomized_low_rank(const BlockOp& apply, const BlockOp& apply_adjoint,
                                  Index rows, Index cols, double tol, Index k0, Index step,
                                  RngStream& rng) {
  const Index full = std::min(rows, cols);
  if (full == 0) return LowRankFactor::zero(rows, cols);
  step = std::max<Index>(step, 1);
  if (full <= 2 * (std::max<Index>(k0, 1) + step)) {
    const Matrix m = rows <= cols ? Matrix(apply_adjoint(Matrix::Identity(rows, rows)).transpose())
                                  : apply(Matrix::Identity(cols, cols));
    return truncated_svd(m, tol);
  }
  const double part = tol / std::sqrt(2.0);
  Index s = std::min(std::max<Index>(k0, 1), full);
  Matrix y = apply(gaussian_sample(rng, cols, s));
  Matrix q = orthonormal_basis(y);
  while (q.cols() < full) {
    Matrix probe = apply(gaussian_sample(rng, cols, step));
    Matrix resid = probe - q * (q.transpose() * probe);
    if (resid.squaredNorm() / static_cast<double>(step) <= part * part) break;
    Matrix grown(rows, y.cols() + step);
    grown << y, probe;
    y = std::move(grown);
    q = orthonormal_basis(y);
  }
  Matrix bt = apply_adjoint(q);  // cols x q
  LowRankFactor core = truncated_svd(bt.transpose(), part);
  return LowRankFactor(q * core.left, core.right);
}

}  // namespace hiprec

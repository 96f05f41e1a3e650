#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "hiprec/error.hpp"

namespace hiprec {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<Index>;

/// Block operator acting on the columns of its argument.
using BlockOp = std::function<Matrix(const Matrix&)>;

/// Rank-k factorization M = left * right^T.
struct LowRankFactor {
  Matrix left;   // rows x k
  Matrix right;  // cols x k

  LowRankFactor() = default;
  LowRankFactor(Matrix l, Matrix r);
  static LowRankFactor zero(Index rows, Index cols);

  Index rows() const { return left.rows(); }
  Index cols() const { return right.rows(); }
  Index rank() const { return left.cols(); }

  Matrix apply(const Matrix& x) const;          // M x
  Matrix apply_adjoint(const Matrix& y) const;  // M^T y
  Matrix dense() const;
  std::size_t stored_reals() const;
};

/// Deterministic Gaussian stream keyed by (seed, stream).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);
  double normal();
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  double uniform_open();
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// m x n matrix of standard normals, filled column by column.
Matrix gaussian_sample(RngStream& rng, Index m, Index n);

/// Partial-pivoting LU of a square matrix.
class LuFactorization {
 public:
  LuFactorization() = default;
  explicit LuFactorization(const Matrix& a);

  Index size() const { return n_; }
  Matrix solve(const Matrix& b) const;
  Matrix solve_transpose(const Matrix& b) const;
  std::size_t stored_reals() const { return static_cast<std::size_t>(n_ * n_); }

 private:
  Index n_ = 0;
  Eigen::PartialPivLU<Matrix> lu_;
};

/// Throws SingularMatrix when a pivot is below eps_mach * ||A||_inf.
LuFactorization lu_factor(const Matrix& a);
Vector lu_solve(const LuFactorization& f, const Vector& b);

struct InterpolativeDecomposition {
  IndexList skeleton;  // selected rows J
  Matrix interp;       // U with M ~ U * M(J, :) and U(J, :) = I
  double residual = 0.0;  // ||M - U M(J, :)||_F
};

/// Row ID with ||M - U M(J,:)||_F <= tol * max(1, ||M||_F), rank <= kmax.
InterpolativeDecomposition interpolative_decomposition(const Matrix& m, double tol,
                                                       Index kmax);

/// Row ID with an absolute Frobenius tolerance.
InterpolativeDecomposition row_id_absolute(const Matrix& m, double abs_tol,
                                           Index kmax);

struct PivotedQr {
  Matrix r;        // k x n upper trapezoidal, columns in pivot order
  IndexList perm;  // perm[j] = original column placed at position j
  Index rank = 0;
  double residual = 0.0;  // Frobenius norm of the untouched trailing block
};

/// Householder QR with column pivoting, stopped once the trailing block falls
/// below abs_tol or kmax steps are taken. Ties pick the lowest column index.
PivotedQr pivoted_qr(const Matrix& a, double abs_tol, Index kmax);

/// Smallest k with sqrt(sum_{j>=k} s_j^2) <= tol.
Index tail_rank(const Vector& singular_values, double tol);

/// Orthonormal basis of the columns of y (thin Householder QR).
Matrix orthonormal_basis(const Matrix& y);

/// Adaptive randomized range finder. Returns M ~ left * right^T with
/// ||M - left right^T||_F <= tol (estimated), truncated by SVD.
LowRankFactor randomized_low_rank(const BlockOp& apply, const BlockOp& apply_adjoint,
                                  Index rows, Index cols, double tol, Index k0, Index step,
                                  RngStream& rng);

/// Truncated SVD of an explicit matrix.
LowRankFactor truncated_svd(const Matrix& m, double abs_tol);

}  // namespace hiprec

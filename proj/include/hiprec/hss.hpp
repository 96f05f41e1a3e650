#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hiprec/cluster.hpp"
#include "hiprec/linalg.hpp"
#include "hiprec/sparse.hpp"

namespace hiprec {

/// Generators of one node. Leaves hold D and explicit bases U, V; inner nodes
/// hold transfer matrices U, V (stacked over the children) and the sibling
/// couplings B12 = (left rows, right cols), B21 = (right rows, left cols).
/// The root keeps U and V with zero columns.
struct HssNode {
  Matrix D;
  Matrix U;
  Matrix V;
  Matrix B12;
  Matrix B21;
};

class HssMatrix {
 public:
  HssMatrix() = default;
  /// Zero-initialised generators with rank 0 everywhere.
  HssMatrix(ClusterTree rows, ClusterTree cols);

  const ClusterTree& row_tree() const { return rows_; }
  const ClusterTree& col_tree() const { return cols_; }
  Index rows() const { return rows_.size(); }
  Index cols() const { return cols_.size(); }
  int num_nodes() const { return rows_.num_nodes(); }
  int root() const { return rows_.root(); }

  HssNode& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const HssNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Index row_rank(int id) const { return node(id).U.cols(); }
  Index col_rank(int id) const { return node(id).V.cols(); }
  /// Largest generator rank over all nodes.
  Index max_rank() const;
  std::size_t stored_reals() const;

  Matrix apply(const Matrix& x) const;
  Matrix apply_adjoint(const Matrix& y) const;
  Vector matvec(const Vector& x) const { return apply(x); }
  Vector matvec_adjoint(const Vector& y) const { return apply_adjoint(y); }

  double entry(Index i, Index j) const;
  Matrix extract(const IndexList& rows, const IndexList& cols) const;
  Matrix to_dense() const;
  HssMatrix transpose() const;
  double frobenius_norm() const;

  /// Generator dimension violations; empty when consistent.
  std::vector<std::string> check() const;

 private:
  ClusterTree rows_;
  ClusterTree cols_;
  std::vector<HssNode> nodes_;
};

/// Matrix accessed through products and entry extraction.
struct MatrixOracle {
  Index rows = 0;
  Index cols = 0;
  BlockOp apply;
  BlockOp apply_adjoint;
  std::function<Matrix(const IndexList&, const IndexList&)> extract;

  double entry(Index i, Index j) const { return extract({i}, {j})(0, 0); }
};

MatrixOracle dense_oracle(const Matrix& a);
MatrixOracle sparse_oracle(const SparseMatrix& a);
MatrixOracle hss_oracle(const HssMatrix& h);

enum class ToleranceMode { absolute, relative };

struct CompressOptions {
  Index k0 = 32;
  Index r = 10;
  double eps = 1e-6;
  ToleranceMode mode = ToleranceMode::absolute;
  /// Convert densely instead of throwing RankSaturated.
  bool dense_fallback = true;
};

struct CompressReport {
  Index final_k = 0;
  int rounds = 0;
  bool saturated = false;
  double error_estimate = 0.0;
};

/// Adaptive randomized two-sided compression; sample streams come from rng.
HssMatrix compress_randomized(const MatrixOracle& a, const ClusterTree& rows,
                              const ClusterTree& cols, const CompressOptions& opts,
                              RngStream& rng, CompressReport* report = nullptr);

/// Deterministic compression of an explicit matrix.
HssMatrix compress_dense(const Matrix& a, const ClusterTree& rows, const ClusterTree& cols,
                         double eps, ToleranceMode mode = ToleranceMode::relative);

/// Exact representation built from the sparsity pattern; skeletons are the
/// rows and columns with entries outside their cluster. Throws
/// NotCompressible when a skeleton exceeds the tree block size.
HssMatrix compress_sparse_connectivity(const SparseMatrix& a, const ClusterTree& rows,
                                       const ClusterTree& cols);

/// ULV-type factorization for square HSS matrices.
class UlvFactorization {
 public:
  UlvFactorization() = default;
  explicit UlvFactorization(const HssMatrix& h);

  Index size() const { return n_; }
  Matrix solve(const Matrix& b) const;
  std::size_t stored_reals() const;

 private:
  struct NodeData {
    Index n = 0;       // active unknowns entering the node
    Index e = 0;       // unknowns eliminated at the node
    Matrix omega;      // n x n row transform
    Matrix w;          // n x n column transform
    Matrix l;          // e x e lower triangular
    Matrix d21;        // (n-e) x e
    Matrix v1t;        // e x c, transpose of eliminated part of V
    Matrix ured;       // reduced row basis (n-e) x r
    Matrix vred;       // reduced col basis (n-e) x c
  };
  Index n_ = 0;
  HssMatrix h_;  // transfer/couplings reused in the solve
  std::vector<NodeData> data_;
  LuFactorization root_lu_;
};

UlvFactorization ulv_factor(const HssMatrix& h);
Matrix ulv_solve(const UlvFactorization& f, const Matrix& b);

/// Exact sums and products followed by recompression to eps (absolute, or
/// relative to the operand norms).
HssMatrix add(const HssMatrix& a, const HssMatrix& b, double eps,
              ToleranceMode mode = ToleranceMode::relative);
HssMatrix subtract(const HssMatrix& a, const HssMatrix& b, double eps,
                   ToleranceMode mode = ToleranceMode::relative);
HssMatrix multiply(const HssMatrix& a, const HssMatrix& b, double eps,
                   ToleranceMode mode = ToleranceMode::relative);
/// A^{-1} B with ||A X - B||_F <= eps ||B||_F in relative mode.
HssMatrix ldivide(const HssMatrix& a, const HssMatrix& b, double eps,
                  ToleranceMode mode = ToleranceMode::relative);

HssMatrix add_exact(const HssMatrix& a, const HssMatrix& b, double beta = 1.0);
HssMatrix multiply_exact(const HssMatrix& a, const HssMatrix& b);
/// Telescoping inverse of a square HSS matrix.
HssMatrix inverse(const HssMatrix& a);
/// Orthonormalise bases, then truncate each block row and column to abs_tol.
HssMatrix recompress(const HssMatrix& h, double abs_tol, bool equal_ranks = false);
/// Pad row and column ranks to be equal at every node without changing the matrix.
HssMatrix equalize_ranks(const HssMatrix& h);

struct TopSplit {
  HssMatrix h11;
  HssMatrix h22;
  LowRankFactor h12;
  LowRankFactor h21;
};

/// Throws NoTopSplit when the root is a leaf.
TopSplit split_top(const HssMatrix& h);

/// Structural dump for debugging.
std::string to_json(const HssMatrix& h);

}  // namespace hiprec

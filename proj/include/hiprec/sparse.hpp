#pragma once

#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "hiprec/linalg.hpp"

namespace hiprec {

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Compressed sparse row matrix with sorted column indices.
class SparseMatrix {
 public:
  SparseMatrix() : SparseMatrix(0, 0) {}
  SparseMatrix(Index rows, Index cols);

  /// Duplicates are summed; explicit zeros after summation are dropped.
  static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> triplets);
  static SparseMatrix from_dense(const Matrix& a, double drop_tol = 0.0);
  static SparseMatrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }

  const std::vector<Index>& row_ptr() const { return row_ptr_; }
  const std::vector<Index>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  double entry(Index i, Index j) const;
  SparseMatrix submatrix(const IndexList& rows, const IndexList& cols) const;

  Vector matvec(const Vector& x) const;
  Vector matvec_adjoint(const Vector& y) const;
  Matrix apply(const Matrix& x) const;
  Matrix apply_adjoint(const Matrix& y) const;
  /// Dense block A(rows, cols).
  Matrix extract(const IndexList& rows, const IndexList& cols) const;

  Matrix to_dense() const;
  SparseMatrix transpose() const;
  /// B(i, j) = A(perm[i], perm[j]).
  SparseMatrix permuted(const IndexList& perm) const;
  double frobenius_norm() const;

  /// Column-oriented view, built on first use.
  struct ColumnIndex {
    std::vector<Index> col_ptr;
    std::vector<Index> row_idx;
    std::vector<double> values;
  };
  const ColumnIndex& column_index() const;

 private:
  struct TransposeCache {
    std::once_flag once;
    ColumnIndex index;
  };

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<double> values_;
  mutable std::shared_ptr<TransposeCache> cache_;
};

bool operator==(const SparseMatrix& a, const SparseMatrix& b);

/// Matrix Market coordinate real general|symmetric.
SparseMatrix read_matrix_market(std::istream& in);
SparseMatrix read_matrix_market(const std::string& path);
void write_matrix_market(std::ostream& out, const SparseMatrix& a);
void write_matrix_market(const std::string& path, const SparseMatrix& a);

}  // namespace hiprec

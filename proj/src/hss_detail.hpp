#pragma once

#include <vector>

#include "hiprec/hss.hpp"

namespace hiprec::detail {

inline IndexList range_list(Index lo, Index hi) {
  IndexList out(static_cast<std::size_t>(hi - lo));
  for (Index i = lo; i < hi; ++i) out[static_cast<std::size_t>(i - lo)] = i;
  return out;
}

inline Matrix block_diag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), std::max(a.cols(), b.cols()));
  if (a.cols() != b.cols()) throw DimensionMismatch("vstack: column counts differ");
  out << a, b;
  return out;
}

inline Matrix hstack(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("hstack: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

/// Explicit row basis of node id over its row range.
Matrix big_row_basis(const HssMatrix& h, int id);
Matrix big_col_basis(const HssMatrix& h, int id);

/// Original ids of the subtree rooted at id, in the order ClusterTree::subtree uses.
std::vector<int> subtree_order(const ClusterTree& t, int id);

/// Copy of the subtree rooted at id as a standalone HSS matrix.
HssMatrix extract_subtree(const HssMatrix& h, int id);

}  // namespace hiprec::detail

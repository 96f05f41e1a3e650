#include "hiprec/sparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace hiprec {

namespace {

void check_index(Index i, Index n, const char* what) {
  if (i < 0 || i >= n) {
    throw IndexOutOfRange(std::string(what) + " index " + std::to_string(i) +
                          " outside [0," + std::to_string(n) + ")");
  }
}

}  // namespace

SparseMatrix::SparseMatrix(Index rows, Index cols)
    : rows_(rows),
      cols_(cols),
      row_ptr_(static_cast<std::size_t>(rows) + 1, 0),
      cache_(std::make_shared<TransposeCache>()) {
  if (rows < 0 || cols < 0) throw DimensionMismatch("sparse: negative dimension");
}

SparseMatrix SparseMatrix::from_triplets(Index rows, Index cols, std::vector<Triplet> t) {
  SparseMatrix a(rows, cols);
  for (const auto& e : t) {
    check_index(e.row, rows, "row");
    check_index(e.col, cols, "column");
  }
  std::sort(t.begin(), t.end(), [](const Triplet& x, const Triplet& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  });
  a.col_idx_.reserve(t.size());
  a.values_.reserve(t.size());
  std::vector<Index> counts(static_cast<std::size_t>(rows), 0);
  for (std::size_t k = 0; k < t.size();) {
    std::size_t e = k;
    double sum = 0.0;
    while (e < t.size() && t[e].row == t[k].row && t[e].col == t[k].col) sum += t[e++].value;
    if (sum != 0.0) {
      a.col_idx_.push_back(t[k].col);
      a.values_.push_back(sum);
      ++counts[static_cast<std::size_t>(t[k].row)];
    }
    k = e;
  }
  for (Index i = 0; i < rows; ++i) {
    a.row_ptr_[static_cast<std::size_t>(i) + 1] =
        a.row_ptr_[static_cast<std::size_t>(i)] + counts[static_cast<std::size_t>(i)];
  }
  return a;
}

SparseMatrix SparseMatrix::from_dense(const Matrix& d, double drop_tol) {
  std::vector<Triplet> t;
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index j = 0; j < d.cols(); ++j) {
      if (std::abs(d(i, j)) > drop_tol) t.push_back({i, j, d(i, j)});
    }
  }
  return from_triplets(d.rows(), d.cols(), std::move(t));
}

SparseMatrix SparseMatrix::identity(Index n) {
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

double SparseMatrix::entry(Index i, Index j) const {
  check_index(i, rows_, "row");
  check_index(j, cols_, "column");
  const auto begin = col_idx_.begin() + row_ptr_[static_cast<std::size_t>(i)];
  const auto end = col_idx_.begin() + row_ptr_[static_cast<std::size_t>(i) + 1];
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

SparseMatrix SparseMatrix::submatrix(const IndexList& rows, const IndexList& cols) const {
  // (global column, position in `cols`) sorted by column; columns may repeat.
  std::vector<std::pair<Index, Index>> lookup(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    check_index(cols[k], cols_, "column");
    lookup[k] = {cols[k], static_cast<Index>(k)};
  }
  std::sort(lookup.begin(), lookup.end());
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index i = rows[r];
    check_index(i, rows_, "row");
    for (Index p = row_ptr_[static_cast<std::size_t>(i)];
         p < row_ptr_[static_cast<std::size_t>(i) + 1]; ++p) {
      const Index j = col_idx_[static_cast<std::size_t>(p)];
      auto it = std::lower_bound(lookup.begin(), lookup.end(), std::pair<Index, Index>{j, -1});
      for (; it != lookup.end() && it->first == j; ++it) {
        t.push_back({static_cast<Index>(r), it->second, values_[static_cast<std::size_t>(p)]});
      }
    }
  }
  return from_triplets(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()),
                       std::move(t));
}

Vector SparseMatrix::matvec(const Vector& x) const {
  if (x.size() != cols_) throw DimensionMismatch("sparse matvec: vector length");
  Vector y = Vector::Zero(rows_);
  for (Index i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (Index p = row_ptr_[static_cast<std::size_t>(i)];
         p < row_ptr_[static_cast<std::size_t>(i) + 1]; ++p) {
      s += values_[static_cast<std::size_t>(p)] * x(col_idx_[static_cast<std::size_t>(p)]);
    }
    y(i) = s;
  }
  return y;
}

Vector SparseMatrix::matvec_adjoint(const Vector& y) const {
  if (y.size() != rows_) throw DimensionMismatch("sparse adjoint matvec: vector length");
  const ColumnIndex& c = column_index();
  Vector x = Vector::Zero(cols_);
  for (Index j = 0; j < cols_; ++j) {
    double s = 0.0;
    for (Index p = c.col_ptr[static_cast<std::size_t>(j)];
         p < c.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      s += c.values[static_cast<std::size_t>(p)] * y(c.row_idx[static_cast<std::size_t>(p)]);
    }
    x(j) = s;
  }
  return x;
}

Matrix SparseMatrix::apply(const Matrix& x) const {
  if (x.rows() != cols_) throw DimensionMismatch("sparse apply: block rows");
  Matrix y = Matrix::Zero(rows_, x.cols());
  for (Index i = 0; i < rows_; ++i) {
    for (Index p = row_ptr_[static_cast<std::size_t>(i)];
         p < row_ptr_[static_cast<std::size_t>(i) + 1]; ++p) {
      y.row(i) += values_[static_cast<std::size_t>(p)] *
                  x.row(col_idx_[static_cast<std::size_t>(p)]);
    }
  }
  return y;
}

Matrix SparseMatrix::apply_adjoint(const Matrix& y) const {
  if (y.rows() != rows_) throw DimensionMismatch("sparse adjoint apply: block rows");
  Matrix x = Matrix::Zero(cols_, y.cols());
  for (Index i = 0; i < rows_; ++i) {
    for (Index p = row_ptr_[static_cast<std::size_t>(i)];
         p < row_ptr_[static_cast<std::size_t>(i) + 1]; ++p) {
      x.row(col_idx_[static_cast<std::size_t>(p)]) +=
          values_[static_cast<std::size_t>(p)] * y.row(i);
    }
  }
  return x;
}

Matrix SparseMatrix::extract(const IndexList& rows, const IndexList& cols) const {
  return submatrix(rows, cols).to_dense();
}

Matrix SparseMatrix::to_dense() const {
  Matrix d = Matrix::Zero(rows_, cols_);
  for (Index i = 0; i < rows_; ++i) {
    for (Index p = row_ptr_[static_cast<std::size_t>(i)];
         p < row_ptr_[static_cast<std::size_t>(i) + 1]; ++p) {
      d(i, col_idx_[static_cast<std::size_t>(p)]) = values_[static_cast<std::size_t>(p)];
    }
  }
  return d;
}

const SparseMatrix::ColumnIndex& SparseMatrix::column_index() const {
  if (!cache_) throw Error("sparse: missing transpose cache");
  std::call_once(cache_->once, [this] {
    ColumnIndex& c = cache_->index;
    c.col_ptr.assign(static_cast<std::size_t>(cols_) + 1, 0);
    for (Index j : col_idx_) ++c.col_ptr[static_cast<std::size_t>(j) + 1];
    for (Index j = 0; j < cols_; ++j) {
      c.col_ptr[static_cast<std::size_t>(j) + 1] += c.col_ptr[static_cast<std::size_t>(j)];
    }
    c.row_idx.resize(col_idx_.size());
    c.values.resize(values_.size());
    std::vector<Index> fill(c.col_ptr.begin(), c.col_ptr.end() - 1);
    for (Index i = 0; i < rows_; ++i) {
      for (Index p = row_ptr_[static_cast<std::size_t>(i)];
           p < row_ptr_[static_cast<std::size_t>(i) + 1]; ++p) {
        const Index dst = fill[static_cast<std::size_t>(col_idx_[static_cast<std::size_t>(p)])]++;
        c.row_idx[static_cast<std::size_t>(dst)] = i;
        c.values[static_cast<std::size_t>(dst)] = values_[static_cast<std::size_t>(p)];
      }
    }
  });
  return cache_->index;
}

SparseMatrix SparseMatrix::transpose() const {
  const ColumnIndex& c = column_index();
  SparseMatrix t(cols_, rows_);
  t.row_ptr_ = c.col_ptr;
  t.col_idx_ = c.row_idx;
  t.values_ = c.values;
  return t;
}

SparseMatrix SparseMatrix::permuted(const IndexList& perm) const {
  if (rows_ != cols_ || static_cast<Index>(perm.size()) != rows_) {
    throw DimensionMismatch("sparse permute: size");
  }
  return submatrix(perm, perm);
}

double SparseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a.row_ptr() == b.row_ptr() &&
         a.col_idx() == b.col_idx() && a.values() == b.values();
}

// ---------------------------------------------------------------------------

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::int64_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty input", 1);
  ++lineno;
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", lineno);
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix" || format != "coordinate") {
    throw UnsupportedBanner("unsupported object/format: " + object + " " + format);
  }
  if (field != "real" && field != "double" && field != "integer") {
    throw UnsupportedBanner("unsupported field: " + field);
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    throw UnsupportedBanner("unsupported symmetry: " + symmetry);
  }
  const bool symmetric = symmetry == "symmetric";

  Index rows = -1, cols = -1, entries = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream size(line);
    if (!(size >> rows >> cols >> entries) || rows < 0 || cols < 0 || entries < 0) {
      throw ParseError("malformed size line", lineno);
    }
    break;
  }
  if (rows < 0) throw ParseError("missing size line", lineno + 1);
  if (symmetric && rows != cols) throw ParseError("symmetric matrix must be square", lineno);

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
  Index read = 0;
  while (read < entries && std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream entry(line);
    Index i = 0, j = 0;
    double v = 0.0;
    if (!(entry >> i >> j >> v)) throw ParseError("malformed entry", lineno);
    std::string extra;
    if (entry >> extra) throw ParseError("trailing data in entry", lineno);
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("entry index out of range", lineno);
    t.push_back({i - 1, j - 1, v});
    if (symmetric && i != j) t.push_back({j - 1, i - 1, v});
    ++read;
  }
  if (read < entries) throw ParseError("fewer entries than declared", lineno + 1);
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_matrix_market(in);
}

void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  out << std::setprecision(17);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index p = a.row_ptr()[static_cast<std::size_t>(i)];
         p < a.row_ptr()[static_cast<std::size_t>(i) + 1]; ++p) {
      out << i + 1 << ' ' << a.col_idx()[static_cast<std::size_t>(p)] + 1 << ' '
          << a.values()[static_cast<std::size_t>(p)] << '\n';
    }
  }
}

void write_matrix_market(const std::string& path, const SparseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_matrix_market(out, a);
}

}  // namespace hiprec

#include "hiprec/precond.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <unordered_map>

namespace hiprec {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

IndexList concat(const IndexList& a, const IndexList& b) {
  IndexList out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// One block of a frontal matrix in any of the supported storage forms.
class Block {
 public:
  enum class Kind { zero, dense, hss, lowrank, sparse };

  Block() = default;
  static Block zero(Index m, Index n) {
    Block b;
    b.rows_ = m;
    b.cols_ = n;
    return b;
  }
  static Block of(Matrix a) {
    Block b;
    b.kind_ = Kind::dense;
    b.rows_ = a.rows();
    b.cols_ = a.cols();
    b.dense_ = std::make_shared<Matrix>(std::move(a));
    return b;
  }
  static Block of(HssMatrix h) {
    Block b;
    b.kind_ = Kind::hss;
    b.rows_ = h.rows();
    b.cols_ = h.cols();
    b.hss_ = std::make_shared<HssMatrix>(std::move(h));
    return b;
  }
  static Block of(LowRankFactor f) {
    Block b;
    b.kind_ = Kind::lowrank;
    b.rows_ = f.rows();
    b.cols_ = f.cols();
    b.lr_ = std::make_shared<LowRankFactor>(std::move(f));
    return b;
  }
  static Block of(SparseMatrix s) {
    Block b;
    b.kind_ = Kind::sparse;
    b.rows_ = s.rows();
    b.cols_ = s.cols();
    b.sp_ = std::make_shared<SparseMatrix>(std::move(s));
    return b;
  }

  Kind kind() const { return kind_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  const HssMatrix& hss() const { return *hss_; }
  const SparseMatrix& sparse() const { return *sp_; }

  /// Structural rank bound used for the L/R rank assertion.
  Index rank_bound() const {
    switch (kind_) {
      case Kind::zero: return 0;
      case Kind::dense: return std::min(rows_, cols_);
      case Kind::hss: return std::min(rows_, cols_);
      case Kind::lowrank: return lr_->rank();
      case Kind::sparse: return sp_->nnz();
    }
    return 0;
  }

  Matrix apply(const Matrix& x) const {
    switch (kind_) {
      case Kind::zero: return Matrix::Zero(rows_, x.cols());
      case Kind::dense: return *dense_ * x;
      case Kind::hss: return hss_->apply(x);
      case Kind::lowrank: return lr_->apply(x);
      case Kind::sparse: return sp_->apply(x);
    }
    return {};
  }
  Matrix apply_adjoint(const Matrix& y) const {
    switch (kind_) {
      case Kind::zero: return Matrix::Zero(cols_, y.cols());
      case Kind::dense: return dense_->transpose() * y;
      case Kind::hss: return hss_->apply_adjoint(y);
      case Kind::lowrank: return lr_->apply_adjoint(y);
      case Kind::sparse: return sp_->apply_adjoint(y);
    }
    return {};
  }
  Matrix extract(const IndexList& r, const IndexList& c) const {
    const auto nr = static_cast<Index>(r.size()), nc = static_cast<Index>(c.size());
    switch (kind_) {
      case Kind::zero: return Matrix::Zero(nr, nc);
      case Kind::dense: return (*dense_)(r, c);
      case Kind::hss: return hss_->extract(r, c);
      case Kind::lowrank: return lr_->left(r, Eigen::all) *
                                 lr_->right(c, Eigen::all).transpose();
      case Kind::sparse: return sp_->extract(r, c);
    }
    return {};
  }
  Matrix dense() const {
    switch (kind_) {
      case Kind::zero: return Matrix::Zero(rows_, cols_);
      case Kind::dense: return *dense_;
      case Kind::hss: return hss_->to_dense();
      case Kind::lowrank: return lr_->dense();
      case Kind::sparse: return sp_->to_dense();
    }
    return {};
  }

 private:
  Kind kind_ = Kind::zero;
  Index rows_ = 0;
  Index cols_ = 0;
  std::shared_ptr<Matrix> dense_;
  std::shared_ptr<HssMatrix> hss_;
  std::shared_ptr<LowRankFactor> lr_;
  std::shared_ptr<SparseMatrix> sp_;
};

/// Frontal matrix as a 4 x 4 block object over the parts
/// (interior left, interior right, boundary left, boundary right).
/// Leaves only use parts 0 and 2.
struct Frontal {
  std::array<Index, 4> size{};
  std::array<std::array<Block, 4>, 4> blk;

  Index total(const std::vector<int>& parts) const {
    Index s = 0;
    for (int p : parts) s += size[static_cast<std::size_t>(p)];
    return s;
  }

  Matrix apply(const std::vector<int>& rp, const std::vector<int>& cp, const Matrix& x) const {
    Matrix y = Matrix::Zero(total(rp), x.cols());
    Index ro = 0;
    for (int r : rp) {
      const Index nr = size[static_cast<std::size_t>(r)];
      Index co = 0;
      for (int c : cp) {
        const Index nc = size[static_cast<std::size_t>(c)];
        const Block& b = blk[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (nr > 0 && nc > 0 && b.kind() != Block::Kind::zero) {
          y.middleRows(ro, nr) += b.apply(x.middleRows(co, nc));
        }
        co += nc;
      }
      ro += nr;
    }
    return y;
  }

  Matrix apply_adjoint(const std::vector<int>& rp, const std::vector<int>& cp,
                       const Matrix& y) const {
    Matrix x = Matrix::Zero(total(cp), y.cols());
    Index ro = 0;
    for (int r : rp) {
      const Index nr = size[static_cast<std::size_t>(r)];
      Index co = 0;
      for (int c : cp) {
        const Index nc = size[static_cast<std::size_t>(c)];
        const Block& b = blk[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (nr > 0 && nc > 0 && b.kind() != Block::Kind::zero) {
          x.middleRows(co, nc) += b.apply_adjoint(y.middleRows(ro, nr));
        }
        co += nc;
      }
      ro += nr;
    }
    return x;
  }

  /// Entries at local positions of the concatenated parts.
  Matrix extract(const std::vector<int>& rp, const std::vector<int>& cp, const IndexList& rows,
                 const IndexList& cols) const {
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    auto split = [&](const std::vector<int>& parts, const IndexList& idx) {
      std::vector<std::pair<IndexList, IndexList>> g(parts.size());  // (local idx, out pos)
      for (std::size_t k = 0; k < idx.size(); ++k) {
        Index v = idx[k];
        for (std::size_t q = 0; q < parts.size(); ++q) {
          const Index s = size[static_cast<std::size_t>(parts[q])];
          if (v < s) {
            g[q].first.push_back(v);
            g[q].second.push_back(static_cast<Index>(k));
            break;
          }
          v -= s;
        }
      }
      return g;
    };
    const auto gr = split(rp, rows);
    const auto gc = split(cp, cols);
    for (std::size_t a = 0; a < rp.size(); ++a) {
      if (gr[a].first.empty()) continue;
      for (std::size_t b = 0; b < cp.size(); ++b) {
        if (gc[b].first.empty()) continue;
        const Block& bl = blk[static_cast<std::size_t>(rp[a])][static_cast<std::size_t>(cp[b])];
        const Matrix e = bl.extract(gr[a].first, gc[b].first);
        out(gr[a].second, gc[b].second) = e;
      }
    }
    return out;
  }

  Matrix dense(const std::vector<int>& rp, const std::vector<int>& cp) const {
    Matrix out = Matrix::Zero(total(rp), total(cp));
    Index ro = 0;
    for (int r : rp) {
      const Index nr = size[static_cast<std::size_t>(r)];
      Index co = 0;
      for (int c : cp) {
        const Index nc = size[static_cast<std::size_t>(c)];
        if (nr > 0 && nc > 0) {
          out.block(ro, co, nr, nc) = blk[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].dense();
        }
        co += nc;
      }
      ro += nr;
    }
    return out;
  }
};

const std::vector<int> kI{0, 1};
const std::vector<int> kB{2, 3};

/// Inverse of [[S1, A12], [A21, S2]] through the Schur complement of S1,
/// with every dense-size block in HSS form.
struct StructuredInverse {
  Index n1 = 0;
  Index n2 = 0;
  UlvFactorization s1, s1t;
  UlvFactorization st, stt;
  SparseMatrix a12, a21;
  Index max_rank = 0;

  std::size_t stored_reals() const {
    return s1.stored_reals() + s1t.stored_reals() + st.stored_reals() + stt.stored_reals() +
           static_cast<std::size_t>(a12.nnz() + a21.nnz());
  }

  Matrix solve(const Matrix& x) const {
    if (n1 == 0 || n2 == 0) return s1.solve(x);
    Matrix x1 = s1.solve(x.topRows(n1));
    Matrix x2 = st.solve(x.bottomRows(n2) - a21.apply(x1));
    x1 -= s1.solve(a12.apply(x2));
    Matrix out(n1 + n2, x.cols());
    out << x1, x2;
    return out;
  }
  Matrix solve_transpose(const Matrix& x) const {
    if (n1 == 0 || n2 == 0) return s1t.solve(x);
    Matrix x1 = s1t.solve(x.topRows(n1));
    Matrix x2 = stt.solve(x.bottomRows(n2) - a12.apply_adjoint(x1));
    x1 -= s1t.solve(a21.apply_adjoint(x2));
    Matrix out(n1 + n2, x.cols());
    out << x1, x2;
    return out;
  }
};

/// Either a dense matrix or a low-rank factor.
struct Coupling {
  bool lowrank = false;
  Matrix dense;
  LowRankFactor lr;

  Index rank() const { return lowrank ? lr.rank() : std::min(dense.rows(), dense.cols()); }
  Matrix apply(const Matrix& x) const { return lowrank ? lr.apply(x) : Matrix(dense * x); }
  Matrix to_dense() const { return lowrank ? lr.dense() : dense; }
  std::size_t stored_reals() const {
    return lowrank ? lr.stored_reals() : static_cast<std::size_t>(dense.size());
  }
};

struct Factor {
  NodeSummary summary;
  IndexList int_idx;
  IndexList bnd_idx;
  bool dense_inverse = true;
  LuFactorization lu;
  StructuredInverse sinv;
  Coupling l, r;
  // Schur complement in the parent's order.
  IndexList s_idx;
  bool s_hss = false;
  Matrix s_dense;
  HssMatrix s_h;
  Index s_n1 = 0;

  Matrix solve(const Matrix& x) const {
    if (x.rows() == 0) return x;
    return dense_inverse ? lu.solve(x) : sinv.solve(x);
  }
  Matrix solve_transpose(const Matrix& x) const {
    if (x.rows() == 0) return x;
    return dense_inverse ? lu.solve_transpose(x) : sinv.solve_transpose(x);
  }
  std::size_t stored_reals() const {
    std::size_t s = l.stored_reals() + r.stored_reals();
    s += dense_inverse ? lu.stored_reals() : sinv.stored_reals();
    return s;
  }
};

/// The four child blocks (ii, ib, bi, bb) of a stored Schur complement.
std::array<Block, 4> schur_pieces(const Factor& f) {
  const Index n = static_cast<Index>(f.s_idx.size());
  const Index n1 = f.s_n1, n2 = n - f.s_n1;
  std::array<Block, 4> out{Block::zero(n1, n1), Block::zero(n1, n2), Block::zero(n2, n1),
                           Block::zero(n2, n2)};
  if (!f.s_hss) {
    out[0] = Block::of(Matrix(f.s_dense.topLeftCorner(n1, n1)));
    out[1] = Block::of(Matrix(f.s_dense.topRightCorner(n1, n2)));
    out[2] = Block::of(Matrix(f.s_dense.bottomLeftCorner(n2, n1)));
    out[3] = Block::of(Matrix(f.s_dense.bottomRightCorner(n2, n2)));
    return out;
  }
  if (n1 == 0) {
    out[3] = Block::of(f.s_h);
  } else if (n2 == 0) {
    out[0] = Block::of(f.s_h);
  } else {
    TopSplit t = split_top(f.s_h);
    out[0] = Block::of(std::move(t.h11));
    out[1] = Block::of(std::move(t.h12));
    out[2] = Block::of(std::move(t.h21));
    out[3] = Block::of(std::move(t.h22));
  }
  return out;
}

Matrix permute_rows(const Matrix& x, const IndexList& p) { return x(p, Eigen::all); }

}  // namespace

struct Preconditioner::Impl {
  Index n = 0;
  EliminationTree tree;
  std::vector<Factor> f;
  BuildStats stats;
};

Preconditioner::Preconditioner() : impl_(std::make_unique<Impl>()) {}
Preconditioner::~Preconditioner() = default;
Preconditioner::Preconditioner(Preconditioner&&) noexcept = default;
Preconditioner& Preconditioner::operator=(Preconditioner&&) noexcept = default;

int resolve_lhss(const BuildOptions& opts, int depth) {
  return opts.lhss_auto ? depth - opts.lhss_offset : opts.lhss;
}

namespace {

class Builder {
 public:
  Builder(const SparseMatrix& a, const EliminationTree& tree, const BuildOptions& o,
          std::vector<Factor>& f, BuildStats& st)
      : a_(a), tree_(tree), o_(o), f_(f), st_(st) {}

  void run() {
    const int nn = tree_.num_nodes();
    lhss_ = resolve_lhss(o_, tree_.depth());
    part_.resize(static_cast<std::size_t>(nn));
    for (int s = 0; s < nn; ++s) {
      if (!tree_.node(s).is_leaf()) part_[static_cast<std::size_t>(s)] = node_partition(tree_, s);
    }
    f_.resize(static_cast<std::size_t>(nn));
    for (int s = 0; s < nn; ++s) {
      const auto t0 = Clock::now();
      build_node(s);
      level_time[tree_.node(s).level] += seconds_since(t0);
    }
  }

  std::map<int, double> level_time;

  int lhss() const { return lhss_; }

 private:
  /// Parent order of the Schur complement of s: [I^p and B^s ; B^p and B^s].
  void parent_order(int s, IndexList& idx, Index& n1, Index& align) const {
    const int p = tree_.node(s).parent;
    const auto& pp = part_[static_cast<std::size_t>(p)];
    const bool left = tree_.node(p).left == s;
    const IndexList& i1 = left ? pp.interior_left : pp.interior_right;
    const IndexList& b1 = left ? pp.boundary_left : pp.boundary_right;
    idx = concat(i1, b1);
    n1 = static_cast<Index>(i1.size());
    align = static_cast<Index>(std::max(pp.interior_left.size(), pp.interior_right.size()));
  }

  ClusterTree schur_tree(Index n1, Index n2, Index align) const {
    return build_partitioned(n1, n2, o_.beta, o_.granularity, align);
  }

  Frontal assemble(int s, Factor& fs) {
    const auto& nd = tree_.node(s);
    Frontal fr;
    if (nd.is_leaf()) {
      fs.int_idx = nd.interior;
      if (nd.parent >= 0) {
        Index n1 = 0, al = 0;
        parent_order(s, fs.bnd_idx, n1, al);
      }
      fr.size = {static_cast<Index>(fs.int_idx.size()), 0, static_cast<Index>(fs.bnd_idx.size()), 0};
      const IndexList* sets[4] = {&fs.int_idx, nullptr, &fs.bnd_idx, nullptr};
      for (int r : {0, 2}) {
        for (int c : {0, 2}) {
          fr.blk[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
              Block::of(a_.submatrix(*sets[r], *sets[c]));
        }
      }
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
          auto& b = fr.blk[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
          if ((r == 1 || r == 3 || c == 1 || c == 3)) {
            b = Block::zero(fr.size[static_cast<std::size_t>(r)], fr.size[static_cast<std::size_t>(c)]);
          }
        }
      }
      return fr;
    }
    const auto& pp = part_[static_cast<std::size_t>(s)];
    fs.int_idx = concat(pp.interior_left, pp.interior_right);
    fs.bnd_idx = concat(pp.boundary_left, pp.boundary_right);
    const IndexList* sets[4] = {&pp.interior_left, &pp.interior_right, &pp.boundary_left,
                                &pp.boundary_right};
    for (int k = 0; k < 4; ++k) fr.size[static_cast<std::size_t>(k)] = static_cast<Index>(sets[k]->size());
    const Factor& fl = f_[static_cast<std::size_t>(nd.left)];
    const Factor& fr_ = f_[static_cast<std::size_t>(nd.right)];
    if (fl.s_n1 != fr.size[0] || static_cast<Index>(fl.s_idx.size()) != fr.size[0] + fr.size[2] ||
        fr_.s_n1 != fr.size[1] || static_cast<Index>(fr_.s_idx.size()) != fr.size[1] + fr.size[3]) {
      throw PartitionMismatch("factor: child Schur split disagrees with node " + std::to_string(s));
    }
    const auto sl = schur_pieces(fl);
    const auto sr = schur_pieces(fr_);
    // Left child owns parts 0 and 2, right child parts 1 and 3.
    fr.blk[0][0] = sl[0];
    fr.blk[0][2] = sl[1];
    fr.blk[2][0] = sl[2];
    fr.blk[2][2] = sl[3];
    fr.blk[1][1] = sr[0];
    fr.blk[1][3] = sr[1];
    fr.blk[3][1] = sr[2];
    fr.blk[3][3] = sr[3];
    for (int r : {0, 2}) {
      for (int c : {1, 3}) {
        fr.blk[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
            Block::of(a_.submatrix(*sets[r], *sets[c]));
        fr.blk[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] =
            Block::of(a_.submatrix(*sets[c], *sets[r]));
      }
    }
    return fr;
  }

  HssMatrix to_hss(const Block& b, const ClusterTree& rows, const ClusterTree& cols) const {
    if (b.kind() == Block::Kind::hss) return b.hss();
    return compress_dense(b.dense(), rows, cols, o_.eps_hss, o_.mode);
  }

  void structured_inverse(int s, const Frontal& fr, Factor& fs) {
    StructuredInverse& si = fs.sinv;
    si.n1 = fr.size[0];
    si.n2 = fr.size[1];
    try {
      if (si.n1 == 0 || si.n2 == 0) {
        const Block& only = si.n1 > 0 ? fr.blk[0][0] : fr.blk[1][1];
        const ClusterTree t = build_uniform(only.rows(), o_.beta, o_.granularity);
        const HssMatrix h = to_hss(only, t, t);
        si.s1 = UlvFactorization(h);
        si.s1t = UlvFactorization(h.transpose());
        si.max_rank = h.max_rank();
        return;
      }
      const HssMatrix& s1 = fr.blk[0][0].hss();
      const HssMatrix& s2 = fr.blk[1][1].hss();
      si.a12 = fr.blk[0][1].sparse();
      si.a21 = fr.blk[1][0].sparse();
      auto connect = [&](const SparseMatrix& a, const ClusterTree& r, const ClusterTree& c) {
        try {
          return compress_sparse_connectivity(a, r, c);
        } catch (const NotCompressible&) {
          return compress_dense(a.to_dense(), r, c, o_.eps_hss, o_.mode);
        }
      };
      const HssMatrix h12 = connect(si.a12, s1.row_tree(), s2.col_tree());
      const HssMatrix h21 = connect(si.a21, s2.row_tree(), s1.col_tree());
      const HssMatrix x = ldivide(s1, h12, o_.eps_hss, o_.mode);
      const HssMatrix st = subtract(s2, multiply(h21, x, o_.eps_hss, o_.mode), o_.eps_hss, o_.mode);
      si.s1 = UlvFactorization(s1);
      si.s1t = UlvFactorization(s1.transpose());
      si.st = UlvFactorization(st);
      si.stt = UlvFactorization(st.transpose());
      si.max_rank = std::max({x.max_rank(), st.max_rank(), h12.max_rank(), h21.max_rank()});
    } catch (const SingularBlock& e) {
      throw SingularInterior("factor: interior of node " + std::to_string(s) + " is singular (" +
                             e.what() + ")");
    } catch (const SingularMatrix& e) {
      throw SingularInterior("factor: interior of node " + std::to_string(s) + " is singular (" +
                             e.what() + ")");
    }
  }

  double frobenius_estimate(const BlockOp& op, Index cols, RngStream& rng) const {
    const Index k = std::min<Index>(cols, 8);
    if (k == 0) return 0.0;
    const Matrix y = op(gaussian_sample(rng, cols, k));
    return y.norm() / std::sqrt(static_cast<double>(k));
  }

  LowRankFactor sample(const BlockOp& op, const BlockOp& adj, Index rows, Index cols,
                       std::uint64_t stream) const {
    RngStream rng(o_.seed, stream);
    double tol = o_.eps_hss;
    if (o_.mode == ToleranceMode::relative) tol *= frobenius_estimate(op, cols, rng);
    return randomized_low_rank(op, adj, rows, cols, tol, o_.k0, o_.r, rng);
  }

  void build_node(int s) {
    const auto& nd = tree_.node(s);
    Factor& fs = f_[static_cast<std::size_t>(s)];
    const bool root = nd.parent < 0;
    Frontal fr = assemble(s, fs);
    if (o_.on_frontal) {
      const std::vector<int> all = {0, 1, 2, 3};
      o_.on_frontal(s, fr.dense(all, all));
    }
    const Index ni = fr.total(kI), nb = fr.total(kB);
    NodeSummary& sm = fs.summary;
    sm.level = nd.level;
    sm.interior = ni;
    sm.boundary = nb;
    sm.structured = !nd.is_leaf() && nd.level < lhss_ && ni > 0;
    const auto stream = static_cast<std::uint64_t>(s) * 4;

    if (sm.structured && !(root && ni <= o_.root_dense_limit)) {
      fs.dense_inverse = false;
      structured_inverse(s, fr, fs);
    } else if (ni > 0) {
      try {
        fs.lu = lu_factor(fr.dense(kI, kI));
      } catch (const SingularMatrix& e) {
        throw SingularInterior("factor: interior of node " + std::to_string(s) + " is singular (" +
                               e.what() + ")");
      }
    }
    if (root) {
      finish(s, fs);
      return;
    }

    if (sm.structured) {
      // Low-rank L and R through the interior inverse.
      const BlockOp r_op = [&](const Matrix& x) { return Matrix(-fs.solve(fr.apply(kI, kB, x))); };
      const BlockOp r_adj = [&](const Matrix& y) {
        return Matrix(-fr.apply_adjoint(kI, kB, fs.solve_transpose(y)));
      };
      const BlockOp l_op = [&](const Matrix& x) { return Matrix(-fr.apply(kB, kI, fs.solve(x))); };
      const BlockOp l_adj = [&](const Matrix& y) {
        return Matrix(-fs.solve_transpose(fr.apply_adjoint(kB, kI, y)));
      };
      fs.r.lowrank = true;
      fs.r.lr = sample(r_op, r_adj, ni, nb, stream + 1);
      fs.l.lowrank = true;
      fs.l.lr = sample(l_op, l_adj, nb, ni, stream + 2);
      sm.rank_bound = fr.blk[0][2].rank_bound() + fr.blk[1][3].rank_bound() +
                      fr.blk[0][3].rank_bound() + fr.blk[1][2].rank_bound();
      const Index lb = fr.blk[2][0].rank_bound() + fr.blk[3][1].rank_bound() +
                       fr.blk[2][1].rank_bound() + fr.blk[3][0].rank_bound();
      sm.rank_bound = std::max(sm.rank_bound, lb);
      if (fs.r.lr.rank() > sm.rank_bound || fs.l.lr.rank() > lb) {
        throw RankBoundViolated("factor: node " + std::to_string(s) + " L/R rank " +
                                std::to_string(std::max(fs.l.lr.rank(), fs.r.lr.rank())) +
                                " exceeds bound " + std::to_string(sm.rank_bound));
      }
    } else {
      const Matrix aib = fr.dense(kI, kB);
      const Matrix abi = fr.dense(kB, kI);
      fs.r.dense = -fs.lu.solve(aib);
      fs.l.dense = -fs.lu.solve_transpose(abi.transpose()).transpose();
    }
    sm.rank_l = fs.l.rank();
    sm.rank_r = fs.r.rank();

    // Schur complement, reordered for the parent.
    Index n1 = 0, align = 0;
    parent_order(s, fs.s_idx, n1, align);
    fs.s_n1 = n1;
    const Index n2 = static_cast<Index>(fs.s_idx.size()) - n1;
    std::unordered_map<Index, Index> pos;
    for (std::size_t k = 0; k < fs.bnd_idx.size(); ++k) pos[fs.bnd_idx[k]] = static_cast<Index>(k);
    IndexList q(fs.s_idx.size());
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = pos.at(fs.s_idx[k]);

    const bool to_hss = nd.level <= lhss_;
    if (!sm.structured) {
      Matrix sb = fr.dense(kB, kB) + fr.dense(kB, kI) * fs.r.dense;
      Matrix sp = sb(q, q);
      if (to_hss) {
        const ClusterTree t = schur_tree(n1, n2, align);
        fs.s_h = compress_dense(sp, t, t, o_.eps_hss, o_.mode);
        fs.s_hss = true;
        sm.rank_s = fs.s_h.max_rank();
      } else {
        fs.s_dense = std::move(sp);
      }
    } else {
      const Matrix w = fr.apply(kB, kI, fs.r.lr.left);  // A_bi R.left
      const LowRankFactor& rl = fs.r.lr;
      IndexList qinv(q.size());
      for (std::size_t k = 0; k < q.size(); ++k) qinv[static_cast<std::size_t>(q[k])] = static_cast<Index>(k);
      MatrixOracle orc;
      orc.rows = orc.cols = nb;
      orc.apply = [&](const Matrix& x) {
        const Matrix xb = permute_rows(x, qinv);
        const Matrix yb = fr.apply(kB, kB, xb) + fr.apply(kB, kI, rl.apply(xb));
        return permute_rows(yb, q);
      };
      orc.apply_adjoint = [&](const Matrix& y) {
        const Matrix yb = permute_rows(y, qinv);
        const Matrix xb = fr.apply_adjoint(kB, kB, yb) + rl.apply_adjoint(fr.apply_adjoint(kB, kI, yb));
        return permute_rows(xb, q);
      };
      orc.extract = [&](const IndexList& r, const IndexList& c) {
        IndexList rb(r.size()), cb(c.size());
        for (std::size_t k = 0; k < r.size(); ++k) rb[k] = q[static_cast<std::size_t>(r[k])];
        for (std::size_t k = 0; k < c.size(); ++k) cb[k] = q[static_cast<std::size_t>(c[k])];
        Matrix e = fr.extract(kB, kB, rb, cb);
        if (rl.rank() > 0) {
          e += w(rb, Eigen::all) * rl.right(cb, Eigen::all).transpose();
        }
        return e;
      };
      if (o_.on_schur_oracle) o_.on_schur_oracle(s, orc);
      const ClusterTree t = schur_tree(n1, n2, align);
      CompressOptions co;
      co.k0 = o_.k0;
      co.r = o_.r;
      co.eps = o_.eps_hss;
      co.mode = o_.mode;
      co.dense_fallback = true;
      CompressReport rep;
      RngStream rng(o_.seed, stream + 3);
      fs.s_h = compress_randomized(orc, t, t, co, rng, &rep);
      fs.s_hss = true;
      sm.rank_s = fs.s_h.max_rank();
      if (rep.saturated) {
        ++st_.saturated_nodes;
        st_.warnings.push_back("node " + std::to_string(s) +
                               ": Schur complement rank saturated, stored densely");
      }
    }
    sm.schur_hss = fs.s_hss;
    finish(s, fs);
  }

  void finish(int s, Factor& fs) {
    st_.bytes += 8 * fs.stored_reals();
    const auto& nd = tree_.node(s);
    if (nd.is_leaf()) return;
    // Children's Schur complements are no longer needed.
    for (int c : {nd.left, nd.right}) {
      Factor& fc = f_[static_cast<std::size_t>(c)];
      if (o_.keep_schur) continue;
      fc.s_dense = Matrix();
      fc.s_h = HssMatrix();
    }
  }

  const SparseMatrix& a_;
  const EliminationTree& tree_;
  const BuildOptions& o_;
  std::vector<Factor>& f_;
  BuildStats& st_;
  int lhss_ = 0;
  std::vector<NodePartition> part_;
};

}  // namespace

Preconditioner Preconditioner::factor(const SparseMatrix& a, const EliminationTree& tree,
                                      const BuildOptions& opts) {
  if (a.rows() != a.cols() || tree.size() != a.rows()) {
    throw DimensionMismatch("factor: matrix and tree sizes differ");
  }
  if (!(opts.eps_hss > 0.0)) throw InvalidOption("factor: eps_hss must be positive");
  if (opts.beta < 1) throw InvalidOption("factor: beta must be at least 1");
  if (opts.granularity < 1) throw InvalidOption("factor: granularity must be at least 1");
  Preconditioner p;
  Impl& im = *p.impl_;
  im.n = a.rows();
  im.tree = tree;
  BuildStats& st = im.stats;
  st.n = a.rows();
  st.levels = tree.depth();
  const auto t0 = Clock::now();
  Builder b(a, tree, opts, im.f, st);
  b.run();
  st.t_factor_s = seconds_since(t0);
  st.lhss = b.lhss();

  // Ranks.
  std::map<int, LevelStats> lv;
  Index kdense = 0;
  for (const auto& fc : im.f) {
    const NodeSummary& sm = fc.summary;
    kdense = std::max({kdense, sm.interior, sm.boundary});
    Index k = 0;
    bool low = false;
    if (sm.structured) {
      k = std::max({sm.rank_l, sm.rank_r, fc.sinv.max_rank});
      low = true;
    }
    if (sm.schur_hss) {
      k = std::max(k, sm.rank_s);
      low = true;
    }
    auto& e = lv[sm.level];
    e.level = sm.level;
    ++e.nodes;
    if (low) {
      st.dense_only = false;
      e.max_rank = std::max(e.max_rank, k);
      st.k_max = std::max(st.k_max, k);
    }
  }
  if (st.dense_only) st.k_max = kdense;
  for (auto& [l, e] : lv) {
    e.t_s = b.level_time[l];
    st.per_level.push_back(e);
  }
  for (const auto& w : st.warnings) std::cerr << "warning: " << w << "\n";

  RngStream rng(opts.seed, 0xffffffffULL);
  const Vector probe = gaussian_sample(rng, im.n, 1).col(0);
  st.t_apply_s = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 5; ++rep) {
    const auto t1 = Clock::now();
    (void)p.apply(probe);
    st.t_apply_s = std::min(st.t_apply_s, seconds_since(t1));
  }
  return p;
}

Index Preconditioner::size() const { return impl_->n; }

Vector Preconditioner::apply(const Vector& b) const {
  const Matrix y = apply(Matrix(b));
  return y.col(0);
}

Matrix Preconditioner::apply(const Matrix& b) const {
  const Impl& im = *impl_;
  if (b.rows() != im.n) throw DimensionMismatch("apply: vector length does not match");
  Matrix y = b;
  const int nn = static_cast<int>(im.f.size());
  for (int s = 0; s < nn; ++s) {
    const Factor& f = im.f[static_cast<std::size_t>(s)];
    if (f.bnd_idx.empty() || f.int_idx.empty()) continue;
    y(f.bnd_idx, Eigen::all) += f.l.apply(y(f.int_idx, Eigen::all));
  }
  for (int s = 0; s < nn; ++s) {
    const Factor& f = im.f[static_cast<std::size_t>(s)];
    if (f.int_idx.empty()) continue;
    y(f.int_idx, Eigen::all) = f.solve(y(f.int_idx, Eigen::all));
  }
  for (int s = nn - 1; s >= 0; --s) {
    const Factor& f = im.f[static_cast<std::size_t>(s)];
    if (f.bnd_idx.empty() || f.int_idx.empty()) continue;
    y(f.int_idx, Eigen::all) += f.r.apply(y(f.bnd_idx, Eigen::all));
  }
  return y;
}

const BuildStats& Preconditioner::stats() const { return impl_->stats; }
int Preconditioner::num_nodes() const { return static_cast<int>(impl_->f.size()); }
const NodeSummary& Preconditioner::node(int s) const { return impl_->f.at(static_cast<std::size_t>(s)).summary; }
const IndexList& Preconditioner::interior_order(int s) const { return impl_->f.at(static_cast<std::size_t>(s)).int_idx; }
const IndexList& Preconditioner::boundary_order(int s) const { return impl_->f.at(static_cast<std::size_t>(s)).bnd_idx; }

Matrix Preconditioner::interior_solve(int s, const Matrix& x) const {
  return impl_->f.at(static_cast<std::size_t>(s)).solve(x);
}
Matrix Preconditioner::interior_solve_transpose(int s, const Matrix& x) const {
  return impl_->f.at(static_cast<std::size_t>(s)).solve_transpose(x);
}
Matrix Preconditioner::lower(int s) const { return impl_->f.at(static_cast<std::size_t>(s)).l.to_dense(); }
Matrix Preconditioner::upper(int s) const { return impl_->f.at(static_cast<std::size_t>(s)).r.to_dense(); }

Matrix Preconditioner::schur(int s) const {
  const Factor& f = impl_->f.at(static_cast<std::size_t>(s));
  if (f.s_hss) {
    if (f.s_h.num_nodes() == 0 && !f.s_idx.empty()) throw InvalidOption("schur: not kept");
    return f.s_h.to_dense();
  }
  if (f.s_dense.rows() != static_cast<Index>(f.s_idx.size())) throw InvalidOption("schur: not kept");
  return f.s_dense;
}
const IndexList& Preconditioner::schur_order(int s) const { return impl_->f.at(static_cast<std::size_t>(s)).s_idx; }

std::string to_json(const BuildStats& st) {
  nlohmann::json j;
  j["n"] = st.n;
  j["levels"] = st.levels;
  j["L_HSS"] = st.lhss;
  j["k_max"] = st.k_max;
  j["k_max_dense"] = st.dense_only;
  j["bytes"] = st.bytes;
  j["t_factor_s"] = st.t_factor_s;
  j["t_apply_s"] = st.t_apply_s;
  j["saturated_nodes"] = st.saturated_nodes;
  j["per_level"] = nlohmann::json::array();
  for (const auto& l : st.per_level) {
    j["per_level"].push_back({{"level", l.level}, {"max_rank", l.max_rank}, {"nodes", l.nodes}, {"t_s", l.t_s}});
  }
  return j.dump(2);
}

}  // namespace hiprec

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include "json.hpp"

#include "hss_detail.hpp"

namespace hiprec {

using detail::range_list;

HssMatrix::HssMatrix(ClusterTree rows, ClusterTree cols)
    : rows_(std::move(rows)), cols_(std::move(cols)) {
  if (!rows_.same_shape(cols_)) throw TreeMismatch("hss: row and column trees differ in shape");
  nodes_.resize(static_cast<std::size_t>(rows_.num_nodes()));
  for (int i = 0; i < rows_.num_nodes(); ++i) {
    const auto& rn = rows_.node(i);
    const auto& cn = cols_.node(i);
    HssNode& nd = nodes_[static_cast<std::size_t>(i)];
    if (rn.is_leaf()) {
      nd.D = Matrix::Zero(rn.size(), cn.size());
      nd.U = Matrix(rn.size(), 0);
      nd.V = Matrix(cn.size(), 0);
    } else {
      nd.U = Matrix(0, 0);
      nd.V = Matrix(0, 0);
      nd.B12 = Matrix(0, 0);
      nd.B21 = Matrix(0, 0);
    }
  }
}

Index HssMatrix::max_rank() const {
  Index k = 0;
  for (const auto& nd : nodes_) k = std::max({k, nd.U.cols(), nd.V.cols()});
  return k;
}

std::size_t HssMatrix::stored_reals() const {
  std::size_t s = 0;
  for (const auto& nd : nodes_) {
    s += static_cast<std::size_t>(nd.D.size() + nd.U.size() + nd.V.size() + nd.B12.size() +
                                  nd.B21.size());
  }
  return s;
}

Matrix HssMatrix::apply(const Matrix& x) const {
  if (x.rows() != cols()) throw DimensionMismatch("hss apply: operand rows");
  const Index s = x.cols();
  Matrix y(rows(), s);
  if (nodes_.empty()) return y;
  std::vector<Matrix> up(nodes_.size());
  for (int i = 0; i < num_nodes(); ++i) {
    if (i == root()) break;
    const auto& cn = cols_.node(i);
    const HssNode& nd = node(i);
    if (cn.is_leaf()) {
      up[static_cast<std::size_t>(i)] = nd.V.transpose() * x.middleRows(cn.lo, cn.size());
    } else {
      up[static_cast<std::size_t>(i)] =
          nd.V.transpose() * detail::vstack(up[static_cast<std::size_t>(cn.left)],
                                            up[static_cast<std::size_t>(cn.right)]);
    }
  }
  std::vector<Matrix> down(nodes_.size());
  down[static_cast<std::size_t>(root())] = Matrix::Zero(row_rank(root()), s);
  for (int i = root(); i >= 0; --i) {
    const auto& rn = rows_.node(i);
    const HssNode& nd = node(i);
    const Matrix& f = down[static_cast<std::size_t>(i)];
    if (rn.is_leaf()) {
      const auto& cn = cols_.node(i);
      y.middleRows(rn.lo, rn.size()) = nd.D * x.middleRows(cn.lo, cn.size());
      if (nd.U.cols() > 0) y.middleRows(rn.lo, rn.size()) += nd.U * f;
      continue;
    }
    const int l = rn.left, r = rn.right;
    const Index rl = row_rank(l), rr = row_rank(r);
    Matrix fl = nd.B12 * up[static_cast<std::size_t>(r)];
    Matrix fr = nd.B21 * up[static_cast<std::size_t>(l)];
    if (nd.U.cols() > 0) {
      fl += nd.U.topRows(rl) * f;
      fr += nd.U.bottomRows(rr) * f;
    }
    down[static_cast<std::size_t>(l)] = std::move(fl);
    down[static_cast<std::size_t>(r)] = std::move(fr);
    up[static_cast<std::size_t>(l)].resize(0, 0);
    up[static_cast<std::size_t>(r)].resize(0, 0);
  }
  return y;
}

Matrix HssMatrix::apply_adjoint(const Matrix& y) const { return transpose().apply(y); }

HssMatrix HssMatrix::transpose() const {
  HssMatrix t;
  t.rows_ = cols_;
  t.cols_ = rows_;
  t.nodes_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const HssNode& a = nodes_[i];
    HssNode& b = t.nodes_[i];
    b.D = a.D.transpose();
    b.U = a.V;
    b.V = a.U;
    b.B12 = a.B21.transpose();
    b.B21 = a.B12.transpose();
  }
  return t;
}

namespace {

struct GroupChain {
  IndexList positions;           // positions in the request list
  IndexList local;               // indices relative to the leaf
  std::vector<int> path;         // leaf, parent, ..., root
  std::vector<Matrix> basis;     // basis[t]: rows of the big basis of path[t]
};

std::vector<GroupChain> build_chains(const ClusterTree& tree, const IndexList& idx,
                                     const std::function<const Matrix&(int)>& gen,
                                     const std::function<Index(int)>& rank_of,
                                     std::vector<int>& leaf_group) {
  std::map<int, std::size_t> by_leaf;
  std::vector<GroupChain> groups;
  for (std::size_t p = 0; p < idx.size(); ++p) {
    const int leaf = tree.leaf_of(idx[p]);
    auto it = by_leaf.find(leaf);
    if (it == by_leaf.end()) {
      it = by_leaf.emplace(leaf, groups.size()).first;
      groups.emplace_back();
      for (int a = leaf; a >= 0; a = tree.node(a).parent) groups.back().path.push_back(a);
    }
    GroupChain& g = groups[it->second];
    g.positions.push_back(static_cast<Index>(p));
    g.local.push_back(idx[p] - tree.node(leaf).lo);
  }
  leaf_group.assign(static_cast<std::size_t>(tree.num_nodes()), -1);
  for (auto& [leaf, gi] : by_leaf) {
    leaf_group[static_cast<std::size_t>(leaf)] = static_cast<int>(gi);
    GroupChain& g = groups[gi];
    const Matrix& u = gen(leaf);
    Matrix cur(static_cast<Index>(g.local.size()), u.cols());
    for (std::size_t k = 0; k < g.local.size(); ++k) cur.row(static_cast<Index>(k)) = u.row(g.local[k]);
    g.basis.push_back(cur);
    for (std::size_t t = 1; t + 1 < g.path.size(); ++t) {
      const int child = g.path[t - 1];
      const int node = g.path[t];
      const auto& nd = tree.node(node);
      const Matrix& transfer = gen(node);
      const Index off = (child == nd.left) ? 0 : rank_of(nd.left);
      cur = cur * transfer.middleRows(off, rank_of(child));
      g.basis.push_back(cur);
    }
  }
  return groups;
}

}  // namespace

Matrix HssMatrix::extract(const IndexList& ri, const IndexList& ci) const {
  Matrix out(static_cast<Index>(ri.size()), static_cast<Index>(ci.size()));
  if (ri.empty() || ci.empty()) return out;
  std::vector<int> rg_of, cg_of;
  auto rgroups = build_chains(
      rows_, ri, [this](int i) -> const Matrix& { return node(i).U; },
      [this](int i) { return row_rank(i); }, rg_of);
  auto cgroups = build_chains(
      cols_, ci, [this](int i) -> const Matrix& { return node(i).V; },
      [this](int i) { return col_rank(i); }, cg_of);
  for (const auto& rg : rgroups) {
    for (const auto& cg : cgroups) {
      Matrix block;
      if (rg.path.front() == cg.path.front()) {
        const Matrix& d = node(rg.path.front()).D;
        block.resize(static_cast<Index>(rg.local.size()), static_cast<Index>(cg.local.size()));
        for (std::size_t a = 0; a < rg.local.size(); ++a) {
          for (std::size_t b = 0; b < cg.local.size(); ++b) {
            block(static_cast<Index>(a), static_cast<Index>(b)) = d(rg.local[a], cg.local[b]);
          }
        }
      } else {
        // Paths end at the root; align from the top to find the LCA.
        std::size_t ta = rg.path.size() - 1, tb = cg.path.size() - 1;
        while (ta > 0 && tb > 0 && rg.path[ta - 1] == cg.path[tb - 1]) {
          --ta;
          --tb;
        }
        const int lca = rg.path[ta];
        const int ca = rg.path[ta - 1];
        const HssNode& nd = node(lca);
        const Matrix& b = (ca == rows_.node(lca).left) ? nd.B12 : nd.B21;
        block = rg.basis[ta - 1] * b * cg.basis[tb - 1].transpose();
      }
      for (std::size_t a = 0; a < rg.positions.size(); ++a) {
        for (std::size_t c = 0; c < cg.positions.size(); ++c) {
          out(rg.positions[a], cg.positions[c]) = block(static_cast<Index>(a), static_cast<Index>(c));
        }
      }
    }
  }
  return out;
}

double HssMatrix::entry(Index i, Index j) const {
  if (i < 0 || i >= rows() || j < 0 || j >= cols()) throw IndexOutOfRange("hss entry");
  return extract({i}, {j})(0, 0);
}

Matrix HssMatrix::to_dense() const {
  return extract(range_list(0, rows()), range_list(0, cols()));
}

double HssMatrix::frobenius_norm() const {
  if (nodes_.empty()) return 0.0;
  std::vector<Matrix> gu(nodes_.size()), gv(nodes_.size());
  double total = 0.0;
  for (int i = 0; i < num_nodes(); ++i) {
    const auto& rn = rows_.node(i);
    const HssNode& nd = node(i);
    if (rn.is_leaf()) {
      total += nd.D.squaredNorm();
      gu[static_cast<std::size_t>(i)] = nd.U.transpose() * nd.U;
      gv[static_cast<std::size_t>(i)] = nd.V.transpose() * nd.V;
      continue;
    }
    const auto l = static_cast<std::size_t>(rn.left), r = static_cast<std::size_t>(rn.right);
    total += ((gu[l] * nd.B12).cwiseProduct(nd.B12 * gv[r])).sum();
    total += ((gu[r] * nd.B21).cwiseProduct(nd.B21 * gv[l])).sum();
    if (i != root()) {
      gu[static_cast<std::size_t>(i)] =
          nd.U.transpose() * detail::block_diag(gu[l], gu[r]) * nd.U;
      gv[static_cast<std::size_t>(i)] =
          nd.V.transpose() * detail::block_diag(gv[l], gv[r]) * nd.V;
    }
  }
  return std::sqrt(std::max(total, 0.0));
}

std::vector<std::string> HssMatrix::check() const {
  std::vector<std::string> errs;
  for (int i = 0; i < num_nodes(); ++i) {
    const auto& rn = rows_.node(i);
    const auto& cn = cols_.node(i);
    const HssNode& nd = node(i);
    const std::string tag = "node " + std::to_string(i) + ": ";
    if (i == root() && (nd.U.cols() != 0 || nd.V.cols() != 0)) {
      errs.push_back(tag + "root generators must be empty");
    }
    if (rn.is_leaf()) {
      if (nd.D.rows() != rn.size() || nd.D.cols() != cn.size()) errs.push_back(tag + "D shape");
      if (nd.U.rows() != rn.size()) errs.push_back(tag + "U rows");
      if (nd.V.rows() != cn.size()) errs.push_back(tag + "V rows");
      continue;
    }
    const Index rl = row_rank(rn.left), rr = row_rank(rn.right);
    const Index cl = col_rank(rn.left), cr = col_rank(rn.right);
    if (i != root() && nd.U.rows() != rl + rr) errs.push_back(tag + "U transfer rows");
    if (i != root() && nd.V.rows() != cl + cr) errs.push_back(tag + "V transfer rows");
    if (nd.B12.rows() != rl || nd.B12.cols() != cr) errs.push_back(tag + "B12 shape");
    if (nd.B21.rows() != rr || nd.B21.cols() != cl) errs.push_back(tag + "B21 shape");
  }
  return errs;
}

// ---------------------------------------------------------------------------

namespace detail {

Matrix big_row_basis(const HssMatrix& h, int id) {
  const auto& rn = h.row_tree().node(id);
  const HssNode& nd = h.node(id);
  if (rn.is_leaf()) return nd.U;
  const Matrix l = big_row_basis(h, rn.left);
  const Matrix r = big_row_basis(h, rn.right);
  Matrix out(rn.size(), nd.U.cols());
  out.topRows(l.rows()) = l * nd.U.topRows(l.cols());
  out.bottomRows(r.rows()) = r * nd.U.bottomRows(r.cols());
  return out;
}

Matrix big_col_basis(const HssMatrix& h, int id) {
  const auto& cn = h.col_tree().node(id);
  const HssNode& nd = h.node(id);
  if (cn.is_leaf()) return nd.V;
  const Matrix l = big_col_basis(h, cn.left);
  const Matrix r = big_col_basis(h, cn.right);
  Matrix out(cn.size(), nd.V.cols());
  out.topRows(l.rows()) = l * nd.V.topRows(l.cols());
  out.bottomRows(r.rows()) = r * nd.V.bottomRows(r.cols());
  return out;
}

std::vector<int> subtree_order(const ClusterTree& t, int id) {
  std::vector<int> out;
  std::function<void(int)> walk = [&](int i) {
    if (!t.node(i).is_leaf()) {
      walk(t.node(i).left);
      walk(t.node(i).right);
    }
    out.push_back(i);
  };
  walk(id);
  return out;
}

HssMatrix extract_subtree(const HssMatrix& h, int id) {
  HssMatrix s(h.row_tree().subtree(id), h.col_tree().subtree(id));
  const std::vector<int> order = subtree_order(h.row_tree(), id);
  for (std::size_t k = 0; k < order.size(); ++k) {
    s.node(static_cast<int>(k)) = h.node(order[k]);
  }
  HssNode& top = s.node(s.root());
  top.U = Matrix(top.U.rows(), 0);
  top.V = Matrix(top.V.rows(), 0);
  return s;
}

}  // namespace detail

TopSplit split_top(const HssMatrix& h) {
  if (h.num_nodes() == 0 || h.row_tree().node(h.root()).is_leaf()) {
    throw NoTopSplit("split_top: root is a leaf");
  }
  const auto& rn = h.row_tree().node(h.root());
  const HssNode& nd = h.node(h.root());
  TopSplit out;
  out.h11 = detail::extract_subtree(h, rn.left);
  out.h22 = detail::extract_subtree(h, rn.right);
  out.h12 = LowRankFactor(detail::big_row_basis(h, rn.left) * nd.B12,
                          detail::big_col_basis(h, rn.right));
  out.h21 = LowRankFactor(detail::big_row_basis(h, rn.right) * nd.B21,
                          detail::big_col_basis(h, rn.left));
  return out;
}

std::string to_json(const HssMatrix& h) {
  nlohmann::json j;
  j["rows"] = h.rows();
  j["cols"] = h.cols();
  j["rank"] = h.max_rank();
  j["stored_reals"] = h.stored_reals();
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < h.num_nodes(); ++i) {
    const auto& rn = h.row_tree().node(i);
    const auto& cn = h.col_tree().node(i);
    const HssNode& nd = h.node(i);
    nlohmann::json e;
    e["id"] = i;
    e["level"] = rn.level;
    e["parent"] = rn.parent;
    e["rows"] = {rn.lo, rn.hi};
    e["cols"] = {cn.lo, cn.hi};
    e["leaf"] = rn.is_leaf();
    e["row_rank"] = nd.U.cols();
    e["col_rank"] = nd.V.cols();
    if (rn.is_leaf()) {
      e["d_norm"] = nd.D.norm();
    } else {
      e["children"] = {rn.left, rn.right};
      e["b12_norm"] = nd.B12.norm();
      e["b21_norm"] = nd.B21.norm();
    }
    nodes.push_back(e);
  }
  j["nodes"] = nodes;
  return j.dump(2);
}

// ---------------------------------------------------------------------------

MatrixOracle dense_oracle(const Matrix& a) {
  auto p = std::make_shared<const Matrix>(a);
  MatrixOracle o;
  o.rows = a.rows();
  o.cols = a.cols();
  o.apply = [p](const Matrix& x) -> Matrix { return (*p) * x; };
  o.apply_adjoint = [p](const Matrix& y) -> Matrix { return p->transpose() * y; };
  o.extract = [p](const IndexList& r, const IndexList& c) {
    Matrix out(static_cast<Index>(r.size()), static_cast<Index>(c.size()));
    for (std::size_t j = 0; j < c.size(); ++j) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        out(static_cast<Index>(i), static_cast<Index>(j)) = (*p)(r[i], c[j]);
      }
    }
    return out;
  };
  return o;
}

MatrixOracle sparse_oracle(const SparseMatrix& a) {
  auto p = std::make_shared<const SparseMatrix>(a);
  MatrixOracle o;
  o.rows = a.rows();
  o.cols = a.cols();
  o.apply = [p](const Matrix& x) { return p->apply(x); };
  o.apply_adjoint = [p](const Matrix& y) { return p->apply_adjoint(y); };
  o.extract = [p](const IndexList& r, const IndexList& c) { return p->extract(r, c); };
  return o;
}

MatrixOracle hss_oracle(const HssMatrix& h) {
  auto p = std::make_shared<const HssMatrix>(h);
  auto t = std::make_shared<const HssMatrix>(h.transpose());
  MatrixOracle o;
  o.rows = h.rows();
  o.cols = h.cols();
  o.apply = [p](const Matrix& x) { return p->apply(x); };
  o.apply_adjoint = [t](const Matrix& y) { return t->apply(y); };
  o.extract = [p](const IndexList& r, const IndexList& c) { return p->extract(r, c); };
  return o;
}

}  // namespace hiprec

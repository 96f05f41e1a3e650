#include <cmath>
#include <limits>

#include "hss_detail.hpp"

namespace hiprec {

namespace {

Matrix full_q(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

}  // namespace

UlvFactorization::UlvFactorization(const HssMatrix& h) : n_(h.rows()), h_(h) {
  if (h.rows() != h.cols()) throw DimensionMismatch("ulv: matrix is not square");
  const int nn = h.num_nodes();
  data_.resize(static_cast<std::size_t>(nn));
  if (nn == 0) return;
  const ClusterTree& rt = h.row_tree();
  std::vector<Matrix> dred(static_cast<std::size_t>(nn));
  const double scale = std::max(1.0, h.frobenius_norm());
  const double tiny = 64.0 * std::numeric_limits<double>::epsilon() * scale;

  auto assemble = [&](int i, Matrix& dbar, Matrix& ubar, Matrix& vbar) {
    const auto& rn = rt.node(i);
    const HssNode& nd = h.node(i);
    if (rn.is_leaf()) {
      dbar = nd.D;
      ubar = nd.U;
      vbar = nd.V;
      return;
    }
    const auto l = static_cast<std::size_t>(rn.left), r = static_cast<std::size_t>(rn.right);
    const NodeData& a = data_[l];
    const NodeData& b = data_[r];
    const Index na = a.ured.rows(), nb = b.ured.rows();
    dbar.resize(na + nb, na + nb);
    dbar.topLeftCorner(na, na) = dred[l];
    dbar.bottomRightCorner(nb, nb) = dred[r];
    dbar.topRightCorner(na, nb) = a.ured * nd.B12 * b.vred.transpose();
    dbar.bottomLeftCorner(nb, na) = b.ured * nd.B21 * a.vred.transpose();
    ubar.resize(na + nb, nd.U.cols());
    ubar.topRows(na) = a.ured * nd.U.topRows(a.ured.cols());
    ubar.bottomRows(nb) = b.ured * nd.U.bottomRows(b.ured.cols());
    vbar.resize(na + nb, nd.V.cols());
    vbar.topRows(na) = a.vred * nd.V.topRows(a.vred.cols());
    vbar.bottomRows(nb) = b.vred * nd.V.bottomRows(b.vred.cols());
    dred[l].resize(0, 0);
    dred[r].resize(0, 0);
  };

  for (int i = 0; i < nn; ++i) {
    Matrix dbar, ubar, vbar;
    assemble(i, dbar, ubar, vbar);
    NodeData& d = data_[static_cast<std::size_t>(i)];
    d.n = dbar.rows();
    if (i == h.root()) {
      try {
        root_lu_ = LuFactorization(dbar);
      } catch (const SingularMatrix&) {
        throw SingularBlock("ulv: root block is singular");
      }
      break;
    }
    const Index r = ubar.cols();
    d.e = std::max<Index>(d.n - r, 0);
    if (d.e == 0) {
      d.ured = ubar;
      d.vred = vbar;
      dred[static_cast<std::size_t>(i)] = dbar;
      continue;
    }
    const Index e = d.e;
    const Index rem = d.n - e;
    Matrix q = full_q(ubar);
    d.omega.resize(d.n, d.n);
    d.omega.leftCols(e) = q.rightCols(e);
    d.omega.rightCols(rem) = q.leftCols(rem);
    const Matrix dt = d.omega.transpose() * dbar;
    Eigen::HouseholderQR<Matrix> lq(dt.topRows(e).transpose());
    d.w = lq.householderQ();
    d.l = lq.matrixQR().topRows(e).triangularView<Eigen::Upper>().toDenseMatrix().transpose();
    for (Index k = 0; k < e; ++k) {
      if (!(std::abs(d.l(k, k)) > tiny)) {
        throw SingularBlock("ulv: singular diagonal block at node " + std::to_string(i));
      }
    }
    const Matrix dtw = dt * d.w;
    d.d21 = dtw.bottomLeftCorner(rem, e);
    dred[static_cast<std::size_t>(i)] = dtw.bottomRightCorner(rem, rem);
    d.ured = (d.omega.transpose() * ubar).bottomRows(rem);
    const Matrix vt = d.w.transpose() * vbar;
    d.v1t = vt.topRows(e);
    d.vred = vt.bottomRows(rem);
  }
  // The solve only needs couplings and column transfers.
  for (int i = 0; i < nn; ++i) {
    HssNode& nd = h_.node(i);
    nd.D.resize(0, 0);
    nd.U.resize(0, 0);
    if (rt.node(i).is_leaf()) nd.V.resize(0, 0);
  }
}

Matrix UlvFactorization::solve(const Matrix& b) const {
  if (b.rows() != n_) throw DimensionMismatch("ulv solve: rhs rows");
  const Index s = b.cols();
  Matrix x(n_, s);
  const int nn = h_.num_nodes();
  if (nn == 0) return x;
  const ClusterTree& rt = h_.row_tree();
  const ClusterTree& ct = h_.col_tree();
  std::vector<Matrix> y1(static_cast<std::size_t>(nn)), bred(static_cast<std::size_t>(nn)),
      zeta(static_cast<std::size_t>(nn));
  const int root = h_.root();
  Matrix root_rhs;
  for (int i = 0; i < nn; ++i) {
    const auto& rn = rt.node(i);
    const HssNode& nd = h_.node(i);
    const NodeData& d = data_[static_cast<std::size_t>(i)];
    Matrix rhs;
    Matrix z;
    if (rn.is_leaf()) {
      rhs = b.middleRows(rn.lo, rn.size());
      z = Matrix::Zero(d.vred.cols(), s);
    } else {
      const auto l = static_cast<std::size_t>(rn.left), r = static_cast<std::size_t>(rn.right);
      const NodeData& a = data_[l];
      const NodeData& c = data_[r];
      rhs.resize(bred[l].rows() + bred[r].rows(), s);
      rhs.topRows(bred[l].rows()) = bred[l] - a.ured * (nd.B12 * zeta[r]);
      rhs.bottomRows(bred[r].rows()) = bred[r] - c.ured * (nd.B21 * zeta[l]);
      if (i != root) z = nd.V.transpose() * detail::vstack(zeta[l], zeta[r]);
      bred[l].resize(0, 0);
      bred[r].resize(0, 0);
    }
    if (i == root) {
      root_rhs = std::move(rhs);
      break;
    }
    if (d.e == 0) {
      bred[static_cast<std::size_t>(i)] = std::move(rhs);
      zeta[static_cast<std::size_t>(i)] = std::move(z);
      continue;
    }
    const Matrix bt = d.omega.transpose() * rhs;
    Matrix yy = d.l.triangularView<Eigen::Lower>().solve(bt.topRows(d.e));
    bred[static_cast<std::size_t>(i)] = bt.bottomRows(d.n - d.e) - d.d21 * yy;
    zeta[static_cast<std::size_t>(i)] = z + d.v1t.transpose() * yy;
    y1[static_cast<std::size_t>(i)] = std::move(yy);
  }

  std::vector<Matrix> y2(static_cast<std::size_t>(nn));
  y2[static_cast<std::size_t>(root)] = root_lu_.solve(root_rhs);
  for (int i = root; i >= 0; --i) {
    const auto& cn = ct.node(i);
    const NodeData& d = data_[static_cast<std::size_t>(i)];
    Matrix xbar;
    if (i == root || d.e == 0) {
      xbar = std::move(y2[static_cast<std::size_t>(i)]);
    } else {
      xbar = d.w * detail::vstack(y1[static_cast<std::size_t>(i)], y2[static_cast<std::size_t>(i)]);
    }
    if (cn.is_leaf()) {
      x.middleRows(cn.lo, cn.size()) = xbar;
      continue;
    }
    const Index na = data_[static_cast<std::size_t>(cn.left)].ured.rows();
    y2[static_cast<std::size_t>(cn.left)] = xbar.topRows(na);
    y2[static_cast<std::size_t>(cn.right)] = xbar.bottomRows(xbar.rows() - na);
  }
  return x;
}

std::size_t UlvFactorization::stored_reals() const {
  std::size_t s = root_lu_.stored_reals() + h_.stored_reals();
  for (const auto& d : data_) {
    s += static_cast<std::size_t>(d.omega.size() + d.w.size() + d.l.size() + d.d21.size() +
                                  d.v1t.size() + d.ured.size() + d.vred.size());
  }
  return s;
}

UlvFactorization ulv_factor(const HssMatrix& h) { return UlvFactorization(h); }

Matrix ulv_solve(const UlvFactorization& f, const Matrix& b) { return f.solve(b); }

}  // namespace hiprec

#include <algorithm>
#include <cmath>

#include "hss_detail.hpp"

namespace hiprec {

namespace {

bool same_ranges(const ClusterTree& a, const ClusterTree& b) {
  if (!a.same_shape(b) || a.size() != b.size()) return false;
  for (int i = 0; i < a.num_nodes(); ++i) {
    if (a.node(i).lo != b.node(i).lo || a.node(i).hi != b.node(i).hi) return false;
  }
  return true;
}

/// Stack [A-part; B-part] transfers of two children into one transfer matrix
/// whose child coordinates are ordered (c1: a, b), (c2: a, b).
Matrix interleave_transfer(const Matrix& ta, Index a1, const Matrix& tb, Index b1) {
  const Index a2 = ta.rows() - a1, b2 = tb.rows() - b1;
  Matrix out = Matrix::Zero(a1 + b1 + a2 + b2, ta.cols() + tb.cols());
  out.block(0, 0, a1, ta.cols()) = ta.topRows(a1);
  out.block(a1, ta.cols(), b1, tb.cols()) = tb.topRows(b1);
  out.block(a1 + b1, 0, a2, ta.cols()) = ta.bottomRows(a2);
  out.block(a1 + b1 + a2, ta.cols(), b2, tb.cols()) = tb.bottomRows(b2);
  return out;
}

Matrix blocks2x2(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d) {
  Matrix out(a.rows() + c.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.topRightCorner(b.rows(), b.cols()) = b;
  out.bottomLeftCorner(c.rows(), c.cols()) = c;
  out.bottomRightCorner(d.rows(), d.cols()) = d;
  return out;
}

}  // namespace

HssMatrix add_exact(const HssMatrix& a, const HssMatrix& b, double beta) {
  if (!same_ranges(a.row_tree(), b.row_tree()) || !same_ranges(a.col_tree(), b.col_tree())) {
    throw TreeMismatch("hss add: operands use different cluster trees");
  }
  HssMatrix c(a.row_tree(), a.col_tree());
  const ClusterTree& rt = a.row_tree();
  for (int i = 0; i < c.num_nodes(); ++i) {
    const HssNode& x = a.node(i);
    const HssNode& y = b.node(i);
    HssNode& z = c.node(i);
    const bool root = (i == c.root());
    if (rt.node(i).is_leaf()) {
      z.D = x.D + beta * y.D;
      z.U = root ? Matrix(x.U.rows(), 0) : detail::hstack(x.U, y.U);
      z.V = root ? Matrix(x.V.rows(), 0) : detail::hstack(x.V, y.V);
      continue;
    }
    const int l = rt.node(i).left, r = rt.node(i).right;
    const Index ra1 = a.row_rank(l), rb1 = b.row_rank(l);
    const Index ca1 = a.col_rank(l), cb1 = b.col_rank(l);
    const Index rows_u = ra1 + rb1 + a.row_rank(r) + b.row_rank(r);
    const Index rows_v = ca1 + cb1 + a.col_rank(r) + b.col_rank(r);
    z.U = root ? Matrix(rows_u, 0) : interleave_transfer(x.U, ra1, y.U, rb1);
    z.V = root ? Matrix(rows_v, 0) : interleave_transfer(x.V, ca1, y.V, cb1);
    z.B12 = detail::block_diag(x.B12, beta * y.B12);
    z.B21 = detail::block_diag(x.B21, beta * y.B21);
  }
  return c;
}

HssMatrix multiply_exact(const HssMatrix& a, const HssMatrix& b) {
  if (!same_ranges(a.col_tree(), b.row_tree())) {
    throw TreeMismatch("hss multiply: inner cluster trees differ");
  }
  if (!a.row_tree().same_shape(b.col_tree())) {
    throw TreeMismatch("hss multiply: outer cluster trees differ in shape");
  }
  HssMatrix c(a.row_tree(), b.col_tree());
  const int nn = c.num_nodes();
  if (nn == 0) return c;
  const ClusterTree& rt = a.row_tree();
  const int root = c.root();

  // Z_i = Vt_A,i^T Ut_B,i
  std::vector<Matrix> z(static_cast<std::size_t>(nn));
  for (int i = 0; i < nn; ++i) {
    if (i == root) break;
    const auto& rn = rt.node(i);
    const HssNode& x = a.node(i);
    const HssNode& y = b.node(i);
    if (rn.is_leaf()) {
      z[static_cast<std::size_t>(i)] = x.V.transpose() * y.U;
    } else {
      z[static_cast<std::size_t>(i)] =
          x.V.transpose() *
          detail::block_diag(z[static_cast<std::size_t>(rn.left)], z[static_cast<std::size_t>(rn.right)]) *
          y.U;
    }
  }
  // F_i = contribution of A(I_i, outside) B(outside, J_i) in generator coordinates.
  std::vector<Matrix> f(static_cast<std::size_t>(nn));
  f[static_cast<std::size_t>(root)] = Matrix::Zero(a.row_rank(root), b.col_rank(root));
  for (int i = root; i >= 0; --i) {
    const auto& rn = rt.node(i);
    if (rn.is_leaf()) continue;
    const HssNode& x = a.node(i);
    const HssNode& y = b.node(i);
    const int l = rn.left, r = rn.right;
    const Matrix& ft = f[static_cast<std::size_t>(i)];
    const Index ra1 = a.row_rank(l), ra2 = a.row_rank(r);
    const Index cb1 = b.col_rank(l), cb2 = b.col_rank(r);
    Matrix fl = x.B12 * z[static_cast<std::size_t>(r)] * y.B21;
    Matrix fr = x.B21 * z[static_cast<std::size_t>(l)] * y.B12;
    if (ft.size() > 0) {
      fl += x.U.topRows(ra1) * ft * y.V.topRows(cb1).transpose();
      fr += x.U.bottomRows(ra2) * ft * y.V.bottomRows(cb2).transpose();
    }
    f[static_cast<std::size_t>(l)] = std::move(fl);
    f[static_cast<std::size_t>(r)] = std::move(fr);
  }

  for (int i = 0; i < nn; ++i) {
    const auto& rn = rt.node(i);
    const HssNode& x = a.node(i);
    const HssNode& y = b.node(i);
    HssNode& w = c.node(i);
    const bool is_root = (i == root);
    const Matrix& fi = f[static_cast<std::size_t>(i)];
    if (rn.is_leaf()) {
      w.D = x.D * y.D;
      if (fi.size() > 0) w.D += x.U * fi * y.V.transpose();
      if (is_root) {
        w.U = Matrix(w.D.rows(), 0);
        w.V = Matrix(w.D.cols(), 0);
      } else {
        w.U = detail::hstack(x.U, x.D * y.U);
        w.V = detail::hstack(y.V, y.D.transpose() * x.V);
      }
      continue;
    }
    const int l = rn.left, r = rn.right;
    const Index ra1 = a.row_rank(l), ra2 = a.row_rank(r);
    const Index rb1 = b.row_rank(l), rb2 = b.row_rank(r);
    const Index ca1 = a.col_rank(l), ca2 = a.col_rank(r);
    const Index cb1 = b.col_rank(l), cb2 = b.col_rank(r);
    const Matrix& zl = z[static_cast<std::size_t>(l)];
    const Matrix& zr = z[static_cast<std::size_t>(r)];
    const Index ra = a.row_rank(i), rb = b.row_rank(i);
    const Index cb = b.col_rank(i), ca = a.col_rank(i);
    if (is_root) {
      w.U = Matrix(ra1 + rb1 + ra2 + rb2, 0);
      w.V = Matrix(cb1 + ca1 + cb2 + ca2, 0);
    } else {
      w.U = Matrix::Zero(ra1 + rb1 + ra2 + rb2, ra + rb);
      w.U.block(0, 0, ra1, ra) = x.U.topRows(ra1);
      w.U.block(0, ra, ra1, rb) = x.B12 * zr * y.U.bottomRows(rb2);
      w.U.block(ra1, ra, rb1, rb) = y.U.topRows(rb1);
      w.U.block(ra1 + rb1, 0, ra2, ra) = x.U.bottomRows(ra2);
      w.U.block(ra1 + rb1, ra, ra2, rb) = x.B21 * zl * y.U.topRows(rb1);
      w.U.block(ra1 + rb1 + ra2, ra, rb2, rb) = y.U.bottomRows(rb2);

      w.V = Matrix::Zero(cb1 + ca1 + cb2 + ca2, cb + ca);
      w.V.block(0, 0, cb1, cb) = y.V.topRows(cb1);
      w.V.block(0, cb, cb1, ca) = y.B21.transpose() * zr.transpose() * x.V.bottomRows(ca2);
      w.V.block(cb1, cb, ca1, ca) = x.V.topRows(ca1);
      w.V.block(cb1 + ca1, 0, cb2, cb) = y.V.bottomRows(cb2);
      w.V.block(cb1 + ca1, cb, cb2, ca) = y.B12.transpose() * zl.transpose() * x.V.topRows(ca1);
      w.V.block(cb1 + ca1 + cb2, cb, ca2, ca) = x.V.bottomRows(ca2);
    }
    Matrix f12 = Matrix::Zero(ra1, cb2);
    Matrix f21 = Matrix::Zero(ra2, cb1);
    if (fi.size() > 0) {
      f12 = x.U.topRows(ra1) * fi * y.V.bottomRows(cb2).transpose();
      f21 = x.U.bottomRows(ra2) * fi * y.V.topRows(cb1).transpose();
    }
    w.B12 = blocks2x2(f12, x.B12, y.B12, Matrix::Zero(rb1, ca2));
    w.B21 = blocks2x2(f21, x.B21, y.B21, Matrix::Zero(rb2, ca1));
  }
  return c;
}

// ---------------------------------------------------------------------------

HssMatrix recompress(const HssMatrix& h_in, double abs_tol, bool equal_ranks) {
  HssMatrix h = h_in;
  const int nn = h.num_nodes();
  if (nn == 0) return h;
  const ClusterTree& rt = h.row_tree();
  const int root = h.root();

  // Bottom-up: orthonormal bases, R factors pushed into the parents.
  std::vector<Matrix> ru(static_cast<std::size_t>(nn)), rv(static_cast<std::size_t>(nn));
  auto thin_qr = [](const Matrix& m, Matrix& q, Matrix& r) {
    const Index k = std::min(m.rows(), m.cols());
    if (k == 0) {
      q = Matrix(m.rows(), 0);
      r = Matrix(0, m.cols());
      return;
    }
    Eigen::HouseholderQR<Matrix> qr(m);
    q = qr.householderQ() * Matrix::Identity(m.rows(), k);
    r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  };
  for (int i = 0; i < nn; ++i) {
    const auto& rn = rt.node(i);
    HssNode& nd = h.node(i);
    if (!rn.is_leaf()) {
      const auto l = static_cast<std::size_t>(rn.left), r = static_cast<std::size_t>(rn.right);
      nd.B12 = ru[l] * nd.B12 * rv[r].transpose();
      nd.B21 = ru[r] * nd.B21 * rv[l].transpose();
      if (i == root) {
        nd.U = Matrix(ru[l].rows() + ru[r].rows(), 0);
        nd.V = Matrix(rv[l].rows() + rv[r].rows(), 0);
        break;
      }
      nd.U = detail::block_diag(ru[l], ru[r]) * nd.U;
      nd.V = detail::block_diag(rv[l], rv[r]) * nd.V;
    } else if (i == root) {
      break;
    }
    thin_qr(Matrix(nd.U), nd.U, ru[static_cast<std::size_t>(i)]);
    thin_qr(Matrix(nd.V), nd.V, rv[static_cast<std::size_t>(i)]);
  }

  // Top-down: truncate each block row and column against its coefficient.
  const int nonroot = std::max(nn - 1, 1);
  const double tol = abs_tol / std::sqrt(2.0 * nonroot);
  std::vector<Matrix> sr(static_cast<std::size_t>(nn)), sc(static_cast<std::size_t>(nn));
  for (int i = root; i >= 0; --i) {
    const auto& rn = rt.node(i);
    if (rn.is_leaf()) continue;
    HssNode& nd = h.node(i);
    const int l = rn.left, r = rn.right;
    const Index rl = h.row_rank(l), rr = h.row_rank(r);
    const Index cl = h.col_rank(l), cr = h.col_rank(r);
    const Matrix& srt = sr[static_cast<std::size_t>(i)];
    const Matrix& sct = sc[static_cast<std::size_t>(i)];
    const bool has_parent = (i != root);
    auto coef = [&](const Matrix& b, const Matrix& transfer_rows, const Matrix& s) {
      if (!has_parent || s.size() == 0) return b;
      return detail::hstack(b, transfer_rows * s);
    };
    const Matrix mrl = coef(nd.B12, has_parent ? Matrix(nd.U.topRows(rl)) : Matrix(), srt);
    const Matrix mrr = coef(nd.B21, has_parent ? Matrix(nd.U.bottomRows(rr)) : Matrix(), srt);
    const Matrix mcl =
        coef(nd.B21.transpose(), has_parent ? Matrix(nd.V.topRows(cl)) : Matrix(), sct);
    const Matrix mcr =
        coef(nd.B12.transpose(), has_parent ? Matrix(nd.V.bottomRows(cr)) : Matrix(), sct);

    struct Cut {
      Matrix p;
      Vector s;
      Index k = 0;
    };
    auto cut = [&](const Matrix& m) {
      Cut c;
      if (m.rows() == 0) {
        c.p = Matrix(0, 0);
        c.s = Vector(0);
        return c;
      }
      if (m.cols() == 0) {
        c.p = Matrix(m.rows(), 0);
        c.s = Vector(0);
        return c;
      }
      Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
      c.s = svd.singularValues();
      c.p = svd.matrixU();
      c.k = tail_rank(c.s, tol);
      return c;
    };
    Cut ul = cut(mrl), ur = cut(mrr), vl = cut(mcl), vr = cut(mcr);
    if (equal_ranks) {
      const Index kl = std::min({std::max(ul.k, vl.k), ul.p.cols(), vl.p.cols()});
      const Index kr = std::min({std::max(ur.k, vr.k), ur.p.cols(), vr.p.cols()});
      ul.k = vl.k = kl;
      ur.k = vr.k = kr;
    }
    auto diag_of = [](const Cut& c) {
      Matrix d = Matrix::Zero(c.k, c.k);
      for (Index j = 0; j < c.k && j < c.s.size(); ++j) d(j, j) = c.s(j);
      return d;
    };
    const Matrix pul = ul.p.leftCols(ul.k), pur = ur.p.leftCols(ur.k);
    const Matrix pvl = vl.p.leftCols(vl.k), pvr = vr.p.leftCols(vr.k);
    nd.B12 = pul.transpose() * nd.B12 * pvr;
    nd.B21 = pur.transpose() * nd.B21 * pvl;
    if (has_parent) {
      nd.U = detail::vstack(pul.transpose() * nd.U.topRows(rl), pur.transpose() * nd.U.bottomRows(rr));
      nd.V = detail::vstack(pvl.transpose() * nd.V.topRows(cl), pvr.transpose() * nd.V.bottomRows(cr));
    } else {
      nd.U = Matrix(ul.k + ur.k, 0);
      nd.V = Matrix(vl.k + vr.k, 0);
    }
    HssNode& a = h.node(l);
    HssNode& b = h.node(r);
    a.U = a.U * pul;
    b.U = b.U * pur;
    a.V = a.V * pvl;
    b.V = b.V * pvr;
    sr[static_cast<std::size_t>(l)] = diag_of(ul);
    sr[static_cast<std::size_t>(r)] = diag_of(ur);
    sc[static_cast<std::size_t>(l)] = diag_of(vl);
    sc[static_cast<std::size_t>(r)] = diag_of(vr);
  }
  return h;
}

HssMatrix equalize_ranks(const HssMatrix& h_in) {
  HssMatrix h = h_in;
  const int nn = h.num_nodes();
  if (nn == 0) return h;
  const ClusterTree& rt = h.row_tree();
  auto pad = [](const Matrix& m, Index k) {
    // Append orthonormal complement columns until m has k columns.
    const Index extra = k - m.cols();
    if (extra <= 0) return m;
    if (m.rows() < k) throw SingularBlock("equalize_ranks: rank exceeds block dimension");
    Eigen::HouseholderQR<Matrix> qr(m.cols() > 0 ? m : Matrix(Matrix::Zero(m.rows(), 1)));
    const Matrix q = qr.householderQ();
    return detail::hstack(m, q.middleCols(m.cols(), extra));
  };
  for (int i = 0; i < nn; ++i) {
    const auto& rn = rt.node(i);
    HssNode& nd = h.node(i);
    if (!rn.is_leaf()) {
      const int l = rn.left, r = rn.right;
      // Children were padded: insert zero rows/cols for the new coordinates.
      const Index rl = h.row_rank(l), rr = h.row_rank(r);
      const Index cl = h.col_rank(l), cr = h.col_rank(r);
      auto grow = [](const Matrix& m, Index rows, Index cols) {
        Matrix out = Matrix::Zero(rows, cols);
        out.topLeftCorner(m.rows(), m.cols()) = m;
        return out;
      };
      nd.B12 = grow(nd.B12, rl, cr);
      nd.B21 = grow(nd.B21, rr, cl);
      if (nd.U.rows() != rl + rr || nd.V.rows() != cl + cr) {
        // Old row counts come from the generators before padding.
        const Index u_old_l = h_in.row_rank(l), u_old_r = h_in.row_rank(r);
        const Index v_old_l = h_in.col_rank(l), v_old_r = h_in.col_rank(r);
        Matrix u = Matrix::Zero(rl + rr, nd.U.cols());
        u.topRows(u_old_l) = nd.U.topRows(u_old_l);
        u.middleRows(rl, u_old_r) = nd.U.bottomRows(u_old_r);
        Matrix v = Matrix::Zero(cl + cr, nd.V.cols());
        v.topRows(v_old_l) = nd.V.topRows(v_old_l);
        v.middleRows(cl, v_old_r) = nd.V.bottomRows(v_old_r);
        nd.U = std::move(u);
        nd.V = std::move(v);
      }
    }
    if (i == h.root()) break;
    const Index k = std::max(nd.U.cols(), nd.V.cols());
    nd.U = pad(nd.U, k);
    nd.V = pad(nd.V, k);
  }
  return h;
}

HssMatrix inverse(const HssMatrix& a_in) {
  if (a_in.rows() != a_in.cols() || !same_ranges(a_in.row_tree(), a_in.col_tree())) {
    throw TreeMismatch("hss inverse: matrix must be square with matching trees");
  }
  const HssMatrix a = equalize_ranks(a_in);
  HssMatrix inv(a.row_tree(), a.col_tree());
  const int nn = a.num_nodes();
  if (nn == 0) return inv;
  const ClusterTree& rt = a.row_tree();
  const int root = a.root();
  std::vector<Matrix> dhat(static_cast<std::size_t>(nn)), g(static_cast<std::size_t>(nn));

  auto lu_or_throw = [](const Matrix& m, int id) {
    try {
      return LuFactorization(m);
    } catch (const SingularMatrix&) {
      throw SingularBlock("hss inverse: singular block at node " + std::to_string(id));
    }
  };
  for (int i = 0; i < nn; ++i) {
    const auto& rn = rt.node(i);
    const HssNode& nd = a.node(i);
    Matrix dloc;
    if (rn.is_leaf()) {
      dloc = nd.D;
    } else {
      const auto l = static_cast<std::size_t>(rn.left), r = static_cast<std::size_t>(rn.right);
      dloc = blocks2x2(dhat[l], nd.B12, nd.B21, dhat[r]);
      dhat[l].resize(0, 0);
      dhat[r].resize(0, 0);
    }
    const LuFactorization lu = lu_or_throw(dloc, i);
    const Matrix dinv = lu.solve(Matrix::Identity(dloc.rows(), dloc.cols()));
    if (i == root) {
      g[static_cast<std::size_t>(i)] = dinv;
      break;
    }
    const Index k = nd.U.cols();
    HssNode& out = inv.node(i);
    if (k == 0) {
      dhat[static_cast<std::size_t>(i)] = Matrix(0, 0);
      out.U = Matrix(dloc.rows(), 0);
      out.V = Matrix(dloc.rows(), 0);
      g[static_cast<std::size_t>(i)] = dinv;
      continue;
    }
    const Matrix x = dinv * nd.U;                  // D^{-1} U
    const Matrix yt = nd.V.transpose() * dinv;     // V^T D^{-1}
    const LuFactorization red = lu_or_throw(nd.V.transpose() * x, i);
    const Matrix dh = red.solve(Matrix::Identity(k, k));
    out.U = x * dh;                                // E
    out.V = (dh * yt).transpose();                 // F
    g[static_cast<std::size_t>(i)] = dinv - out.U * yt;
    dhat[static_cast<std::size_t>(i)] = dh;
  }

  // Push the diagonal blocks of G down the tree.
  std::vector<Matrix> acc(static_cast<std::size_t>(nn));
  for (int i = root; i >= 0; --i) {
    const auto& rn = rt.node(i);
    HssNode& out = inv.node(i);
    Matrix total = g[static_cast<std::size_t>(i)];
    const Matrix& m = acc[static_cast<std::size_t>(i)];
    if (i != root && m.size() > 0) total += out.U * m * out.V.transpose();
    if (rn.is_leaf()) {
      out.D = total;
      if (i == root) {
        out.U = Matrix(total.rows(), 0);
        out.V = Matrix(total.cols(), 0);
      }
      continue;
    }
    const int l = rn.left, r = rn.right;
    const Index kl = inv.row_rank(l);
    const Index kr = total.rows() - kl;
    out.B12 = total.topRightCorner(kl, kr);
    out.B21 = total.bottomLeftCorner(kr, kl);
    acc[static_cast<std::size_t>(l)] = total.topLeftCorner(kl, kl);
    acc[static_cast<std::size_t>(r)] = total.bottomRightCorner(kr, kr);
    if (i == root) {
      out.U = Matrix(total.rows(), 0);
      out.V = Matrix(total.cols(), 0);
    }
  }
  return inv;
}

// ---------------------------------------------------------------------------

HssMatrix add(const HssMatrix& a, const HssMatrix& b, double eps, ToleranceMode mode) {
  const double tol = (mode == ToleranceMode::relative)
                         ? eps * std::max(1.0, a.frobenius_norm() + b.frobenius_norm())
                         : eps;
  return recompress(add_exact(a, b, 1.0), tol);
}

HssMatrix subtract(const HssMatrix& a, const HssMatrix& b, double eps, ToleranceMode mode) {
  const double tol = (mode == ToleranceMode::relative)
                         ? eps * std::max(1.0, a.frobenius_norm() + b.frobenius_norm())
                         : eps;
  return recompress(add_exact(a, b, -1.0), tol);
}

HssMatrix multiply(const HssMatrix& a, const HssMatrix& b, double eps, ToleranceMode mode) {
  const double tol = (mode == ToleranceMode::relative)
                         ? eps * std::max(1.0, a.frobenius_norm() * b.frobenius_norm())
                         : eps;
  return recompress(multiply_exact(a, b), tol);
}

HssMatrix ldivide(const HssMatrix& a, const HssMatrix& b, double eps, ToleranceMode mode) {
  if (!same_ranges(a.row_tree(), b.row_tree()) || a.rows() != a.cols()) {
    throw TreeMismatch("hss ldivide: operand trees differ");
  }
  const double tol = (mode == ToleranceMode::relative)
                         ? eps * b.frobenius_norm() / std::max(a.frobenius_norm(), 1e-300)
                         : eps;
  try {
    return recompress(multiply_exact(inverse(a), b), tol);
  } catch (const SingularBlock&) {
    // Telescoping inverse needs nonsingular diagonal blocks; solve densely instead.
    const Matrix ad = a.to_dense();
    Eigen::PartialPivLU<Matrix> lu(ad);
    const Matrix x = lu.solve(b.to_dense());
    if (!x.allFinite()) throw SingularBlock("hss ldivide: matrix is singular");
    return compress_dense(x, a.col_tree(), b.col_tree(), tol, ToleranceMode::absolute);
  }
}

}  // namespace hiprec

#include <algorithm>
#include <cmath>
#include <iostream>

#include "hss_detail.hpp"

namespace hiprec {

namespace {

using detail::range_list;

using Extractor = std::function<Matrix(const IndexList&, const IndexList&)>;

Matrix gather_rows(const Matrix& a, const IndexList& rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = a.row(rows[k]);
  return out;
}

IndexList gather(const IndexList& v, const IndexList& pos) {
  IndexList out(pos.size());
  for (std::size_t k = 0; k < pos.size(); ++k) out[k] = v[static_cast<std::size_t>(pos[k])];
  return out;
}

/// Samples driving one two-sided sweep: s = A om, t = A^T ps.
struct Samples {
  Matrix om;  // cols x s
  Matrix s;   // rows x s
  Matrix ps;  // rows x s
  Matrix t;   // cols x s
};

struct SweepResult {
  HssMatrix h;
  bool hit_cap = false;
};

/// One bottom-up pass of interpolative decompositions on local samples.
SweepResult sweep(const Samples& smp, const Extractor& extract, const ClusterTree& rows,
                  const ClusterTree& cols, double tol, Index kcap) {
  SweepResult out{HssMatrix(rows, cols), false};
  HssMatrix& h = out.h;
  const int nn = rows.num_nodes();
  if (nn == 0) return out;
  struct Local {
    IndexList rsk, csk;  // global skeleton rows / cols
    Matrix sloc, tloc;   // local samples restricted to the skeleton
    Matrix omh, psh;     // projected test matrices
  };
  std::vector<Local> loc(static_cast<std::size_t>(nn));
  auto id_step = [&](const Matrix& sl, Index& rank_out) {
    InterpolativeDecomposition id = row_id_absolute(sl, tol, kcap);
    rank_out = static_cast<Index>(id.skeleton.size());
    if (rank_out >= kcap && id.residual > tol) out.hit_cap = true;
    return id;
  };

  for (int i = 0; i < nn; ++i) {
    const auto& rn = rows.node(i);
    const auto& cn = cols.node(i);
    HssNode& nd = h.node(i);
    Local& L = loc[static_cast<std::size_t>(i)];
    IndexList rloc, cloc;
    Matrix srow, tcol, omloc, psloc;
    if (rn.is_leaf()) {
      rloc = range_list(rn.lo, rn.hi);
      cloc = range_list(cn.lo, cn.hi);
      nd.D = extract(rloc, cloc);
      if (i == h.root()) break;
      omloc = smp.om.middleRows(cn.lo, cn.size());
      psloc = smp.ps.middleRows(rn.lo, rn.size());
      srow = smp.s.middleRows(rn.lo, rn.size()) - nd.D * omloc;
      tcol = smp.t.middleRows(cn.lo, cn.size()) - nd.D.transpose() * psloc;
    } else {
      Local& a = loc[static_cast<std::size_t>(rn.left)];
      Local& b = loc[static_cast<std::size_t>(rn.right)];
      nd.B12 = extract(a.rsk, b.csk);
      nd.B21 = extract(b.rsk, a.csk);
      if (i == h.root()) break;
      rloc = a.rsk;
      rloc.insert(rloc.end(), b.rsk.begin(), b.rsk.end());
      cloc = a.csk;
      cloc.insert(cloc.end(), b.csk.begin(), b.csk.end());
      srow = detail::vstack(a.sloc - nd.B12 * b.omh, b.sloc - nd.B21 * a.omh);
      tcol = detail::vstack(a.tloc - nd.B21.transpose() * b.psh,
                            b.tloc - nd.B12.transpose() * a.psh);
      omloc = detail::vstack(a.omh, b.omh);
      psloc = detail::vstack(a.psh, b.psh);
      a = Local{a.rsk, a.csk, Matrix(), Matrix(), Matrix(), Matrix()};
      b = Local{b.rsk, b.csk, Matrix(), Matrix(), Matrix(), Matrix()};
    }
    Index kr = 0, kc = 0;
    InterpolativeDecomposition rid = id_step(srow, kr);
    InterpolativeDecomposition cid = id_step(tcol, kc);
    nd.U = rid.interp;
    nd.V = cid.interp;
    L.rsk = gather(rloc, rid.skeleton);
    L.csk = gather(cloc, cid.skeleton);
    L.sloc = gather_rows(srow, rid.skeleton);
    L.tloc = gather_rows(tcol, cid.skeleton);
    L.omh = nd.V.transpose() * omloc;
    L.psh = nd.U.transpose() * psloc;
  }
  return out;
}

double estimate_error(const MatrixOracle& a, const HssMatrix& h, RngStream& rng, Index r) {
  const Matrix probe = gaussian_sample(rng, a.cols, r);
  const Matrix diff = a.apply(probe) - h.apply(probe);
  return std::sqrt(diff.squaredNorm() / static_cast<double>(r));
}

Matrix dense_from_oracle(const MatrixOracle& a) {
  return a.extract(range_list(0, a.rows), range_list(0, a.cols));
}

void check_trees(Index rows, Index cols, const ClusterTree& rt, const ClusterTree& ct) {
  if (rt.size() != rows || ct.size() != cols) {
    throw TreeMismatch("compress: tree sizes do not match the matrix");
  }
  if (!rt.same_shape(ct)) throw TreeMismatch("compress: row and column trees differ in shape");
}

}  // namespace

HssMatrix compress_randomized(const MatrixOracle& a, const ClusterTree& rows,
                              const ClusterTree& cols, const CompressOptions& opts,
                              RngStream& rng, CompressReport* report) {
  check_trees(a.rows, a.cols, rows, cols);
  CompressReport rep;
  if (rows.empty()) {
    if (report) *report = rep;
    return HssMatrix(rows, cols);
  }
  const Index n_min = std::min(a.rows, a.cols);
  const int nonroot = std::max(rows.num_nodes() - 1, 1);
  Index k = std::max<Index>(opts.k0, 1);
  const Index r = std::max<Index>(opts.r, 1);

  Samples smp;
  smp.om = gaussian_sample(rng, a.cols, k + r);
  smp.ps = gaussian_sample(rng, a.rows, k + r);
  smp.s = a.apply(smp.om);
  smp.t = a.apply_adjoint(smp.ps);

  double eps = opts.eps;
  if (opts.mode == ToleranceMode::relative) {
    const double norm_est = smp.s.norm() / std::sqrt(static_cast<double>(smp.om.cols()));
    eps *= std::max(1.0, norm_est);
  }
  double scale = 0.5;
  HssMatrix best;
  for (int round = 1;; ++round) {
    rep.rounds = round;
    const double samples = static_cast<double>(smp.om.cols());
    const double tol = scale * eps * std::sqrt(samples / (2.0 * nonroot));
    SweepResult res = sweep(smp, a.extract, rows, cols, tol, k);
    rep.error_estimate = estimate_error(a, res.h, rng, r);
    rep.final_k = k;
    if (rep.error_estimate <= eps) {
      best = std::move(res.h);
      break;
    }
    if (res.hit_cap) {
      k += r;
    } else {
      scale *= 0.25;
    }
    if (2 * k > n_min || round >= 40) {
      rep.saturated = true;
      if (!opts.dense_fallback) throw RankSaturated("compress_randomized: rank saturated");
      best = compress_dense(dense_from_oracle(a), rows, cols, eps, ToleranceMode::absolute);
      break;
    }
    if (res.hit_cap) {
      Matrix om2 = gaussian_sample(rng, a.cols, r);
      Matrix ps2 = gaussian_sample(rng, a.rows, r);
      smp.s = detail::hstack(smp.s, a.apply(om2));
      smp.t = detail::hstack(smp.t, a.apply_adjoint(ps2));
      smp.om = detail::hstack(smp.om, om2);
      smp.ps = detail::hstack(smp.ps, ps2);
    }
  }
  if (report) *report = rep;
  return best;
}

HssMatrix compress_dense(const Matrix& a, const ClusterTree& rows, const ClusterTree& cols,
                         double eps, ToleranceMode mode) {
  check_trees(a.rows(), a.cols(), rows, cols);
  if (rows.empty()) return HssMatrix(rows, cols);
  const double target =
      (mode == ToleranceMode::relative) ? eps * std::max(1.0, a.norm()) : eps;
  Samples smp;
  smp.om = Matrix::Identity(a.cols(), a.cols());
  smp.ps = Matrix::Identity(a.rows(), a.rows());
  smp.s = a;
  smp.t = a.transpose();
  Extractor ex = [&a](const IndexList& r, const IndexList& c) {
    Matrix out(static_cast<Index>(r.size()), static_cast<Index>(c.size()));
    for (std::size_t j = 0; j < c.size(); ++j) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        out(static_cast<Index>(i), static_cast<Index>(j)) = a(r[i], c[j]);
      }
    }
    return out;
  };
  const int nonroot = std::max(rows.num_nodes() - 1, 1);
  const Index kcap = std::max(a.rows(), a.cols());
  double tol = 0.5 * target / std::sqrt(2.0 * nonroot);
  HssMatrix h;
  for (int attempt = 0; attempt < 12; ++attempt) {
    h = sweep(smp, ex, rows, cols, tol, kcap).h;
    if ((a - h.to_dense()).norm() <= target) return h;
    tol *= 0.25;
  }
  return sweep(smp, ex, rows, cols, 0.0, kcap).h;
}

HssMatrix compress_sparse_connectivity(const SparseMatrix& a, const ClusterTree& rows,
                                       const ClusterTree& cols) {
  check_trees(a.rows(), a.cols(), rows, cols);
  HssMatrix h(rows, cols);
  if (rows.empty()) return h;
  const SparseMatrix::ColumnIndex& ci = a.column_index();
  const Index beta = std::max(rows.block_size(), cols.block_size());
  std::vector<IndexList> rsk(static_cast<std::size_t>(h.num_nodes()));
  std::vector<IndexList> csk(static_cast<std::size_t>(h.num_nodes()));

  auto row_escapes = [&](Index i, Index lo, Index hi) {
    for (Index p = a.row_ptr()[static_cast<std::size_t>(i)];
         p < a.row_ptr()[static_cast<std::size_t>(i) + 1]; ++p) {
      const Index j = a.col_idx()[static_cast<std::size_t>(p)];
      if (j < lo || j >= hi) return true;
    }
    return false;
  };
  auto col_escapes = [&](Index j, Index lo, Index hi) {
    for (Index p = ci.col_ptr[static_cast<std::size_t>(j)];
         p < ci.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      const Index i = ci.row_idx[static_cast<std::size_t>(p)];
      if (i < lo || i >= hi) return true;
    }
    return false;
  };
  auto select = [](const IndexList& from, const IndexList& keep) {
    // Selection matrix with one unit per kept entry.
    Matrix s = Matrix::Zero(static_cast<Index>(from.size()), static_cast<Index>(keep.size()));
    std::size_t p = 0;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      while (from[p] != keep[k]) ++p;
      s(static_cast<Index>(p), static_cast<Index>(k)) = 1.0;
    }
    return s;
  };

  for (int i = 0; i < h.num_nodes(); ++i) {
    const auto& rn = rows.node(i);
    const auto& cn = cols.node(i);
    HssNode& nd = h.node(i);
    IndexList rcand, ccand;
    if (rn.is_leaf()) {
      rcand = range_list(rn.lo, rn.hi);
      ccand = range_list(cn.lo, cn.hi);
      nd.D = a.extract(rcand, ccand);
    } else {
      const auto l = static_cast<std::size_t>(rn.left), r = static_cast<std::size_t>(rn.right);
      nd.B12 = a.extract(rsk[l], csk[r]);
      nd.B21 = a.extract(rsk[r], csk[l]);
      rcand = rsk[l];
      rcand.insert(rcand.end(), rsk[r].begin(), rsk[r].end());
      ccand = csk[l];
      ccand.insert(ccand.end(), csk[r].begin(), csk[r].end());
    }
    if (i == h.root()) break;
    IndexList rk, ck;
    for (Index x : rcand) {
      if (row_escapes(x, cn.lo, cn.hi)) rk.push_back(x);
    }
    for (Index x : ccand) {
      if (col_escapes(x, rn.lo, rn.hi)) ck.push_back(x);
    }
    if (static_cast<Index>(rk.size()) > beta || static_cast<Index>(ck.size()) > beta) {
      throw NotCompressible("compress_sparse_connectivity: node " + std::to_string(i) +
                            " needs rank " + std::to_string(std::max(rk.size(), ck.size())));
    }
    nd.U = select(rcand, rk);
    nd.V = select(ccand, ck);
    rsk[static_cast<std::size_t>(i)] = std::move(rk);
    csk[static_cast<std::size_t>(i)] = std::move(ck);
  }
  return h;
}

}  // namespace hiprec

#include <gtest/gtest.h>

#include <functional>

#include "hiprec/hss.hpp"
#include "json.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace hiprec;
using hiprec::test::telescoping_product;

namespace {

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

HssMatrix kernel_hss(Index n, Index beta, std::uint64_t seed, double eps = 1e-10) {
  const Matrix a = test::kernel_matrix_nonsym(n, seed);
  const ClusterTree t = build_uniform(n, beta);
  return compress_dense(a, t, t, eps);
}

}  // namespace

TEST(Hss, CompressDenseMeetsTolerance) {
  const Matrix a = test::kernel_matrix_nonsym(96, 1);
  const ClusterTree t = build_uniform(96, 12);
  const HssMatrix h = compress_dense(a, t, t, 1e-8);
  const auto errs = h.check();
  EXPECT_TRUE(errs.empty()) << (errs.empty() ? "" : errs.front());
  EXPECT_LE((a - h.to_dense()).norm(), 1e-8 * a.norm());
  EXPECT_LT(h.max_rank(), 30);
}

TEST(Hss, EvaluationPathsAgree) {
  const HssMatrix h = kernel_hss(70, 9, 2);
  const Matrix d = h.to_dense();
  const Matrix x = test::random_matrix(70, 3, 1);
  EXPECT_LT(rel(h.apply(x), d * x), 1e-13);
  EXPECT_LT(rel(h.apply_adjoint(x), d.transpose() * x), 1e-13);
  EXPECT_NEAR(h.entry(3, 61), d(3, 61), 1e-14);
  const IndexList rows{5, 60, 1, 33}, cols{69, 0, 34};
  const Matrix e = h.extract(rows, cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      EXPECT_NEAR(e(static_cast<Index>(i), static_cast<Index>(j)), d(rows[i], cols[j]), 1e-14);
    }
  }
  EXPECT_NEAR(h.frobenius_norm(), d.norm(), 1e-12 * d.norm());
  EXPECT_LT(rel(h.transpose().to_dense(), d.transpose()), 1e-15);
}

TEST(Hss, TelescopingIdentity) {
  for (Index depth = 1; depth <= 3; ++depth) {
    const Index n = 8 << depth;
    const HssMatrix h = kernel_hss(n, 8, 3 + static_cast<std::uint64_t>(depth));
    ASSERT_EQ(h.row_tree().depth(), depth);
    EXPECT_LT(rel(telescoping_product(h), h.to_dense()), 1e-13) << "depth " << depth;
  }
}

TEST(Hss, RandomizedCompressionMeetsTolerance) {
  const Matrix a = test::kernel_matrix_nonsym(128, 4);
  const ClusterTree t = build_uniform(128, 16);
  CompressOptions o;
  o.eps = 1e-6;
  o.k0 = 8;
  o.r = 5;
  RngStream rng(11, 0);
  CompressReport rep;
  const HssMatrix h = compress_randomized(dense_oracle(a), t, t, o, rng, &rep);
  EXPECT_FALSE(rep.saturated);
  EXPECT_LE((a - h.to_dense()).norm(), 3e-6);
}

TEST(Hss, RandomizedCompressionIsDeterministic) {
  const Matrix a = test::kernel_matrix(64, 5);
  const ClusterTree t = build_uniform(64, 8);
  CompressOptions o;
  o.k0 = 6;
  o.r = 4;
  RngStream r1(3, 7), r2(3, 7);
  const HssMatrix h1 = compress_randomized(dense_oracle(a), t, t, o, r1);
  const HssMatrix h2 = compress_randomized(dense_oracle(a), t, t, o, r2);
  for (int i = 0; i < h1.num_nodes(); ++i) {
    EXPECT_EQ(h1.node(i).U, h2.node(i).U);
    EXPECT_EQ(h1.node(i).B12, h2.node(i).B12);
  }
}

TEST(Hss, RandomizedCompressionGrowsRank) {
  const Matrix a = test::kernel_matrix(128, 9);
  const ClusterTree t = build_uniform(128, 16);
  CompressOptions o;
  o.k0 = 1;
  o.r = 2;
  o.eps = 1e-9;
  RngStream rng(5, 0);
  CompressReport rep;
  const HssMatrix h = compress_randomized(dense_oracle(a), t, t, o, rng, &rep);
  EXPECT_GT(rep.rounds, 1);
  EXPECT_LE((a - h.to_dense()).norm(), 3e-9);
}

TEST(Hss, SaturationFallsBackOrThrows) {
  const Matrix a = test::random_matrix(40, 40, 1);
  const ClusterTree t = build_uniform(40, 5);
  CompressOptions o;
  o.k0 = 3;
  o.r = 4;
  o.eps = 1e-10;
  RngStream rng(1, 0);
  CompressReport rep;
  const HssMatrix h = compress_randomized(dense_oracle(a), t, t, o, rng, &rep);
  EXPECT_TRUE(rep.saturated);
  EXPECT_LE((a - h.to_dense()).norm(), 1e-9);
  o.dense_fallback = false;
  RngStream rng2(1, 0);
  EXPECT_THROW(compress_randomized(dense_oracle(a), t, t, o, rng2), RankSaturated);
}

TEST(Hss, SparseConnectivityIsExact) {
  const Index n = 40;
  std::vector<Triplet> tr;
  for (Index i = 0; i < n; ++i) {
    tr.push_back({i, i, 4.0});
    if (i + 1 < n) tr.push_back({i, i + 1, -1.0});
    if (i > 0) tr.push_back({i, i - 1, -2.0});
  }
  const SparseMatrix a = SparseMatrix::from_triplets(n, n, tr);
  const ClusterTree t = build_uniform(n, 5);
  const HssMatrix h = compress_sparse_connectivity(a, t, t);
  EXPECT_EQ((h.to_dense() - a.to_dense()).norm(), 0.0);
  EXPECT_LE(h.max_rank(), 2);
}

TEST(Hss, SparseConnectivityRejectsDenseCoupling) {
  const Matrix d = test::random_matrix(16, 16, 2);
  const SparseMatrix a = SparseMatrix::from_dense(d);
  const ClusterTree t = build_uniform(16, 2);
  EXPECT_THROW(compress_sparse_connectivity(a, t, t), NotCompressible);
}

TEST(Hss, UlvSolveMatchesDense) {
  const HssMatrix h = kernel_hss(150, 10, 6);
  const Matrix d = h.to_dense();
  const Matrix b = test::random_matrix(150, 2, 3);
  const UlvFactorization f = ulv_factor(h);
  const Matrix x = f.solve(b);
  EXPECT_LT((d * x - b).norm() / b.norm(), 1e-12);
  EXPECT_LT(rel(ulv_solve(f, b), d.lu().solve(b)), 1e-10);
}

TEST(Hss, UlvOnUnevenTree) {
  const Matrix a = test::kernel_matrix_nonsym(37, 8);
  const ClusterTree t = build_partitioned(12, 25, 4, 1, 20);
  const HssMatrix h = compress_dense(a, t, t, 1e-12);
  const Matrix b = test::random_matrix(37, 1, 1);
  EXPECT_LT((a * ulv_factor(h).solve(b) - b).norm(), 1e-9);
}

TEST(Hss, UlvDetectsSingularMatrix) {
  const ClusterTree t = build_uniform(16, 4);
  const HssMatrix z(t, t);
  EXPECT_THROW(ulv_factor(z), SingularBlock);
}

TEST(Hss, AddSubtractMultiply) {
  const HssMatrix a = kernel_hss(80, 10, 7);
  const HssMatrix b = kernel_hss(80, 10, 8);
  const Matrix da = a.to_dense(), db = b.to_dense();
  const double eps = 1e-9;
  EXPECT_LE((add(a, b, eps).to_dense() - (da + db)).norm(), eps * (da.norm() + db.norm()));
  EXPECT_LE((subtract(a, b, eps).to_dense() - (da - db)).norm(), eps * (da.norm() + db.norm()));
  EXPECT_LE((multiply(a, b, eps).to_dense() - da * db).norm(), eps * da.norm() * db.norm());
  EXPECT_LT(rel(multiply_exact(a, b).to_dense(), da * db), 1e-13);
  EXPECT_LT(rel(add_exact(a, b, -2.0).to_dense(), da - 2 * db), 1e-14);
}

TEST(Hss, MultiplyOnPartitionedTrees) {
  const ClusterTree t = build_partitioned(13, 22, 4, 1, 16);
  const Matrix da = test::kernel_matrix_nonsym(35, 1), db = test::kernel_matrix(35, 2);
  const HssMatrix a = compress_dense(da, t, t, 1e-12), b = compress_dense(db, t, t, 1e-12);
  EXPECT_LT(rel(multiply_exact(a, b).to_dense(), a.to_dense() * b.to_dense()), 1e-13);
}

TEST(Hss, RecompressionReducesRedundantRank) {
  const HssMatrix a = kernel_hss(64, 8, 9);
  const HssMatrix doubled = add_exact(a, a, 1.0);
  const HssMatrix r = recompress(doubled, 1e-10);
  EXPECT_LE(r.max_rank(), a.max_rank());
  EXPECT_LT((r.to_dense() - 2 * a.to_dense()).norm(), 1e-10);
}

TEST(Hss, EqualizeRanksPreservesMatrix) {
  const HssMatrix a = kernel_hss(64, 8, 10, 1e-6);
  const HssMatrix e = equalize_ranks(a);
  for (int i = 0; i + 1 < e.num_nodes(); ++i) EXPECT_EQ(e.row_rank(i), e.col_rank(i));
  EXPECT_LT(rel(e.to_dense(), a.to_dense()), 1e-14);
}

TEST(Hss, InverseMatchesDense) {
  const HssMatrix a = kernel_hss(120, 10, 11);
  const Matrix d = a.to_dense();
  const HssMatrix inv = inverse(a);
  EXPECT_LT((d * inv.to_dense() - Matrix::Identity(120, 120)).norm(), 1e-10);
}

TEST(Hss, LdivideMeetsTolerance) {
  const HssMatrix a = kernel_hss(90, 10, 12);
  const HssMatrix b = kernel_hss(90, 10, 13);
  const double eps = 1e-8;
  const HssMatrix x = ldivide(a, b, eps);
  const Matrix db = b.to_dense();
  EXPECT_LE((a.to_dense() * x.to_dense() - db).norm(), eps * db.norm());
}

TEST(Hss, ArithmeticRejectsMismatchedTrees) {
  const HssMatrix a = kernel_hss(64, 8, 1);
  const HssMatrix b = kernel_hss(64, 16, 2);
  EXPECT_THROW(add(a, b, 1e-6), TreeMismatch);
  EXPECT_THROW(multiply(a, b, 1e-6), TreeMismatch);
}

TEST(Hss, SplitTopReassembles) {
  const HssMatrix h = kernel_hss(50, 7, 14);
  const Matrix d = h.to_dense();
  const TopSplit s = split_top(h);
  const Index n1 = s.h11.rows();
  Matrix re(50, 50);
  re.topLeftCorner(n1, n1) = s.h11.to_dense();
  re.bottomRightCorner(50 - n1, 50 - n1) = s.h22.to_dense();
  re.topRightCorner(n1, 50 - n1) = s.h12.dense();
  re.bottomLeftCorner(50 - n1, n1) = s.h21.dense();
  EXPECT_LT(rel(re, d), 1e-14);
  const ClusterTree leaf = build_uniform(5, 8);
  EXPECT_THROW(split_top(HssMatrix(leaf, leaf)), NoTopSplit);
}

TEST(Hss, JsonDumpParses) {
  const HssMatrix h = kernel_hss(32, 8, 15);
  const auto j = nlohmann::json::parse(to_json(h));
  EXPECT_EQ(j["rows"], 32);
  EXPECT_EQ(j["nodes"].size(), static_cast<std::size_t>(h.num_nodes()));
}

TEST(Hss, EmptyMatrixIsAccepted) {
  const ClusterTree t = build_uniform(0, 4);
  const HssMatrix h = compress_dense(Matrix(0, 0), t, t, 1e-6);
  EXPECT_EQ(h.apply(Matrix(0, 2)).rows(), 0);
  EXPECT_EQ(ulv_factor(h).solve(Matrix(0, 1)).rows(), 0);
}

namespace {

HssMatrix identity_hss(Index n, Index beta, double scale = 1.0) {
  const ClusterTree t = build_uniform(n, beta);
  return compress_dense(scale * Matrix::Identity(n, n), t, t, 1e-12);
}

}  // namespace

TEST(HssExamples, IdentityAndZero) {
  const HssMatrix id = identity_hss(32, 4);
  EXPECT_EQ(id.max_rank(), 0);
  const Matrix x = test::random_matrix(32, 2, 1);
  EXPECT_EQ(id.apply(x), x);
  EXPECT_EQ(id.entry(0, 1), 0.0);
  EXPECT_EQ(id.entry(5, 5), 1.0);
  const ClusterTree t = build_uniform(32, 4);
  CompressOptions o;
  RngStream rng(1, 0);
  CompressReport rep;
  const HssMatrix z = compress_randomized(dense_oracle(Matrix::Zero(32, 32)), t, t, o, rng, &rep);
  EXPECT_EQ(z.max_rank(), 0);
  EXPECT_EQ(rep.error_estimate, 0.0);
  EXPECT_EQ(z.to_dense().norm(), 0.0);
  RngStream rng2(1, 1);
  const HssMatrix ri = compress_randomized(dense_oracle(Matrix::Identity(32, 32)), t, t, o, rng2);
  EXPECT_EQ(ri.max_rank(), 0);
  for (int leaf : t.leaves()) {
    EXPECT_LT((ri.node(leaf).D - Matrix::Identity(4, 4)).norm(), 1e-14);
  }
}

TEST(HssExamples, BlockDiagonalProducts) {
  const Index n = 24, beta = 6;
  const ClusterTree t = build_uniform(n, beta);
  Matrix a = Matrix::Zero(n, n), b = Matrix::Zero(n, n);
  for (int leaf : t.leaves()) {
    const Index lo = t.node(leaf).lo, sz = t.node(leaf).size();
    a.block(lo, lo, sz, sz) = test::random_matrix(sz, sz, static_cast<std::uint64_t>(leaf));
    b.block(lo, lo, sz, sz) = test::random_matrix(sz, sz, 50 + static_cast<std::uint64_t>(leaf));
  }
  const HssMatrix ha = compress_dense(a, t, t, 1e-12), hb = compress_dense(b, t, t, 1e-12);
  EXPECT_EQ(ha.max_rank(), 0);
  const Matrix x = test::random_matrix(n, 3, 2);
  EXPECT_LT(rel(ha.apply(x), a * x), 1e-14);
  const HssMatrix p = multiply(ha, hb, 1e-12);
  EXPECT_EQ(p.max_rank(), 0);
  EXPECT_LT(rel(p.to_dense(), a * b), 1e-13);
}

TEST(HssExamples, RankOneAndKernel) {
  const Matrix u = test::random_matrix(48, 1, 3), v = test::random_matrix(48, 1, 4);
  const ClusterTree t = build_uniform(48, 6);
  const HssMatrix r1 = compress_dense(u * v.transpose(), t, t, 1e-10);
  EXPECT_EQ(r1.max_rank(), 1);

  Matrix k(128, 128);
  for (Index i = 0; i < 128; ++i) {
    for (Index j = 0; j < 128; ++j) k(i, j) = 1.0 / (1.0 + static_cast<double>(std::abs(i - j)));
  }
  const ClusterTree t128 = build_uniform(128, 16);
  CompressOptions o;
  o.eps = 1e-6;
  RngStream rng(2, 0);
  const HssMatrix h = compress_randomized(dense_oracle(k), t128, t128, o, rng);
  EXPECT_LE((k - h.to_dense()).norm(), 1e-6);
  const Matrix x = test::random_matrix(128, 2, 5);
  EXPECT_LT(rel(h.apply(x), k * x), 1e-6);
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<Index> pick(0, 127);
  const Matrix hd = h.to_dense();
  for (int s = 0; s < 100; ++s) {
    const Index i = pick(gen), j = pick(gen);
    EXPECT_NEAR(h.entry(i, j), hd(i, j), 1e-14);
  }
}

TEST(HssExamples, SpdFromLaplacianInverse) {
  const Index n = 96;
  Matrix lap = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    lap(i, i) = 2.0;
    if (i > 0) lap(i, i - 1) = lap(i - 1, i) = -1.0;
  }
  const Matrix a = lap.inverse();
  const ClusterTree t = build_uniform(n, 12);
  const HssMatrix h = compress_dense(a, t, t, 1e-8, ToleranceMode::absolute);
  EXPECT_LE((a - h.to_dense()).norm(), 1e-8);
  const Matrix b = test::random_matrix(n, 2, 6);
  const Matrix x = ulv_solve(ulv_factor(h), b);
  EXPECT_LT(rel(h.to_dense() * x, b), 1e-10);
}

TEST(HssExamples, SparseConnectivityRanks) {
  const Index n = 24;
  const ClusterTree t = build_uniform(n, 6);
  std::vector<Triplet> diag;
  for (int leaf : t.leaves()) {
    for (Index i = t.node(leaf).lo; i < t.node(leaf).hi; ++i) {
      for (Index j = t.node(leaf).lo; j < t.node(leaf).hi; ++j) diag.push_back({i, j, 1.0 + static_cast<double>(i + j)});
    }
  }
  const SparseMatrix bd = SparseMatrix::from_triplets(n, n, diag);
  EXPECT_EQ(compress_sparse_connectivity(bd, t, t).max_rank(), 0);
  std::vector<Triplet> one = diag;
  one.push_back({1, 20, 3.0});
  const SparseMatrix a1 = SparseMatrix::from_triplets(n, n, one);
  const HssMatrix h1 = compress_sparse_connectivity(a1, t, t);
  EXPECT_EQ(h1.max_rank(), 1);
  EXPECT_EQ((h1.to_dense() - a1.to_dense()).norm(), 0.0);
}

namespace {

/// Largest HSS rank of the sparse coupling between the two interior parts of
/// every branch node, on the aligned clipped trees used by the factorization.
Index interface_rank(const Problem& pr, Index beta) {
  Index worst = 0;
  for (int s = 0; s < pr.tree.num_nodes(); ++s) {
    if (pr.tree.node(s).is_leaf()) continue;
    const NodePartition p = node_partition(pr.tree, s);
    const Index nl = static_cast<Index>(p.interior_left.size());
    const Index nr = static_cast<Index>(p.interior_right.size());
    if (nl == 0 || nr == 0) continue;
    const ClusterTree base = build_uniform(std::max(nl, nr), beta, pr.dofs_per_element);
    const SparseMatrix c = pr.a.submatrix(p.interior_left, p.interior_right);
    const HssMatrix h = compress_sparse_connectivity(c, base.clip(nl), base.clip(nr));
    EXPECT_EQ((h.to_dense() - c.to_dense()).norm(), 0.0) << s;
    worst = std::max(worst, h.max_rank());
  }
  return worst;
}

}  // namespace

TEST(HssExamples, ConformingInterfaceHasRankOne) {
  const Problem pr = make_problem(8, {DiscKind::cg, 1, 10.0}, 0.0);
  EXPECT_LE(interface_rank(pr, 30), 1);
}

TEST(HssExamples, DiscontinuousInterfaceIsBlockDiagonal) {
  for (Index m : {8, 16}) {
    const Problem pr = make_problem(m, {DiscKind::ipdg, 1, 10.0}, 0.0);
    EXPECT_EQ(interface_rank(pr, 30), 0) << m;
  }
}

TEST(HssExamples, UlvOfScaledIdentity) {
  const Matrix b = test::random_matrix(40, 3, 7);
  EXPECT_LT(rel(ulv_solve(ulv_factor(identity_hss(40, 5)), b), b), 1e-15);
  EXPECT_LT(rel(ulv_solve(ulv_factor(identity_hss(40, 5, 2.0)), b), b / 2.0), 1e-15);
}

TEST(HssExamples, ArithmeticIdentities) {
  const HssMatrix a = kernel_hss(64, 8, 21);
  const ClusterTree t = a.row_tree();
  const HssMatrix zero(t, t);
  const Matrix da = a.to_dense();
  EXPECT_LT(rel(add(a, zero, 1e-12).to_dense(), da), 1e-12);
  const HssMatrix cancel = subtract(a, a, 1e-10);
  EXPECT_EQ(cancel.max_rank(), 0);
  EXPECT_LE(cancel.to_dense().norm(), 1e-10 * da.norm());
  const HssMatrix id = compress_dense(Matrix::Identity(64, 64), t, t, 1e-12);
  EXPECT_LT(rel(multiply(a, id, 1e-12).to_dense(), da), 1e-12);
  EXPECT_LT(rel(ldivide(id, a, 1e-12).to_dense(), da), 1e-12);
  const HssMatrix two = compress_dense(2.0 * Matrix::Identity(64, 64), t, t, 1e-12);
  EXPECT_LT(rel(ldivide(two, a, 1e-12).to_dense(), da / 2.0), 1e-12);
  const HssMatrix b = kernel_hss(64, 8, 22);
  EXPECT_LT(rel(add(a, b, 1e-10).to_dense(), da + b.to_dense()), 1e-10);
  EXPECT_LT(rel(multiply(a, b, 1e-8).to_dense(), da * b.to_dense()), 1e-7);
}

TEST(HssExamples, LdivideErrorsCompose) {
  for (double eps : {1e-4, 1e-8}) {
    const HssMatrix a = kernel_hss(80, 10, 23);
    const HssMatrix b = kernel_hss(80, 10, 24);
    const HssMatrix x = ldivide(a, b, eps);
    const Matrix db = b.to_dense();
    EXPECT_LE((a.to_dense() * x.to_dense() - db).norm(), 2 * eps * db.norm()) << eps;
  }
}

TEST(HssExamples, LdivideBySparseConnectivity) {
  const Index n = 48;
  const ClusterTree t = build_uniform(n, 8);
  std::vector<Triplet> tr;
  for (Index i = 0; i < n; ++i) {
    tr.push_back({i, i, 3.0});
    if (i + 1 < n) tr.push_back({i, i + 1, -1.0});
  }
  const SparseMatrix s = SparseMatrix::from_triplets(n, n, tr);
  const HssMatrix hs = compress_sparse_connectivity(s, t, t);
  const Matrix k = test::kernel_matrix(n, 25);
  const HssMatrix hk = compress_dense(k, t, t, 1e-12);
  const HssMatrix x = ldivide(hk, hs, 1e-10);
  const Matrix ref = k.partialPivLu().solve(s.to_dense());
  EXPECT_LT(rel(x.to_dense(), ref), 1e-8);
}

TEST(HssExamples, SplitTopQuadrants) {
  const HssMatrix id = identity_hss(16, 4);
  const TopSplit s = split_top(id);
  EXPECT_EQ(s.h11.to_dense(), Matrix::Identity(8, 8));
  EXPECT_EQ(s.h22.to_dense(), Matrix::Identity(8, 8));
  EXPECT_EQ(s.h12.rank(), 0);
  EXPECT_EQ(s.h21.rank(), 0);

  Matrix r1 = Matrix::Identity(16, 16);
  r1(2, 12) = 5.0;
  const ClusterTree t16 = build_uniform(16, 4);
  const TopSplit s1 = split_top(compress_dense(r1, t16, t16, 1e-12));
  EXPECT_EQ(s1.h12.rank(), 1);
  EXPECT_LT((s1.h12.dense() - r1.topRightCorner(8, 8)).norm(), 1e-14);

  const Matrix a = test::kernel_matrix_nonsym(96, 26);
  const ClusterTree tp = build_partitioned(40, 56, 12);
  const HssMatrix h = compress_dense(a, tp, tp, 1e-10);
  const Matrix d = h.to_dense();
  const TopSplit q = split_top(h);
  EXPECT_LT(rel(q.h11.to_dense(), d.topLeftCorner(40, 40)), 1e-14);
  EXPECT_LT(rel(q.h22.to_dense(), d.bottomRightCorner(56, 56)), 1e-14);
  EXPECT_LT(rel(q.h12.dense(), d.topRightCorner(40, 56)), 1e-14);
  EXPECT_LT(rel(q.h21.dense(), d.bottomLeftCorner(56, 40)), 1e-14);
}

TEST(HssExamples, RandomizedMeetsToleranceOverSeeds) {
  const std::vector<Matrix> mats = {test::kernel_matrix_nonsym(128, 30),
                                    test::fem_schur_matrix(128, 0.0)};
  const ClusterTree t = build_uniform(128, 16);
  for (const Matrix& a : mats) {
    int misses = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CompressOptions o;
      o.eps = 1e-6;
      RngStream rng(seed, 0);
      const HssMatrix h = compress_randomized(dense_oracle(a), t, t, o, rng);
      if ((a - h.to_dense()).norm() > 3e-6) ++misses;
    }
    EXPECT_LE(misses, 1);
  }
}

TEST(HssExamples, BlockRowsRespectRank) {
  const Matrix a = test::kernel_matrix_nonsym(96, 27);
  const ClusterTree t = build_uniform(96, 12);
  const double eps = 1e-8;
  const HssMatrix h = compress_dense(a, t, t, eps, ToleranceMode::absolute);
  const Matrix d = h.to_dense();
  for (int id = 0; id < t.num_nodes(); ++id) {
    if (id == t.root()) continue;
    const ClusterNode& nd = t.node(id);
    Matrix row(nd.size(), 96 - nd.size());
    row << d.block(nd.lo, 0, nd.size(), nd.lo), d.block(nd.lo, nd.hi, nd.size(), 96 - nd.hi);
    const Eigen::JacobiSVD<Matrix> svd(row);
    const Index numeric = tail_rank(svd.singularValues(), eps);
    EXPECT_LE(numeric, h.max_rank()) << id;
  }
  const Matrix x = test::random_matrix(96, 1, 8), y = test::random_matrix(96, 1, 9);
  const double lhs = y.col(0).dot(h.matvec(x.col(0)));
  const double rhs = x.col(0).dot(h.matvec_adjoint(y.col(0)));
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
}

#include <gtest/gtest.h>

#include <map>
#include <random>

#include "hiprec/fem2d.hpp"
#include "hiprec/precond.hpp"
#include "oracle.hpp"

using namespace hiprec;
using hiprec::test::dense_frontal;
using hiprec::test::dense_schur;
using hiprec::test::rel_diff;

namespace {

BuildOptions defaults_for(const Problem& pr, int p) {
  BuildOptions o;
  o.beta = 10 * (p + 1) * (p + 2) / 2;
  o.granularity = pr.dofs_per_element;
  return o;
}

BuildOptions all_dense(const Problem& pr, int p) {
  BuildOptions o = defaults_for(pr, p);
  o.lhss_auto = false;
  o.lhss = -1;
  return o;
}

Problem poisson(Index m, int p = 1, DiscKind kind = DiscKind::ipdg) {
  return make_problem(m, {kind, p, 10.0}, 0.0);
}

Matrix random_matrix(Index n, Index k, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix x(n, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) x(i, j) = nd(gen);
  }
  return x;
}

Matrix apply_a(const SparseMatrix& a, const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) y.col(j) = a.matvec(x.col(j));
  return y;
}

/// ||P^{-1} A - I||_F, accumulated over column blocks.
double inverse_defect(const Preconditioner& pc, const SparseMatrix& a) {
  const Index n = a.rows();
  double sq = 0.0;
  for (Index c0 = 0; c0 < n; c0 += 256) {
    const Index nc = std::min<Index>(256, n - c0);
    Matrix e = Matrix::Zero(n, nc);
    for (Index j = 0; j < nc; ++j) e(c0 + j, j) = 1.0;
    sq += (pc.apply(apply_a(a, e)) - e).squaredNorm();
  }
  return std::sqrt(sq);
}

/// Probe estimate of ||P^{-1} A - I||_F.
double probe_defect(const Preconditioner& pc, const SparseMatrix& a, int probes) {
  const Matrix x = random_matrix(a.rows(), probes, 99);
  return (pc.apply(apply_a(a, x)) - x).norm() / std::sqrt(static_cast<double>(probes));
}

/// Sparse matrix with the diagonal of a only.
SparseMatrix diagonal_of(const SparseMatrix& a) {
  std::vector<Triplet> t;
  for (Index i = 0; i < a.rows(); ++i) t.push_back({i, i, a.entry(i, i)});
  return SparseMatrix::from_triplets(a.rows(), a.cols(), t);
}

int largest_structured(const Preconditioner& pc, bool with_boundary) {
  int best = -1;
  for (int s = 0; s < pc.num_nodes(); ++s) {
    const NodeSummary& nd = pc.node(s);
    if (!nd.structured || (with_boundary && nd.boundary == 0)) continue;
    if (best < 0 || nd.interior > pc.node(best).interior) best = s;
  }
  return best;
}

IndexList positions(const IndexList& from, const IndexList& in) {
  std::map<Index, Index> pos;
  for (std::size_t k = 0; k < in.size(); ++k) pos[in[k]] = static_cast<Index>(k);
  IndexList out;
  for (Index g : from) out.push_back(pos.at(g));
  return out;
}

}  // namespace

TEST(Precond, SingleNodeIsExactInverse) {
  const Index n = 50;
  const Matrix d = random_matrix(n, n, 1) + 20.0 * Matrix::Identity(n, n);
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) t.push_back({i, j, d(i, j)});
  }
  const SparseMatrix a = SparseMatrix::from_triplets(n, n, t);
  std::vector<EliminationNode> nodes(1);
  for (Index i = 0; i < n; ++i) nodes[0].interior.push_back(i);
  const EliminationTree tree = EliminationTree::from_interiors(nodes, a);
  const Preconditioner pc = Preconditioner::factor(a, tree, BuildOptions{});
  EXPECT_LT((pc.apply(d) - Matrix::Identity(n, n)).norm(), 1e-10);
  const Vector x = random_matrix(n, 1, 2).col(0);
  EXPECT_LT((pc.apply(Vector(d * x)) - x).norm() / x.norm(), 1e-10);
}

TEST(Precond, DecoupledMatrixHasZeroUpdates) {
  const Problem pr = poisson(16);
  const SparseMatrix a = diagonal_of(pr.a);
  BuildOptions o = defaults_for(pr, 1);
  o.lhss_auto = false;
  o.lhss = pr.tree.depth();
  o.root_dense_limit = 0;
  o.keep_schur = true;
  const Preconditioner pc = Preconditioner::factor(a, pr.tree, o);
  const Matrix dense = a.to_dense();
  for (int s = 0; s < pc.num_nodes(); ++s) {
    EXPECT_EQ(pc.lower(s).norm(), 0.0) << s;
    EXPECT_EQ(pc.upper(s).norm(), 0.0) << s;
    if (s == pr.tree.root()) continue;
    const IndexList& ord = pc.schur_order(s);
    EXPECT_LT((pc.schur(s) - dense(ord, ord)).norm(), 1e-12 * dense.norm()) << s;
  }
  EXPECT_FALSE(pc.stats().dense_only);
  EXPECT_EQ(pc.stats().k_max, 0);
  const Matrix x = random_matrix(a.rows(), 3, 4);
  EXPECT_LT(rel_diff(pc.apply(apply_a(a, x)), x), 1e-12);
}

TEST(Precond, LeafFrontalIsSparseSubmatrix) {
  const Problem pr = poisson(8);
  BuildOptions o = all_dense(pr, 1);
  std::map<int, Matrix> fronts;
  o.on_frontal = [&](int s, const Matrix& f) { fronts[s] = f; };
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
  const Matrix dense = pr.a.to_dense();
  for (int s = 0; s < pc.num_nodes(); ++s) {
    if (!pr.tree.node(s).is_leaf()) continue;
    IndexList f = pc.interior_order(s);
    f.insert(f.end(), pc.boundary_order(s).begin(), pc.boundary_order(s).end());
    EXPECT_EQ((fronts.at(s) - dense(f, f)).norm(), 0.0) << s;
  }
}

TEST(Precond, DenseFactorsMatchEliminationOracle) {
  const Problem pr = poisson(16);
  BuildOptions o = all_dense(pr, 1);
  o.keep_schur = true;
  std::map<int, Matrix> fronts;
  o.on_frontal = [&](int s, const Matrix& f) { fronts[s] = f; };
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
  EXPECT_TRUE(pc.stats().dense_only);
  const Matrix dense = pr.a.to_dense();
  Index largest = 0;
  for (int s = 0; s < pc.num_nodes(); ++s) {
    const IndexList& in = pc.interior_order(s);
    const IndexList& bn = pc.boundary_order(s);
    largest = std::max<Index>(largest, static_cast<Index>(in.size() + bn.size()));
    const Matrix fo = dense_frontal(dense, pr.tree, s, in, bn);
    EXPECT_LT((fronts.at(s) - fo).norm(), 1e-12 * fo.norm()) << s;
    if (s == pr.tree.root()) continue;
    const Matrix so = dense_schur(dense, pr.tree, s, pc.schur_order(s));
    EXPECT_LT(rel_diff(pc.schur(s), so), 1e-10) << s;
    const Index ni = static_cast<Index>(in.size());
    const Index nb = static_cast<Index>(bn.size());
    const Eigen::PartialPivLU<Matrix> lu(fo.topLeftCorner(ni, ni));
    const Matrix r = -lu.solve(Matrix(fo.topRightCorner(ni, nb)));
    const Matrix l = -fo.bottomLeftCorner(nb, ni) * lu.inverse();
    EXPECT_LT(rel_diff(pc.upper(s), r), 1e-10) << s;
    EXPECT_LT(rel_diff(pc.lower(s), l), 1e-10) << s;
  }
  EXPECT_GE(pc.stats().k_max, largest / 2);
  EXPECT_LE(pc.stats().k_max, largest);
  const Matrix x = random_matrix(pr.a.rows(), 4, 5);
  EXPECT_LT(rel_diff(pc.apply(apply_a(pr.a, x)), x), 1e-9);
}

TEST(Precond, StructuredInteriorSolveMatchesDenseLu) {
  const Problem pr = poisson(16, 2);
  BuildOptions o = defaults_for(pr, 2);
  o.root_dense_limit = 0;
  std::map<int, Matrix> fronts;
  o.on_frontal = [&](int s, const Matrix& f) { fronts[s] = f; };
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
  const int s = largest_structured(pc, false);
  ASSERT_GE(s, 0);
  const Index ni = pc.node(s).interior;
  EXPECT_GE(ni, 150);
  const Matrix aii = fronts.at(s).topLeftCorner(ni, ni);
  const Matrix x = random_matrix(ni, 5, 6);
  const Eigen::PartialPivLU<Matrix> lu(aii);
  EXPECT_LT(rel_diff(pc.interior_solve(s, x), lu.solve(x)), 1e-5);
  EXPECT_LT(rel_diff(pc.interior_solve_transpose(s, x), lu.transpose().solve(x)), 1e-5);
  EXPECT_EQ(pc.interior_solve(s, Matrix::Zero(ni, 2)).norm(), 0.0);
}

TEST(Precond, LowRankFactorsMatchDenseForms) {
  const Problem pr = poisson(32);
  BuildOptions o = defaults_for(pr, 1);
  std::map<int, Matrix> fronts;
  o.on_frontal = [&](int s, const Matrix& f) { fronts[s] = f; };
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
  int checked = 0;
  for (int s = 0; s < pc.num_nodes(); ++s) {
    const NodeSummary& nd = pc.node(s);
    if (!nd.structured || nd.boundary == 0) continue;
    const Matrix& f = fronts.at(s);
    const Eigen::PartialPivLU<Matrix> lu(f.topLeftCorner(nd.interior, nd.interior));
    const Matrix r = -lu.solve(Matrix(f.topRightCorner(nd.interior, nd.boundary)));
    const Matrix l = -f.bottomLeftCorner(nd.boundary, nd.interior) * lu.inverse();
    EXPECT_LT(rel_diff(pc.upper(s), r), 1e-5) << s;
    EXPECT_LT(rel_diff(pc.lower(s), l), 1e-5) << s;
    EXPECT_LE(nd.rank_r, nd.rank_bound) << s;
    EXPECT_LE(nd.rank_l, nd.rank_bound) << s;
    EXPECT_LT(nd.rank_r, std::min(nd.interior, nd.boundary)) << s;
    ++checked;
  }
  EXPECT_GT(checked, 2);
}

TEST(Precond, SchurOracleMatchesDensifiedUpdate) {
  const Problem pr = poisson(16);
  BuildOptions o = defaults_for(pr, 1);
  std::map<int, Matrix> fronts;
  std::map<int, Matrix> oracle_dense, oracle_entries;
  std::map<int, IndexList> sample_rows, sample_cols;
  o.on_frontal = [&](int s, const Matrix& f) { fronts[s] = f; };
  o.on_schur_oracle = [&](int s, const MatrixOracle& orc) {
    oracle_dense[s] = orc.apply(Matrix::Identity(orc.cols, orc.cols));
    std::mt19937 gen(static_cast<unsigned>(s));
    std::uniform_int_distribution<Index> pick(0, orc.rows - 1);
    IndexList r, c;
    Matrix e(200, 1);
    for (int k = 0; k < 200; ++k) {
      r.push_back(pick(gen));
      c.push_back(pick(gen));
      e(k, 0) = orc.entry(r.back(), c.back());
    }
    oracle_entries[s] = e;
    sample_rows[s] = r;
    sample_cols[s] = c;
    const Matrix x = random_matrix(orc.rows, 2, 7);
    EXPECT_LT(rel_diff(orc.apply_adjoint(x), oracle_dense[s].transpose() * x), 1e-12);
  };
  o.keep_schur = true;
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
  ASSERT_FALSE(oracle_dense.empty());
  for (const auto& [s, od] : oracle_dense) {
    const NodeSummary& nd = pc.node(s);
    const Matrix& f = fronts.at(s);
    const Matrix upd = f.bottomRightCorner(nd.boundary, nd.boundary) +
                       f.bottomLeftCorner(nd.boundary, nd.interior) * pc.upper(s);
    const IndexList q = positions(pc.schur_order(s), pc.boundary_order(s));
    const Matrix ref = upd(q, q);
    EXPECT_LT(rel_diff(od, ref), 1e-10) << s;
    Matrix ent(200, 1);
    for (int k = 0; k < 200; ++k) {
      ent(k, 0) = ref(sample_rows[s][static_cast<std::size_t>(k)],
                      sample_cols[s][static_cast<std::size_t>(k)]);
    }
    EXPECT_LT((oracle_entries[s] - ent).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff())
        << s;
    EXPECT_LT(rel_diff(pc.schur(s), ref), 1e-4) << s;
  }
}

TEST(Precond, StructuredSchurMatchesEliminationOracle) {
  const Problem pr = poisson(16);
  BuildOptions o = defaults_for(pr, 1);
  o.keep_schur = true;
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
  const Matrix dense = pr.a.to_dense();
  int checked = 0;
  for (int s = 0; s < pc.num_nodes(); ++s) {
    if (!pc.node(s).structured || s == pr.tree.root()) continue;
    const Matrix so = dense_schur(dense, pr.tree, s, pc.schur_order(s));
    EXPECT_LT(rel_diff(pc.schur(s), so), 1e-4) << s;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Precond, ApplyIsLinearAndDeterministic) {
  const Problem pr = poisson(16);
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, defaults_for(pr, 1));
  const Matrix ab = random_matrix(pr.a.rows(), 2, 8);
  const Vector a = ab.col(0), b = ab.col(1);
  const Vector lhs = pc.apply(Vector(2.5 * a - 0.75 * b));
  const Vector rhs = 2.5 * pc.apply(a) - 0.75 * pc.apply(b);
  EXPECT_LT((lhs - rhs).norm(), 1e-12 * rhs.norm());
  EXPECT_EQ(pc.apply(a), pc.apply(a));
  EXPECT_EQ(pc.apply(Vector(Vector::Zero(pr.a.rows()))).norm(), 0.0);
  const Preconditioner again = Preconditioner::factor(pr.a, pr.tree, defaults_for(pr, 1));
  EXPECT_EQ(pc.apply(a), again.apply(a));
}

TEST(Precond, RejectsBadInput) {
  const Problem pr = poisson(8);
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, defaults_for(pr, 1));
  EXPECT_THROW(pc.apply(Vector(Vector::Ones(pr.a.rows() + 1))), DimensionMismatch);
  BuildOptions bad = defaults_for(pr, 1);
  bad.eps_hss = 0.0;
  EXPECT_THROW(Preconditioner::factor(pr.a, pr.tree, bad), InvalidOption);
  bad = defaults_for(pr, 1);
  bad.beta = 0;
  EXPECT_THROW(Preconditioner::factor(pr.a, pr.tree, bad), InvalidOption);
  const Problem other = poisson(4);
  EXPECT_THROW(Preconditioner::factor(other.a, pr.tree, defaults_for(pr, 1)), DimensionMismatch);
}

TEST(Precond, ExactLimitOnTestMatrices) {
  struct Case {
    Index m;
    Discretization disc;
    double kappa;
  };
  const std::vector<Case> cases = {
      {8, {DiscKind::cg, 1, 10.0}, 0.0},   {16, {DiscKind::cg, 3, 10.0}, 0.0},
      {16, {DiscKind::ipdg, 1, 10.0}, 0.0}, {16, {DiscKind::ipdg, 2, 10.0}, 0.0},
      {28, {DiscKind::ipdg, 1, 10.0}, 0.0}, {16, {DiscKind::ipdg, 1, 10.0}, 10.0},
  };
  for (const Case& c : cases) {
    const Problem pr = make_problem(c.m, c.disc, c.kappa);
    ASSERT_LE(pr.a.rows(), 5000);
    const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, all_dense(pr, c.disc.p));
    const double n = static_cast<double>(pr.a.rows());
    EXPECT_LE(inverse_defect(pc, pr.a), 1e-8 * std::sqrt(n)) << c.m << " p=" << c.disc.p;
  }
}

TEST(Precond, SmallerToleranceNeverHurts) {
  const Problem pr = poisson(32);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    BuildOptions o = defaults_for(pr, 1);
    o.eps_hss = eps;
    const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, o);
    const double d = probe_defect(pc, pr.a, 20);
    EXPECT_LE(d, prev) << eps;
    prev = d;
  }
}

TEST(Precond, StatsReport) {
  const Problem pr = poisson(16);
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, defaults_for(pr, 1));
  const BuildStats& st = pc.stats();
  EXPECT_EQ(st.n, pr.a.rows());
  EXPECT_EQ(st.levels, pr.tree.depth());
  EXPECT_EQ(st.lhss, pr.tree.depth() - 4);
  EXPECT_FALSE(st.dense_only);
  EXPECT_GT(st.bytes, 0u);
  EXPECT_GT(st.t_factor_s, 0.0);
  EXPECT_GT(st.t_apply_s, 0.0);
  Index maxr = 0;
  for (const auto& l : st.per_level) maxr = std::max(maxr, l.max_rank);
  EXPECT_LE(maxr, st.k_max);
  const std::string js = to_json(st);
  for (const char* key : {"\"n\"", "\"levels\"", "\"L_HSS\"", "\"k_max\"", "\"bytes\"",
                          "\"t_factor_s\"", "\"t_apply_s\"", "\"per_level\"", "\"max_rank\"",
                          "\"nodes\""}) {
    EXPECT_NE(js.find(key), std::string::npos) << key;
  }
}

TEST(Precond, PoissonRankAtSixtyFourInReferenceBand) {
  const Problem pr = poisson(64);
  const Preconditioner pc = Preconditioner::factor(pr.a, pr.tree, defaults_for(pr, 1));
  EXPECT_GE(pc.stats().k_max, 60);
  EXPECT_LE(pc.stats().k_max, 140);
}

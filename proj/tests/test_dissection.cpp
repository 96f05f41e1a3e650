#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "hiprec/dissection.hpp"
#include "hiprec/fem2d.hpp"

using namespace hiprec;

namespace {

struct Case {
  FemSystem sys;
  EliminationTree tree;
};

Case make_case(Index m, DiscKind kind, int p) {
  const Mesh2D mesh = build_mesh(m);
  Case c;
  c.sys = assemble_poisson(mesh, {kind, p, 10.0});
  c.tree = build_from_boxes(dissection_hierarchy(mesh, c.sys), c.sys.a);
  return c;
}

bool contains(const IndexList& s, Index d) { return std::binary_search(s.begin(), s.end(), d); }

/// 1D Laplacian pattern.
SparseMatrix path_matrix(Index n) {
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0});
    if (i + 1 < n) {
      t.push_back({i, i + 1, -1.0});
      t.push_back({i + 1, i, -1.0});
    }
  }
  return SparseMatrix::from_triplets(n, n, t);
}

std::vector<EliminationNode> three_nodes(IndexList l, IndexList r, IndexList root) {
  std::vector<EliminationNode> nodes(3);
  nodes[0].parent = 2;
  nodes[0].interior = std::move(l);
  nodes[1].parent = 2;
  nodes[1].interior = std::move(r);
  nodes[2].interior = std::move(root);
  return nodes;
}

}  // namespace

TEST(Dissection, SmallPathTree) {
  const SparseMatrix a = path_matrix(5);
  const auto t = EliminationTree::from_interiors(three_nodes({0, 1}, {3, 4}, {2}), a);
  EXPECT_EQ(t.node(0).boundary, (IndexList{2}));
  EXPECT_EQ(t.node(1).boundary, (IndexList{2}));
  EXPECT_EQ(t.depth(), 1);
  EXPECT_EQ(t.node(0).level, 1);
  // Both children touch index 2: they are not well-separated.
  const auto errs = validate(t, a);
  ASSERT_FALSE(errs.empty());
  EXPECT_NE(errs.front().find("siblings not well-separated"), std::string::npos);
}

TEST(Dissection, WellSeparatedIsEmptyIntersection) {
  const SparseMatrix a = path_matrix(6);
  const auto t = EliminationTree::from_interiors(three_nodes({0, 1}, {4, 5}, {2, 3}), a);
  EXPECT_EQ(t.node(0).boundary, (IndexList{2}));
  EXPECT_EQ(t.node(1).boundary, (IndexList{3}));
  EXPECT_TRUE(validate(t, a).empty());
  const NodePartition p = node_partition(t, 2);
  EXPECT_EQ(p.interior_left, (IndexList{2}));
  EXPECT_EQ(p.interior_right, (IndexList{3}));
  EXPECT_TRUE(p.boundary_left.empty());
  EXPECT_THROW(node_partition(t, 0), LeafNode);
}

TEST(Dissection, ValidateReportsCouplingOutsideAncestorLine) {
  const SparseMatrix a = path_matrix(4);
  const auto t = EliminationTree::from_interiors(three_nodes({0, 1}, {2, 3}, {}), a);
  const auto errs = validate(t, a);
  ASSERT_FALSE(errs.empty());
  EXPECT_NE(errs.front().find("coupling outside ancestor line"), std::string::npos);
}

TEST(Dissection, MalformedInteriorsThrow) {
  const SparseMatrix a = path_matrix(4);
  EXPECT_THROW(EliminationTree::from_interiors(three_nodes({0, 1}, {1, 2}, {3}), a), InvalidTree);
  EXPECT_THROW(EliminationTree::from_interiors(three_nodes({0}, {2}, {3}), a), InvalidTree);
  auto bad = three_nodes({0}, {1}, {2, 3});
  bad[0].parent = 1;
  bad[1].parent = 2;
  EXPECT_THROW(EliminationTree::from_interiors(bad, a), InvalidTree);
}

TEST(Dissection, MeshTreesAreValid) {
  for (DiscKind kind : {DiscKind::cg, DiscKind::ipdg}) {
    for (int p : {1, 2}) {
      const Case c = make_case(8, kind, p);
      const auto errs = validate(c.tree, c.sys.a);
      EXPECT_TRUE(errs.empty()) << (errs.empty() ? "" : errs.front());
      EXPECT_TRUE(c.tree.node(c.tree.root()).boundary.empty());
    }
  }
}

TEST(Dissection, EveryNonzeroLiesOnAnAncestorLine) {
  const Case c = make_case(16, DiscKind::ipdg, 1);
  const auto owner = c.tree.owner();
  const SparseMatrix& a = c.sys.a;
  Index checked = 0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index k = a.row_ptr()[static_cast<std::size_t>(i)];
         k < a.row_ptr()[static_cast<std::size_t>(i) + 1]; ++k) {
      const int oi = owner[static_cast<std::size_t>(i)];
      const int oj = owner[static_cast<std::size_t>(a.col_idx()[static_cast<std::size_t>(k)])];
      // Walk from each owner to the root and check that the other is on the path.
      auto on_path = [&](int from, int target) {
        for (int s = from; s >= 0; s = c.tree.node(s).parent) {
          if (s == target) return true;
        }
        return false;
      };
      ASSERT_TRUE(on_path(oi, oj) || on_path(oj, oi)) << i;
      ++checked;
    }
  }
  EXPECT_EQ(checked, a.nnz());
}

TEST(Dissection, BoundarySetMatchesBruteForce) {
  const Case c = make_case(8, DiscKind::ipdg, 1);
  const Matrix dense = c.sys.a.to_dense();
  const auto owner = c.tree.owner();
  for (int s = 0; s < c.tree.num_nodes(); ++s) {
    std::set<int> anc;
    for (int t = c.tree.node(s).parent; t >= 0; t = c.tree.node(t).parent) anc.insert(t);
    IndexList expect;
    for (Index e = 0; e < dense.rows(); ++e) {
      if (!anc.count(owner[static_cast<std::size_t>(e)])) continue;
      for (Index d : c.tree.node(s).interior) {
        if (dense(d, e) != 0.0 || dense(e, d) != 0.0) {
          expect.push_back(e);
          break;
        }
      }
    }
    const IndexList got = boundary_set(c.tree, s, c.sys.a);
    EXPECT_EQ(got, expect) << s;
    const IndexList& closure = c.tree.node(s).boundary;
    EXPECT_TRUE(std::includes(closure.begin(), closure.end(), got.begin(), got.end())) << s;
  }
}

TEST(Dissection, BranchFrontalsAreTiledByChildBoundaries) {
  const Case c = make_case(16, DiscKind::ipdg, 1);
  for (int s = 0; s < c.tree.num_nodes(); ++s) {
    const auto& nd = c.tree.node(s);
    if (nd.is_leaf()) continue;
    const NodePartition p = node_partition(c.tree, s);
    EXPECT_EQ(p.interior_left.size() + p.interior_right.size(), nd.interior.size());
    EXPECT_EQ(p.boundary_left.size() + p.boundary_right.size(), nd.boundary.size());
    IndexList bl = p.interior_left, br = p.interior_right;
    bl.insert(bl.end(), p.boundary_left.begin(), p.boundary_left.end());
    br.insert(br.end(), p.boundary_right.begin(), p.boundary_right.end());
    std::sort(bl.begin(), bl.end());
    std::sort(br.begin(), br.end());
    EXPECT_EQ(bl, c.tree.node(nd.left).boundary);
    EXPECT_EQ(br, c.tree.node(nd.right).boundary);
  }
}

TEST(Dissection, BoundariesAreAncestorOwned) {
  const Case c = make_case(8, DiscKind::cg, 2);
  const auto owner = c.tree.owner();
  for (int s = 0; s < c.tree.num_nodes(); ++s) {
    for (Index d : c.tree.node(s).boundary) {
      const int o = owner[static_cast<std::size_t>(d)];
      EXPECT_NE(o, s);
      EXPECT_TRUE(c.tree.is_ancestor(o, s));
    }
  }
}

TEST(Dissection, InteriorsStayInsideTheirBox) {
  const Mesh2D mesh = build_mesh(8);
  const FemSystem sys = assemble_poisson(mesh, {DiscKind::ipdg, 1, 10.0});
  const EliminationTree t = build_from_boxes(dissection_hierarchy(mesh, sys), sys.a);
  ASSERT_EQ(t.num_nodes(), static_cast<int>(mesh.boxes.size()));
  for (int s = 0; s < t.num_nodes(); ++s) {
    for (Index d : t.node(s).interior) {
      const int r = sys.dof_region[static_cast<std::size_t>(d)];
      EXPECT_TRUE(t.is_ancestor(s, r));
    }
  }
}

TEST(Dissection, RenumberingMakesInteriorsContiguous) {
  const Case c = make_case(8, DiscKind::ipdg, 1);
  const EliminationTree r = c.tree.renumbered();
  Index next = 0;
  for (int s = 0; s < r.num_nodes(); ++s) {
    for (Index d : r.node(s).interior) EXPECT_EQ(d, next++);
  }
  EXPECT_EQ(next, r.size());
  const SparseMatrix pa = c.sys.a.permuted(c.tree.ordering());
  EXPECT_TRUE(validate(r, pa).empty());
  for (int s = 0; s < r.num_nodes(); ++s) {
    EXPECT_EQ(r.node(s).boundary.size(), c.tree.node(s).boundary.size());
  }
}

TEST(Dissection, ProblemTreeIsValid) {
  const Problem pr = make_problem(8, {DiscKind::ipdg, 2, 10.0}, 2.0);
  EXPECT_TRUE(validate(pr.tree, pr.a).empty());
  EXPECT_EQ(pr.dofs_per_element, 6);
  EXPECT_EQ(pr.levels, pr.tree.depth());
  EXPECT_EQ(pr.b.size(), pr.a.rows());
}

TEST(Dissection, JsonRoundTrip) {
  const Case c = make_case(8, DiscKind::ipdg, 1);
  const EliminationTree back = elimination_tree_from_json(to_json(c.tree), c.sys.a);
  ASSERT_EQ(back.num_nodes(), c.tree.num_nodes());
  for (int s = 0; s < back.num_nodes(); ++s) {
    EXPECT_EQ(back.node(s).interior, c.tree.node(s).interior);
    EXPECT_EQ(back.node(s).boundary, c.tree.node(s).boundary);
    EXPECT_EQ(back.node(s).parent, c.tree.node(s).parent);
  }
  EXPECT_THROW(elimination_tree_from_json("{not json", c.sys.a), ParseError);
  EXPECT_THROW(elimination_tree_from_json("{\"n\": 3}", c.sys.a), InvalidTree);
}

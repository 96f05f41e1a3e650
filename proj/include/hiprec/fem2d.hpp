#pragma once

#include <array>
#include <vector>

#include "hiprec/dissection.hpp"
#include "hiprec/linalg.hpp"
#include "hiprec/sparse.hpp"

namespace hiprec {

/// Box of mesh cells [i0, i1) x [j0, j1).
struct MeshBox {
  Index i0 = 0, i1 = 0, j0 = 0, j1 = 0;
  int parent = -1;
  int left = -1;
  int right = -1;
  int level = 0;
  int axis = 0;  // 0: split in x, 1: split in y
  bool is_leaf() const { return left < 0; }
  Index cells() const { return (i1 - i0) * (j1 - j0); }
};

/// Regular triangulation of [-1, 1]^2 with m x m cells, each cut along the
/// diagonal from its lower-left to its upper-right corner. Cell (i, j) holds
/// triangles 2 (j m + i) (lower) and 2 (j m + i) + 1 (upper).
struct Mesh2D {
  Index m = 0;
  double h = 0.0;
  std::vector<std::array<double, 2>> vertices;  // (m+1)^2, row-major in j
  std::vector<std::array<Index, 3>> triangles;
  std::vector<MeshBox> boxes;     // post-order, root last
  std::vector<int> element_box;  // leaf box of every triangle

  Index num_triangles() const { return static_cast<Index>(triangles.size()); }
  Index vertex(Index i, Index j) const { return j * (m + 1) + i; }
};

/// Boxes are halved with alternating orientation until they hold fewer than
/// leaf_threshold triangles.
Mesh2D build_mesh(Index m, Index leaf_threshold = 10);

enum class DiscKind { cg, ipdg };

struct Discretization {
  DiscKind kind = DiscKind::ipdg;
  int p = 1;
  double penalty = 10.0;  // interior penalty constant
};

/// Local basis size (p+1)(p+2)/2.
Index dofs_per_element(int p);

struct FemSystem {
  SparseMatrix a;
  Vector b;
  SparseMatrix stiffness;
  SparseMatrix mass;
  std::vector<std::array<double, 2>> dof_coord;
  std::vector<int> dof_region;  // leaf box of every DOF
};

/// -lap u = 1 on the square with u = 0 on the boundary.
FemSystem assemble_poisson(const Mesh2D& mesh, const Discretization& disc);
/// -lap u - kappa^2 u = 1 with the same boundary data.
FemSystem assemble_helmholtz(const Mesh2D& mesh, const Discretization& disc, double kappa);

BoxHierarchy dissection_hierarchy(const Mesh2D& mesh, const Discretization& disc);
/// Hierarchy built from an already assembled system.
BoxHierarchy dissection_hierarchy(const Mesh2D& mesh, const FemSystem& sys);

/// Assembled system renumbered so that the elimination tree interiors are
/// contiguous in post-order.
struct Problem {
  SparseMatrix a;
  Vector b;
  EliminationTree tree;
  Index dofs_per_element = 1;  // cluster granularity
  int levels = 0;
};

Problem make_problem(Index m, const Discretization& disc, double kappa,
                     Index leaf_threshold = 10);

}  // namespace hiprec

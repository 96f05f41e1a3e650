#include "hiprec/fem2d.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <map>

namespace hiprec {

namespace {

using Point = std::array<double, 2>;

struct Rule1d {
  std::vector<double> x;  // on [0, 1]
  std::vector<double> w;
};

/// Gauss-Legendre rule with q points via the Golub-Welsch eigenproblem.
Rule1d gauss_legendre(int q) {
  Matrix jac = Matrix::Zero(q, q);
  for (int k = 1; k < q; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jac(k, k - 1) = jac(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
  Rule1d r;
  for (int k = 0; k < q; ++k) {
    const double v = es.eigenvectors()(0, k);
    r.x.push_back(0.5 * (es.eigenvalues()(k) + 1.0));
    r.w.push_back(v * v);
  }
  return r;
}

struct RuleTri {
  std::vector<Point> x;  // reference coordinates
  std::vector<double> w;  // sums to 1/2
};

/// Collapsed tensor rule on the reference triangle.
RuleTri triangle_rule(int q) {
  const Rule1d g = gauss_legendre(q);
  RuleTri r;
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b < q; ++b) {
      const double u = g.x[static_cast<std::size_t>(a)];
      const double v = g.x[static_cast<std::size_t>(b)];
      r.x.push_back({u, v * (1.0 - u)});
      r.w.push_back(g.w[static_cast<std::size_t>(a)] * g.w[static_cast<std::size_t>(b)] * (1.0 - u));
    }
  }
  return r;
}

/// Nodal Lagrange basis on the equispaced points (i/p, j/p), i + j <= p.
struct RefBasis {
  int p = 1;
  std::vector<std::array<int, 2>> nodes;
  std::vector<std::array<int, 2>> mono;
  Matrix coef;  // phi_k = sum_m coef(m, k) x^a y^b

  explicit RefBasis(int deg) : p(deg) {
    for (int j = 0; j <= p; ++j) {
      for (int i = 0; i + j <= p; ++i) nodes.push_back({i, j});
    }
    for (int d = 0; d <= p; ++d) {
      for (int b = 0; b <= d; ++b) mono.push_back({d - b, b});
    }
    const Index nl = static_cast<Index>(nodes.size());
    Matrix vand(nl, nl);
    for (Index r = 0; r < nl; ++r) {
      const double x = static_cast<double>(nodes[static_cast<std::size_t>(r)][0]) / p;
      const double y = static_cast<double>(nodes[static_cast<std::size_t>(r)][1]) / p;
      for (Index c = 0; c < nl; ++c) {
        const auto& m = mono[static_cast<std::size_t>(c)];
        vand(r, c) = std::pow(x, m[0]) * std::pow(y, m[1]);
      }
    }
    coef = vand.inverse();
  }
  Index size() const { return static_cast<Index>(nodes.size()); }

  Vector value(const Point& xi) const {
    Vector mv(size());
    for (Index c = 0; c < size(); ++c) {
      const auto& m = mono[static_cast<std::size_t>(c)];
      mv(c) = std::pow(xi[0], m[0]) * std::pow(xi[1], m[1]);
    }
    return coef.transpose() * mv;
  }
  /// size x 2 reference gradients.
  Matrix gradient(const Point& xi) const {
    Matrix md(size(), 2);
    for (Index c = 0; c < size(); ++c) {
      const auto& m = mono[static_cast<std::size_t>(c)];
      md(c, 0) = m[0] == 0 ? 0.0 : m[0] * std::pow(xi[0], m[0] - 1) * std::pow(xi[1], m[1]);
      md(c, 1) = m[1] == 0 ? 0.0 : m[1] * std::pow(xi[0], m[0]) * std::pow(xi[1], m[1] - 1);
    }
    return coef.transpose() * md;
  }
};

struct ElementMap {
  Point v0;
  Eigen::Matrix2d jac;
  Eigen::Matrix2d inv;
  double det = 0.0;

  Point to_ref(const Point& x) const {
    const Eigen::Vector2d r = inv * Eigen::Vector2d(x[0] - v0[0], x[1] - v0[1]);
    return {r(0), r(1)};
  }
};

ElementMap element_map(const Mesh2D& mesh, Index t) {
  const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
  const Point& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
  const Point& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
  const Point& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
  ElementMap e;
  e.v0 = a;
  e.jac << b[0] - a[0], c[0] - a[0], b[1] - a[1], c[1] - a[1];
  e.det = e.jac.determinant();
  e.inv = e.jac.inverse();
  return e;
}

/// Global DOF layout: per element the global index of each local basis
/// function (-1 for eliminated Dirichlet nodes), plus coordinates and regions.
struct Layout {
  Index n = 0;
  std::vector<std::vector<Index>> elem_dofs;
  std::vector<Point> coord;
  std::vector<int> region;
};

Layout make_layout(const Mesh2D& mesh, const Discretization& disc, const RefBasis& basis) {
  Layout lay;
  const Index nt = mesh.num_triangles();
  const Index nl = basis.size();
  lay.elem_dofs.resize(static_cast<std::size_t>(nt));
  if (disc.kind == DiscKind::ipdg) {
    lay.n = nt * nl;
    lay.coord.resize(static_cast<std::size_t>(lay.n));
    lay.region.resize(static_cast<std::size_t>(lay.n));
    for (Index t = 0; t < nt; ++t) {
      const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
      Point c{0.0, 0.0};
      for (Index v : tri) {
        c[0] += mesh.vertices[static_cast<std::size_t>(v)][0] / 3.0;
        c[1] += mesh.vertices[static_cast<std::size_t>(v)][1] / 3.0;
      }
      for (Index k = 0; k < nl; ++k) {
        const Index d = t * nl + k;
        lay.elem_dofs[static_cast<std::size_t>(t)].push_back(d);
        lay.coord[static_cast<std::size_t>(d)] = c;
        lay.region[static_cast<std::size_t>(d)] = mesh.element_box[static_cast<std::size_t>(t)];
      }
    }
    return lay;
  }
  const Index p = disc.p;
  const Index side = mesh.m * p;  // lattice points 0..side per direction
  const Index inner = side - 1;
  lay.n = inner > 0 ? inner * inner : 0;
  lay.coord.resize(static_cast<std::size_t>(lay.n));
  lay.region.assign(static_cast<std::size_t>(lay.n), -1);
  const double step = mesh.h / static_cast<double>(p);
  for (Index t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    std::array<std::array<Index, 2>, 3> lat;
    for (int k = 0; k < 3; ++k) {
      const Index v = tri[static_cast<std::size_t>(k)];
      lat[static_cast<std::size_t>(k)] = {(v % (mesh.m + 1)) * p, (v / (mesh.m + 1)) * p};
    }
    for (const auto& nd : basis.nodes) {
      const Index a = lat[0][0] + (nd[0] * (lat[1][0] - lat[0][0]) + nd[1] * (lat[2][0] - lat[0][0])) / p;
      const Index b = lat[0][1] + (nd[0] * (lat[1][1] - lat[0][1]) + nd[1] * (lat[2][1] - lat[0][1])) / p;
      Index d = -1;
      if (a > 0 && b > 0 && a < side && b < side) {
        d = (b - 1) * inner + (a - 1);
        lay.coord[static_cast<std::size_t>(d)] = {-1.0 + a * step, -1.0 + b * step};
        const int box = mesh.element_box[static_cast<std::size_t>(t)];
        int& r = lay.region[static_cast<std::size_t>(d)];
        if (r < 0 || box < r) r = box;
      }
      lay.elem_dofs[static_cast<std::size_t>(t)].push_back(d);
    }
  }
  return lay;
}

void add_block(std::vector<Triplet>& out, const std::vector<Index>& rows,
               const std::vector<Index>& cols, const Matrix& block) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0) continue;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] < 0) continue;
      out.push_back({rows[i], cols[j], block(static_cast<Index>(i), static_cast<Index>(j))});
    }
  }
}

struct Face {
  Index v0, v1;
  std::vector<Index> elems;
};

/// Symmetric interior penalty face terms.
void assemble_faces(const Mesh2D& mesh, const Discretization& disc, const RefBasis& basis,
                    const Layout& lay, std::vector<Triplet>& out) {
  std::map<std::pair<Index, Index>, Face> faces;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      Index a = tri[static_cast<std::size_t>(k)], b = tri[static_cast<std::size_t>((k + 1) % 3)];
      if (a > b) std::swap(a, b);
      auto& f = faces[{a, b}];
      f.v0 = a;
      f.v1 = b;
      f.elems.push_back(t);
    }
  }
  const Rule1d g = gauss_legendre(disc.p + 1);
  const Index nl = basis.size();
  const double pp = (disc.p + 1.0) * (disc.p + 1.0);
  for (const auto& [key, f] : faces) {
    const Point& a = mesh.vertices[static_cast<std::size_t>(f.v0)];
    const Point& b = mesh.vertices[static_cast<std::size_t>(f.v1)];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const double tau = disc.penalty * pp / len;
    Eigen::Vector2d nrm(b[1] - a[1], a[0] - b[0]);
    nrm /= len;
    // Orient the normal away from the first element.
    {
      const auto& tri = mesh.triangles[static_cast<std::size_t>(f.elems[0])];
      Point c{0.0, 0.0};
      for (Index v : tri) {
        c[0] += mesh.vertices[static_cast<std::size_t>(v)][0] / 3.0;
        c[1] += mesh.vertices[static_cast<std::size_t>(v)][1] / 3.0;
      }
      if (nrm.dot(Eigen::Vector2d(a[0] - c[0], a[1] - c[1])) < 0) nrm = -nrm;
    }
    const std::size_t ne = f.elems.size();
    std::vector<ElementMap> maps;
    for (Index t : f.elems) maps.push_back(element_map(mesh, t));
    std::vector<Matrix> blocks(ne * ne, Matrix::Zero(nl, nl));
    const double sgn[2] = {1.0, -1.0};
    for (std::size_t q = 0; q < g.x.size(); ++q) {
      const Point x{a[0] + g.x[q] * (b[0] - a[0]), a[1] + g.x[q] * (b[1] - a[1])};
      const double w = g.w[q] * len;
      std::vector<Vector> phi(ne), dn(ne);
      for (std::size_t e = 0; e < ne; ++e) {
        const Point xi = maps[e].to_ref(x);
        phi[e] = basis.value(xi);
        const Matrix gp = basis.gradient(xi) * maps[e].inv;  // physical gradients
        dn[e] = gp * nrm;
      }
      if (ne == 1) {
        blocks[0] += w * (-phi[0] * dn[0].transpose() - dn[0] * phi[0].transpose() +
                          tau * phi[0] * phi[0].transpose());
        continue;
      }
      for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
          blocks[r * 2 + c] += w * (-0.5 * sgn[r] * phi[r] * dn[c].transpose() -
                                    0.5 * sgn[c] * dn[r] * phi[c].transpose() +
                                    tau * sgn[r] * sgn[c] * phi[r] * phi[c].transpose());
        }
      }
    }
    for (std::size_t r = 0; r < ne; ++r) {
      for (std::size_t c = 0; c < ne; ++c) {
        add_block(out, lay.elem_dofs[static_cast<std::size_t>(f.elems[r])],
                  lay.elem_dofs[static_cast<std::size_t>(f.elems[c])], blocks[r * ne + c]);
      }
    }
  }
}

FemSystem assemble(const Mesh2D& mesh, const Discretization& disc, double kappa) {
  if (disc.p < 1) throw InvalidOption("fem2d: polynomial degree must be at least 1");
  const RefBasis basis(disc.p);
  const Layout lay = make_layout(mesh, disc, basis);
  const RuleTri rule = triangle_rule(disc.p + 2);
  const Index nl = basis.size();
  std::vector<Vector> phi;
  std::vector<Matrix> dphi;
  for (const auto& x : rule.x) {
    phi.push_back(basis.value(x));
    dphi.push_back(basis.gradient(x));
  }
  std::vector<Triplet> kt, mt;
  Vector rhs = Vector::Zero(lay.n);
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const ElementMap em = element_map(mesh, t);
    const double vol = std::abs(em.det);
    Matrix ke = Matrix::Zero(nl, nl), me = Matrix::Zero(nl, nl);
    Vector fe = Vector::Zero(nl);
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const double w = rule.w[q] * vol;
      const Matrix gp = dphi[q] * em.inv;
      ke += w * gp * gp.transpose();
      me += w * phi[q] * phi[q].transpose();
      fe += w * phi[q];
    }
    const auto& dofs = lay.elem_dofs[static_cast<std::size_t>(t)];
    add_block(kt, dofs, dofs, ke);
    add_block(mt, dofs, dofs, me);
    for (Index k = 0; k < nl; ++k) {
      if (dofs[static_cast<std::size_t>(k)] >= 0) rhs(dofs[static_cast<std::size_t>(k)]) += fe(k);
    }
  }
  if (disc.kind == DiscKind::ipdg) assemble_faces(mesh, disc, basis, lay, kt);
  FemSystem sys;
  sys.stiffness = SparseMatrix::from_triplets(lay.n, lay.n, kt);
  sys.mass = SparseMatrix::from_triplets(lay.n, lay.n, mt);
  if (kappa == 0.0) {
    sys.a = sys.stiffness;
  } else {
    std::vector<Triplet> at;
    const auto& rp = sys.stiffness.row_ptr();
    for (Index i = 0; i < lay.n; ++i) {
      for (Index k = rp[static_cast<std::size_t>(i)]; k < rp[static_cast<std::size_t>(i) + 1]; ++k) {
        at.push_back({i, sys.stiffness.col_idx()[static_cast<std::size_t>(k)],
                      sys.stiffness.values()[static_cast<std::size_t>(k)]});
      }
    }
    const auto& mp = sys.mass.row_ptr();
    for (Index i = 0; i < lay.n; ++i) {
      for (Index k = mp[static_cast<std::size_t>(i)]; k < mp[static_cast<std::size_t>(i) + 1]; ++k) {
        at.push_back({i, sys.mass.col_idx()[static_cast<std::size_t>(k)],
                      -kappa * kappa * sys.mass.values()[static_cast<std::size_t>(k)]});
      }
    }
    sys.a = SparseMatrix::from_triplets(lay.n, lay.n, std::move(at));
  }
  sys.b = rhs;
  sys.dof_coord = lay.coord;
  sys.dof_region = lay.region;
  return sys;
}

BoxHierarchy hierarchy_from(const Mesh2D& mesh, std::vector<Point> coord, std::vector<int> region) {
  BoxHierarchy h;
  for (const auto& b : mesh.boxes) {
    BoxNode nd;
    nd.parent = b.parent;
    nd.left = b.left;
    nd.right = b.right;
    nd.level = b.level;
    nd.axis = b.axis;
    h.boxes.push_back(nd);
  }
  h.coord = std::move(coord);
  h.region = std::move(region);
  return h;
}

}  // namespace

Mesh2D build_mesh(Index m, Index leaf_threshold) {
  if (m < 1) throw InvalidOption("build_mesh: m must be positive");
  Mesh2D mesh;
  mesh.m = m;
  mesh.h = 2.0 / static_cast<double>(m);
  for (Index j = 0; j <= m; ++j) {
    for (Index i = 0; i <= m; ++i) mesh.vertices.push_back({-1.0 + i * mesh.h, -1.0 + j * mesh.h});
  }
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < m; ++i) {
      const Index v00 = mesh.vertex(i, j), v10 = mesh.vertex(i + 1, j);
      const Index v01 = mesh.vertex(i, j + 1), v11 = mesh.vertex(i + 1, j + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  mesh.element_box.assign(mesh.triangles.size(), -1);
  std::function<int(Index, Index, Index, Index, int)> build = [&](Index i0, Index i1, Index j0,
                                                                  Index j1, int level) {
    MeshBox b;
    b.i0 = i0;
    b.i1 = i1;
    b.j0 = j0;
    b.j1 = j1;
    b.level = level;
    const Index w = i1 - i0, hgt = j1 - j0;
    const bool split = 2 * b.cells() >= leaf_threshold && b.cells() > 1;
    if (split) {
      int axis = level % 2;
      if (axis == 0 && w < 2) axis = 1;
      if (axis == 1 && hgt < 2) axis = 0;
      b.axis = axis;
      if (axis == 0) {
        const Index c = i0 + (w + 1) / 2;
        b.left = build(i0, c, j0, j1, level + 1);
        b.right = build(c, i1, j0, j1, level + 1);
      } else {
        const Index c = j0 + (hgt + 1) / 2;
        b.left = build(i0, i1, j0, c, level + 1);
        b.right = build(i0, i1, c, j1, level + 1);
      }
    } else {
      b.axis = level % 2;
    }
    mesh.boxes.push_back(b);
    const int id = static_cast<int>(mesh.boxes.size()) - 1;
    if (split) {
      mesh.boxes[static_cast<std::size_t>(mesh.boxes[static_cast<std::size_t>(id)].left)].parent = id;
      mesh.boxes[static_cast<std::size_t>(mesh.boxes[static_cast<std::size_t>(id)].right)].parent = id;
    } else {
      for (Index j = j0; j < j1; ++j) {
        for (Index i = i0; i < i1; ++i) {
          mesh.element_box[static_cast<std::size_t>(2 * (j * m + i))] = id;
          mesh.element_box[static_cast<std::size_t>(2 * (j * m + i) + 1)] = id;
        }
      }
    }
    return id;
  };
  build(0, m, 0, m, 0);
  return mesh;
}

Index dofs_per_element(int p) { return static_cast<Index>((p + 1) * (p + 2) / 2); }

FemSystem assemble_poisson(const Mesh2D& mesh, const Discretization& disc) {
  return assemble(mesh, disc, 0.0);
}

FemSystem assemble_helmholtz(const Mesh2D& mesh, const Discretization& disc, double kappa) {
  if (kappa < 0.0) throw InvalidOption("assemble_helmholtz: negative wavenumber");
  return assemble(mesh, disc, kappa);
}

BoxHierarchy dissection_hierarchy(const Mesh2D& mesh, const Discretization& disc) {
  const RefBasis basis(disc.p);
  Layout lay = make_layout(mesh, disc, basis);
  return hierarchy_from(mesh, std::move(lay.coord), std::move(lay.region));
}

BoxHierarchy dissection_hierarchy(const Mesh2D& mesh, const FemSystem& sys) {
  return hierarchy_from(mesh, sys.dof_coord, sys.dof_region);
}

Problem make_problem(Index m, const Discretization& disc, double kappa, Index leaf_threshold) {
  const Mesh2D mesh = build_mesh(m, leaf_threshold);
  const FemSystem sys = kappa == 0.0 ? assemble_poisson(mesh, disc)
                                     : assemble_helmholtz(mesh, disc, kappa);
  const EliminationTree tree = build_from_boxes(dissection_hierarchy(mesh, sys), sys.a);
  const IndexList perm = tree.ordering();
  Problem pr;
  pr.a = sys.a.permuted(perm);
  pr.b.resize(sys.b.size());
  for (std::size_t k = 0; k < perm.size(); ++k) pr.b(static_cast<Index>(k)) = sys.b(perm[k]);
  pr.tree = tree.renumbered();
  pr.dofs_per_element = disc.kind == DiscKind::ipdg ? dofs_per_element(disc.p) : 1;
  pr.levels = pr.tree.depth();
  return pr;
}

}  // namespace hiprec

#include "hiprec/dissection.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace hiprec {

namespace {

/// Calls f(e) for every e with A(d, e) != 0 or A(e, d) != 0, e != d.
template <class F>
void for_each_neighbour(const SparseMatrix& a, Index d, F&& f) {
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  for (Index k = rp[static_cast<std::size_t>(d)]; k < rp[static_cast<std::size_t>(d) + 1]; ++k) {
    if (ci[static_cast<std::size_t>(k)] != d) f(ci[static_cast<std::size_t>(k)]);
  }
  const auto& col = a.column_index();
  for (Index k = col.col_ptr[static_cast<std::size_t>(d)];
       k < col.col_ptr[static_cast<std::size_t>(d) + 1]; ++k) {
    if (col.row_idx[static_cast<std::size_t>(k)] != d) f(col.row_idx[static_cast<std::size_t>(k)]);
  }
}

struct Topology {
  std::vector<int> parent;
  std::vector<int> level;
  std::vector<int> tin;
  std::vector<int> tout;

  bool ancestor(int anc, int desc) const {
    return tin[static_cast<std::size_t>(anc)] <= tin[static_cast<std::size_t>(desc)] &&
           tout[static_cast<std::size_t>(desc)] <= tout[static_cast<std::size_t>(anc)];
  }
  int lca(int a, int b) const {
    while (!ancestor(a, b)) a = parent[static_cast<std::size_t>(a)];
    return a;
  }
};

/// Children before parents is assumed; tin/tout come from a DFS over children.
Topology topology(const std::vector<int>& parent, const std::vector<int>& left,
                  const std::vector<int>& right) {
  Topology t;
  const std::size_t nn = parent.size();
  t.parent = parent;
  t.level.assign(nn, 0);
  t.tin.assign(nn, 0);
  t.tout.assign(nn, 0);
  if (nn == 0) return t;
  int clock = 0;
  std::vector<std::pair<int, bool>> stack{{static_cast<int>(nn) - 1, false}};
  while (!stack.empty()) {
    auto [id, done] = stack.back();
    stack.pop_back();
    const auto u = static_cast<std::size_t>(id);
    if (done) {
      t.tout[u] = clock++;
      continue;
    }
    t.tin[u] = clock++;
    stack.push_back({id, true});
    for (int c : {right[u], left[u]}) {
      if (c < 0) continue;
      t.level[static_cast<std::size_t>(c)] = t.level[u] + 1;
      stack.push_back({c, false});
    }
  }
  return t;
}

/// Boundary sets: ancestor DOFs touching a subtree, extended so that every DOF
/// of a branch frontal belongs to exactly one child.
std::vector<IndexList> compute_boundaries(const Topology& topo, const std::vector<int>& left,
                                          const std::vector<int>& right,
                                          const std::vector<IndexList>& interiors,
                                          const std::vector<int>& owner, const SparseMatrix& a,
                                          const std::vector<int>* anchor, bool route) {
  const std::size_t nn = interiors.size();
  std::vector<IndexList> bnd(nn);
  std::vector<Index> stamp(nn, -1);
  for (Index d = 0; d < static_cast<Index>(owner.size()); ++d) {
    const int o = owner[static_cast<std::size_t>(d)];
    for_each_neighbour(a, d, [&](Index e) {
      int t = owner[static_cast<std::size_t>(e)];
      if (t == o || !topo.ancestor(o, t)) return;
      while (t != o && stamp[static_cast<std::size_t>(t)] != d) {
        stamp[static_cast<std::size_t>(t)] = d;
        bnd[static_cast<std::size_t>(t)].push_back(d);
        t = topo.parent[static_cast<std::size_t>(t)];
      }
    });
  }
  if (route) {
    std::vector<Index> mark(owner.size(), -1);
    for (int s = static_cast<int>(nn) - 1; s >= 0; --s) {
      const auto su = static_cast<std::size_t>(s);
      if (left[su] < 0) continue;
      const int mu = left[su], nu = right[su];
      for (Index d : bnd[static_cast<std::size_t>(mu)]) mark[static_cast<std::size_t>(d)] = 2 * s;
      for (Index d : bnd[static_cast<std::size_t>(nu)]) mark[static_cast<std::size_t>(d)] = 2 * s + 1;
      auto claim = [&](Index d) {
        const Index m = mark[static_cast<std::size_t>(d)];
        if (m == 2 * s || m == 2 * s + 1) return;
        int child = mu;
        if (anchor) {
          const int r = (*anchor)[static_cast<std::size_t>(d)];
          if (r >= 0 && topo.ancestor(nu, r)) child = nu;
        }
        bnd[static_cast<std::size_t>(child)].push_back(d);
        mark[static_cast<std::size_t>(d)] = child == mu ? 2 * s : 2 * s + 1;
      };
      for (Index d : interiors[su]) claim(d);
      for (Index d : bnd[su]) claim(d);
    }
  }
  for (auto& b : bnd) std::sort(b.begin(), b.end());
  return bnd;
}

void children_from_parents(std::vector<EliminationNode>& nodes) {
  const int nn = static_cast<int>(nodes.size());
  if (nn == 0) return;
  for (auto& nd : nodes) nd.left = nd.right = -1;
  for (int i = 0; i < nn; ++i) {
    const int p = nodes[static_cast<std::size_t>(i)].parent;
    if (i == nn - 1) {
      if (p != -1) throw InvalidTree("elimination tree: last node must be the root");
      continue;
    }
    if (p <= i || p >= nn) throw InvalidTree("elimination tree: nodes are not in post-order");
    auto& pn = nodes[static_cast<std::size_t>(p)];
    if (pn.left < 0) {
      pn.left = i;
    } else if (pn.right < 0) {
      pn.right = i;
    } else {
      throw InvalidTree("elimination tree: node with more than two children");
    }
  }
  for (const auto& nd : nodes) {
    if (nd.left >= 0 && nd.right < 0) throw InvalidTree("elimination tree: node with one child");
  }
}

std::vector<int> owners_of(const std::vector<EliminationNode>& nodes, Index n) {
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (int s = 0; s < static_cast<int>(nodes.size()); ++s) {
    for (Index d : nodes[static_cast<std::size_t>(s)].interior) {
      if (d < 0 || d >= n) throw InvalidTree("elimination tree: interior index out of range");
      if (owner[static_cast<std::size_t>(d)] >= 0) {
        throw InvalidTree("elimination tree: index " + std::to_string(d) + " in two interiors");
      }
      owner[static_cast<std::size_t>(d)] = s;
    }
  }
  for (Index d = 0; d < n; ++d) {
    if (owner[static_cast<std::size_t>(d)] < 0) {
      throw InvalidTree("elimination tree: index " + std::to_string(d) + " in no interior");
    }
  }
  return owner;
}

}  // namespace

// ---------------------------------------------------------------------------

EliminationTree EliminationTree::from_interiors(std::vector<EliminationNode> nodes,
                                                const SparseMatrix& a,
                                                const std::vector<int>* anchor) {
  if (a.rows() != a.cols()) throw DimensionMismatch("elimination tree: matrix not square");
  EliminationTree t;
  t.n_ = a.rows();
  if (nodes.empty()) {
    if (t.n_ != 0) throw InvalidTree("elimination tree: no nodes");
    return t;
  }
  children_from_parents(nodes);
  t.nodes_ = std::move(nodes);
  t.link();
  const std::vector<int> owner = owners_of(t.nodes_, t.n_);
  std::vector<int> parent, left, right;
  std::vector<IndexList> interiors;
  for (const auto& nd : t.nodes_) {
    parent.push_back(nd.parent);
    left.push_back(nd.left);
    right.push_back(nd.right);
    interiors.push_back(nd.interior);
  }
  const Topology topo = topology(parent, left, right);
  auto bnd = compute_boundaries(topo, left, right, interiors, owner, a, anchor, true);
  for (std::size_t s = 0; s < bnd.size(); ++s) t.nodes_[s].boundary = std::move(bnd[s]);
  if (anchor) t.anchor_ = *anchor;
  return t;
}

void EliminationTree::link() {
  std::vector<int> parent, left, right;
  for (const auto& nd : nodes_) {
    parent.push_back(nd.parent);
    left.push_back(nd.left);
    right.push_back(nd.right);
  }
  const Topology topo = topology(parent, left, right);
  for (std::size_t s = 0; s < nodes_.size(); ++s) nodes_[s].level = topo.level[s];
  tin_ = topo.tin;
  tout_ = topo.tout;
}

int EliminationTree::depth() const {
  int d = 0;
  for (const auto& nd : nodes_) d = std::max(d, nd.level);
  return d;
}

bool EliminationTree::is_ancestor(int anc, int desc) const {
  return tin_[static_cast<std::size_t>(anc)] <= tin_[static_cast<std::size_t>(desc)] &&
         tout_[static_cast<std::size_t>(desc)] <= tout_[static_cast<std::size_t>(anc)];
}

std::vector<int> EliminationTree::owner() const {
  std::vector<int> out(static_cast<std::size_t>(n_), -1);
  for (int s = 0; s < num_nodes(); ++s) {
    for (Index d : node(s).interior) out[static_cast<std::size_t>(d)] = s;
  }
  return out;
}

IndexList EliminationTree::ordering() const {
  IndexList out;
  out.reserve(static_cast<std::size_t>(n_));
  for (const auto& nd : nodes_) out.insert(out.end(), nd.interior.begin(), nd.interior.end());
  return out;
}

EliminationTree EliminationTree::renumbered() const {
  const IndexList perm = ordering();
  IndexList inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[static_cast<std::size_t>(perm[k])] = static_cast<Index>(k);
  EliminationTree t = *this;
  for (auto& nd : t.nodes_) {
    for (auto& d : nd.interior) d = inv[static_cast<std::size_t>(d)];
    for (auto& d : nd.boundary) d = inv[static_cast<std::size_t>(d)];
    std::sort(nd.interior.begin(), nd.interior.end());
    std::sort(nd.boundary.begin(), nd.boundary.end());
  }
  if (!anchor_.empty()) {
    for (std::size_t k = 0; k < perm.size(); ++k) t.anchor_[k] = anchor_[static_cast<std::size_t>(perm[k])];
  }
  return t;
}

// ---------------------------------------------------------------------------

EliminationTree build_from_boxes(const BoxHierarchy& h, const SparseMatrix& a) {
  const Index n = a.rows();
  if (a.cols() != n || static_cast<Index>(h.region.size()) != n) {
    throw DimensionMismatch("build_from_boxes: hierarchy does not match the matrix");
  }
  const int nb = static_cast<int>(h.boxes.size());
  if (nb == 0) throw InvalidTree("build_from_boxes: empty hierarchy");
  std::vector<int> parent, left, right;
  for (const auto& b : h.boxes) {
    parent.push_back(b.parent);
    left.push_back(b.left);
    right.push_back(b.right);
  }
  const Topology topo = topology(parent, left, right);
  for (Index d = 0; d < n; ++d) {
    const int r = h.region[static_cast<std::size_t>(d)];
    if (r < 0 || r >= nb || !h.boxes[static_cast<std::size_t>(r)].is_leaf()) {
      throw InvalidTree("build_from_boxes: DOF " + std::to_string(d) + " not in a leaf box");
    }
  }

  // Lowest box containing the DOF and all of its neighbours.
  std::vector<int> owner(static_cast<std::size_t>(n));
  for (Index d = 0; d < n; ++d) {
    int o = h.region[static_cast<std::size_t>(d)];
    for_each_neighbour(a, d, [&](Index e) { o = topo.lca(o, h.region[static_cast<std::size_t>(e)]); });
    owner[static_cast<std::size_t>(d)] = o;
  }

  // Lift DOFs until sibling boundaries are disjoint.
  std::vector<IndexList> interiors(static_cast<std::size_t>(nb));
  for (int iter = 0;; ++iter) {
    if (iter > n + 1) throw NotWellSeparated("build_from_boxes: lifting did not terminate");
    for (auto& v : interiors) v.clear();
    for (Index d = 0; d < n; ++d) interiors[static_cast<std::size_t>(owner[static_cast<std::size_t>(d)])].push_back(d);
    const auto bnd = compute_boundaries(topo, left, right, interiors, owner, a, nullptr, false);
    std::vector<int> mark(static_cast<std::size_t>(n), -1);
    bool moved = false;
    for (int s = 0; s < nb; ++s) {
      const auto su = static_cast<std::size_t>(s);
      if (left[su] < 0) continue;
      for (Index d : bnd[static_cast<std::size_t>(left[su])]) mark[static_cast<std::size_t>(d)] = s;
      for (Index d : bnd[static_cast<std::size_t>(right[su])]) {
        if (mark[static_cast<std::size_t>(d)] != s) continue;
        const int r = h.region[static_cast<std::size_t>(d)];
        const int lift = topo.ancestor(right[su], r) ? left[su] : right[su];
        for_each_neighbour(a, d, [&](Index e) {
          int& oe = owner[static_cast<std::size_t>(e)];
          if (topo.ancestor(lift, oe)) {
            oe = s;
            moved = true;
          }
        });
      }
    }
    if (!moved) break;
  }

  std::vector<EliminationNode> nodes(static_cast<std::size_t>(nb));
  for (int s = 0; s < nb; ++s) {
    nodes[static_cast<std::size_t>(s)].parent = parent[static_cast<std::size_t>(s)];
    nodes[static_cast<std::size_t>(s)].interior = interiors[static_cast<std::size_t>(s)];
  }
  EliminationTree t = EliminationTree::from_interiors(nodes, a, &h.region);

  // Child side first, then along the dividing line.
  std::vector<int> side(static_cast<std::size_t>(n), 0);
  for (int s = 0; s < nb; ++s) {
    const auto& nd = t.node(s);
    if (nd.is_leaf()) continue;
    for (Index d : t.node(nd.right).boundary) side[static_cast<std::size_t>(d)] = 1;
  }
  for (int s = 0; s < nb; ++s) {
    IndexList order = t.node(s).interior;
    const int ax = h.boxes[static_cast<std::size_t>(s)].axis;
    const int along = ax == 0 ? 1 : 0;
    auto key = [&](Index d) {
      const auto& c = h.coord[static_cast<std::size_t>(d)];
      return std::make_tuple(side[static_cast<std::size_t>(d)], c[static_cast<std::size_t>(along)],
                             c[static_cast<std::size_t>(1 - along)], d);
    };
    std::sort(order.begin(), order.end(), [&](Index x, Index y) { return key(x) < key(y); });
    nodes[static_cast<std::size_t>(s)].interior = std::move(order);
  }
  EliminationTree out = EliminationTree::from_interiors(std::move(nodes), a, &h.region);
  return out;
}

IndexList boundary_set(const EliminationTree& tree, int sigma, const SparseMatrix& a) {
  const std::vector<int> owner = tree.owner();
  IndexList out;
  for (Index d : tree.node(sigma).interior) {
    for_each_neighbour(a, d, [&](Index e) {
      const int o = owner[static_cast<std::size_t>(e)];
      if (o != sigma && tree.is_ancestor(o, sigma)) out.push_back(e);
    });
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NodePartition node_partition(const EliminationTree& tree, int sigma) {
  const auto& nd = tree.node(sigma);
  if (nd.is_leaf()) throw LeafNode("node_partition: node " + std::to_string(sigma) + " is a leaf");
  const IndexList& bl = tree.node(nd.left).boundary;
  const IndexList& br = tree.node(nd.right).boundary;
  auto in = [](const IndexList& s, Index d) { return std::binary_search(s.begin(), s.end(), d); };
  NodePartition p;
  auto place = [&](Index d, IndexList& l, IndexList& r) {
    if (in(bl, d)) {
      l.push_back(d);
    } else if (in(br, d)) {
      r.push_back(d);
    } else {
      throw PartitionMismatch("node_partition: index " + std::to_string(d) + " of node " +
                              std::to_string(sigma) + " belongs to no child boundary");
    }
  };
  for (Index d : nd.interior) place(d, p.interior_left, p.interior_right);
  for (Index d : nd.boundary) place(d, p.boundary_left, p.boundary_right);
  for (auto* v : {&p.interior_left, &p.interior_right, &p.boundary_left, &p.boundary_right}) {
    std::sort(v->begin(), v->end());
  }
  return p;
}

std::vector<std::string> validate(const EliminationTree& tree, const SparseMatrix& a) {
  std::vector<std::string> errs;
  const Index n = a.rows();
  if (tree.size() != n) {
    errs.push_back("tree size does not match matrix");
    return errs;
  }
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (int s = 0; s < tree.num_nodes(); ++s) {
    for (Index d : tree.node(s).interior) {
      if (d < 0 || d >= n) {
        errs.push_back("interior index out of range");
        return errs;
      }
      if (owner[static_cast<std::size_t>(d)] >= 0) {
        errs.push_back("interiors overlap at " + std::to_string(d));
        return errs;
      }
      owner[static_cast<std::size_t>(d)] = s;
    }
  }
  for (Index d = 0; d < n; ++d) {
    if (owner[static_cast<std::size_t>(d)] < 0) {
      errs.push_back("interiors do not cover index " + std::to_string(d));
      return errs;
    }
  }
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  for (Index i = 0; i < n; ++i) {
    for (Index k = rp[static_cast<std::size_t>(i)]; k < rp[static_cast<std::size_t>(i) + 1]; ++k) {
      const Index j = ci[static_cast<std::size_t>(k)];
      const int oi = owner[static_cast<std::size_t>(i)], oj = owner[static_cast<std::size_t>(j)];
      if (!tree.is_ancestor(oi, oj) && !tree.is_ancestor(oj, oi)) {
        errs.push_back("coupling outside ancestor line (" + std::to_string(i) + "," +
                       std::to_string(j) + ")");
        return errs;
      }
    }
  }
  if (tree.num_nodes() > 0 && !tree.node(tree.root()).boundary.empty()) {
    errs.push_back("root boundary not empty");
  }
  for (int s = 0; s < tree.num_nodes(); ++s) {
    const auto& nd = tree.node(s);
    const IndexList direct = boundary_set(tree, s, a);
    if (!std::includes(nd.boundary.begin(), nd.boundary.end(), direct.begin(), direct.end())) {
      errs.push_back("boundary of node " + std::to_string(s) + " misses coupled indices");
    }
    if (nd.is_leaf()) continue;
    const auto& bl = tree.node(nd.left).boundary;
    const auto& br = tree.node(nd.right).boundary;
    IndexList common;
    std::set_intersection(bl.begin(), bl.end(), br.begin(), br.end(), std::back_inserter(common));
    if (!common.empty()) {
      errs.push_back("siblings not well-separated (" + std::to_string(nd.left) + "," +
                     std::to_string(nd.right) + ") at index " + std::to_string(common.front()));
      continue;
    }
    IndexList front = nd.interior;
    front.insert(front.end(), nd.boundary.begin(), nd.boundary.end());
    for (Index d : front) {
      if (!std::binary_search(bl.begin(), bl.end(), d) && !std::binary_search(br.begin(), br.end(), d)) {
        errs.push_back("frontal index " + std::to_string(d) + " of node " + std::to_string(s) +
                       " belongs to no child");
        break;
      }
    }
  }
  return errs;
}

std::string to_json(const EliminationTree& tree) {
  nlohmann::json j;
  j["n"] = tree.size();
  j["nodes"] = nlohmann::json::array();
  for (int s = 0; s < tree.num_nodes(); ++s) {
    const auto& nd = tree.node(s);
    j["nodes"].push_back({{"id", s},
                          {"parent", nd.parent},
                          {"level", nd.level},
                          {"interior", nd.interior}});
  }
  if (!tree.anchor().empty()) j["anchor"] = tree.anchor();
  return j.dump();
}

EliminationTree elimination_tree_from_json(const std::string& text, const SparseMatrix& a) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("elimination tree: ") + e.what(), 1);
  }
  if (!j.contains("nodes") || !j["nodes"].is_array()) {
    throw InvalidTree("elimination tree: missing node list");
  }
  const auto& arr = j["nodes"];
  std::vector<EliminationNode> nodes(arr.size());
  std::vector<int> anchor;
  try {
    for (const auto& item : arr) {
      const int id = item.at("id").get<int>();
      if (id < 0 || id >= static_cast<int>(arr.size())) throw InvalidTree("elimination tree: bad node id");
      auto& nd = nodes[static_cast<std::size_t>(id)];
      nd.parent = item.at("parent").get<int>();
      nd.interior = item.at("interior").get<IndexList>();
    }
    if (j.contains("anchor")) anchor = j["anchor"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidTree(std::string("elimination tree: ") + e.what());
  }
  if (!anchor.empty() && static_cast<Index>(anchor.size()) != a.rows()) {
    throw InvalidTree("elimination tree: anchor list has the wrong length");
  }
  return EliminationTree::from_interiors(std::move(nodes), a, anchor.empty() ? nullptr : &anchor);
}

}  // namespace hiprec

#include "hiprec/cluster.hpp"

#include <algorithm>
#include <functional>

namespace hiprec {

ClusterTree ClusterTree::from_nodes(std::vector<ClusterNode> nodes, Index n, Index block_size) {
  ClusterTree t;
  t.n_ = n;
  t.block_size_ = block_size;
  t.nodes_ = std::move(nodes);
  return t;
}

std::vector<int> ClusterTree::leaves() const {
  std::vector<int> out;
  for (int i = 0; i < num_nodes(); ++i) {
    if (node(i).is_leaf()) out.push_back(i);
  }
  return out;
}

int ClusterTree::depth() const {
  int d = 0;
  for (const auto& nd : nodes_) d = std::max(d, nd.level);
  return d;
}

int ClusterTree::leaf_of(Index i) const {
  if (i < 0 || i >= n_) throw IndexOutOfRange("cluster: index outside tree");
  int id = root();
  while (!node(id).is_leaf()) {
    id = (i < node(node(id).left).hi) ? node(id).left : node(id).right;
  }
  return id;
}

bool ClusterTree::same_shape(const ClusterTree& other) const {
  if (num_nodes() != other.num_nodes()) return false;
  for (int i = 0; i < num_nodes(); ++i) {
    const auto& a = node(i);
    const auto& b = other.node(i);
    if (a.left != b.left || a.right != b.right || a.parent != b.parent) return false;
  }
  return true;
}

ClusterTree ClusterTree::subtree(int id) const {
  std::vector<ClusterNode> out;
  const Index base = node(id).lo;
  const int base_level = node(id).level;
  std::function<int(int, int)> copy = [&](int src, int parent) -> int {
    ClusterNode nd = node(src);
    int l = -1, r = -1;
    if (!nd.is_leaf()) {
      l = copy(nd.left, -2);
      r = copy(nd.right, -2);
    }
    nd.lo -= base;
    nd.hi -= base;
    nd.level -= base_level;
    nd.left = l;
    nd.right = r;
    nd.parent = parent;
    out.push_back(nd);
    const int me = static_cast<int>(out.size()) - 1;
    if (l >= 0) {
      out[static_cast<std::size_t>(l)].parent = me;
      out[static_cast<std::size_t>(r)].parent = me;
    }
    return me;
  };
  copy(id, -1);
  return from_nodes(std::move(out), node(id).size(), block_size_);
}

ClusterTree ClusterTree::clip(Index n) const {
  ClusterTree t = *this;
  t.n_ = std::min(n_, n);
  for (auto& nd : t.nodes_) {
    nd.lo = std::min(nd.lo, n);
    nd.hi = std::min(nd.hi, n);
  }
  return t;
}

namespace {

int build_range(std::vector<ClusterNode>& out, Index lo, Index hi, int level, Index beta,
                Index g) {
  ClusterNode nd;
  nd.lo = lo;
  nd.hi = hi;
  nd.level = level;
  const Index size = hi - lo;
  if (size > beta) {
    const Index units = (size + g - 1) / g;
    const Index mid = lo + std::min(size, g * ((units + 1) / 2));
    if (mid > lo && mid < hi) {
      nd.left = build_range(out, lo, mid, level + 1, beta, g);
      nd.right = build_range(out, mid, hi, level + 1, beta, g);
    }
  }
  out.push_back(nd);
  const int me = static_cast<int>(out.size()) - 1;
  if (!nd.is_leaf()) {
    out[static_cast<std::size_t>(nd.left)].parent = me;
    out[static_cast<std::size_t>(nd.right)].parent = me;
  }
  return me;
}

}  // namespace

ClusterTree build_uniform(Index n, Index beta, Index granularity) {
  if (n < 0) throw DimensionMismatch("build_uniform: negative size");
  if (beta < 1) throw InvalidOption("build_uniform: block size must be positive");
  std::vector<ClusterNode> nodes;
  if (n > 0) build_range(nodes, 0, n, 0, beta, std::max<Index>(granularity, 1));
  return ClusterTree::from_nodes(std::move(nodes), n, beta);
}

ClusterTree join(const ClusterTree& left, const ClusterTree& right) {
  std::vector<ClusterNode> nodes;
  nodes.reserve(static_cast<std::size_t>(left.num_nodes() + right.num_nodes() + 1));
  for (ClusterNode nd : left.nodes()) {
    nd.level += 1;
    nodes.push_back(nd);
  }
  const int offset = left.num_nodes();
  for (ClusterNode nd : right.nodes()) {
    nd.level += 1;
    nd.lo += left.size();
    nd.hi += left.size();
    if (nd.parent >= 0) nd.parent += offset;
    if (nd.left >= 0) nd.left += offset;
    if (nd.right >= 0) nd.right += offset;
    nodes.push_back(nd);
  }
  ClusterNode root;
  root.lo = 0;
  root.hi = left.size() + right.size();
  root.left = left.root();
  root.right = offset + right.root();
  nodes.push_back(root);
  const int me = static_cast<int>(nodes.size()) - 1;
  nodes[static_cast<std::size_t>(root.left)].parent = me;
  nodes[static_cast<std::size_t>(root.right)].parent = me;
  return ClusterTree::from_nodes(std::move(nodes), root.hi,
                                 std::max(left.block_size(), right.block_size()));
}

ClusterTree build_partitioned(Index n1, Index n2, Index beta, Index granularity,
                              Index align_n1) {
  if (n1 < 0 || n2 < 0) throw DimensionMismatch("build_partitioned: negative size");
  ClusterTree left = (align_n1 > n1) ? build_uniform(align_n1, beta, granularity).clip(n1)
                                     : build_uniform(n1, beta, granularity);
  ClusterTree right = build_uniform(n2, beta, granularity);
  if (n2 == 0) {
    if (align_n1 > n1 && n1 == 0) return ClusterTree::from_nodes({}, 0, beta);
    return left;
  }
  if (n1 == 0) return right;
  return join(left, right);
}

std::vector<std::string> validate(const ClusterTree& t) {
  std::vector<std::string> errs;
  if (t.empty()) {
    if (t.size() != 0) errs.push_back("empty tree with nonzero size");
    return errs;
  }
  const auto& root = t.node(t.root());
  if (root.lo != 0 || root.hi != t.size()) errs.push_back("root does not cover [0,n)");
  if (root.parent != -1) errs.push_back("root has a parent");
  for (int i = 0; i < t.num_nodes(); ++i) {
    const auto& nd = t.node(i);
    const std::string tag = "node " + std::to_string(i) + ": ";
    if (nd.lo > nd.hi) errs.push_back(tag + "inverted range");
    if ((nd.left < 0) != (nd.right < 0)) {
      errs.push_back(tag + "non-leaf must have exactly two children");
      continue;
    }
    if (nd.is_leaf()) {
      if (t.block_size() > 0 && nd.size() > t.block_size()) {
        errs.push_back(tag + "leaf exceeds block size");
      }
      continue;
    }
    if (nd.left >= i || nd.right >= i) errs.push_back(tag + "children must precede parent");
    if (nd.left >= t.num_nodes() || nd.right >= t.num_nodes() || nd.left < 0) continue;
    const auto& l = t.node(nd.left);
    const auto& r = t.node(nd.right);
    if (l.parent != i || r.parent != i) errs.push_back(tag + "child parent link broken");
    if (l.level != nd.level + 1 || r.level != nd.level + 1) errs.push_back(tag + "level mismatch");
    if (l.hi > r.lo) errs.push_back(tag + "siblings overlap");
    if (l.lo != nd.lo || l.hi != r.lo || r.hi != nd.hi) {
      if (l.hi <= r.lo) errs.push_back(tag + "children do not tile parent range");
    }
  }
  return errs;
}

}  // namespace hiprec

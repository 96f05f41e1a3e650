#pragma once

#include <string>
#include <vector>

#include "hiprec/linalg.hpp"

namespace hiprec {

struct ClusterNode {
  Index lo = 0;
  Index hi = 0;
  int level = 0;
  int parent = -1;
  int left = -1;
  int right = -1;

  bool is_leaf() const { return left < 0; }
  Index size() const { return hi - lo; }
};

/// Binary tree of contiguous index ranges, stored in post-order (root last).
class ClusterTree {
 public:
  ClusterTree() = default;

  /// Nodes must be in post-order; no checks are made (see validate).
  static ClusterTree from_nodes(std::vector<ClusterNode> nodes, Index n, Index block_size);

  Index size() const { return n_; }
  Index block_size() const { return block_size_; }
  bool empty() const { return nodes_.empty(); }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int root() const { return nodes_.empty() ? -1 : num_nodes() - 1; }
  const ClusterNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<ClusterNode>& nodes() const { return nodes_; }

  /// Leaves from left to right.
  std::vector<int> leaves() const;
  int depth() const;
  /// Leaf whose range contains i.
  int leaf_of(Index i) const;
  /// Same parent/child structure (ranges may differ).
  bool same_shape(const ClusterTree& other) const;
  /// Subtree rooted at `id`, with indices shifted to start at zero.
  ClusterTree subtree(int id) const;
  /// Same shape with every range intersected with [0, n).
  ClusterTree clip(Index n) const;

 private:
  Index n_ = 0;
  Index block_size_ = 0;
  std::vector<ClusterNode> nodes_;
};

/// Split at granularity * ceil(units / 2) while a node holds more than beta indices.
ClusterTree build_uniform(Index n, Index beta, Index granularity = 1);

/// Top split at n1 with uniform subtrees. When align_n1 >= n1 the left subtree
/// is the clip of build_uniform(align_n1) so that two partitioned trees with the
/// same align_n1 share the shape of their left halves. An empty side collapses.
ClusterTree build_partitioned(Index n1, Index n2, Index beta, Index granularity = 1,
                              Index align_n1 = -1);

/// New root over two trees placed side by side.
ClusterTree join(const ClusterTree& left, const ClusterTree& right);

/// Violations of the tree invariants; empty when valid.
std::vector<std::string> validate(const ClusterTree& tree);

}  // namespace hiprec

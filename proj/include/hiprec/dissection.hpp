#pragma once

#include <array>
#include <string>
#include <vector>

#include "hiprec/linalg.hpp"
#include "hiprec/sparse.hpp"

namespace hiprec {

/// Box of a geometric subdivision; children are split along `axis`
/// (0: the dividing line is x = const, 1: y = const).
struct BoxNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int level = 0;
  int axis = 0;
  bool is_leaf() const { return left < 0; }
};

/// Box tree in post-order plus, per degree of freedom, the leaf box it lives
/// in and a representative point used for ordering.
struct BoxHierarchy {
  std::vector<BoxNode> boxes;
  std::vector<int> region;
  std::vector<std::array<double, 2>> coord;
};

struct EliminationNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int level = 0;
  IndexList interior;
  IndexList boundary;
  bool is_leaf() const { return left < 0; }
};

/// Post-ordered binary elimination tree (root last).
class EliminationTree {
 public:
  EliminationTree() = default;

  /// Takes parent links and interiors; children, levels and boundaries are
  /// derived. `anchor` optionally gives a leaf per DOF used to route degrees
  /// of freedom that no child touches.
  static EliminationTree from_interiors(std::vector<EliminationNode> nodes,
                                        const SparseMatrix& a,
                                        const std::vector<int>* anchor = nullptr);

  Index size() const { return n_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int root() const { return num_nodes() - 1; }
  const EliminationNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<EliminationNode>& nodes() const { return nodes_; }
  int depth() const;
  bool is_ancestor(int anc, int desc) const;

  /// Node holding each DOF in its interior.
  std::vector<int> owner() const;
  /// Post-order concatenation of the interiors.
  IndexList ordering() const;
  /// Same tree in the numbering new = position in ordering().
  EliminationTree renumbered() const;
  /// Routing leaf per DOF; empty when none was given.
  const std::vector<int>& anchor() const { return anchor_; }

 private:
  void link();

  Index n_ = 0;
  std::vector<EliminationNode> nodes_;
  std::vector<int> tin_;
  std::vector<int> tout_;
  std::vector<int> anchor_;
};

/// The four index sets of a branch node.
struct NodePartition {
  IndexList interior_left;   // I^s and B^l
  IndexList interior_right;  // I^s and B^r
  IndexList boundary_left;   // B^s and B^l
  IndexList boundary_right;  // B^s and B^r
};

/// Elimination tree from a box hierarchy. Each DOF goes to the lowest box
/// containing itself and all of its neighbours; DOFs are then lifted until
/// sibling boundaries are disjoint. Interiors are ordered child side first,
/// then along the dividing line.
EliminationTree build_from_boxes(const BoxHierarchy& hierarchy, const SparseMatrix& a);

/// Ancestor DOFs coupled to the interior of `sigma` through A.
IndexList boundary_set(const EliminationTree& tree, int sigma, const SparseMatrix& a);

/// Throws LeafNode for leaves.
NodePartition node_partition(const EliminationTree& tree, int sigma);

/// Violations of the elimination-tree invariants; empty when valid.
std::vector<std::string> validate(const EliminationTree& tree, const SparseMatrix& a);

std::string to_json(const EliminationTree& tree);
/// Boundaries are recomputed from A.
EliminationTree elimination_tree_from_json(const std::string& text, const SparseMatrix& a);

}  // namespace hiprec

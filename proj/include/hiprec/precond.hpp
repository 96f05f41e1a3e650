#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hiprec/dissection.hpp"
#include "hiprec/hss.hpp"
#include "hiprec/linalg.hpp"
#include "hiprec/sparse.hpp"

namespace hiprec {

struct BuildOptions {
  double eps_hss = 1e-6;
  Index beta = 30;        // HSS leaf size
  Index granularity = 1;  // indices kept together in HSS clusters
  bool lhss_auto = true;
  int lhss = 0;         // switching level when not automatic
  int lhss_offset = 4;  // automatic level = depth - offset
  Index k0 = 32;
  Index r = 10;
  std::uint64_t seed = 0;
  ToleranceMode mode = ToleranceMode::absolute;
  /// Roots with at most this many interior indices are factored by dense LU.
  Index root_dense_limit = 2000;
  /// Keep every Schur complement for inspection.
  bool keep_schur = false;
  /// Inspection hooks. The frontal is densified in [interior; boundary] order;
  /// the Schur oracle acts in schur_order.
  std::function<void(int, const Matrix&)> on_frontal;
  std::function<void(int, const MatrixOracle&)> on_schur_oracle;
};

/// Switching level for a tree of the given depth.
int resolve_lhss(const BuildOptions& opts, int depth);

struct LevelStats {
  int level = 0;
  Index max_rank = 0;
  int nodes = 0;
  double t_s = 0.0;  // factorization time spent on the level
};

struct BuildStats {
  Index n = 0;
  int levels = 0;
  int lhss = 0;
  Index k_max = 0;
  bool dense_only = true;  // k_max is then the largest dense block dimension
  std::size_t bytes = 0;
  double t_factor_s = 0.0;
  double t_apply_s = 0.0;
  int saturated_nodes = 0;
  std::vector<LevelStats> per_level;
  std::vector<std::string> warnings;
};

std::string to_json(const BuildStats& stats);

struct NodeSummary {
  int level = 0;
  bool structured = false;  // interior inverse and L/R in compressed form
  bool schur_hss = false;   // Schur complement stored in HSS form
  Index interior = 0;
  Index boundary = 0;
  Index rank_l = 0;
  Index rank_r = 0;
  Index rank_s = 0;
  Index rank_bound = 0;  // bound on rank_l and rank_r (structured nodes)
};

/// Approximate block LDR factorization over an elimination tree.
class Preconditioner {
 public:
  Preconditioner();
  ~Preconditioner();
  Preconditioner(Preconditioner&&) noexcept;
  Preconditioner& operator=(Preconditioner&&) noexcept;

  /// Tree must validate against A and have its interiors in any order.
  static Preconditioner factor(const SparseMatrix& a, const EliminationTree& tree,
                               const BuildOptions& opts);

  Index size() const;
  /// Applies P^{-1}.
  Vector apply(const Vector& b) const;
  Matrix apply(const Matrix& b) const;

  const BuildStats& stats() const;
  int num_nodes() const;
  const NodeSummary& node(int sigma) const;

  /// Global indices in the order used by the node's frontal blocks.
  const IndexList& interior_order(int sigma) const;
  const IndexList& boundary_order(int sigma) const;
  /// (A_ii)^{-1} X and (A_ii)^{-T} X in interior order.
  Matrix interior_solve(int sigma, const Matrix& x) const;
  Matrix interior_solve_transpose(int sigma, const Matrix& x) const;
  /// Densified L = -A_bi A_ii^{-1} and R = -A_ii^{-1} A_ib.
  Matrix lower(int sigma) const;
  Matrix upper(int sigma) const;
  /// Densified Schur complement with its global index order (keep_schur only).
  Matrix schur(int sigma) const;
  const IndexList& schur_order(int sigma) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hiprec

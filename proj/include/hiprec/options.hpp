#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiprec/fem2d.hpp"
#include "hiprec/precond.hpp"

namespace hiprec {

struct RunConfig {
  std::string command;
  std::string problem = "poisson";  // poisson | helmholtz | external
  std::string disc = "ipdg";        // ipdg | cg
  Index m = 22;
  int p = 1;
  double kappa = 0.0;
  double penalty = 10.0;
  double epsilon_hss = 1e-6;
  Index beta = 0;  // 0 selects 10 (p+1)(p+2)/2
  Index leaf_threshold = 10;
  int lhss_offset = 4;
  Index k0 = 32;
  Index r = 10;
  std::uint64_t seed = 0;
  double tol = 1e-9;
  int restart = 10;
  int maxit = 30;
  std::string matrix;
  std::string tree;
  std::string rhs;
  std::string out = ".";
  /// Bench sweeps; an absent list means the single configured value.
  bool has_sweep_m = false;
  std::vector<Index> sweep_m;
  bool has_sweep_kappa = false;
  std::vector<double> sweep_kappa;
};

/// Defaults, with the seed taken from HIPREC_SEED when set.
RunConfig default_config();

/// Sets one field by its flag name (without dashes), e.g. "epsilon-hss".
void set_option(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies key = value lines; '#' starts a comment. Throws ParseError.
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Every key accepted by set_option.
const std::vector<std::string>& option_keys();

/// Throws InvalidOption on inconsistent settings.
void check(const RunConfig& cfg);

Index effective_beta(const RunConfig& cfg);
Discretization discretization(const RunConfig& cfg);
BuildOptions build_options(const RunConfig& cfg, Index granularity);

}  // namespace hiprec

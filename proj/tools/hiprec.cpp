#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "hiprec/error.hpp"
#include "hiprec/fem2d.hpp"
#include "hiprec/krylov.hpp"
#include "hiprec/options.hpp"
#include "hiprec/precond.hpp"

namespace fs = std::filesystem;
using namespace hiprec;

namespace {

struct System {
  SparseMatrix a;
  Vector b;
  EliminationTree tree;
  Index granularity = 1;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidOption("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Vector read_vector(const std::string& path, Index n) {
  std::ifstream in(path);
  if (!in) throw InvalidOption("cannot open '" + path + "'");
  std::vector<double> v;
  double x = 0.0;
  while (in >> x) v.push_back(x);
  if (!in.eof()) throw ParseError("rhs: expected a number", static_cast<std::int64_t>(v.size()) + 1);
  if (static_cast<Index>(v.size()) != n) throw DimensionMismatch("rhs: length does not match the matrix");
  return Eigen::Map<Vector>(v.data(), n);
}

void write_vector(const std::string& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw InvalidOption("cannot write '" + path + "'");
  char buf[64];
  for (Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v(i));
    out << buf;
  }
}

System load_system(const RunConfig& cfg, double kappa, Index m) {
  System s;
  if (cfg.problem == "external") {
    s.a = read_matrix_market(cfg.matrix);
    s.tree = elimination_tree_from_json(read_text(cfg.tree), s.a);
    s.b = cfg.rhs.empty() ? Vector(Vector::Ones(s.a.rows())) : read_vector(cfg.rhs, s.a.rows());
    return s;
  }
  const double k = cfg.problem == "helmholtz" ? kappa : 0.0;
  Problem pr = make_problem(m, discretization(cfg), k, cfg.leaf_threshold);
  s.a = std::move(pr.a);
  s.b = std::move(pr.b);
  s.tree = std::move(pr.tree);
  s.granularity = pr.dofs_per_element;
  return s;
}

fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  Index n = 0;
  BuildStats stats;
  SolveReport report;
};

Run factor_and_solve(const RunConfig& cfg, const System& s) {
  Run run;
  run.n = s.a.rows();
  const Preconditioner pc = Preconditioner::factor(s.a, s.tree, build_options(cfg, s.granularity));
  run.stats = pc.stats();
  const VectorOp op = [&](const Vector& x) { return s.a.matvec(x); };
  const VectorOp inv = [&](const Vector& x) { return pc.apply(x); };
  run.report = gmres(op, inv, s.b, cfg.restart, cfg.tol, cfg.maxit);
  return run;
}

int cmd_solve(const RunConfig& cfg) {
  const System s = load_system(cfg, cfg.kappa, cfg.m);
  const Run run = factor_and_solve(cfg, s);
  const fs::path dir = out_dir(cfg);
  {
    std::ofstream csv(dir / "history.csv");
    csv << "iter,relres\n";
    char buf[64];
    for (std::size_t i = 0; i < run.report.history.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.6e\n", i, run.report.history[i]);
      csv << buf;
    }
  }
  nlohmann::json j = nlohmann::json::parse(to_json(run.stats));
  j["iterations"] = run.report.iterations;
  j["converged"] = run.report.converged;
  j["relres"] = run.report.history.back();
  std::ofstream(dir / "stats.json") << j.dump(2) << "\n";
  std::cout << "n=" << run.n << " L_HSS=" << run.stats.lhss << " k_max=" << run.stats.k_max
            << " iterations=" << run.report.iterations << " relres=" << run.report.history.back()
            << (run.report.converged ? " converged" : " not converged") << "\n";
  return run.report.converged ? 0 : 2;
}

int cmd_bench(const RunConfig& cfg) {
  const std::vector<Index> ms = cfg.has_sweep_m ? cfg.sweep_m : std::vector<Index>{cfg.m};
  const std::vector<double> ks = cfg.has_sweep_kappa ? cfg.sweep_kappa : std::vector<double>{cfg.kappa};
  std::ostringstream table;
  table << "h_inv,n,L_HSS,t_apply,t_factor,bytes,iters,k_max\n";
  for (Index m : ms) {
    for (double kappa : ks) {
      char buf[256];
      try {
        const System s = load_system(cfg, kappa, m);
        const Run run = factor_and_solve(cfg, s);
        const int iters = run.report.converged ? run.report.iterations : -1;
        std::snprintf(buf, sizeof buf, "%lld,%lld,%d,%.6g,%.6g,%zu,%d,%lld\n",
                      static_cast<long long>(m), static_cast<long long>(run.n), run.stats.lhss,
                      run.stats.t_apply_s, run.stats.t_factor_s, run.stats.bytes, iters,
                      static_cast<long long>(run.stats.k_max));
      } catch (const Error& e) {
        std::cerr << "bench: m=" << m << " kappa=" << kappa << ": " << e.what() << "\n";
        std::snprintf(buf, sizeof buf, "%lld,NA,NA,NA,NA,NA,NA,NA\n", static_cast<long long>(m));
      }
      table << buf;
    }
  }
  const fs::path dir = out_dir(cfg);
  std::ofstream(dir / "bench.csv") << table.str();
  std::cout << table.str();
  return 0;
}

int cmd_assemble(const RunConfig& cfg) {
  const System s = load_system(cfg, cfg.kappa, cfg.m);
  const fs::path dir = out_dir(cfg);
  write_matrix_market((dir / "matrix.mtx").string(), s.a);
  std::ofstream tree(dir / "tree.json");
  if (!tree) throw InvalidOption("cannot write tree.json");
  tree << to_json(s.tree) << "\n";
  write_vector((dir / "rhs.txt").string(), s.b);
  nlohmann::json j;
  j["n"] = s.a.rows();
  j["nnz"] = s.a.nnz();
  j["levels"] = s.tree.depth();
  j["nodes"] = s.tree.num_nodes();
  std::ofstream(dir / "assemble.json") << j.dump(2) << "\n";
  std::cout << "n=" << s.a.rows() << " nnz=" << s.a.nnz() << " levels=" << s.tree.depth() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical sparse preconditioner driver"};
  app.require_subcommand(1);
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> flags;
  std::string config;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"solve", "Factor, run preconditioned GMRES and write history.csv and stats.json"},
      {"bench", "Sweep mesh sizes and wavenumbers and write bench.csv"},
      {"assemble", "Write the matrix, elimination tree and right-hand side"},
  };
  for (const auto& [name, about] : commands) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->add_option("--config", config, "key = value file; flags take precedence");
    for (const auto& key : option_keys()) {
      flags[name + ":" + key] =
          sub->add_option("--" + key, values[name + ":" + key]);
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    RunConfig cfg = default_config();
    cfg.command = app.get_subcommands().front()->get_name();
    if (!config.empty()) apply_config_file(cfg, config);
    for (const auto& key : option_keys()) {
      const std::string id = cfg.command + ":" + key;
      if (flags.at(id)->count() > 0) set_option(cfg, key, values.at(id));
    }
    check(cfg);
    if (cfg.command == "solve") return cmd_solve(cfg);
    if (cfg.command == "bench") return cmd_bench(cfg);
    return cmd_assemble(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

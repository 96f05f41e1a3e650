#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "hiprec/dissection.hpp"
#include "hiprec/fem2d.hpp"
#include "hiprec/sparse.hpp"

namespace fs = std::filesystem;
using namespace hiprec;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hiprec_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(HIPREC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json stats(const fs::path& dir, const char* file = "stats.json") {
  return nlohmann::json::parse(slurp(dir / file));
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Cli, SolvePoissonConverges) {
  const fs::path d = scratch("solve");
  ASSERT_EQ(run("solve --problem poisson --disc ipdg --m 22 --p 1 --out " + d.string()), 0);
  const auto j = stats(d);
  EXPECT_EQ(j["n"], 2904);
  EXPECT_LE(j["iterations"].get<int>(), 4);
  const auto h = csv(d / "history.csv");
  ASSERT_GE(h.size(), 2u);
  EXPECT_EQ(h[0], (std::vector<std::string>{"iter", "relres"}));
  EXPECT_EQ(h.size(), j["iterations"].get<std::size_t>() + 2);
  EXPECT_LE(std::stod(h.back()[1]), 1e-9);
}

TEST(Cli, SolveHelmholtz) {
  const fs::path d = scratch("helm");
  ASSERT_EQ(run("solve --problem helmholtz --kappa 10 --m 64 --p 1 --out " + d.string()), 0);
  EXPECT_LE(stats(d)["iterations"].get<int>(), 6);
}

TEST(Cli, ExternalDiagonalSystem) {
  const fs::path d = scratch("ext");
  std::vector<Triplet> t;
  for (Index i = 0; i < 6; ++i) t.push_back({i, i, 1.0 + static_cast<double>(i)});
  const SparseMatrix a = SparseMatrix::from_triplets(6, 6, t);
  write_matrix_market((d / "a.mtx").string(), a);
  std::vector<EliminationNode> nodes(1);
  nodes[0].interior = {0, 1, 2, 3, 4, 5};
  std::ofstream(d / "a.json") << to_json(EliminationTree::from_interiors(nodes, a));
  ASSERT_EQ(run("solve --problem external --matrix " + (d / "a.mtx").string() + " --tree " +
                (d / "a.json").string() + " --out " + d.string()),
            0);
  EXPECT_EQ(stats(d)["iterations"], 1);
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch("codes");
  EXPECT_EQ(run("solve --m 22 --maxit 1 --out " + d.string()), 2);
  EXPECT_EQ(run("solve --problem external --matrix /nonexistent.mtx --tree x.json --out " +
                d.string()),
            1);
  EXPECT_EQ(run("solve --m -3 --out " + d.string()), 1);
  EXPECT_EQ(run("solve --no-such-flag 1"), 1);
  EXPECT_EQ(run(""), 1);
}

TEST(Cli, BenchEmptySweepIsHeaderOnly) {
  const fs::path d = scratch("bench0");
  ASSERT_EQ(run("bench --sweep-m \"\" --out " + d.string()), 0);
  EXPECT_EQ(slurp(d / "bench.csv"), "h_inv,n,L_HSS,t_apply,t_factor,bytes,iters,k_max\n");
}

TEST(Cli, BenchIsDeterministic) {
  const fs::path d1 = scratch("bench1"), d2 = scratch("bench2");
  const std::string args = "bench --sweep-m 8,12 --seed 3 --out ";
  ASSERT_EQ(run(args + d1.string()), 0);
  ASSERT_EQ(run(args + d2.string()), 0);
  const auto a = csv(d1 / "bench.csv"), b = csv(d2 / "bench.csv");
  ASSERT_EQ(a.size(), 3u);
  ASSERT_EQ(b.size(), 3u);
  for (std::size_t r = 1; r < a.size(); ++r) {
    ASSERT_EQ(a[r].size(), 8u);
    for (std::size_t c : {0u, 1u, 2u, 5u, 6u, 7u}) EXPECT_EQ(a[r][c], b[r][c]) << r << "," << c;
  }
  EXPECT_EQ(a[1][0], "8");
  EXPECT_EQ(a[2][1], std::to_string(2 * 12 * 12 * 3));
}

TEST(Cli, AssembleRoundTrip) {
  const fs::path d = scratch("asm");
  ASSERT_EQ(run("assemble --problem poisson --m 4 --p 1 --disc ipdg --out " + d.string()), 0);
  const SparseMatrix a = read_matrix_market((d / "matrix.mtx").string());
  const Problem pr = make_problem(4, {DiscKind::ipdg, 1, 10.0}, 0.0);
  EXPECT_TRUE(a == pr.a);
  const EliminationTree t = elimination_tree_from_json(slurp(d / "tree.json"), a);
  EXPECT_TRUE(validate(t, a).empty());
  ASSERT_EQ(t.num_nodes(), pr.tree.num_nodes());
  for (int s = 0; s < t.num_nodes(); ++s) EXPECT_EQ(t.node(s).interior, pr.tree.node(s).interior);
  EXPECT_EQ(stats(d, "assemble.json")["n"], 2 * 4 * 4 * 3);

  ASSERT_EQ(run("solve --problem external --matrix " + (d / "matrix.mtx").string() + " --tree " +
                (d / "tree.json").string() + " --rhs " + (d / "rhs.txt").string() + " --out " +
                d.string()),
            0);
}

TEST(Cli, AssembleCountsForHigherDegree) {
  for (int p : {2, 3}) {
    const fs::path d = scratch("asm_p" + std::to_string(p));
    ASSERT_EQ(run("assemble --m 6 --p " + std::to_string(p) + " --out " + d.string()), 0);
    EXPECT_EQ(stats(d, "assemble.json")["n"], 2 * 6 * 6 * (p + 1) * (p + 2) / 2);
  }
}

TEST(Cli, HelmholtzAtZeroIsPoisson) {
  const fs::path a = scratch("k0a"), b = scratch("k0b");
  ASSERT_EQ(run("assemble --problem poisson --m 6 --out " + a.string()), 0);
  ASSERT_EQ(run("assemble --problem helmholtz --kappa 0 --m 6 --out " + b.string()), 0);
  for (const char* f : {"matrix.mtx", "tree.json", "rhs.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Cli, FlagsOverrideConfigFile) {
  const fs::path d = scratch("cfg");
  std::ofstream(d / "run.cfg") << "m = 4\np = 2\n";
  ASSERT_EQ(run("assemble --config " + (d / "run.cfg").string() + " --out " + d.string()), 0);
  EXPECT_EQ(stats(d, "assemble.json")["n"], 2 * 4 * 4 * 6);
  ASSERT_EQ(run("assemble --config " + (d / "run.cfg").string() + " --m 6 --out " + d.string()),
            0);
  EXPECT_EQ(stats(d, "assemble.json")["n"], 2 * 6 * 6 * 6);
  std::ofstream(d / "bad.cfg") << "m = 4\noops\n";
  EXPECT_EQ(run("assemble --config " + (d / "bad.cfg").string() + " --out " + d.string()), 1);
}

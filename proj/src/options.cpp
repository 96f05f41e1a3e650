#include "hiprec/options.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hiprec/error.hpp"

namespace hiprec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidOption("option " + key + ": cannot parse '" + text + "'");
  }
  return out;
}

std::string parse_choice(const std::string& key, const std::string& text,
                         const std::vector<std::string>& allowed) {
  const std::string v = trim(text);
  for (const auto& a : allowed) {
    if (v == a) return v;
  }
  throw InvalidOption("option " + key + ": unknown value '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<T>(key, item));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"problem",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.problem = parse_choice(k, v, {"poisson", "helmholtz", "external"});
       }},
      {"disc",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.disc = parse_choice(k, v, {"ipdg", "cg"});
       }},
      {"m", [](RunConfig& c, const std::string& k, const std::string& v) { c.m = parse_number<Index>(k, v); }},
      {"p", [](RunConfig& c, const std::string& k, const std::string& v) { c.p = parse_number<int>(k, v); }},
      {"kappa", [](RunConfig& c, const std::string& k, const std::string& v) { c.kappa = parse_number<double>(k, v); }},
      {"penalty", [](RunConfig& c, const std::string& k, const std::string& v) { c.penalty = parse_number<double>(k, v); }},
      {"epsilon-hss", [](RunConfig& c, const std::string& k, const std::string& v) { c.epsilon_hss = parse_number<double>(k, v); }},
      {"beta",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.beta = trim(v) == "auto" ? 0 : parse_number<Index>(k, v);
       }},
      {"leaf-threshold", [](RunConfig& c, const std::string& k, const std::string& v) { c.leaf_threshold = parse_number<Index>(k, v); }},
      {"lhss-offset", [](RunConfig& c, const std::string& k, const std::string& v) { c.lhss_offset = parse_number<int>(k, v); }},
      {"k0", [](RunConfig& c, const std::string& k, const std::string& v) { c.k0 = parse_number<Index>(k, v); }},
      {"r", [](RunConfig& c, const std::string& k, const std::string& v) { c.r = parse_number<Index>(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.tol = parse_number<double>(k, v); }},
      {"restart", [](RunConfig& c, const std::string& k, const std::string& v) { c.restart = parse_number<int>(k, v); }},
      {"maxit", [](RunConfig& c, const std::string& k, const std::string& v) { c.maxit = parse_number<int>(k, v); }},
      {"matrix", [](RunConfig& c, const std::string&, const std::string& v) { c.matrix = trim(v); }},
      {"tree", [](RunConfig& c, const std::string&, const std::string& v) { c.tree = trim(v); }},
      {"rhs", [](RunConfig& c, const std::string&, const std::string& v) { c.rhs = trim(v); }},
      {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = trim(v); }},
      {"sweep-m",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.has_sweep_m = true;
         c.sweep_m = parse_list<Index>(k, v);
       }},
      {"sweep-kappa",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.has_sweep_kappa = true;
         c.sweep_kappa = parse_list<double>(k, v);
       }},
  };
  return table;
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  if (const char* env = std::getenv("HIPREC_SEED"); env != nullptr && *env != '\0') {
    cfg.seed = parse_number<std::uint64_t>("HIPREC_SEED", env);
  }
  return cfg;
}

void set_option(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw InvalidOption("unknown option '" + key + "'");
  it->second(cfg, key, value);
}

const std::vector<std::string>& option_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::int64_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", no);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    for (char& ch : key) {
      if (ch == '_') ch = '-';
    }
    try {
      set_option(cfg, key, value);
    } catch (const InvalidOption& e) {
      throw ParseError(e.what(), no);
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidOption("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

void check(const RunConfig& cfg) {
  if (cfg.m < 1) throw InvalidOption("m must be at least 1");
  if (cfg.p < 1) throw InvalidOption("p must be at least 1");
  if (cfg.kappa < 0.0) throw InvalidOption("kappa must be non-negative");
  if (!(cfg.epsilon_hss > 0.0)) throw InvalidOption("epsilon-hss must be positive");
  if (cfg.beta < 0) throw InvalidOption("beta must be positive or auto");
  if (cfg.leaf_threshold < 1) throw InvalidOption("leaf-threshold must be at least 1");
  if (cfg.k0 < 1 || cfg.r < 1) throw InvalidOption("k0 and r must be at least 1");
  if (!(cfg.tol > 0.0)) throw InvalidOption("tol must be positive");
  if (cfg.restart < 1 || cfg.maxit < 0) throw InvalidOption("restart >= 1 and maxit >= 0 required");
  if (cfg.problem == "external" && (cfg.matrix.empty() || cfg.tree.empty())) {
    throw InvalidOption("external problems need --matrix and --tree");
  }
}

Index effective_beta(const RunConfig& cfg) {
  return cfg.beta > 0 ? cfg.beta : 10 * dofs_per_element(cfg.p);
}

Discretization discretization(const RunConfig& cfg) {
  return {cfg.disc == "cg" ? DiscKind::cg : DiscKind::ipdg, cfg.p, cfg.penalty};
}

BuildOptions build_options(const RunConfig& cfg, Index granularity) {
  BuildOptions o;
  o.eps_hss = cfg.epsilon_hss;
  o.beta = effective_beta(cfg);
  o.granularity = granularity;
  o.lhss_offset = cfg.lhss_offset;
  o.k0 = cfg.k0;
  o.r = cfg.r;
  o.seed = cfg.seed;
  return o;
}

}  // namespace hiprec

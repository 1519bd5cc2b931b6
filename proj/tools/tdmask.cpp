// tdmask: tree decompositions, attention masks, and bag features for
// AMR-style rooted labeled digraphs.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdmask/attention.hpp"
#include "tdmask/graph_json.hpp"
#include "tdmask/oracle.hpp"
#include "tdmask/penman.hpp"
#include "tdmask/treedec.hpp"

namespace {

using nlohmann::ordered_json;
using namespace tdmask;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;   // internal error or failed (self-)test
constexpr int kExitPartial = 2;   // some graphs skipped
constexpr int kExitUsage = 3;     // bad invocation

struct RunConfig {
  std::string input;
  std::string format = "penman";
  int k = 2;
  int max_k = 5;
  std::string scoring = "assigned";
  std::uint64_t seed = 1;
  std::string out;
  std::string suites;
  bool inject_fault = false;
  std::uint64_t subset_cap = kDefaultSubsetCap;
};

ScoringMode scoring_mode(const RunConfig& cfg) {
  return cfg.scoring == "all" ? ScoringMode::kAllEdges
                              : ScoringMode::kAssignedEdges;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CorpusEntry {
  std::optional<LabeledGraph> graph;
  std::string error;  // set when the graph failed to parse (jsonl isolation)
};

/// Loads the corpus. Penman and json formats abort on the first parse error;
/// jsonl isolates errors per line.
std::vector<CorpusEntry> load_corpus(const RunConfig& cfg) {
  std::string text = read_file(cfg.input);
  std::vector<CorpusEntry> out;
  if (cfg.format == "penman") {
    for (LabeledGraph& g : parse_penman_corpus(text))
      out.push_back({std::move(g), {}});
  } else if (cfg.format == "json") {
    ordered_json j = ordered_json::parse(text);
    if (j.is_array())
      for (const auto& item : j) out.push_back({graph_from_json(item), {}});
    else
      out.push_back({graph_from_json(j), {}});
  } else if (cfg.format == "jsonl") {
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back({parse_graph_json(line), {}});
      } catch (const std::exception& e) {
        out.push_back(
            {std::nullopt, "line " + std::to_string(lineno) + ": " + e.what()});
      }
    }
  } else {
    throw std::runtime_error("unknown format: " + cfg.format);
  }
  return out;
}

/// Emits one JSON document per line, to --out or stdout.
void emit(const RunConfig& cfg, const std::vector<ordered_json>& docs) {
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!cfg.out.empty()) {
    file.open(cfg.out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open output file: " + cfg.out);
    os = &file;
  }
  for (const auto& d : docs) *os << d.dump() << "\n";
}

/// best_td at cfg.k, retrying one width at a time up to cfg.max_k.
std::optional<std::pair<TreeDecomposition, long long>> decompose_with_retry(
    const RunConfig& cfg, const LabeledGraph& g) {
  for (int k = cfg.k; k <= cfg.max_k; ++k) {
    try {
      return best_td(g, k, scoring_mode(cfg), cfg.subset_cap);
    } catch (const NoWidthKTdError&) {
      continue;
    }
  }
  return std::nullopt;
}

std::string graph_name(const LabeledGraph& g, std::size_t index) {
  return g.id().empty() ? "graph " + std::to_string(index) : g.id();
}

int run_per_graph(const RunConfig& cfg,
                  const std::function<ordered_json(const LabeledGraph&)>& fn) {
  std::vector<CorpusEntry> corpus = load_corpus(cfg);
  std::vector<ordered_json> docs;
  bool partial = false;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].graph) {
      std::cerr << "tdmask: skipping unparsable entry (" << corpus[i].error
                << ")\n";
      partial = true;
      continue;
    }
    const LabeledGraph& g = *corpus[i].graph;
    try {
      docs.push_back(fn(g));
    } catch (const NoWidthKTdError&) {
      std::cerr << "tdmask: " << graph_name(g, i)
                << ": no tree decomposition of width <= " << cfg.max_k << "\n";
      partial = true;
    } catch (const ResourceError& e) {
      std::cerr << "tdmask: " << graph_name(g, i) << ": " << e.what() << "\n";
      partial = true;
    }
  }
  emit(cfg, docs);
  return partial ? kExitPartial : kExitOk;
}

int cmd_decompose(const RunConfig& cfg) {
  return run_per_graph(cfg, [&](const LabeledGraph& g) {
    auto result = decompose_with_retry(cfg, g);
    if (!result)
      throw NoWidthKTdError("no TD within the width cap");
    ordered_json j = td_to_json(result->first, result->second);
    if (!g.id().empty()) j["id"] = g.id();
    return j;
  });
}

int cmd_features(const RunConfig& cfg) {
  return run_per_graph(cfg, [&](const LabeledGraph& g) {
    auto result = decompose_with_retry(cfg, g);
    if (!result)
      throw NoWidthKTdError("no TD within the width cap");
    FeatureBundle b = compute_features(g, result->first, cfg.k);
    ordered_json j = features_to_json(b);
    if (!g.id().empty()) j["id"] = g.id();
    return j;
  });
}

int bin_index(int value, const std::vector<int>& lower_edges) {
  int idx = 0;
  for (std::size_t i = 0; i < lower_edges.size(); ++i)
    if (value >= lower_edges[i]) idx = static_cast<int>(i);
  return idx;
}

int cmd_stats(const RunConfig& cfg) {
  const std::vector<int> reent_edges{0, 1, 3, 5, 7};
  const std::vector<std::string> reent_names{"0", "1-2", "3-4", "5-6", "7+"};
  const std::vector<int> diam_edges{0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<std::string> diam_names{"0", "1", "2", "3",
                                            "4", "5", "6", "7+"};
  const std::vector<int> tw_edges{0, 1, 2, 3, 4};
  const std::vector<std::string> tw_names{"0", "1", "2", "3", "4+"};

  std::vector<CorpusEntry> corpus = load_corpus(cfg);
  std::vector<int> reent_hist(reent_names.size()),
      diam_hist(diam_names.size()), tw_hist(tw_names.size());
  ordered_json per_graph = ordered_json::array();
  bool partial = false;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].graph) {
      std::cerr << "tdmask: skipping unparsable entry (" << corpus[i].error
                << ")\n";
      partial = true;
      continue;
    }
    const LabeledGraph& g = *corpus[i].graph;
    GraphMetrics m = graph_metrics(g);
    int tw = treewidth(g, cfg.subset_cap);
    ++reent_hist[bin_index(m.reentrancy_count, reent_edges)];
    ++diam_hist[bin_index(m.diameter, diam_edges)];
    ++tw_hist[bin_index(tw, tw_edges)];
    ordered_json row;
    row["name"] = graph_name(g, i);
    row["vertices"] = m.vertex_count;
    row["edges"] = m.edge_count;
    row["reentrancies"] = m.reentrancy_count;
    row["diameter"] = m.diameter;
    row["treewidth"] = tw;
    per_graph.push_back(row);
  }

  auto print_hist = [](const std::string& title,
                       const std::vector<std::string>& names,
                       const std::vector<int>& counts) {
    std::cout << title << "\n";
    for (std::size_t i = 0; i < names.size(); ++i)
      std::cout << "  " << names[i] << std::string(6 - names[i].size(), ' ')
                << counts[i] << "\n";
  };
  std::cout << "graphs: " << per_graph.size() << "\n";
  print_hist("reentrancies", reent_names, reent_hist);
  print_hist("diameter", diam_names, diam_hist);
  print_hist("treewidth", tw_names, tw_hist);

  ordered_json j;
  j["graphs"] = per_graph;
  auto hist_json = [](const std::vector<std::string>& names,
                      const std::vector<int>& counts) {
    ordered_json h = ordered_json::object();
    for (std::size_t i = 0; i < names.size(); ++i) h[names[i]] = counts[i];
    return h;
  };
  j["histograms"]["reentrancies"] = hist_json(reent_names, reent_hist);
  j["histograms"]["diameter"] = hist_json(diam_names, diam_hist);
  j["histograms"]["treewidth"] = hist_json(tw_names, tw_hist);
  if (!cfg.out.empty())
    emit(cfg, {j});
  else
    std::cout << j.dump(2) << "\n";
  return partial ? kExitPartial : kExitOk;
}

/// Built-in 8-vertex fixture (two reentrancies) used when gradcheck or
/// selftest run without --input.
LabeledGraph builtin_fixture() {
  return parse_penman(
      "(a / alpha"
      "   :r1 (b / beta :r2 (c / gamma) :r3 (d / delta :r4 c))"
      "   :r5 (e / eps :r6 (f / zeta) :r7 (g / eta :r8 f))"
      "   :r9 (h / theta))");
}

struct GradFixture {
  LabeledGraph graph;
  BundleIndex index;
  ParamSet params;
  Tensor x;
};

GradFixture make_grad_fixture(const RunConfig& cfg, const LabeledGraph& g,
                              std::uint64_t seed) {
  auto [td, penalty] = best_td(g, std::max(cfg.k, 2), scoring_mode(cfg),
                               cfg.subset_cap);
  (void)penalty;
  FeatureBundle bundle = compute_features(g, td);
  BundleIndex bi(bundle);
  AttnConfig acfg;
  ParamSet params = make_params(acfg, bi, td.width + 1, seed);
  Tensor x({bi.n, acfg.d});
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  x.fill_uniform(rng);
  return {g, std::move(bi), std::move(params), std::move(x)};
}

int cmd_gradcheck(const RunConfig& cfg) {
  LabeledGraph g = cfg.input.empty() ? builtin_fixture()
                                     : *load_corpus(cfg).at(0).graph;
  GradFixture fx = make_grad_fixture(cfg, g, cfg.seed);
  GradCheckReport report = grad_check(fx.params, fx.index, fx.x, 1e-5,
                                      cfg.seed, 200, cfg.inject_fault);
  ordered_json j = gradcheck_report_json(report);
  if (!cfg.out.empty())
    emit(cfg, {j});
  else
    std::cout << j.dump(2) << "\n";
  return report.max_rel_err <= 1e-4 ? kExitOk : kExitFailure;
}

struct SuiteResult {
  std::string name;
  bool pass = true;
  int checks = 0;
  std::string detail;
};

SuiteResult suite_treewidth(const RunConfig& cfg) {
  SuiteResult r{"treewidth"};
  std::mt19937_64 rng(cfg.seed);
  for (int i = 0; i < 60; ++i) {
    int n = 4 + static_cast<int>(rng() % 4);  // 4..7
    LabeledGraph g = random_connected_graph(rng, n, rng() % 4);
    int dp = treewidth(g, cfg.subset_cap);
    int oracle = oracle_treewidth(g);
    ++r.checks;
    if (dp != oracle) {
      r.pass = false;
      r.detail = "dp " + std::to_string(dp) + " vs oracle " +
                 std::to_string(oracle) + " on " + std::to_string(n) +
                 " vertices";
      break;
    }
  }
  return r;
}

SuiteResult suite_penalty(const RunConfig& cfg) {
  SuiteResult r{"penalty"};
  std::mt19937_64 rng(cfg.seed + 1);
  for (int i = 0; i < 60; ++i) {
    int n = 3 + static_cast<int>(rng() % 4);  // 3..6
    LabeledGraph g = random_connected_graph(rng, n, rng() % 3);
    if (g.edge_count() > 7) continue;
    for (ScoringMode mode :
         {ScoringMode::kAssignedEdges, ScoringMode::kAllEdges}) {
      int k = std::max(2, oracle_treewidth(g));
      auto oracle = oracle_best_td(g, k, mode);
      long long dp;
      try {
        dp = best_td(g, k, mode, cfg.subset_cap).second;
      } catch (const NoWidthKTdError&) {
        if (!oracle) continue;
        r.pass = false;
        r.detail = "dp found no TD where the oracle did";
        return r;
      }
      ++r.checks;
      if (!oracle || *oracle != dp) {
        r.pass = false;
        r.detail = "dp penalty " + std::to_string(dp) + " vs oracle " +
                   (oracle ? std::to_string(*oracle) : std::string("none"));
        return r;
      }
    }
  }
  return r;
}

SuiteResult suite_validity(const RunConfig& cfg) {
  SuiteResult r{"validity"};
  std::mt19937_64 rng(cfg.seed + 2);
  for (int i = 0; i < 40; ++i) {
    int n = 3 + static_cast<int>(rng() % 6);  // 3..8
    LabeledGraph g = random_connected_graph(rng, n, rng() % 5);
    int k = treewidth(g, cfg.subset_cap);
    auto [td, penalty] = best_td(g, k, scoring_mode(cfg), cfg.subset_cap);
    (void)penalty;
    TdValidityReport rep = validate_td(g, td);
    ++r.checks;
    if (!rep.valid() || td.width > k) {
      r.pass = false;
      r.detail = rep.valid() ? "width exceeds bound" : rep.violations.front();
      return r;
    }
  }
  return r;
}

SuiteResult suite_motif(const RunConfig&) {
  SuiteResult r{"motif"};
  r.checks = 1;
  std::size_t count = motif_table(2).ids.size();
  if (count != 7) {
    r.pass = false;
    r.detail = "motif_table(2) has " + std::to_string(count) + " entries";
  }
  return r;
}

SuiteResult suite_gradcheck(const RunConfig& cfg) {
  SuiteResult r{"gradcheck"};
  GradFixture fx = make_grad_fixture(cfg, builtin_fixture(), cfg.seed);
  GradCheckReport rep = grad_check(fx.params, fx.index, fx.x, 1e-5, cfg.seed,
                                   200, cfg.inject_fault);
  r.checks = static_cast<int>(rep.per_tensor.size());
  if (rep.max_rel_err > 1e-4) {
    r.pass = false;
    std::ostringstream os;
    os << "max relative error " << rep.max_rel_err;
    r.detail = os.str();
  }
  return r;
}

int cmd_selftest(const RunConfig& cfg) {
  std::vector<std::pair<std::string, SuiteResult (*)(const RunConfig&)>>
      suites{{"treewidth", suite_treewidth},
             {"penalty", suite_penalty},
             {"validity", suite_validity},
             {"motif", suite_motif},
             {"gradcheck", suite_gradcheck}};
  std::set<std::string> wanted;
  if (!cfg.suites.empty()) {
    std::istringstream ss(cfg.suites);
    std::string name;
    while (std::getline(ss, name, ',')) wanted.insert(name);
  }
  bool all_pass = true;
  int ran = 0;
  for (auto& [name, fn] : suites) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    ++ran;
    SuiteResult r = fn(cfg);
    std::cout << r.name << ": " << (r.pass ? "pass" : "FAIL") << " ("
              << r.checks << " checks)";
    if (!r.detail.empty()) std::cout << " — " << r.detail;
    std::cout << "\n";
    all_pass = all_pass && r.pass;
  }
  if (ran == 0) {
    std::cerr << "tdmask: no suites match --suites " << cfg.suites << "\n";
    return kExitUsage;
  }
  return all_pass ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tree decompositions and attention masks for AMR-style graphs"};
  app.require_subcommand(1);

  RunConfig cfg;
  if (const char* env = std::getenv("TDMASK_MAX_SUBSETS"))
    cfg.subset_cap = std::strtoull(env, nullptr, 10);

  auto add_common = [&](CLI::App* sub, bool needs_input) {
    auto* in = sub->add_option("--input", cfg.input, "input file");
    if (needs_input) in->required();
    sub->add_option("--format", cfg.format, "penman|json|jsonl")
        ->check(CLI::IsMember({"penman", "json", "jsonl"}));
    sub->add_option("--k", cfg.k, "target width bound")->check(CLI::NonNegativeNumber);
    sub->add_option("--max-k", cfg.max_k, "retry cap for the width bound");
    sub->add_option("--scoring", cfg.scoring, "assigned|all")
        ->check(CLI::IsMember({"assigned", "all"}));
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--out", cfg.out, "output file (default stdout)");
  };

  auto* dec = app.add_subcommand("decompose", "best tree decomposition per graph");
  add_common(dec, true);
  auto* feat = app.add_subcommand("features", "attention masks and bag features");
  add_common(feat, true);
  auto* stats = app.add_subcommand("stats", "corpus complexity metrics");
  add_common(stats, true);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(grad, false);
  grad->add_flag("--inject-fault", cfg.inject_fault,
                 "corrupt one analytic gradient (for testing the checker)");
  auto* self = app.add_subcommand("selftest", "oracle and gradient self-tests");
  add_common(self, false);
  self->add_option("--suites", cfg.suites,
                   "comma-separated subset: treewidth,penalty,validity,motif,gradcheck");
  self->add_flag("--inject-fault", cfg.inject_fault,
                 "corrupt one analytic gradient (for testing the checker)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (cfg.max_k < cfg.k) {
    std::cerr << "tdmask: --max-k must be >= --k\n";
    return kExitUsage;
  }

  try {
    if (dec->parsed()) return cmd_decompose(cfg);
    if (feat->parsed()) return cmd_features(cfg);
    if (stats->parsed()) return cmd_stats(cfg);
    if (grad->parsed()) return cmd_gradcheck(cfg);
    if (self->parsed()) return cmd_selftest(cfg);
  } catch (const GraphError& e) {
    std::cerr << "tdmask: " << e.what() << "\n";
    return kExitFailure;
  } catch (const PenmanError& e) {
    std::cerr << "tdmask: parse error at offset " << e.offset << ": "
              << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "tdmask: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "tdmask/graph.hpp"
#include "tdmask/oracle.hpp"
#include "tdmask/semiring.hpp"
#include "tdmask/treedec.hpp"

#include "fixtures.hpp"

using namespace tdmask;

namespace {

LabeledGraph path_graph(int n) {
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  for (int v = 0; v < n; ++v) labels.push_back("v" + std::to_string(v));
  for (int v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1, "r"});
  return LabeledGraph(std::move(labels), std::move(edges), 0);
}

LabeledGraph cycle_graph(int n) {
  LabeledGraph p = path_graph(n);
  std::vector<Edge> edges = p.edges();
  edges.push_back({n - 1, 0, "r"});
  std::vector<std::string> labels;
  for (int v = 0; v < n; ++v) labels.push_back(p.label(v));
  return LabeledGraph(std::move(labels), std::move(edges), 0);
}

LabeledGraph complete_graph(int n) {
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  for (int v = 0; v < n; ++v) labels.push_back("v" + std::to_string(v));
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) edges.push_back({u, v, "r"});
  return LabeledGraph(std::move(labels), std::move(edges), 0);
}

// Canonical form of a forest value for order-insensitive comparison.
std::string forest_key(const DerivationNode& n) {
  std::vector<std::string> parts;
  for (const DerivationNode& c : n.children) parts.push_back(forest_key(c));
  std::sort(parts.begin(), parts.end());
  std::string out = "(" + std::to_string(n.bag);
  for (const std::string& p : parts) out += p;
  return out + ")";
}

std::vector<std::string> value_keys(const ForestSemiring::Value& v) {
  std::vector<std::string> keys;
  for (const auto& forest : v) {
    std::vector<std::string> parts;
    for (const DerivationNode& n : forest) parts.push_back(forest_key(n));
    std::sort(parts.begin(), parts.end());
    std::string k;
    for (const std::string& p : parts) k += p;
    keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

TEST_CASE("boolean semiring laws") {
  BooleanSemiring sr;
  for (bool a : {false, true})
    for (bool b : {false, true})
      for (bool c : {false, true}) {
        CHECK(sr.plus(sr.plus(a, b), c) == sr.plus(a, sr.plus(b, c)));
        CHECK(sr.times(sr.times(a, b), c) == sr.times(a, sr.times(b, c)));
        CHECK(sr.plus(a, b) == sr.plus(b, a));
        CHECK(sr.plus(a, sr.zero()) == a);
        CHECK(sr.times(a, sr.one()) == a);
        CHECK(sr.times(a, sr.zero()) == sr.zero());
        CHECK(sr.times(a, sr.plus(b, c)) ==
              sr.plus(sr.times(a, b), sr.times(a, c)));
      }
}

TEST_CASE("min-plus semiring laws on random values") {
  LabeledGraph g = path_graph(2);
  MinPlusSemiring sr{&g, ScoringMode::kAllEdges};
  using V = MinPlusSemiring::Value;
  std::mt19937_64 rng(11);
  auto rnd = [&]() -> V {
    if (rng() % 5 == 0) return sr.zero();
    return {static_cast<long long>(rng() % 100),
            static_cast<long long>(rng() % 10)};
  };
  for (int t = 0; t < 200; ++t) {
    V a = rnd(), b = rnd(), c = rnd();
    CHECK(sr.plus(sr.plus(a, b), c) == sr.plus(a, sr.plus(b, c)));
    CHECK(sr.times(sr.times(a, b), c) == sr.times(a, sr.times(b, c)));
    CHECK(sr.plus(a, b) == sr.plus(b, a));
    CHECK(sr.times(a, b) == sr.times(b, a));
    CHECK(sr.plus(a, sr.zero()) == a);
    CHECK(sr.times(a, sr.one()) == a);
    CHECK(sr.times(a, sr.zero()) == sr.zero());
    CHECK(sr.times(a, sr.plus(b, c)) ==
          sr.plus(sr.times(a, b), sr.times(a, c)));
  }
}

TEST_CASE("forest semiring laws up to alternative order") {
  ForestSemiring sr;
  std::mt19937_64 rng(13);
  auto rnd = [&]() {
    ForestSemiring::Value v;
    int alts = static_cast<int>(rng() % 3);
    for (int a = 0; a < alts; ++a) {
      ForestSemiring::Forest f;
      int roots = 1 + static_cast<int>(rng() % 2);
      for (int r = 0; r < roots; ++r)
        f.push_back(DerivationNode{static_cast<VertexSet>(rng() % 16), {}});
      v.push_back(std::move(f));
    }
    return v;
  };
  for (int t = 0; t < 100; ++t) {
    auto a = rnd(), b = rnd(), c = rnd();
    CHECK(value_keys(sr.plus(sr.plus(a, b), c)) ==
          value_keys(sr.plus(a, sr.plus(b, c))));
    CHECK(value_keys(sr.times(sr.times(a, b), c)) ==
          value_keys(sr.times(a, sr.times(b, c))));
    CHECK(value_keys(sr.plus(a, b)) == value_keys(sr.plus(b, a)));
    CHECK(value_keys(sr.plus(a, sr.zero())) == value_keys(a));
    CHECK(value_keys(sr.times(a, sr.one())) == value_keys(a));
    CHECK(sr.times(a, sr.zero()).empty());
    CHECK(value_keys(sr.times(a, sr.plus(b, c))) ==
          value_keys(sr.plus(sr.times(a, b), sr.times(a, c))));
  }
}

TEST_CASE("separator dictionary lists components per separator") {
  LabeledGraph g = fixtures::simplified_amr();  // 0=t 1=a 2=w 3=y 4=p 5=t2
  SeparatorDictionary dict(g, 2);
  // Removing {a,w,y} leaves {t} and {p,t2}.
  std::vector<VertexSet> comps = dict.components(bit(1) | bit(2) | bit(3));
  std::sort(comps.begin(), comps.end());
  REQUIRE(comps.size() == 2);
  CHECK(comps[0] == bit(0));
  CHECK(comps[1] == (bit(4) | bit(5)));
}

TEST_CASE("boolean recognition basics") {
  CHECK(has_k_width_td(path_graph(5), 1));
  CHECK_FALSE(has_k_width_td(path_graph(5), 0));
  CHECK_FALSE(has_k_width_td(cycle_graph(3), 1));
  CHECK(has_k_width_td(cycle_graph(3), 2));
  CHECK(has_k_width_td(path_graph(1), 0));
}

TEST_CASE("treewidth identities") {
  CHECK(treewidth(path_graph(6)) == 1);
  for (int n = 3; n <= 6; ++n) CHECK(treewidth(cycle_graph(n)) == 2);
  for (int m = 2; m <= 5; ++m) CHECK(treewidth(complete_graph(m)) == m - 1);
}

TEST_CASE("treewidth agrees with the elimination oracle") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    int n = 3 + static_cast<int>(rng() % 5);
    LabeledGraph g = random_connected_graph(rng, n, static_cast<int>(rng() % 5));
    CHECK(treewidth(g) == oracle_treewidth(g));
  }
}

TEST_CASE("best_td reproduces the simplified AMR decomposition") {
  LabeledGraph g = fixtures::simplified_amr();
  auto [td, penalty] = best_td(g, 2, ScoringMode::kAssignedEdges);
  CHECK(penalty == 0);
  CHECK(td.width == 2);
  std::vector<VertexSet> bags = td.bags;
  std::sort(bags.begin(), bags.end());
  std::vector<VertexSet> expected{
      bit(0) | bit(1),           // {t, a}
      bit(1) | bit(2) | bit(3),  // {a, w, y}
      bit(2) | bit(3) | bit(4),  // {w, y, p}
      bit(4) | bit(5),           // {p, t2}
  };
  std::sort(expected.begin(), expected.end());
  CHECK(bags == expected);
  CHECK(validate_td(g, td).valid());
}

TEST_CASE("best_td on a directed path") {
  LabeledGraph g = path_graph(3);
  auto [td, penalty] = best_td(g, 1);
  CHECK(penalty == 0);
  std::vector<VertexSet> bags = td.bags;
  std::sort(bags.begin(), bags.end());
  CHECK(bags == std::vector<VertexSet>{bit(0) | bit(1), bit(1) | bit(2)});
}

TEST_CASE("best_td is deterministic") {
  LabeledGraph g = fixtures::seven_vertex_graph();
  auto [a, pa] = best_td(g, 2, ScoringMode::kAllEdges);
  auto [b, pb] = best_td(g, 2, ScoringMode::kAllEdges);
  CHECK(pa == pb);
  CHECK(a.bags == b.bags);
  CHECK(a.parent == b.parent);
  CHECK(a.edge_assignment == b.edge_assignment);
}

TEST_CASE("reported penalty decomposes additively over arcs") {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 25; ++t) {
    int n = 3 + static_cast<int>(rng() % 4);
    LabeledGraph g = random_connected_graph(rng, n, static_cast<int>(rng() % 4));
    int k = std::max(2, oracle_treewidth(g));
    for (ScoringMode mode :
         {ScoringMode::kAssignedEdges, ScoringMode::kAllEdges}) {
      auto [td, penalty] = best_td(g, k, mode);
      CHECK(penalty == td_penalty(g, td, mode));
      CHECK(validate_td(g, td).valid());
      CHECK(td.width <= k);
    }
  }
}

TEST_CASE("best_td penalty matches the exhaustive oracle") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 25; ++t) {
    int n = 3 + static_cast<int>(rng() % 4);
    LabeledGraph g =
        random_connected_graph(rng, n, static_cast<int>(rng() % 3));
    if (g.edge_count() > 7) continue;
    int k = std::min(n - 1, std::max(2, oracle_treewidth(g)));
    for (ScoringMode mode :
         {ScoringMode::kAssignedEdges, ScoringMode::kAllEdges}) {
      auto oracle = oracle_best_td(g, k, mode);
      REQUIRE(oracle.has_value());
      auto [td, penalty] = best_td(g, k, mode);
      CHECK(penalty == *oracle);
    }
  }
}

TEST_CASE("no width-k TD raises") {
  CHECK_THROWS_AS(best_td(cycle_graph(4), 1), NoWidthKTdError);
}

TEST_CASE("subset cap raises ResourceError") {
  CHECK_THROWS_AS(SeparatorDictionary(complete_graph(6), 4, 10), ResourceError);
}

TEST_CASE("validate_td flags broken decompositions") {
  LabeledGraph g = fixtures::seven_vertex_graph();
  TreeDecomposition td = fixtures::seven_vertex_td();
  CHECK(validate_td(g, td).valid());

  SECTION("missing bag breaks vertex and edge cover") {
    TreeDecomposition broken = td;
    broken.bags[2] = broken.bags[0];  // drop {c,f}
    TdValidityReport r = validate_td(g, broken);
    CHECK_FALSE(r.valid());
  }
  SECTION("edge assigned to a bag lacking an endpoint") {
    TreeDecomposition broken = td;
    broken.edge_assignment[1] = 0;  // c->f is not inside {a,c}
    CHECK_FALSE(validate_td(g, broken).valid());
  }
  SECTION("running intersection violation") {
    TreeDecomposition broken = td;
    broken.bags[2] |= bit(1);  // b appears in {c,f}, disconnected from T_b
    CHECK_FALSE(validate_td(g, broken).valid());
  }
  SECTION("wrong width field") {
    TreeDecomposition broken = td;
    broken.width = 5;
    CHECK_FALSE(validate_td(g, broken).valid());
  }
}

TEST_CASE("derivation forest contains the seven-vertex sample TD") {
  LabeledGraph g = fixtures::seven_vertex_graph();
  ForestSemiring::Value forest = decompose(g, 2, ForestSemiring{});
  REQUIRE_FALSE(forest.empty());

  std::vector<VertexSet> target;
  for (VertexSet bag : fixtures::seven_vertex_td().bags) target.push_back(bag);
  std::sort(target.begin(), target.end(), bag_less);

  bool found = false;
  for (const auto& alternative : forest) {
    REQUIRE(alternative.size() == 1);
    std::vector<VertexSet> bags = detail::sorted_bags(alternative.front());
    if (bags == target) found = true;
  }
  CHECK(found);
}

TEST_CASE("td json round-trip") {
  LabeledGraph g = fixtures::simplified_amr();
  auto [td, penalty] = best_td(g, 2);
  TreeDecomposition back = td_from_json(td_to_json(td, penalty));
  CHECK(back.bags == td.bags);
  CHECK(back.parent == td.parent);
  CHECK(back.root_bag == td.root_bag);
  CHECK(back.edge_assignment == td.edge_assignment);
  CHECK(back.width == td.width);
}

#pragma once

#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tdmask/graph.hpp"
#include "tdmask/semiring.hpp"

namespace tdmask {

inline constexpr std::uint64_t kDefaultSubsetCap = 2'000'000;

/// Compare vertex sets by size, then by the sorted id list. The lowest
/// differing vertex decides the lexicographic order.
inline bool bag_less(VertexSet a, VertexSet b) {
  if (set_size(a) != set_size(b)) return set_size(a) < set_size(b);
  if (a == b) return false;
  return contains(a, lowest_vertex(a ^ b));
}

/// All vertex subsets S with |S| <= k+1 (empty set included), each mapped
/// to the connected components of the skeleton minus S. Entries are kept in
/// size-then-lexicographic order.
class SeparatorDictionary {
 public:
  SeparatorDictionary(const LabeledGraph& g, int k,
                      std::uint64_t subset_cap = kDefaultSubsetCap)
      : k_(k) {
    const int n = g.vertex_count();
    if (k < 0 || k >= n) throw GraphError("width bound must be in [0, n)");
    std::uint64_t count = 1;
    for (int size = 1; size <= k + 1; ++size) {
      std::uint64_t c = 1;
      for (int i = 0; i < size; ++i) c = c * (n - i) / (i + 1);
      count += c;
      if (count > subset_cap)
        throw ResourceError(
            "graph too large: separator enumeration needs more than " +
            std::to_string(subset_cap) + " subsets");
    }
    add_entry(g, 0);
    std::vector<int> combo;
    for (int size = 1; size <= k + 1; ++size) enumerate(g, n, size, 0, 0, combo);
  }

  int width_bound() const { return k_; }

  const std::vector<std::pair<VertexSet, std::vector<VertexSet>>>& entries()
      const {
    return entries_;
  }

  const std::vector<VertexSet>& components(VertexSet separator) const {
    auto it = index_.find(separator);
    if (it == index_.end())
      throw GraphError("separator not present in dictionary");
    return entries_[it->second].second;
  }

 private:
  void enumerate(const LabeledGraph& g, int n, int size, int depth, int start,
                 std::vector<int>& combo) {
    if (depth == size) {
      VertexSet s = 0;
      for (int v : combo) s |= bit(v);
      add_entry(g, s);
      return;
    }
    for (int v = start; v <= n - (size - depth); ++v) {
      combo.push_back(v);
      enumerate(g, n, size, depth + 1, v + 1, combo);
      combo.pop_back();
    }
  }

  void add_entry(const LabeledGraph& g, VertexSet s) {
    index_[s] = entries_.size();
    entries_.emplace_back(s, components_after_removal(g, s));
  }

  int k_;
  std::vector<std::pair<VertexSet, std::vector<VertexSet>>> entries_;
  std::unordered_map<VertexSet, std::size_t> index_;
};

inline SeparatorDictionary build_separator_dictionary(
    const LabeledGraph& g, int k, std::uint64_t subset_cap = kDefaultSubsetCap) {
  return SeparatorDictionary(g, k, subset_cap);
}

namespace detail {

struct StateHash {
  std::size_t operator()(const std::pair<VertexSet, VertexSet>& s) const {
    std::uint64_t h = s.first * 0x9e3779b97f4a7c15ull;
    h ^= s.second + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

inline VertexSet neighbor_set(const LabeledGraph& g, VertexSet separator,
                              VertexSet component) {
  VertexSet n = 0;
  for (int v : set_to_vector(component)) n |= g.neighbors(v);
  return n & separator;
}

/// Candidate bags N < S' <= N ∪ C with |S'| <= k+1, in size-then-lex order.
inline std::vector<VertexSet> candidate_bags(VertexSet neighbor, VertexSet comp,
                                             int k) {
  std::vector<VertexSet> out;
  const int room = k + 1 - set_size(neighbor);
  if (room <= 0) return out;
  std::vector<int> verts = set_to_vector(comp);
  std::vector<int> combo;
  auto rec = [&](auto&& self, int size, int depth, int start) -> void {
    if (depth == size) {
      VertexSet s = neighbor;
      for (int i : combo) s |= bit(verts[i]);
      out.push_back(s);
      return;
    }
    for (int i = start; i <= static_cast<int>(verts.size()) - (size - depth);
         ++i) {
      combo.push_back(i);
      self(self, size, depth + 1, i + 1);
      combo.pop_back();
    }
  };
  for (int size = 1; size <= std::min<int>(room, verts.size()); ++size)
    rec(rec, size, 0, 0);
  return out;
}

}  // namespace detail

/// The recognition fold: evaluates the separator/component dynamic program
/// over an arbitrary semiring, memoized per state so every state is
/// computed once. The top-level state is (S = empty, C = V).
template <class Semiring>
typename Semiring::Value decompose(const LabeledGraph& g,
                                   const SeparatorDictionary& dict,
                                   const Semiring& sr) {
  const int k = dict.width_bound();
  std::unordered_map<std::pair<VertexSet, VertexSet>,
                     typename Semiring::Value, detail::StateHash>
      memo;

  auto rec = [&](auto&& self, VertexSet sep, VertexSet comp) ->
      typename Semiring::Value {
        VertexSet neighbor = detail::neighbor_set(g, sep, comp);
        std::pair<VertexSet, VertexSet> key{
            Semiring::needs_full_separator ? sep : neighbor, comp};
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        typename Semiring::Value result;
        if (set_size(neighbor | comp) <= k + 1) {
          result = sr.leaf(sep, neighbor | comp);
        } else {
          result = sr.zero();
          for (VertexSet cand : detail::candidate_bags(neighbor, comp, k)) {
            auto acc = sr.one();
            for (VertexSet sub : dict.components(cand)) {
              if ((sub & comp) != sub) continue;
              acc = sr.times(acc, self(self, cand, sub));
            }
            result = sr.plus(result, sr.candidate(sep, cand, acc));
          }
        }
        memo.emplace(key, result);
        return result;
      };
  return rec(rec, VertexSet{0}, g.all_vertices());
}

template <class Semiring>
typename Semiring::Value decompose(const LabeledGraph& g, int k,
                                   const Semiring& sr,
                                   std::uint64_t subset_cap = kDefaultSubsetCap) {
  return decompose(g, SeparatorDictionary(g, k, subset_cap), sr);
}

inline bool has_k_width_td(const LabeledGraph& g, int k,
                           std::uint64_t subset_cap = kDefaultSubsetCap) {
  return decompose(g, k, BooleanSemiring{}, subset_cap);
}

/// Smallest k recognized by the dynamic program, from k = 0 upward.
inline int treewidth(const LabeledGraph& g,
                     std::uint64_t subset_cap = kDefaultSubsetCap) {
  for (int k = 0;; ++k)
    if (has_k_width_td(g, k, subset_cap)) return k;
}

struct TreeDecomposition {
  std::vector<VertexSet> bags;
  std::vector<int> parent;  // root maps to itself
  int root_bag = 0;
  std::vector<int> edge_assignment;  // edge index -> bag index
  int width = 0;
};

struct TdValidityReport {
  std::vector<std::string> violations;
  bool valid() const { return violations.empty(); }
};

inline TdValidityReport validate_td(const LabeledGraph& g,
                                    const TreeDecomposition& t) {
  TdValidityReport r;
  auto note = [&](const std::string& v) { r.violations.push_back(v); };

  const int b = static_cast<int>(t.bags.size());
  if (b == 0) {
    note("decomposition has no bags");
    return r;
  }
  if (t.root_bag < 0 || t.root_bag >= b) note("root bag index out of range");
  if (static_cast<int>(t.parent.size()) != b)
    note("parent map size does not match bag count");

  VertexSet covered = 0;
  for (VertexSet bag : t.bags) covered |= bag;
  for (int v : set_to_vector(g.all_vertices() & ~covered))
    note("vertex cover: vertex " + std::to_string(v) + " is in no bag");

  if (static_cast<int>(t.edge_assignment.size()) != g.edge_count()) {
    note("edge cover: assignment covers " +
         std::to_string(t.edge_assignment.size()) + " of " +
         std::to_string(g.edge_count()) + " edges");
  } else {
    for (int e = 0; e < g.edge_count(); ++e) {
      int i = t.edge_assignment[e];
      if (i < 0 || i >= b) {
        note("edge cover: edge " + std::to_string(e) + " assigned to bag " +
             std::to_string(i) + " which does not exist");
        continue;
      }
      const Edge& ed = g.edges()[e];
      if (!contains(t.bags[i], ed.src) || !contains(t.bags[i], ed.dst))
        note("edge cover: edge " + std::to_string(e) + " (" +
             std::to_string(ed.src) + "->" + std::to_string(ed.dst) +
             ") not inside bag " + std::to_string(i));
    }
  }

  // Running intersection: the bags holding each vertex must induce a
  // connected subtree.
  if (static_cast<int>(t.parent.size()) == b) {
    for (int v = 0; v < g.vertex_count(); ++v) {
      std::vector<int> holders;
      for (int i = 0; i < b; ++i)
        if (contains(t.bags[i], v)) holders.push_back(i);
      if (holders.empty()) continue;
      std::vector<bool> in(b, false);
      for (int i : holders) in[i] = true;
      // Count connected pieces among holders in the bag tree.
      std::vector<bool> seen(b, false);
      int pieces = 0;
      for (int i : holders) {
        if (seen[i]) continue;
        ++pieces;
        std::vector<int> stack{i};
        seen[i] = true;
        while (!stack.empty()) {
          int x = stack.back();
          stack.pop_back();
          std::vector<int> adj;
          if (t.parent[x] != x) adj.push_back(t.parent[x]);
          for (int y = 0; y < b; ++y)
            if (y != x && t.parent[y] == x) adj.push_back(y);
          for (int y : adj)
            if (in[y] && !seen[y]) {
              seen[y] = true;
              stack.push_back(y);
            }
        }
      }
      if (pieces > 1)
        note("running intersection: bags holding vertex " + std::to_string(v) +
             " form " + std::to_string(pieces) + " disconnected pieces");
    }
  }

  int width = 0;
  for (VertexSet bag : t.bags) width = std::max(width, set_size(bag) - 1);
  if (width != t.width)
    note("width field " + std::to_string(t.width) +
         " does not match max bag size - 1 = " + std::to_string(width));
  return r;
}

namespace detail {

inline void collect_bags(const DerivationNode& node,
                         std::vector<VertexSet>& out) {
  out.push_back(node.bag);
  for (const DerivationNode& c : node.children) collect_bags(c, out);
}

inline std::vector<VertexSet> sorted_bags(const DerivationNode& node) {
  std::vector<VertexSet> bags;
  collect_bags(node, bags);
  std::sort(bags.begin(), bags.end(), bag_less);
  return bags;
}

inline bool bag_multiset_less(const std::vector<VertexSet>& a,
                              const std::vector<VertexSet>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      bag_less);
}

}  // namespace detail

/// Converts a derivation tree into a TreeDecomposition. Each edge is
/// assigned to the bag containing both endpoints that is closest to the
/// root; running intersection makes that bag unique.
inline TreeDecomposition derivation_to_td(const LabeledGraph& g,
                                          const DerivationNode& root) {
  TreeDecomposition td;
  // Breadth-first numbering keeps sibling order deterministic.
  std::vector<std::pair<const DerivationNode*, int>> queue{{&root, -1}};
  std::vector<int> depth;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    auto [node, par] = queue[i];
    int idx = static_cast<int>(td.bags.size());
    td.bags.push_back(node->bag);
    td.parent.push_back(par < 0 ? idx : par);
    depth.push_back(par < 0 ? 0 : depth[par] + 1);
    for (const DerivationNode& c : node->children) queue.push_back({&c, idx});
  }
  td.root_bag = 0;
  for (VertexSet bag : td.bags) td.width = std::max(td.width, set_size(bag) - 1);
  for (const Edge& e : g.edges()) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(td.bags.size()); ++i)
      if (contains(td.bags[i], e.src) && contains(td.bags[i], e.dst) &&
          (best < 0 || depth[i] < depth[best]))
        best = i;
    td.edge_assignment.push_back(best);
  }
  return td;
}

/// Total penalty of a finished decomposition: the sum of per-arc penalties
/// over all parent->child arcs of the bag tree.
inline long long td_penalty(const LabeledGraph& g, const TreeDecomposition& t,
                            ScoringMode mode) {
  long long total = 0;
  for (int j = 0; j < static_cast<int>(t.bags.size()); ++j) {
    if (t.parent[j] == j) continue;
    VertexSet parent_bag = t.bags[t.parent[j]];
    if (mode == ScoringMode::kAllEdges) {
      total += arc_penalty_all_edges(g, parent_bag, t.bags[j]);
    } else {
      std::vector<Edge> assigned;
      for (int e = 0; e < g.edge_count(); ++e)
        if (t.edge_assignment[e] == j) assigned.push_back(g.edges()[e]);
      total += arc_penalty(parent_bag, t.bags[j], assigned);
    }
  }
  return total;
}

struct NoWidthKTdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Least-penalized k-width TD. Runs the min-plus program, then rebuilds the
/// optimal derivation; ties in penalty resolve to fewer bags, then to the
/// size-then-lexicographically smallest sorted bag multiset.
inline std::pair<TreeDecomposition, long long> best_td(
    const LabeledGraph& g, int k, ScoringMode mode = ScoringMode::kAssignedEdges,
    std::uint64_t subset_cap = kDefaultSubsetCap) {
  SeparatorDictionary dict(g, k, subset_cap);
  MinPlusSemiring sr{&g, mode};
  using Value = MinPlusSemiring::Value;

  std::unordered_map<std::pair<VertexSet, VertexSet>, Value, detail::StateHash>
      value;
  auto eval = [&](auto&& self, VertexSet sep, VertexSet comp) -> Value {
    VertexSet neighbor = detail::neighbor_set(g, sep, comp);
    std::pair<VertexSet, VertexSet> key{sep, comp};
    if (auto it = value.find(key); it != value.end()) return it->second;
    Value result;
    if (set_size(neighbor | comp) <= k + 1) {
      result = sr.leaf(sep, neighbor | comp);
    } else {
      result = sr.zero();
      for (VertexSet cand : detail::candidate_bags(neighbor, comp, k)) {
        Value acc = sr.one();
        for (VertexSet sub : dict.components(cand))
          if ((sub & comp) == sub) acc = sr.times(acc, self(self, cand, sub));
        result = sr.plus(result, sr.candidate(sep, cand, acc));
      }
    }
    value.emplace(key, result);
    return result;
  };
  Value best = eval(eval, VertexSet{0}, g.all_vertices());
  if (best.penalty >= MinPlusSemiring::kInf)
    throw NoWidthKTdError("graph has no width-" + std::to_string(k) + " TD");

  // Rebuild the winning derivation, breaking remaining ties by bag multiset.
  std::unordered_map<std::pair<VertexSet, VertexSet>, DerivationNode,
                     detail::StateHash>
      built;
  auto build = [&](auto&& self, VertexSet sep, VertexSet comp) ->
      const DerivationNode& {
        std::pair<VertexSet, VertexSet> key{sep, comp};
        if (auto it = built.find(key); it != built.end()) return it->second;
        VertexSet neighbor = detail::neighbor_set(g, sep, comp);
        Value target = eval(eval, sep, comp);
        DerivationNode chosen;
        if (set_size(neighbor | comp) <= k + 1) {
          chosen = DerivationNode{neighbor | comp, {}};
        } else {
          bool have = false;
          std::vector<VertexSet> chosen_key;
          for (VertexSet cand : detail::candidate_bags(neighbor, comp, k)) {
            Value acc = sr.one();
            for (VertexSet sub : dict.components(cand))
              if ((sub & comp) == sub)
                acc = sr.times(acc, eval(eval, cand, sub));
            if (!(sr.candidate(sep, cand, acc) == target)) continue;
            DerivationNode node{cand, {}};
            for (VertexSet sub : dict.components(cand))
              if ((sub & comp) == sub)
                node.children.push_back(self(self, cand, sub));
            std::vector<VertexSet> node_key = detail::sorted_bags(node);
            if (!have || detail::bag_multiset_less(node_key, chosen_key)) {
              have = true;
              chosen = std::move(node);
              chosen_key = std::move(node_key);
            }
          }
        }
        return built.emplace(key, std::move(chosen)).first->second;
      };
  const DerivationNode& root = build(build, VertexSet{0}, g.all_vertices());
  TreeDecomposition td = derivation_to_td(g, root);
  return {td, best.penalty};
}

inline nlohmann::ordered_json td_to_json(const TreeDecomposition& t,
                                         long long penalty) {
  nlohmann::ordered_json j;
  j["bags"] = nlohmann::ordered_json::array();
  for (VertexSet bag : t.bags) j["bags"].push_back(set_to_vector(bag));
  j["parent"] = t.parent;
  j["root"] = t.root_bag;
  j["edge_assignment"] = t.edge_assignment;
  j["width"] = t.width;
  j["penalty"] = penalty;
  return j;
}

inline TreeDecomposition td_from_json(const nlohmann::ordered_json& j) {
  TreeDecomposition t;
  for (const auto& bag : j.at("bags")) {
    VertexSet s = 0;
    for (int v : bag) s |= bit(v);
    t.bags.push_back(s);
  }
  t.parent = j.at("parent").get<std::vector<int>>();
  t.root_bag = j.at("root").get<int>();
  t.edge_assignment = j.at("edge_assignment").get<std::vector<int>>();
  t.width = j.at("width").get<int>();
  return t;
}

}  // namespace tdmask

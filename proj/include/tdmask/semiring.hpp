#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "tdmask/graph.hpp"

namespace tdmask {

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One node of a TD derivation: the bag introduced at this step and the
/// sub-derivations of the components hanging below it.
struct DerivationNode {
  VertexSet bag = 0;
  std::vector<DerivationNode> children;

  friend bool operator==(const DerivationNode& a, const DerivationNode& b) {
    return a.bag == b.bag && a.children == b.children;
  }
};

enum class ScoringMode { kAssignedEdges, kAllEdges };

/// Penalty for the TD arc parent -> child under the all-edges reading:
/// every graph edge u -> v with u in the child bag and v unique to the
/// parent bag counts once.
inline long long arc_penalty_all_edges(const LabeledGraph& g,
                                       VertexSet parent_bag,
                                       VertexSet child_bag) {
  long long p = 0;
  for (const Edge& e : g.edges())
    if (contains(child_bag, e.src) && contains(parent_bag & ~child_bag, e.dst))
      ++p;
  return p;
}

/// Assigned-edges reading: only edges assigned to the child bag count.
/// Edge cover puts both endpoints of such edges inside the child bag, so
/// for a valid assignment this is zero; it is kept as a literal check.
inline long long arc_penalty(VertexSet parent_bag, VertexSet child_bag,
                             const std::vector<Edge>& child_assigned_edges) {
  long long p = 0;
  for (const Edge& e : child_assigned_edges)
    if (contains(child_bag, e.src) && contains(parent_bag & ~child_bag, e.dst))
      ++p;
  return p;
}

inline long long arc_penalty_mode(const LabeledGraph& g, VertexSet parent_bag,
                                  VertexSet child_bag, ScoringMode mode) {
  if (mode == ScoringMode::kAllEdges)
    return arc_penalty_all_edges(g, parent_bag, child_bag);
  // Assigned-edges: edges whose nearest-root cover bag is the child bag all
  // have both endpoints inside it, so no edge can point into parent-unique
  // vertices.
  return 0;
}

/// Semiring interface used by the decomposition fold. A semiring supplies
/// zero/one/plus/times, plus two structural hooks: leaf() for the base
/// case bag and candidate() for wrapping the combined child value of one
/// chosen separator. `needs_full_separator` widens the memo key from
/// (N_S(C), C) to (S, C) when candidate values depend on all of S.
struct BooleanSemiring {
  using Value = bool;
  static constexpr bool needs_full_separator = false;

  Value zero() const { return false; }
  Value one() const { return true; }
  Value plus(Value a, Value b) const { return a || b; }
  Value times(Value a, Value b) const { return a && b; }
  Value leaf(VertexSet, VertexSet) const { return true; }
  Value candidate(VertexSet, VertexSet, Value children) const {
    return children;
  }
};

/// (penalty, bag count) under lexicographic min; both components add, so
/// this is a lexicographic product of tropical semirings. The bag count is
/// the deterministic first-level tie-break for equal penalties.
struct MinPlusSemiring {
  struct Value {
    long long penalty;
    long long bags;
    friend bool operator==(const Value& a, const Value& b) {
      return a.penalty == b.penalty && a.bags == b.bags;
    }
    friend bool operator<(const Value& a, const Value& b) {
      return a.penalty != b.penalty ? a.penalty < b.penalty : a.bags < b.bags;
    }
  };
  static constexpr bool needs_full_separator = true;
  static constexpr long long kInf = std::numeric_limits<long long>::max() / 4;

  const LabeledGraph* graph;
  ScoringMode mode;

  Value zero() const { return {kInf, kInf}; }
  Value one() const { return {0, 0}; }
  Value plus(Value a, Value b) const { return std::min(a, b); }
  Value times(Value a, Value b) const {
    if (a.penalty >= kInf || b.penalty >= kInf) return zero();
    return {a.penalty + b.penalty, a.bags + b.bags};
  }
  Value leaf(VertexSet parent_sep, VertexSet bag) const {
    return {arc_penalty_mode(*graph, parent_sep, bag, mode), 1};
  }
  Value candidate(VertexSet parent_sep, VertexSet chosen, Value children) const {
    return times(children,
                 Value{arc_penalty_mode(*graph, parent_sep, chosen, mode), 1});
  }
};

/// Derivation forests: a value is a list of alternatives, each alternative
/// a list of derivation roots. plus concatenates alternatives, times forms
/// the cross product of alternative pairs.
struct ForestSemiring {
  using Forest = std::vector<DerivationNode>;
  using Value = std::vector<Forest>;
  static constexpr bool needs_full_separator = false;

  std::size_t cap = 1u << 20;

  Value zero() const { return {}; }
  Value one() const { return {Forest{}}; }
  Value plus(const Value& a, const Value& b) const {
    Value out = a;
    out.insert(out.end(), b.begin(), b.end());
    check(out.size());
    return out;
  }
  Value times(const Value& a, const Value& b) const {
    Value out;
    out.reserve(a.size() * b.size());
    for (const Forest& x : a)
      for (const Forest& y : b) {
        Forest f = x;
        f.insert(f.end(), y.begin(), y.end());
        out.push_back(std::move(f));
      }
    check(out.size());
    return out;
  }
  Value leaf(VertexSet, VertexSet bag) const {
    return {Forest{DerivationNode{bag, {}}}};
  }
  Value candidate(VertexSet, VertexSet chosen, const Value& children) const {
    Value out;
    out.reserve(children.size());
    for (const Forest& f : children)
      out.push_back(Forest{DerivationNode{chosen, f}});
    return out;
  }

 private:
  void check(std::size_t n) const {
    if (n > cap) throw ResourceError("derivation forest exceeds size cap");
  }
};

}  // namespace tdmask

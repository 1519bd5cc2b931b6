#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdmask/graph.hpp"
#include "tdmask/treedec.hpp"

namespace tdmask {

namespace detail {

struct TdTopology {
  std::vector<std::vector<int>> children;
  std::vector<int> root_distance;  // hops from the root bag
  std::vector<int> leaf_depth;     // distance to deepest leaf in subtree
  std::vector<int> order;          // bottom-up (children before parents)
};

inline TdTopology td_topology(const TreeDecomposition& t) {
  const int b = static_cast<int>(t.bags.size());
  TdTopology topo;
  topo.children.resize(b);
  for (int i = 0; i < b; ++i)
    if (t.parent[i] != i) topo.children[t.parent[i]].push_back(i);
  topo.root_distance.assign(b, 0);
  std::vector<int> bfs{t.root_bag};
  for (std::size_t i = 0; i < bfs.size(); ++i)
    for (int c : topo.children[bfs[i]]) {
      topo.root_distance[c] = topo.root_distance[bfs[i]] + 1;
      bfs.push_back(c);
    }
  topo.order = bfs;
  std::reverse(topo.order.begin(), topo.order.end());
  topo.leaf_depth.assign(b, 0);
  for (int i : topo.order)
    for (int c : topo.children[i])
      topo.leaf_depth[i] = std::max(topo.leaf_depth[i], topo.leaf_depth[c] + 1);
  return topo;
}

/// Bag containing v nearest the root; unique by running intersection.
inline int home_bag(const TreeDecomposition& t, const TdTopology& topo, int v) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(t.bags.size()); ++i)
    if (contains(t.bags[i], v) &&
        (best < 0 || topo.root_distance[i] < topo.root_distance[best]))
      best = i;
  return best;
}

/// Shared bag of u and v nearest the root, or -1.
inline int shared_bag(const TreeDecomposition& t, const TdTopology& topo,
                      int u, int v) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(t.bags.size()); ++i)
    if (contains(t.bags[i], u) && contains(t.bags[i], v) &&
        (best < 0 || topo.root_distance[i] < topo.root_distance[best]))
      best = i;
  return best;
}

}  // namespace detail

/// Bottom-up subtree masks: after processing bag X_i, row v for each
/// v in X_i holds the one-hots of X_i merged with the accumulated rows of
/// all child-bag vertices. A vertex's final row is written by its bag
/// nearest the root.
inline std::vector<VertexSet> subtree_masks(const TreeDecomposition& t, int n) {
  auto topo = detail::td_topology(t);
  std::vector<VertexSet> rows(n, 0);
  for (int i : topo.order) {
    std::vector<VertexSet> snapshot = rows;
    for (int v : set_to_vector(t.bags[i])) {
      VertexSet row = t.bags[i];
      for (int c : topo.children[i])
        for (int u : set_to_vector(t.bags[c])) row |= snapshot[u];
      rows[v] = row;
    }
  }
  return rows;
}

struct AttentionMask {
  std::vector<VertexSet> allowed;  // row = query vertex

  bool operator()(int query, int key) const {
    return contains(allowed[query], key);
  }
};

/// Query rows cover the vertex's subtree, the parent of its home bag, and
/// every bag at the home bag's leaf-relative depth.
inline AttentionMask attention_mask(const TreeDecomposition& t, int n) {
  auto topo = detail::td_topology(t);
  std::vector<VertexSet> rows = subtree_masks(t, n);
  for (int v = 0; v < n; ++v) {
    int home = detail::home_bag(t, topo, v);
    if (home < 0) continue;
    rows[v] |= t.bags[t.parent[home]];
    for (int i = 0; i < static_cast<int>(t.bags.size()); ++i)
      if (topo.leaf_depth[i] == topo.leaf_depth[home]) rows[v] |= t.bags[i];
  }
  return AttentionMask{std::move(rows)};
}

/// Canonical code of an unlabeled undirected graph on `size` vertices:
/// the lexicographically minimal upper-triangle bitstring over all vertex
/// permutations. Sizes stay tiny (<= k+1), so brute force is fine.
inline std::uint32_t canonical_motif_code(int size,
                                          const std::vector<VertexSet>& adj) {
  std::vector<int> perm(size);
  for (int i = 0; i < size; ++i) perm[i] = i;
  std::uint32_t best = ~0u;
  do {
    std::uint32_t code = 0;
    int pos = 0;
    for (int i = 0; i < size; ++i)
      for (int j = i + 1; j < size; ++j, ++pos)
        if (contains(adj[perm[i]], perm[j])) code |= 1u << pos;
    best = std::min(best, code);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct MotifTable {
  int k = 0;
  // (size, canonical code) -> dense id; 0 is the no-shared-bag sentinel.
  std::map<std::pair<int, std::uint32_t>, int> ids;

  int size() const { return static_cast<int>(ids.size()); }
};

inline MotifTable motif_table(int k) {
  MotifTable table;
  table.k = k;
  for (int size = 1; size <= k + 1; ++size) {
    const int pairs = size * (size - 1) / 2;
    for (std::uint32_t bits = 0; bits < (1u << pairs); ++bits) {
      std::vector<VertexSet> adj(size, 0);
      int pos = 0;
      for (int i = 0; i < size; ++i)
        for (int j = i + 1; j < size; ++j, ++pos)
          if ((bits >> pos) & 1) {
            adj[i] |= bit(j);
            adj[j] |= bit(i);
          }
      table.ids.try_emplace({size, canonical_motif_code(size, adj)}, 0);
    }
  }
  int next = 1;
  for (auto& [code, id] : table.ids) id = next++;
  return table;
}

/// Motif id of the undirected simple subgraph induced by a bag.
inline int motif_id(const MotifTable& table, const LabeledGraph& g,
                    VertexSet bag) {
  std::vector<int> verts = set_to_vector(bag);
  const int size = static_cast<int>(verts.size());
  if (size > table.k + 1) throw GraphError("bag larger than width bound + 1");
  std::vector<VertexSet> adj(size, 0);
  for (int i = 0; i < size; ++i)
    for (int j = i + 1; j < size; ++j)
      if (g.skeleton_adjacent(verts[i], verts[j])) {
        adj[i] |= bit(j);
        adj[j] |= bit(i);
      }
  return table.ids.at({size, canonical_motif_code(size, adj)});
}

struct DepthInfo {
  std::vector<int> bag_depth;       // leaf-relative, per bag
  std::vector<int> relation_depth;  // per edge index
  std::vector<int> vertex_depth;    // per vertex
  std::vector<std::vector<int>> relative_depth;  // n x n
};

inline DepthInfo relative_depth_matrix(const LabeledGraph& g,
                                       const TreeDecomposition& t) {
  const int n = g.vertex_count();
  auto topo = detail::td_topology(t);
  DepthInfo info;
  info.bag_depth = topo.leaf_depth;
  info.relation_depth.resize(g.edge_count());
  for (int e = 0; e < g.edge_count(); ++e)
    info.relation_depth[e] = topo.leaf_depth[t.edge_assignment[e]];

  info.vertex_depth.assign(n, 0);
  std::vector<bool> incident(n, false);
  for (int e = 0; e < g.edge_count(); ++e) {
    const Edge& ed = g.edges()[e];
    for (int v : {ed.src, ed.dst}) {
      info.vertex_depth[v] = incident[v]
                                 ? std::max(info.vertex_depth[v],
                                            info.relation_depth[e])
                                 : info.relation_depth[e];
      incident[v] = true;
    }
  }
  for (int v = 0; v < n; ++v)
    if (!incident[v])
      info.vertex_depth[v] = topo.leaf_depth[detail::home_bag(t, topo, v)];

  // ã for a pair: the assigned edge's bag depth; otherwise the nearest-root
  // shared bag; otherwise (unmasked, uncovered) the key's home bag depth.
  std::vector<std::vector<int>> edge_bag(n, std::vector<int>(n, -1));
  for (int e = 0; e < g.edge_count(); ++e) {
    const Edge& ed = g.edges()[e];
    edge_bag[ed.src][ed.dst] = t.edge_assignment[e];
    edge_bag[ed.dst][ed.src] = t.edge_assignment[e];
  }
  AttentionMask mask = attention_mask(t, n);
  info.relative_depth.assign(n, std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      int bag = edge_bag[i][j];
      if (bag < 0) bag = detail::shared_bag(t, topo, i, j);
      if (bag < 0) {
        if (!mask(i, j)) continue;  // masked pairs carry no features
        bag = detail::home_bag(t, topo, j);
      }
      info.relative_depth[i][j] =
          std::abs(info.vertex_depth[i] - topo.leaf_depth[bag]);
    }
  return info;
}

/// Shortest-path label sequences over the graph augmented with reversed
/// edges (label suffix U+207B U+00B9) and a global vertex v0 ("global").
/// Equal lengths break ties toward the lexicographically smaller sequence.
inline std::map<std::pair<int, int>, std::vector<std::string>> relation_paths(
    const LabeledGraph& g) {
  const int n = g.vertex_count();
  const int v0 = n;
  struct Arc {
    int dst;
    std::string label;
  };
  std::vector<std::vector<Arc>> arcs(n + 1);
  for (const Edge& e : g.edges()) {
    arcs[e.src].push_back({e.dst, e.label});
    arcs[e.dst].push_back({e.src, e.label + "⁻¹"});
  }
  for (int v = 0; v < n; ++v) {
    arcs[v0].push_back({v, "global"});
    arcs[v].push_back({v0, "global"});
  }

  std::map<std::pair<int, int>, std::vector<std::string>> paths;
  for (int s = 0; s < n; ++s) {
    std::vector<int> dist(n + 1, -1);
    dist[s] = 0;
    std::vector<int> frontier{s};
    std::vector<std::vector<int>> levels{{s}};
    while (!frontier.empty()) {
      std::vector<int> next;
      for (int v : frontier)
        for (const Arc& a : arcs[v])
          if (dist[a.dst] < 0) {
            dist[a.dst] = dist[v] + 1;
            next.push_back(a.dst);
          }
      if (!next.empty()) levels.push_back(next);
      frontier = std::move(next);
    }
    // Lexicographically smallest sequence per target, level by level.
    std::vector<std::vector<std::string>> seq(n + 1);
    for (std::size_t level = 1; level < levels.size(); ++level)
      for (int v : levels[level]) {
        bool have = false;
        for (int u = 0; u <= n; ++u) {
          if (dist[u] != static_cast<int>(level) - 1) continue;
          for (const Arc& a : arcs[u]) {
            if (a.dst != v) continue;
            std::vector<std::string> cand = seq[u];
            cand.push_back(a.label);
            if (!have || cand < seq[v]) {
              seq[v] = std::move(cand);
              have = true;
            }
          }
        }
      }
    for (int t = 0; t < n; ++t)
      if (t != s && dist[t] >= 0) paths[{s, t}] = seq[t];
  }
  return paths;
}

struct FeatureBundle {
  int n = 0;
  AttentionMask mask;
  std::vector<std::vector<int>> motif_ids;
  std::vector<std::vector<int>> group_ids;
  std::vector<std::vector<int>> relative_depths;
  std::map<std::pair<int, int>, std::vector<std::string>> paths;

  friend bool operator==(const FeatureBundle& a, const FeatureBundle& b) {
    return a.n == b.n && a.mask.allowed == b.mask.allowed &&
           a.motif_ids == b.motif_ids && a.group_ids == b.group_ids &&
           a.relative_depths == b.relative_depths && a.paths == b.paths;
  }
};

inline FeatureBundle compute_features(const LabeledGraph& g,
                                      const TreeDecomposition& t,
                                      int width_bound = -1) {
  const int n = g.vertex_count();
  auto topo = detail::td_topology(t);
  MotifTable motifs = motif_table(std::max(t.width, width_bound));
  FeatureBundle b;
  b.n = n;
  b.mask = attention_mask(t, n);
  b.motif_ids.assign(n, std::vector<int>(n, 0));
  b.group_ids.assign(n, std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (!b.mask(i, j)) continue;  // masked pairs carry no features
      int bag = i == j ? detail::home_bag(t, topo, i)
                       : detail::shared_bag(t, topo, i, j);
      if (bag < 0) continue;  // unmasked pair without a shared bag: sentinel
      b.group_ids[i][j] = bag + 1;
      b.motif_ids[i][j] = motif_id(motifs, g, t.bags[bag]);
    }
  b.relative_depths = relative_depth_matrix(g, t).relative_depth;
  b.paths = relation_paths(g);
  return b;
}

inline nlohmann::ordered_json features_to_json(const FeatureBundle& b) {
  nlohmann::ordered_json j;
  j["n"] = b.n;
  auto matrix = [&](auto&& cell) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int i = 0; i < b.n; ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int k = 0; k < b.n; ++k) row.push_back(cell(i, k));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["mask"] = matrix([&](int i, int k) { return b.mask(i, k) ? 1 : 0; });
  j["motif"] = matrix([&](int i, int k) { return b.motif_ids[i][k]; });
  j["group"] = matrix([&](int i, int k) { return b.group_ids[i][k]; });
  j["rel_depth"] =
      matrix([&](int i, int k) { return b.relative_depths[i][k]; });
  j["paths"] = nlohmann::ordered_json::object();
  for (const auto& [key, labels] : b.paths)
    j["paths"][std::to_string(key.first) + "," + std::to_string(key.second)] =
        labels;
  return j;
}

inline FeatureBundle features_from_json(const nlohmann::ordered_json& j) {
  FeatureBundle b;
  b.n = j.at("n").get<int>();
  b.mask.allowed.assign(b.n, 0);
  for (int i = 0; i < b.n; ++i)
    for (int k = 0; k < b.n; ++k)
      if (j.at("mask")[i][k].get<int>()) b.mask.allowed[i] |= bit(k);
  auto matrix = [&](const char* name) {
    std::vector<std::vector<int>> m(b.n, std::vector<int>(b.n));
    for (int i = 0; i < b.n; ++i)
      for (int k = 0; k < b.n; ++k) m[i][k] = j.at(name)[i][k].get<int>();
    return m;
  };
  b.motif_ids = matrix("motif");
  b.group_ids = matrix("group");
  b.relative_depths = matrix("rel_depth");
  for (const auto& [key, labels] : j.at("paths").items()) {
    auto comma = key.find(',');
    b.paths[{std::stoi(key.substr(0, comma)), std::stoi(key.substr(comma + 1))}] =
        labels.get<std::vector<std::string>>();
  }
  return b;
}

/// Emits the bundle (shape-checked against the graph/TD pair it came from).
inline nlohmann::ordered_json export_features(const LabeledGraph& g,
                                              const TreeDecomposition& t,
                                              const FeatureBundle& b) {
  if (b.n != g.vertex_count() ||
      static_cast<int>(b.mask.allowed.size()) != b.n)
    throw GraphError("feature bundle shape does not match graph");
  (void)t;
  return features_to_json(b);
}

}  // namespace tdmask

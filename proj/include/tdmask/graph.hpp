#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdmask {

/// Vertex sets are bitmasks over dense vertex ids; graphs are capped at 64
/// vertices, far above anything the separator dictionary can afford anyway.
using VertexSet = std::uint64_t;

inline int set_size(VertexSet s) { return __builtin_popcountll(s); }
inline VertexSet bit(int v) { return VertexSet{1} << v; }
inline bool contains(VertexSet s, int v) { return (s >> v) & 1; }
inline int lowest_vertex(VertexSet s) { return __builtin_ctzll(s); }

inline std::vector<int> set_to_vector(VertexSet s) {
  std::vector<int> out;
  while (s) {
    out.push_back(lowest_vertex(s));
    s &= s - 1;
  }
  return out;
}

struct Edge {
  int src;
  int dst;
  std::string label;
};

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rooted directed multigraph with opaque string labels. Immutable once
/// validated; all operations on it are pure.
class LabeledGraph {
 public:
  LabeledGraph(std::vector<std::string> vertex_labels, std::vector<Edge> edges,
               int root, std::string id = {})
      : labels_(std::move(vertex_labels)),
        edges_(std::move(edges)),
        root_(root),
        id_(std::move(id)) {
    validate();
    build_adjacency();
  }

  int vertex_count() const { return static_cast<int>(labels_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int root() const { return root_; }
  const std::string& id() const { return id_; }
  const std::string& label(int v) const { return labels_.at(v); }
  const std::vector<Edge>& edges() const { return edges_; }

  VertexSet all_vertices() const {
    return vertex_count() == 64 ? ~VertexSet{0}
                                : (VertexSet{1} << vertex_count()) - 1;
  }

  /// Undirected simple skeleton: neighbor bitmask per vertex.
  VertexSet neighbors(int v) const { return adj_[v]; }

  bool skeleton_adjacent(int u, int v) const {
    return contains(adj_[u], v);
  }

 private:
  void validate() {
    const int n = vertex_count();
    if (n == 0) throw GraphError("graph has no vertices");
    if (n > 64) throw GraphError("graph exceeds 64 vertices");
    if (root_ < 0 || root_ >= n) throw GraphError("root is not a vertex id");
    for (const Edge& e : edges_) {
      if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
        throw GraphError("edge endpoint " + std::to_string(e.src) + "->" +
                         std::to_string(e.dst) + " is not a vertex id");
      if (e.src == e.dst)
        throw GraphError("self-loop at vertex " + std::to_string(e.src));
    }
  }

  void build_adjacency() {
    adj_.assign(vertex_count(), 0);
    for (const Edge& e : edges_) {
      adj_[e.src] |= bit(e.dst);
      adj_[e.dst] |= bit(e.src);
    }
    // Connectivity of the skeleton is an invariant of the type.
    std::vector<int> comp = skeleton_component_of(0);
    if (static_cast<int>(comp.size()) != vertex_count()) {
      std::string msg = "graph skeleton is disconnected; fragment sizes:";
      VertexSet seen = 0;
      for (int v = 0; v < vertex_count(); ++v) {
        if (contains(seen, v)) continue;
        std::vector<int> c = skeleton_component_of(v);
        for (int u : c) seen |= bit(u);
        msg += " " + std::to_string(c.size());
      }
      throw GraphError(msg);
    }
  }

  std::vector<int> skeleton_component_of(int start) const {
    std::vector<int> out{start};
    VertexSet seen = bit(start);
    for (std::size_t i = 0; i < out.size(); ++i)
      for (int u : set_to_vector(adj_[out[i]] & ~seen)) {
        seen |= bit(u);
        out.push_back(u);
      }
    return out;
  }

  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  int root_;
  std::string id_;
  std::vector<VertexSet> adj_;
};

struct GraphMetrics {
  int reentrancy_count = 0;
  int diameter = 0;
  int vertex_count = 0;
  int edge_count = 0;
};

/// All-pairs undirected BFS distances on the skeleton.
inline std::vector<std::vector<int>> bfs_distances(const LabeledGraph& g) {
  const int n = g.vertex_count();
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  for (int s = 0; s < n; ++s) {
    std::queue<int> q;
    q.push(s);
    dist[s][s] = 0;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int u : set_to_vector(g.neighbors(v)))
        if (dist[s][u] < 0) {
          dist[s][u] = dist[s][v] + 1;
          q.push(u);
        }
    }
  }
  return dist;
}

inline GraphMetrics graph_metrics(const LabeledGraph& g) {
  GraphMetrics m;
  m.vertex_count = g.vertex_count();
  m.edge_count = g.edge_count();
  std::vector<int> indeg(g.vertex_count(), 0);
  for (const Edge& e : g.edges()) ++indeg[e.dst];
  for (int d : indeg) m.reentrancy_count += std::max(0, d - 1);
  auto dist = bfs_distances(g);
  for (const auto& row : dist)
    for (int d : row) m.diameter = std::max(m.diameter, d);
  return m;
}

/// Connected components of the skeleton induced on V - s, in ascending
/// order of minimum vertex id. s = V yields an empty list.
inline std::vector<VertexSet> components_after_removal(const LabeledGraph& g,
                                                       VertexSet s) {
  std::vector<VertexSet> comps;
  VertexSet remaining = g.all_vertices() & ~s;
  while (remaining) {
    int start = lowest_vertex(remaining);
    VertexSet comp = bit(start);
    VertexSet frontier = comp;
    while (frontier) {
      VertexSet next = 0;
      for (int v : set_to_vector(frontier)) next |= g.neighbors(v);
      next &= remaining & ~comp;
      comp |= next;
      frontier = next;
    }
    comps.push_back(comp);
    remaining &= ~comp;
  }
  return comps;
}

}  // namespace tdmask

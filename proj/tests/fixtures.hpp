#pragma once

#include <string>
#include <vector>

#include "tdmask/graph.hpp"
#include "tdmask/penman.hpp"
#include "tdmask/treedec.hpp"

namespace fixtures {

// "If you want to post there you abide by them." Concept `y` (you) has
// indegree 3, giving the graph two reentrancies.
inline const char* kSampleAmrPenman =
    "(a / abide-01\n"
    "   :arg1 (t / they)\n"
    "   :condition (w / want-01\n"
    "      :arg1 (p / post-01\n"
    "         :arg2 (t2 / there)\n"
    "         :arg0 (y / you))\n"
    "      :arg0 y)\n"
    "   :arg0 y)";

inline tdmask::LabeledGraph sample_amr() {
  return tdmask::parse_penman(kSampleAmrPenman);
}

// Simplified six-vertex AMR: the condition relation is dropped, leaving
// want-01's edges re-rooted under abide-01. Vertex ids:
// 0=t 1=a 2=w 3=y 4=p 5=t2.
inline tdmask::LabeledGraph simplified_amr() {
  std::vector<std::string> labels{"they", "abide-01", "want-01",
                                  "you",  "post-01",  "there"};
  std::vector<tdmask::Edge> edges{
      {1, 0, "arg1"}, {1, 2, "condition"}, {1, 3, "arg0"}, {2, 3, "arg0"},
      {2, 4, "arg1"}, {4, 3, "arg0"},      {4, 5, "arg2"},
  };
  return tdmask::LabeledGraph(std::move(labels), std::move(edges), 1);
}

// Seven-vertex sample graph with a hand-picked width-2 TD:
// {a,c} at the root, {a,b} and {c,f} below it, {b,d,g} and {b,e,g} as
// leaves under {a,b}. Vertex ids: a=0 b=1 c=2 d=3 e=4 f=5 g=6.
inline tdmask::LabeledGraph seven_vertex_graph() {
  std::vector<std::string> labels{"a", "b", "c", "d", "e", "f", "g"};
  std::vector<tdmask::Edge> edges{
      {0, 2, "r0"}, {2, 5, "r1"}, {0, 1, "r2"}, {1, 3, "r3"},
      {3, 6, "r4"}, {1, 4, "r5"}, {4, 6, "r6"}, {1, 6, "r7"},
  };
  return tdmask::LabeledGraph(std::move(labels), std::move(edges), 0);
}

inline tdmask::TreeDecomposition seven_vertex_td() {
  using tdmask::bit;
  tdmask::TreeDecomposition t;
  t.bags = {bit(0) | bit(2),                   // {a,c}
            bit(0) | bit(1),                   // {a,b}
            bit(2) | bit(5),                   // {c,f}
            bit(1) | bit(3) | bit(6),          // {b,d,g}
            bit(1) | bit(4) | bit(6)};         // {b,e,g}
  // {b,e,g} nests under {b,d,g}: g appears in both, so they must be
  // adjacent for running intersection (the parent {a,b} lacks g).
  t.parent = {0, 0, 0, 1, 3};
  t.root_bag = 0;
  // Edges in seven_vertex_graph order: a-c, c-f, a-b, b-d, d-g, b-e, e-g, b-g.
  t.edge_assignment = {0, 2, 1, 3, 3, 4, 4, 3};
  t.width = 2;
  return t;
}

}  // namespace fixtures

#pragma once

#include <string>

#include <json.hpp>

#include "tdmask/graph.hpp"

namespace tdmask {

using ordered_json = nlohmann::ordered_json;

struct JsonFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline LabeledGraph graph_from_json(const ordered_json& j) {
  if (!j.contains("root") || !j.contains("vertices") || !j.contains("edges"))
    throw JsonFormatError("graph JSON needs root, vertices, and edges fields");
  std::string id = j.value("id", std::string{});
  const auto& vs = j.at("vertices");
  std::vector<std::string> labels(vs.size());
  std::vector<bool> seen(vs.size(), false);
  for (const auto& v : vs) {
    if (!v.contains("id") || !v.contains("label"))
      throw JsonFormatError("vertex entry needs id and label");
    int vid = v.at("id").get<int>();
    if (vid < 0 || vid >= static_cast<int>(vs.size()))
      throw JsonFormatError("vertex ids must be dense in 0..n-1, got " +
                            std::to_string(vid));
    if (seen[vid])
      throw JsonFormatError("duplicate vertex id " + std::to_string(vid));
    seen[vid] = true;
    labels[vid] = v.at("label").get<std::string>();
  }
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    int src = e.at("src").get<int>();
    int dst = e.at("dst").get<int>();
    if (src < 0 || src >= static_cast<int>(vs.size()) || dst < 0 ||
        dst >= static_cast<int>(vs.size()))
      throw JsonFormatError("dangling edge endpoint " + std::to_string(src) +
                            "->" + std::to_string(dst));
    edges.push_back({src, dst, e.at("label").get<std::string>()});
  }
  return LabeledGraph(std::move(labels), std::move(edges),
                      j.at("root").get<int>(), std::move(id));
}

inline LabeledGraph parse_graph_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw JsonFormatError(e.what());
  }
  return graph_from_json(j);
}

inline ordered_json graph_to_json(const LabeledGraph& g) {
  ordered_json j;
  if (!g.id().empty()) j["id"] = g.id();
  j["root"] = g.root();
  j["vertices"] = ordered_json::array();
  for (int v = 0; v < g.vertex_count(); ++v)
    j["vertices"].push_back({{"id", v}, {"label", g.label(v)}});
  j["edges"] = ordered_json::array();
  for (const Edge& e : g.edges())
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"label", e.label}});
  return j;
}

}  // namespace tdmask

#pragma once

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "tdmask/graph.hpp"

namespace tdmask {

struct PenmanError : std::runtime_error {
  PenmanError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

namespace detail {

struct PenmanLexer {
  const std::string& text;
  std::size_t pos = 0;

  explicit PenmanLexer(const std::string& t) : text(t) {}

  void skip_space() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool at_end() {
    skip_space();
    return pos >= text.size();
  }

  char peek() {
    skip_space();
    return pos < text.size() ? text[pos] : '\0';
  }

  void expect(char c) {
    skip_space();
    if (pos >= text.size() || text[pos] != c)
      throw PenmanError(std::string("expected '") + c + "'", pos);
    ++pos;
  }

  // An atom is a quoted string or a maximal run of chars outside
  // whitespace, parens, '/', and ':'. Quotes are preserved verbatim.
  std::string atom() {
    skip_space();
    std::size_t start = pos;
    if (pos < text.size() && text[pos] == '"') {
      ++pos;
      while (pos < text.size() && text[pos] != '"') ++pos;
      if (pos >= text.size()) throw PenmanError("unterminated quote", start);
      ++pos;
      return text.substr(start, pos - start);
    }
    while (pos < text.size()) {
      char c = text[pos];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' ||
          c == '/' || c == ':')
        break;
      ++pos;
    }
    if (pos == start) throw PenmanError("expected token", start);
    return text.substr(start, pos - start);
  }
};

struct PenmanParser {
  PenmanLexer lex;
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  std::map<std::string, int> var_ids;

  explicit PenmanParser(const std::string& text) : lex(text) {}

  // node := "(" var "/" label relation* ")"
  int node() {
    lex.expect('(');
    std::size_t var_at = lex.pos;
    std::string var = lex.atom();
    if (var_ids.count(var))
      throw PenmanError("duplicate variable declaration '" + var + "'", var_at);
    lex.expect('/');
    int id = static_cast<int>(labels.size());
    var_ids[var] = id;
    labels.push_back(lex.atom());
    while (lex.peek() == ':') relation(id);
    lex.expect(')');
    return id;
  }

  // relation := ":"role (node | var)
  void relation(int src) {
    lex.expect(':');
    std::string role = lex.atom();
    int dst;
    if (lex.peek() == '(') {
      dst = node();
    } else {
      std::size_t ref_at = lex.pos;
      std::string var = lex.atom();
      auto it = var_ids.find(var);
      if (it == var_ids.end())
        throw PenmanError("reference to undeclared variable '" + var + "'", ref_at);
      dst = it->second;
    }
    edges.push_back({src, dst, role});
  }
};

}  // namespace detail

inline LabeledGraph parse_penman(const std::string& text) {
  detail::PenmanParser p(text);
  if (p.lex.at_end()) throw PenmanError("empty input", 0);
  int root = p.node();
  if (!p.lex.at_end())
    throw PenmanError("trailing input after closing paren", p.lex.pos);
  return LabeledGraph(std::move(p.labels), std::move(p.edges), root);
}

/// Parses a file containing any number of whitespace-separated graphs.
/// Variable scope is per graph.
inline std::vector<LabeledGraph> parse_penman_corpus(const std::string& text) {
  std::vector<LabeledGraph> out;
  std::size_t pos = 0;
  while (true) {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
    if (pos >= text.size()) break;
    detail::PenmanParser p(text);
    p.lex.pos = pos;
    int root = p.node();
    out.emplace_back(std::move(p.labels), std::move(p.edges), root);
    pos = p.lex.pos;
  }
  return out;
}

}  // namespace tdmask

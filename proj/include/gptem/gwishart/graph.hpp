// Undirected graphs on trait vertices.
#pragma once

#include "gptem/core.hpp"

#include <algorithm>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gptem::gwishart {

/// Undirected simple graph on vertices 0..p-1 stored as a symmetric
/// adjacency matrix. Edge slots (i<j) are enumerated row-major over the
/// upper triangle; `slot_index` and `slot_pair` convert between the two.
class TraitGraph {
 public:
  TraitGraph() = default;
  explicit TraitGraph(int p) : p_(p), adj_(static_cast<std::size_t>(p) * static_cast<std::size_t>(p), 0) {
    if (p < 1) throw InputError("graph must have at least one vertex");
  }

  static TraitGraph empty(int p) { return TraitGraph(p); }

  static TraitGraph complete(int p) {
    TraitGraph g(p);
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j) g.set_edge(i, j, true);
    return g;
  }

  static TraitGraph from_edges(int p, const std::vector<std::pair<int, int>>& edges) {
    TraitGraph g(p);
    for (auto [i, j] : edges) {
      g.check_pair(i, j);
      g.set_edge(i, j, true);
    }
    return g;
  }

  /// Graph of the nonzero off-diagonal pattern of a symmetric matrix.
  static TraitGraph from_pattern(const Matrix& m, double tol = 0.0) {
    TraitGraph g(static_cast<int>(m.rows()));
    for (int i = 0; i < g.p_; ++i)
      for (int j = i + 1; j < g.p_; ++j)
        if (std::abs(m(i, j)) > tol) g.set_edge(i, j, true);
    return g;
  }

  /// Inverse of `indicators()`.
  static TraitGraph from_indicators(int p, const std::vector<std::uint8_t>& ind) {
    TraitGraph g(p);
    if (ind.size() != static_cast<std::size_t>(n_slots(p))) throw InputError("edge indicator vector has wrong length");
    for (int k = 0; k < n_slots(p); ++k) {
      auto [i, j] = slot_pair(p, k);
      g.set_edge(i, j, ind[static_cast<std::size_t>(k)] != 0);
    }
    return g;
  }

  static int n_slots(int p) { return p * (p - 1) / 2; }

  static int slot_index(int p, int i, int j) {
    if (i > j) std::swap(i, j);
    return i * p - i * (i + 1) / 2 + (j - i - 1);
  }

  static std::pair<int, int> slot_pair(int p, int k) {
    int i = 0;
    while (k >= p - 1 - i) {
      k -= p - 1 - i;
      ++i;
    }
    return {i, i + 1 + k};
  }

  int n_vertices() const { return p_; }

  bool has_edge(int i, int j) const { return adj_[static_cast<std::size_t>(i * p_ + j)] != 0; }

  int edge_count() const {
    int n = 0;
    for (int i = 0; i < p_; ++i)
      for (int j = i + 1; j < p_; ++j) n += has_edge(i, j) ? 1 : 0;
    return n;
  }

  int degree(int v) const {
    int n = 0;
    for (int j = 0; j < p_; ++j) n += (j != v && has_edge(v, j)) ? 1 : 0;
    return n;
  }

  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int j = 0; j < p_; ++j)
      if (j != v && has_edge(v, j)) out.push_back(j);
    return out;
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < p_; ++i)
      for (int j = i + 1; j < p_; ++j)
        if (has_edge(i, j)) out.emplace_back(i, j);
    return out;
  }

  /// Upper-triangle edge indicators in slot order.
  std::vector<std::uint8_t> indicators() const {
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(n_slots(p_)));
    for (int i = 0; i < p_; ++i)
      for (int j = i + 1; j < p_; ++j) out.push_back(has_edge(i, j) ? 1 : 0);
    return out;
  }

  /// Compact string key ("0110...") usable in hash maps.
  std::string key() const {
    std::string out;
    out.reserve(static_cast<std::size_t>(n_slots(p_)));
    for (int i = 0; i < p_; ++i)
      for (int j = i + 1; j < p_; ++j) out.push_back(has_edge(i, j) ? '1' : '0');
    return out;
  }

  /// True if `m` has exact zeros at every non-edge.
  bool respects(const Matrix& m) const {
    for (int i = 0; i < p_; ++i)
      for (int j = i + 1; j < p_; ++j)
        if (!has_edge(i, j) && (m(i, j) != 0.0 || m(j, i) != 0.0)) return false;
    return true;
  }

  void set_edge(int i, int j, bool present) {
    adj_[static_cast<std::size_t>(i * p_ + j)] = present ? 1 : 0;
    adj_[static_cast<std::size_t>(j * p_ + i)] = present ? 1 : 0;
  }

  void check_pair(int i, int j) const {
    if (i == j) throw InputError("edge endpoints must differ (self-loop " + std::to_string(i + 1) + ")");
    if (i < 0 || j < 0 || i >= p_ || j >= p_) {
      throw InputError("edge (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") out of range for p=" +
                       std::to_string(p_));
    }
  }

  bool operator==(const TraitGraph&) const = default;

 private:
  int p_ = 0;
  std::vector<std::uint8_t> adj_;
};

/// Copy of `graph` with edge (i,j) toggled.
inline TraitGraph flip_edge(const TraitGraph& graph, int i, int j) {
  graph.check_pair(i, j);
  TraitGraph out = graph;
  out.set_edge(i, j, !graph.has_edge(i, j));
  return out;
}

/// Maximum cardinality search order (ties broken by smallest index).
inline std::vector<int> max_cardinality_order(const TraitGraph& g) {
  const int p = g.n_vertices();
  std::vector<int> weight(static_cast<std::size_t>(p), 0), order;
  std::vector<char> numbered(static_cast<std::size_t>(p), 0);
  for (int step = 0; step < p; ++step) {
    int best = -1;
    for (int v = 0; v < p; ++v)
      if (!numbered[static_cast<std::size_t>(v)] && (best < 0 || weight[static_cast<std::size_t>(v)] > weight[static_cast<std::size_t>(best)])) best = v;
    numbered[static_cast<std::size_t>(best)] = 1;
    order.push_back(best);
    for (int w = 0; w < p; ++w)
      if (w != best && g.has_edge(best, w) && !numbered[static_cast<std::size_t>(w)]) ++weight[static_cast<std::size_t>(w)];
  }
  return order;
}

/// Maximal cliques in running-intersection order with their separators.
struct JunctionSequence {
  std::vector<std::vector<int>> cliques;
  std::vector<std::vector<int>> separators;  // separators[k] = cliques[k] ∩ (cliques[0..k-1]); [0] is empty
};

/// Cliques and separators of a decomposable graph, or nullopt if the graph
/// is not chordal. Uses the perfect elimination test on an MCS ordering.
inline std::optional<JunctionSequence> junction_sequence(const TraitGraph& g) {
  const int p = g.n_vertices();
  const auto order = max_cardinality_order(g);
  std::vector<int> rank(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;

  std::vector<std::vector<int>> candidate(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    const int v = order[static_cast<std::size_t>(k)];
    std::vector<int> earlier;
    for (int w : g.neighbors(v))
      if (rank[static_cast<std::size_t>(w)] < k) earlier.push_back(w);
    for (std::size_t a = 0; a < earlier.size(); ++a)
      for (std::size_t b = a + 1; b < earlier.size(); ++b)
        if (!g.has_edge(earlier[a], earlier[b])) return std::nullopt;
    earlier.push_back(v);
    std::sort(earlier.begin(), earlier.end());
    candidate[static_cast<std::size_t>(k)] = std::move(earlier);
  }
  auto subset = [](const std::vector<int>& a, const std::vector<int>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  JunctionSequence js;
  std::vector<int> covered;
  for (int k = 0; k < p; ++k) {
    const auto& c = candidate[static_cast<std::size_t>(k)];
    bool maximal = true;
    for (int m = k + 1; m < p && maximal; ++m)
      if (subset(c, candidate[static_cast<std::size_t>(m)])) maximal = false;
    if (!maximal) continue;
    std::vector<int> sep;
    std::set_intersection(c.begin(), c.end(), covered.begin(), covered.end(), std::back_inserter(sep));
    js.cliques.push_back(c);
    js.separators.push_back(std::move(sep));
    std::vector<int> merged;
    std::set_union(covered.begin(), covered.end(), c.begin(), c.end(), std::back_inserter(merged));
    covered = std::move(merged);
  }
  return js;
}

inline bool is_decomposable(const TraitGraph& g) { return junction_sequence(g).has_value(); }

}  // namespace gptem::gwishart

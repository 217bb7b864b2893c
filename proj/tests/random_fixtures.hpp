// Random matrices and graphs shared by the test binaries.
#pragma once

#include "gptem/gwishart/graph.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace gptem::testing_support {

using gwishart::TraitGraph;

inline Matrix random_spd(int p, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = normal(rng);
  return a * a.transpose() / p + 0.5 * Matrix::Identity(p, p);
}

// Random chordal graph: each new vertex attaches to a random subset of a
// random clique among earlier vertices (a perfect elimination ordering).
inline TraitGraph random_decomposable(int p, Rng& rng) {
  TraitGraph g(p);
  std::bernoulli_distribution coin(0.6);
  for (int v = 1; v < p; ++v) {
    std::uniform_int_distribution<int> pick(0, v - 1);
    const int anchor = pick(rng);
    std::vector<int> clique{anchor};
    for (int w : g.neighbors(anchor)) {
      if (w >= v) continue;
      bool ok = true;
      for (int c : clique) ok = ok && g.has_edge(c, w);
      if (ok && coin(rng)) clique.push_back(w);
    }
    if (coin(rng))
      for (int c : clique) g.set_edge(v, c, true);
  }
  // Scramble labels so the natural order is not the elimination order.
  std::vector<int> perm(static_cast<std::size_t>(p));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  TraitGraph out(p);
  for (auto [i, j] : g.edges()) out.set_edge(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)], true);
  return out;
}

}  // namespace gptem::testing_support

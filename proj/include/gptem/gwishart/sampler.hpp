// Wishart and G-Wishart random draws.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/distribution.hpp"
#include "gptem/gwishart/graph.hpp"

#include <algorithm>
#include <iterator>

namespace gptem::gwishart {

/// Bartlett draw of K ~ Wishart(nu, scale) with E[K] = nu * scale.
inline Matrix sample_wishart(double nu, const Matrix& scale, Rng& rng) {
  const Eigen::Index p = scale.rows();
  if (!(nu > static_cast<double>(p) - 1.0)) throw InputError("Wishart degrees of freedom must exceed p - 1");
  Eigen::LLT<Matrix> llt(scale);
  if (llt.info() != Eigen::Success) throw NumericError("Wishart scale matrix is not positive definite");
  std::normal_distribution<double> normal;
  Matrix a = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    std::chi_squared_distribution<double> chi(nu - static_cast<double>(i));
    a(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  const Matrix la = llt.matrixL() * a;
  Matrix k = la * la.transpose();
  return 0.5 * (k + k.transpose());
}

struct SamplerOptions {
  int max_sweeps = 5000;
  double tolerance = 1e-8;
};

namespace detail {

inline Matrix gather(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = m(rows[a], cols[b]);
  return out;
}

/// Exact completion for a decomposable graph. Cliques are added in
/// running-intersection order; each new residual block is conditionally
/// independent of everything already covered given its separator.
inline Matrix complete_decomposable(const Matrix& sigma, const JunctionSequence& js) {
  const auto p = sigma.rows();
  Matrix w = Matrix::Zero(p, p);
  std::vector<int> covered;
  for (std::size_t c = 0; c < js.cliques.size(); ++c) {
    const auto& clique = js.cliques[c];
    const auto& sep = js.separators[c];
    for (int i : clique)
      for (int j : clique) w(i, j) = sigma(i, j);
    std::vector<int> residual, history;
    std::set_difference(clique.begin(), clique.end(), sep.begin(), sep.end(), std::back_inserter(residual));
    std::set_difference(covered.begin(), covered.end(), sep.begin(), sep.end(), std::back_inserter(history));
    if (!sep.empty() && !history.empty()) {
      const Matrix cross = gather(w, residual, sep) * gather(w, sep, sep).llt().solve(gather(w, sep, history));
      for (std::size_t a = 0; a < residual.size(); ++a)
        for (std::size_t b = 0; b < history.size(); ++b) {
          const auto v = cross(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
          w(residual[a], history[b]) = v;
          w(history[b], residual[a]) = v;
        }
    }
    std::vector<int> merged;
    std::set_union(covered.begin(), covered.end(), clique.begin(), clique.end(), std::back_inserter(merged));
    covered = std::move(merged);
  }
  return w;
}

/// Iterative completion for non-decomposable graphs. Entries linking
/// different connected components start at their fixed point, zero.
inline Matrix complete_iteratively(const TraitGraph& graph, const Matrix& sigma, const SamplerOptions& options) {
  const int p = graph.n_vertices();
  std::vector<int> component(static_cast<std::size_t>(p), -1);
  for (int s = 0, label = 0; s < p; ++s) {
    if (component[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<int> stack{s};
    component[static_cast<std::size_t>(s)] = label;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int u : graph.neighbors(v))
        if (component[static_cast<std::size_t>(u)] < 0) {
          component[static_cast<std::size_t>(u)] = label;
          stack.push_back(u);
        }
    }
    ++label;
  }
  Matrix w = sigma;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (component[static_cast<std::size_t>(i)] != component[static_cast<std::size_t>(j)]) w(i, j) = 0.0;

  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) nbrs[static_cast<std::size_t>(j)] = graph.neighbors(j);
  Matrix previous(p, p);
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    previous = w;
    for (int j = 0; j < p; ++j) {
      const auto& nb = nbrs[static_cast<std::size_t>(j)];
      if (nb.empty()) continue;
      const auto m = static_cast<Eigen::Index>(nb.size());
      Matrix w_nn(m, m);
      Vector s_nj(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        s_nj(a) = sigma(nb[static_cast<std::size_t>(a)], j);
        for (Eigen::Index b = 0; b < m; ++b) w_nn(a, b) = w(nb[static_cast<std::size_t>(a)], nb[static_cast<std::size_t>(b)]);
      }
      const Vector beta = w_nn.llt().solve(s_nj);
      Vector col = Vector::Zero(p);
      for (Eigen::Index a = 0; a < m; ++a) col += w.col(nb[static_cast<std::size_t>(a)]) * beta(a);
      for (int i = 0; i < p; ++i) {
        if (i == j || component[static_cast<std::size_t>(i)] != component[static_cast<std::size_t>(j)]) continue;
        w(i, j) = col(i);
        w(j, i) = col(i);
      }
    }
    if ((w - previous).cwiseAbs().maxCoeff() <= options.tolerance * w.cwiseAbs().maxCoeff()) return w;
  }
  throw NumericError("G-Wishart sampler did not converge within " + std::to_string(options.max_sweeps) +
                     " sweeps (ill-conditioned rate matrix?)");
}

}  // namespace detail

/// Exact draw from W_G(df, rate) by covariance completion: draw
/// K from the unconstrained Wishart with nu = df + p - 1, then complete
/// Sigma = K^{-1} so that the completion agrees with Sigma on the graph and
/// its inverse has zeros off the graph. Decomposable graphs are completed in
/// closed form; other graphs iterate until the largest change relative to
/// the largest entry drops below `tolerance`.
inline Matrix sample_gwishart(const TraitGraph& graph, const GWishartParams& params, Rng& rng,
                              const SamplerOptions& options = {}) {
  const int p = graph.n_vertices();
  if (params.dim() != p) throw InputError("graph and rate matrix dimensions differ");
  const Matrix scale = inverse_spd(params.rate);
  Matrix k = sample_wishart(params.df + p - 1, scale, rng);
  const int n_edges = graph.edge_count();
  if (n_edges == TraitGraph::n_slots(p)) return k;

  const Matrix sigma = inverse_spd(k);
  Matrix w;
  if (auto js = junction_sequence(graph)) {
    w = detail::complete_decomposable(sigma, *js);
  } else {
    w = detail::complete_iteratively(graph, sigma, options);
  }
  k = inverse_spd(w);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double v = graph.has_edge(i, j) ? 0.5 * (k(i, j) + k(j, i)) : 0.0;
      k(i, j) = v;
      k(j, i) = v;
    }
  if (!is_positive_definite(k)) throw NumericError("G-Wishart draw is not positive definite");
  return k;
}

inline Matrix sample_gwishart(const TraitGraph& graph, const GWishartParams& params, std::uint64_t seed,
                              const SamplerOptions& options = {}) {
  Rng rng(seed);
  return sample_gwishart(graph, params, rng, options);
}

}  // namespace gptem::gwishart

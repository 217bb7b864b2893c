// Brownian diffusion on a tree: tree covariance, the whitened cross-product
// statistic, and forward simulation.
#pragma once

#include "gptem/core.hpp"
#include "gptem/phylo/traits.hpp"
#include "gptem/phylo/tree.hpp"

namespace gptem::phylo {

/// Across-taxa covariance V(tree) + J / tau0: entry (i,j) is the root-to-MRCA
/// path length of tips i and j plus the root prior variance.
inline Matrix tree_covariance(const PhyloTree& tree, const RootPrior& root_prior) {
  if (!(root_prior.sample_size > 0.0)) throw InputError("root prior sample size must be positive");
  const int n = tree.n_tips();
  const auto depth = tree.depths();
  Matrix cov(n, n);
  // Tips under each node, gathered in post-order.
  std::vector<std::vector<int>> below(static_cast<std::size_t>(tree.n_nodes()));
  for (int v = 0; v < tree.n_nodes(); ++v) {
    auto& here = below[static_cast<std::size_t>(v)];
    if (tree.is_tip(v)) {
      here.push_back(v);
      cov(v, v) = depth[static_cast<std::size_t>(v)];
      continue;
    }
    const auto& [a, b] = tree.children(v);
    const auto& left = below[static_cast<std::size_t>(a)];
    const auto& right = below[static_cast<std::size_t>(b)];
    for (int i : left) {
      for (int j : right) {
        cov(i, j) = depth[static_cast<std::size_t>(v)];
        cov(j, i) = depth[static_cast<std::size_t>(v)];
      }
    }
    here.reserve(left.size() + right.size());
    here.insert(here.end(), left.begin(), left.end());
    here.insert(here.end(), right.begin(), right.end());
    below[static_cast<std::size_t>(a)].clear();
    below[static_cast<std::size_t>(b)].clear();
  }
  cov.array() += 1.0 / root_prior.sample_size;
  return cov;
}

namespace detail {

inline void check_dimensions(const PhyloTree& tree, const Matrix& traits, const RootPrior& root_prior) {
  if (traits.rows() != tree.n_tips()) {
    throw InputError("trait matrix has " + std::to_string(traits.rows()) + " rows but tree has " +
                     std::to_string(tree.n_tips()) + " tips");
  }
  root_prior.validate(static_cast<int>(traits.cols()));
}

}  // namespace detail

/// Reference O(N^3) route: (X - 1 mu0')' Upsilon^{-1} (X - 1 mu0') with a
/// Cholesky solve. Rows of `traits` are in tip order.
inline Matrix compute_delta_dense(const PhyloTree& tree, const Matrix& traits, const RootPrior& root_prior) {
  detail::check_dimensions(tree, traits, root_prior);
  const Matrix upsilon = tree_covariance(tree, root_prior);
  Eigen::LLT<Matrix> llt(upsilon);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) throw NumericError("tree covariance is singular");
  const Matrix centered = traits.rowwise() - root_prior.mean.transpose();
  Matrix delta = centered.transpose() * llt.solve(centered);
  return 0.5 * (delta + delta.transpose());
}

inline Matrix compute_delta_dense(const PhyloTree& tree, const TraitMatrix& traits, const RootPrior& root_prior) {
  return compute_delta_dense(tree, traits.values, root_prior);
}

/// Same statistic in one post-order pass, O(N p^2). Each node carries the
/// precision-weighted mean of the tips below it and the variance of that
/// mean; sibling contrasts add (m_a - m_b)(m_a - m_b)' / (v_a + v_b) and the
/// root contributes its contrast against mu0 with variance v_root + 1/tau0.
inline Matrix compute_delta_pruning(const PhyloTree& tree, const Matrix& traits, const RootPrior& root_prior) {
  detail::check_dimensions(tree, traits, root_prior);
  const Eigen::Index p = traits.cols();
  const int n_nodes = tree.n_nodes();
  Matrix mean(p, n_nodes);
  std::vector<double> var(static_cast<std::size_t>(n_nodes), 0.0);
  Matrix delta = Matrix::Zero(p, p);
  Vector contrast(p);
  for (int v = 0; v < n_nodes; ++v) {
    if (tree.is_tip(v)) {
      mean.col(v) = traits.row(v).transpose();
      continue;
    }
    const auto& [a, b] = tree.children(v);
    const double va = var[static_cast<std::size_t>(a)] + tree.branch_length(a);
    const double vb = var[static_cast<std::size_t>(b)] + tree.branch_length(b);
    const double total = va + vb;
    if (!(total > 0.0)) throw NumericError("tree covariance is singular (zero-variance sibling pair)");
    contrast = mean.col(a) - mean.col(b);
    delta.noalias() += (contrast * contrast.transpose()) / total;
    mean.col(v) = (vb * mean.col(a) + va * mean.col(b)) / total;
    var[static_cast<std::size_t>(v)] = va * vb / total;
  }
  const int root = tree.root();
  contrast = mean.col(root) - root_prior.mean;
  delta.noalias() += (contrast * contrast.transpose()) / (var[static_cast<std::size_t>(root)] + 1.0 / root_prior.sample_size);
  return 0.5 * (delta + delta.transpose());
}

inline Matrix compute_delta_pruning(const PhyloTree& tree, const TraitMatrix& traits, const RootPrior& root_prior) {
  return compute_delta_pruning(tree, traits.values, root_prior);
}

/// Forward simulation root to tips: root ~ N(mu0, K^{-1}/tau0), each node
/// ~ N(parent, t K^{-1}). Returns the tip values in tip order.
inline TraitMatrix simulate_traits(const PhyloTree& tree, const Matrix& precision, const RootPrior& root_prior,
                                   std::uint64_t seed) {
  const Eigen::Index p = precision.rows();
  if (precision.cols() != p || !is_positive_definite(precision)) {
    throw InputError("simulate_traits: precision matrix is not positive definite");
  }
  root_prior.validate(static_cast<int>(p));
  const Matrix chol = Eigen::LLT<Matrix>(inverse_spd(precision)).matrixL();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  auto draw = [&]() {
    Vector z(p);
    for (Eigen::Index k = 0; k < p; ++k) z(k) = normal(rng);
    return Vector(chol * z);
  };
  Matrix node_values(p, tree.n_nodes());
  const int root = tree.root();
  node_values.col(root) = root_prior.mean + draw() / std::sqrt(root_prior.sample_size);
  for (int v = root - 1; v >= 0; --v) {
    node_values.col(v) = node_values.col(tree.parent(v)) + std::sqrt(tree.branch_length(v)) * draw();
  }
  TraitMatrix out;
  out.values = node_values.leftCols(tree.n_tips()).transpose();
  out.taxon_labels = tree.tip_labels();
  for (Eigen::Index j = 0; j < p; ++j) out.trait_labels.push_back("trait" + std::to_string(j + 1));
  return out;
}

}  // namespace gptem::phylo

// Model specification, chain configuration, chain state and stored traces.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/distribution.hpp"
#include "gptem/gwishart/graph.hpp"
#include "gptem/gwishart/sampler.hpp"
#include "gptem/phylo/traits.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gptem::mcmc {

using gwishart::GWishartParams;
using gwishart::TraitGraph;

enum class ModelVariant { graphical, full };

inline std::string to_string(ModelVariant v) { return v == ModelVariant::graphical ? "graphical" : "full"; }

inline ModelVariant parse_variant(const std::string& s) {
  if (s == "graphical" || s == "ggm") return ModelVariant::graphical;
  if (s == "full") return ModelVariant::full;
  throw InputError("unknown model variant '" + s + "' (expected graphical or full)");
}

/// Wishart prior on K for the full model in rate parametrization:
/// density proportional to |K|^{(df-p-1)/2} exp(-tr(rate K)/2).
struct WishartPrior {
  double df = 0.0;
  Matrix rate;
};

struct ModelSpec {
  ModelVariant variant = ModelVariant::graphical;
  GWishartParams gwishart_prior;
  WishartPrior wishart_prior;
  phylo::RootPrior root_prior;

  /// Priors used in the simulation study: W_G(3, I) for the graphical model,
  /// Wishart(2 + p, I) for the full model, mu0 = 0 and tau0 = 1.
  static ModelSpec defaults(ModelVariant variant, int p) {
    ModelSpec spec;
    spec.variant = variant;
    spec.gwishart_prior = GWishartParams::standard(p, 3.0);
    spec.wishart_prior = {2.0 + p, Matrix::Identity(p, p)};
    spec.root_prior = phylo::RootPrior::standard(p);
    return spec;
  }

  int dim() const { return static_cast<int>(root_prior.mean.size()); }

  void validate(int p) const {
    root_prior.validate(p);
    if (variant == ModelVariant::graphical) {
      gwishart_prior.validate();
      if (gwishart_prior.dim() != p) throw InputError("G-Wishart rate matrix must be p x p");
    } else {
      if (!(wishart_prior.df > p - 1)) throw InputError("full-model Wishart degrees of freedom must exceed p - 1");
      if (wishart_prior.rate.rows() != p || !is_positive_definite(wishart_prior.rate)) {
        throw InputError("full-model Wishart rate must be p x p positive definite");
      }
    }
  }

  nlohmann::json to_json() const {
    auto matrix_json = [](const Matrix& m) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
      }
      return rows;
    };
    nlohmann::json j;
    j["variant"] = to_string(variant);
    if (variant == ModelVariant::graphical) {
      j["gwishart_df"] = gwishart_prior.df;
      j["gwishart_rate"] = matrix_json(gwishart_prior.rate);
      j["graph_prior"] = "uniform";
    } else {
      j["wishart_df"] = wishart_prior.df;
      j["wishart_rate"] = matrix_json(wishart_prior.rate);
    }
    j["root_mean"] = std::vector<double>(root_prior.mean.data(), root_prior.mean.data() + root_prior.mean.size());
    j["root_sample_size"] = root_prior.sample_size;
    return j;
  }

  std::uint64_t hash() const {
    const std::string s = to_json().dump();
    return fnv1a(s.data(), s.size());
  }
};

struct ChainConfig {
  int n_iterations = 20000;
  int warmup = 4000;
  int thin = 10;
  std::uint64_t seed = 1;
  /// Monte Carlo samples per normalizing-constant estimate inside the chain.
  int mc_samples = 1000;
  /// Random-scan weight of the joint (graph, precision) block.
  double joint_update_probability = 0.5;
  gwishart::SamplerOptions sampler;

  void validate() const {
    if (n_iterations < 1) throw InputError("n_iterations must be positive");
    if (warmup < 0 || warmup >= n_iterations) throw InputError("warmup must be in [0, n_iterations)");
    if (thin < 1) throw InputError("thin must be positive");
    if (mc_samples < 1) throw InputError("mc_samples must be positive");
    if (!(joint_update_probability > 0.0 && joint_update_probability <= 1.0)) {
      throw InputError("joint_update_probability must be in (0, 1]");
    }
  }

  int stored_samples() const { return (n_iterations - warmup) / thin; }
};

struct ChainState {
  TraitGraph graph;
  Matrix precision;
  long iteration = 0;
  Rng rng;

  /// Symmetric positive definite with exact zeros off the graph.
  bool valid() const {
    return graph.n_vertices() == precision.rows() && is_symmetric(precision, 0.0) && graph.respects(precision) &&
           is_positive_definite(precision);
  }
};

/// One stored sample: edge indicators in slot order and the upper triangle
/// (including the diagonal, row-major) of the precision matrix.
struct TraceSample {
  long iteration = 0;
  std::vector<std::uint8_t> graph;
  Vector precision_upper;
};

struct ChainTrace {
  int p = 0;
  ModelVariant variant = ModelVariant::graphical;
  int n_iterations = 0;
  int warmup = 0;
  int thin = 1;
  int n_taxa = 0;
  int mc_samples = 0;
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::string delta_hash;
  long proposed_graph_moves = 0;
  long accepted_graph_moves = 0;
  std::vector<std::string> trait_labels;
  std::vector<TraceSample> samples;

  std::size_t size() const { return samples.size(); }

  static Vector pack_upper(const Matrix& k) {
    const auto p = k.rows();
    Vector out(p * (p + 1) / 2);
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = i; j < p; ++j) out(n++) = k(i, j);
    return out;
  }

  Matrix precision(std::size_t s) const {
    Matrix k(p, p);
    Eigen::Index n = 0;
    const auto& v = samples[s].precision_upper;
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j) k(i, j) = k(j, i) = v(n++);
    return k;
  }

  TraitGraph graph(std::size_t s) const { return TraitGraph::from_indicators(p, samples[s].graph); }

  /// Series of precision entry (i,j) across stored samples.
  std::vector<double> precision_series(int i, int j) const {
    if (i > j) std::swap(i, j);
    const auto n = static_cast<Eigen::Index>(i * p - i * (i - 1) / 2 + (j - i));
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.precision_upper(n));
    return out;
  }
};

}  // namespace gptem::mcmc

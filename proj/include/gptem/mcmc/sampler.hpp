// Random-scan Metropolis-within-Gibbs updates and the chain driver.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/distribution.hpp"
#include "gptem/gwishart/sampler.hpp"
#include "gptem/mcmc/model.hpp"
#include "gptem/phylo/brownian.hpp"

#include <cassert>
#include <unordered_map>

namespace gptem::mcmc {

/// Memoized prior normalizing constants log I_G(df, rate), keyed by graph.
/// Each entry is estimated from its own seed derived from the graph, so a
/// cached value depends only on (graph, params, samples, seed).
class PriorConstantCache {
 public:
  PriorConstantCache(GWishartParams params, int mc_samples, std::uint64_t seed)
      : params_(std::move(params)), mc_samples_(mc_samples), seed_(seed) {}

  const GWishartParams& params() const { return params_; }

  double log_const(const TraitGraph& graph) {
    const std::string key = graph.key();
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    Rng rng(derive_seed(seed_, fnv1a(key.data(), key.size())));
    const double v = gwishart::log_norm_const_mc(graph, params_, mc_samples_, rng).value;
    values_.emplace(key, v);
    return v;
  }

  std::size_t size() const { return values_.size(); }

 private:
  GWishartParams params_;
  int mc_samples_;
  std::uint64_t seed_;
  std::unordered_map<std::string, double> values_;
};

/// Everything the update blocks need that stays fixed along a chain.
struct PosteriorContext {
  const ModelSpec& spec;
  Matrix delta;
  int n_taxa = 0;
  int mc_samples = 1000;
  gwishart::SamplerOptions sampler;

  GWishartParams graphical_posterior() const {
    return {spec.gwishart_prior.df + n_taxa, spec.gwishart_prior.rate + delta};
  }

  /// True when the data carry no information, so posterior constants equal
  /// prior constants.
  bool uninformative() const { return n_taxa == 0 && delta.isZero(0.0); }
};

/// K | G ~ W_G(df + N, rate + Delta).
inline void precision_gibbs_step(ChainState& state, const PosteriorContext& ctx) {
  state.precision = gwishart::sample_gwishart(state.graph, ctx.graphical_posterior(), state.rng, ctx.sampler);
}

/// Full model: K ~ Wishart(df + N, scale (rate + Delta)^{-1}); graph complete.
inline void full_model_gibbs_step(ChainState& state, const PosteriorContext& ctx) {
  const auto& prior = ctx.spec.wishart_prior;
  const Matrix scale = inverse_spd(prior.rate + ctx.delta);
  state.precision = gwishart::sample_wishart(prior.df + ctx.n_taxa, scale, state.rng);
  if (state.graph.edge_count() != TraitGraph::n_slots(state.graph.n_vertices())) {
    state.graph = TraitGraph::complete(state.graph.n_vertices());
  }
}

/// Metropolis-Hastings move on the graph: flip a uniformly chosen edge slot
/// and accept with probability
///   min{1, [I_Gp(df+N, D+Delta) / I_G(df+N, D+Delta)] [I_G(df, D) / I_Gp(df, D)]}.
/// Prior constants come from `cache`; posterior constants are fresh Monte
/// Carlo estimates. On acceptance K is redrawn under the new graph.
/// Returns whether the proposal was accepted.
inline bool graph_mh_step(ChainState& state, const PosteriorContext& ctx, PriorConstantCache& cache) {
  const int p = state.graph.n_vertices();
  const int slots = TraitGraph::n_slots(p);
  if (slots == 0) return false;
  std::uniform_int_distribution<int> pick(0, slots - 1);
  const auto [i, j] = TraitGraph::slot_pair(p, pick(state.rng));
  TraitGraph proposal = gwishart::flip_edge(state.graph, i, j);

  const double prior_current = cache.log_const(state.graph);
  const double prior_proposal = cache.log_const(proposal);
  double post_current = prior_current, post_proposal = prior_proposal;
  if (!ctx.uninformative()) {
    const GWishartParams post = ctx.graphical_posterior();
    post_current = gwishart::log_norm_const_mc(state.graph, post, ctx.mc_samples, state.rng).value;
    post_proposal = gwishart::log_norm_const_mc(proposal, post, ctx.mc_samples, state.rng).value;
  }
  const double log_alpha = (post_proposal - post_current) - (prior_proposal - prior_current);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (log_alpha >= 0.0 || std::log(unif(state.rng)) < log_alpha) {
    state.graph = std::move(proposal);
    precision_gibbs_step(state, ctx);
    return true;
  }
  return false;
}

/// One iteration of the random scan. Graphical: the joint (graph, K) block
/// with probability `joint_probability`, otherwise a K-only refresh. Full:
/// a Wishart draw. Graph-move counters in `trace` are updated.
inline void random_scan_step(ChainState& state, const PosteriorContext& ctx, PriorConstantCache& cache,
                             double joint_probability, ChainTrace& trace) {
  if (ctx.spec.variant == ModelVariant::full) {
    full_model_gibbs_step(state, ctx);
    return;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(state.rng) < joint_probability) {
    ++trace.proposed_graph_moves;
    if (graph_mh_step(state, ctx, cache)) ++trace.accepted_graph_moves;
  } else {
    precision_gibbs_step(state, ctx);
  }
}

/// Runs the chain on a precomputed sufficient statistic. `delta` is the
/// p x p whitened cross-product and `n_taxa` the number of tips (both may be
/// zero to sample the prior).
inline ChainTrace run_chain_on_statistic(const Matrix& delta, int n_taxa, const ModelSpec& spec,
                                         const ChainConfig& config) {
  config.validate();
  const int p = static_cast<int>(delta.rows());
  if (delta.cols() != p || p < 1) throw InputError("sufficient statistic must be square");
  if (n_taxa < 0) throw InputError("n_taxa must be non-negative");
  spec.validate(p);

  ChainTrace trace;
  trace.p = p;
  trace.variant = spec.variant;
  trace.n_iterations = config.n_iterations;
  trace.warmup = config.warmup;
  trace.thin = config.thin;
  trace.n_taxa = n_taxa;
  trace.mc_samples = config.mc_samples;
  trace.seed = config.seed;
  trace.spec_hash = hex64(spec.hash());
  trace.delta_hash = hex64(hash_matrix(delta));
  trace.samples.reserve(static_cast<std::size_t>(config.stored_samples()));

  PosteriorContext ctx{spec, delta, n_taxa, config.mc_samples, config.sampler};
  PriorConstantCache cache(spec.gwishart_prior, config.mc_samples, derive_seed(config.seed, 1));

  ChainState state;
  state.rng.seed(derive_seed(config.seed, 2));
  if (spec.variant == ModelVariant::graphical) {
    state.graph = TraitGraph::empty(p);
    precision_gibbs_step(state, ctx);
  } else {
    state.graph = TraitGraph::complete(p);
    full_model_gibbs_step(state, ctx);
  }

  for (int it = 1; it <= config.n_iterations; ++it) {
    random_scan_step(state, ctx, cache, config.joint_update_probability, trace);
    state.iteration = it;
    assert(state.valid());
    if (it > config.warmup && (it - config.warmup) % config.thin == 0) {
      trace.samples.push_back({it, state.graph.indicators(), ChainTrace::pack_upper(state.precision)});
    }
  }
  return trace;
}

/// Computes Delta once from the tree and traits, then runs the chain.
inline ChainTrace run_chain(const phylo::PhyloTree& tree, const phylo::TraitMatrix& traits, const ModelSpec& spec,
                            const ChainConfig& config) {
  spec.validate(traits.n_traits());
  const Matrix delta = phylo::compute_delta_pruning(tree, traits, spec.root_prior);
  ChainTrace trace = run_chain_on_statistic(delta, tree.n_tips(), spec, config);
  trace.trait_labels = traits.trait_labels;
  return trace;
}

}  // namespace gptem::mcmc

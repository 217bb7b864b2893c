// Replicate runner, worker pool and aggregation for simulation benchmarks.
#pragma once

#include "gptem/core.hpp"
#include "gptem/mcmc/sampler.hpp"
#include "gptem/phylo/brownian.hpp"
#include "gptem/phylo/tree.hpp"
#include "gptem/simstudy/scenario.hpp"
#include "gptem/summary/metrics.hpp"
#include "gptem/summary/posterior.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

namespace gptem::simstudy {

using summary::BenchmarkMetrics;
using summary::LogMse;
using summary::PairCategory;

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> v{"sensitivity", "specificity", "precision", "f1", "accuracy"};
  return v;
}

inline std::optional<double> metric_value(const BenchmarkMetrics& m, const std::string& name) {
  if (name == "sensitivity") return m.sensitivity;
  if (name == "specificity") return m.specificity;
  if (name == "precision") return m.precision;
  if (name == "f1") return m.f1;
  if (name == "accuracy") return m.accuracy;
  throw InputError("unknown metric '" + name + "'");
}

/// One decision rule scored in a replicate: "GGM" for the graph estimate of
/// the graphical model, "HPD_90" etc. for the full model.
struct CriterionResult {
  std::string criterion;
  std::string model;
  TraitGraph selected;
  /// Scored against G0.
  BenchmarkMetrics metrics;
  /// Per-category fraction of pairs classified correctly against the rule's
  /// own target: G0 for the graph estimate, the nonzero pattern of R0 for
  /// HPD selection.
  std::map<PairCategory, double> category_accuracy;
  double overall_accuracy = 0.0;
};

struct ReplicateResult {
  int index = 0;
  bool ok = false;
  std::string error;
  Matrix edge_inclusion;
  std::vector<CriterionResult> criteria;
  /// Keyed by model ("graphical", "full"), then by category.
  std::map<std::string, std::map<PairCategory, LogMse>> logmse_precision;
  std::map<std::string, std::map<PairCategory, LogMse>> logmse_correlation;
  double min_ess = 0.0;
  long accepted_moves = 0;
  long proposed_moves = 0;
};

/// Seeds of a replicate's independent streams.
struct ReplicateSeeds {
  std::uint64_t tree, traits, graphical, full;
  static ReplicateSeeds derive(std::uint64_t base, int index) {
    const std::uint64_t r = derive_seed(base, static_cast<std::uint64_t>(index));
    return {derive_seed(r, 1), derive_seed(r, 2), derive_seed(r, 3), derive_seed(r, 4)};
  }
};

struct ReplicateData {
  phylo::PhyloTree tree;
  phylo::TraitMatrix traits;
};

inline ReplicateData simulate_replicate_data(const ScenarioSpec& spec, int index) {
  const auto seeds = ReplicateSeeds::derive(spec.seed, index);
  ReplicateData d{phylo::simulate_tree(spec.n_taxa, seeds.tree), {}};
  d.traits = phylo::simulate_traits(d.tree, spec.true_precision, phylo::RootPrior::standard(spec.n_traits()), seeds.traits);
  return d;
}

/// Smallest effective sample size over the off-diagonal precision entries
/// of the edges in the graph estimate (the diagonal when it has no edges).
inline double min_precision_ess(const mcmc::ChainTrace& trace, const TraitGraph& graph) {
  double out = std::numeric_limits<double>::infinity();
  for (auto [i, j] : graph.edges()) out = std::min(out, summary::effective_sample_size(trace.precision_series(i, j)));
  if (graph.edge_count() == 0)
    for (int i = 0; i < trace.p; ++i) out = std::min(out, summary::effective_sample_size(trace.precision_series(i, i)));
  return out;
}

inline double category_accuracy(const TraitGraph& selected, const TraitGraph& target,
                                const std::vector<PairCategory>& categories, std::optional<PairCategory> only) {
  const int p = target.n_vertices();
  int hit = 0, n = 0;
  for (int k = 0; k < TraitGraph::n_slots(p); ++k) {
    if (only && categories[static_cast<std::size_t>(k)] != *only) continue;
    const auto [i, j] = TraitGraph::slot_pair(p, k);
    ++n;
    hit += selected.has_edge(i, j) == target.has_edge(i, j);
  }
  return n == 0 ? 0.0 : static_cast<double>(hit) / n;
}

inline CriterionResult score_criterion(std::string criterion, std::string model, TraitGraph selected,
                                       const TraitGraph& g0, const TraitGraph& target,
                                       const std::vector<PairCategory>& categories) {
  CriterionResult r{std::move(criterion), std::move(model), std::move(selected), {}, {}, 0.0};
  r.metrics = summary::confusion_metrics(r.selected, g0);
  for (PairCategory c : summary::all_categories())
    if (std::find(categories.begin(), categories.end(), c) != categories.end()) {
      r.category_accuracy[c] = category_accuracy(r.selected, target, categories, c);
    }
  r.overall_accuracy = category_accuracy(r.selected, target, categories, std::nullopt);
  return r;
}

/// Simulates one data set and fits both models to it. Errors are captured
/// in the result rather than thrown.
inline ReplicateResult run_replicate(const ScenarioSpec& spec, int index) {
  ReplicateResult res;
  res.index = index;
  try {
    const int p = spec.n_traits();
    const auto seeds = ReplicateSeeds::derive(spec.seed, index);
    const ReplicateData data = simulate_replicate_data(spec, index);
    const TraitGraph g0 = spec.true_graph();
    const Matrix r0 = spec.true_correlation();
    const auto categories = summary::categorize_pairs(g0, r0);
    const TraitGraph r0_pattern = TraitGraph::from_pattern(r0, 1e-12);

    const auto graphical_spec = mcmc::ModelSpec::defaults(mcmc::ModelVariant::graphical, p);
    const auto full_spec = mcmc::ModelSpec::defaults(mcmc::ModelVariant::full, p);
    // Both fits see the same tree and traits; Delta depends only on them.
    const Matrix delta = phylo::compute_delta_pruning(data.tree, data.traits, graphical_spec.root_prior);

    mcmc::ChainConfig gcfg = spec.chain;
    gcfg.seed = seeds.graphical;
    const auto gtrace = mcmc::run_chain_on_statistic(delta, spec.n_taxa, graphical_spec, gcfg);
    mcmc::ChainConfig fcfg = spec.chain;
    fcfg.seed = seeds.full;
    const auto ftrace = mcmc::run_chain_on_statistic(delta, spec.n_taxa, full_spec, fcfg);

    res.edge_inclusion = summary::edge_inclusion_probabilities(gtrace);
    const auto gest = summary::estimate_graph(res.edge_inclusion, spec.bf_threshold);
    const Matrix k_graphical = summary::estimate_precision(gtrace, gest.graph);
    const Matrix r_graphical = summary::estimate_correlation(gtrace);
    const Matrix k_full = summary::estimate_precision(ftrace, TraitGraph::complete(p));
    const auto full_r_samples = summary::correlation_samples(ftrace);
    const Matrix r_full = summary::estimate_correlation(full_r_samples);

    res.criteria.push_back(score_criterion("GGM", "graphical", gest.graph, g0, g0, categories));
    for (double gamma : spec.hpd_levels) {
      auto sel = summary::classify_hpd(full_r_samples, gamma).selected;
      res.criteria.push_back(score_criterion(hpd_label(gamma), "full", std::move(sel), g0, r0_pattern, categories));
    }
    for (PairCategory c : summary::all_categories()) {
      if (std::find(categories.begin(), categories.end(), c) == categories.end()) continue;
      res.logmse_precision["graphical"][c] = summary::logmse_category(k_graphical, spec.true_precision, categories, c);
      res.logmse_precision["full"][c] = summary::logmse_category(k_full, spec.true_precision, categories, c);
      res.logmse_correlation["graphical"][c] = summary::logmse_category(r_graphical, r0, categories, c);
      res.logmse_correlation["full"][c] = summary::logmse_category(r_full, r0, categories, c);
    }
    res.min_ess = min_precision_ess(gtrace, gest.graph);
    res.accepted_moves = gtrace.accepted_graph_moves;
    res.proposed_moves = gtrace.proposed_graph_moves;
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

/// Pilot run on replicate 0 of a separate seed stream. If the smallest
/// precision ESS falls short of the target, the chain is lengthened in
/// proportion (rounded up to a multiple of 1000, capped at max_iterations).
/// Warm-up keeps its share of the chain.
struct TuningResult {
  int pilot_iterations = 0;
  double pilot_ess = 0.0;
  int tuned_iterations = 0;
};

inline TuningResult tune_chain_length(ScenarioSpec& spec) {
  TuningResult t;
  t.pilot_iterations = spec.chain.n_iterations;
  const int p = spec.n_traits();
  const auto data = simulate_replicate_data(spec, -1);
  const auto gspec = mcmc::ModelSpec::defaults(mcmc::ModelVariant::graphical, p);
  mcmc::ChainConfig cfg = spec.chain;
  cfg.seed = derive_seed(spec.seed, 0x70696c6f74ULL);
  const auto trace = mcmc::run_chain(data.tree, data.traits, gspec, cfg);
  const auto est = summary::estimate_graph(summary::edge_inclusion_probabilities(trace), spec.bf_threshold);
  t.pilot_ess = min_precision_ess(trace, est.graph);
  t.tuned_iterations = spec.chain.n_iterations;
  if (t.pilot_ess < spec.target_ess) {
    const double scale = 1.1 * spec.target_ess / std::max(t.pilot_ess, 1.0);
    long n = static_cast<long>(std::ceil(spec.chain.n_iterations * scale / 1000.0)) * 1000;
    n = std::min<long>(n, spec.max_iterations);
    const double warm_share = static_cast<double>(spec.chain.warmup) / spec.chain.n_iterations;
    spec.chain.n_iterations = static_cast<int>(n);
    spec.chain.warmup = static_cast<int>(std::lround(warm_share * static_cast<double>(n)));
    t.tuned_iterations = spec.chain.n_iterations;
  }
  return t;
}

/// Runs every replicate on a pool of `workers` threads. Results come back
/// sorted by replicate index whatever the completion order.
inline std::vector<ReplicateResult> run_replicates(const ScenarioSpec& spec, int workers,
                                                   const std::function<void(const ReplicateResult&)>& on_done = {}) {
  if (workers < 1) throw InputError("workers must be positive");
  std::vector<ReplicateResult> results(static_cast<std::size_t>(spec.n_replicates));
  std::atomic<int> next{0};
  std::mutex report_mutex;
  auto work = [&] {
    for (int i = next++; i < spec.n_replicates; i = next++) {
      results[static_cast<std::size_t>(i)] = run_replicate(spec, i);
      if (on_done) {
        std::lock_guard lock(report_mutex);
        on_done(results[static_cast<std::size_t>(i)]);
      }
    }
  };
  const int n_threads = std::min(workers, spec.n_replicates);
  std::vector<std::thread> pool;
  for (int w = 1; w < n_threads; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return results;
}

struct MeanSd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
};

/// Mean and sample SD of the finite values; n counts them.
inline MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd out;
  double s = 0.0;
  for (double x : xs)
    if (std::isfinite(x)) {
      s += x;
      ++out.n;
    }
  if (out.n == 0) return out;
  out.mean = s / out.n;
  double ss = 0.0;
  for (double x : xs)
    if (std::isfinite(x)) ss += (x - out.mean) * (x - out.mean);
  out.sd = out.n > 1 ? std::sqrt(ss / (out.n - 1)) : 0.0;
  return out;
}

struct LogMseSummary {
  /// Mean including exact (-inf) replicates, so -inf if any was exact.
  double mean = 0.0;
  /// Mean and SD over replicates with a finite value.
  MeanSd finite;
  int exact_count = 0;
};

struct BenchmarkReport {
  std::string scenario;
  int n_replicates = 0;
  int n_succeeded = 0;
  std::vector<std::pair<int, std::string>> failures;
  Matrix graph_frequency;  // mean edge indicator of the graph estimate
  Matrix mean_inclusion;
  std::vector<std::string> criteria;
  std::map<std::string, std::string> criterion_model;
  /// criterion -> metric -> summary over replicates (undefined rates skipped).
  std::map<std::string, std::map<std::string, MeanSd>> metrics;
  /// criterion -> category -> accuracy; category "Overall" for all pairs.
  std::map<std::string, std::map<std::string, MeanSd>> category_accuracy;
  std::map<std::string, int> category_sizes;
  /// quantity ("precision" or "correlation") -> model -> category -> summary.
  std::map<std::string, std::map<std::string, std::map<std::string, LogMseSummary>>> logmse;
  /// Fraction of replicates where the graphical CI-I precision logMSE is
  /// strictly below the full model's.
  double ci_i_precision_win_rate = std::numeric_limits<double>::quiet_NaN();
  MeanSd min_ess;
};

/// Allowed share of failed replicates before the benchmark is aborted.
inline constexpr double kMaxFailureShare = 0.02;

inline BenchmarkReport aggregate(const ScenarioSpec& spec, const std::vector<ReplicateResult>& results) {
  BenchmarkReport rep;
  rep.scenario = spec.name;
  rep.n_replicates = static_cast<int>(results.size());
  std::vector<const ReplicateResult*> ok;
  for (const auto& r : results) {
    if (r.ok) ok.push_back(&r);
    else rep.failures.emplace_back(r.index, r.error);
  }
  rep.n_succeeded = static_cast<int>(ok.size());
  if (ok.empty()) throw NumericError("all " + std::to_string(results.size()) + " replicates failed");
  if (static_cast<double>(rep.failures.size()) > kMaxFailureShare * static_cast<double>(results.size())) {
    throw NumericError(std::to_string(rep.failures.size()) + " of " + std::to_string(results.size()) +
                       " replicates failed (first: " + rep.failures.front().second + ")");
  }

  const int p = spec.n_traits();
  const auto categories = summary::categorize_pairs(spec.true_graph(), spec.true_correlation());
  for (PairCategory c : categories) ++rep.category_sizes[summary::to_string(c)];
  rep.category_sizes["Overall"] = static_cast<int>(categories.size());

  rep.graph_frequency = Matrix::Zero(p, p);
  rep.mean_inclusion = Matrix::Zero(p, p);
  for (const auto* r : ok) {
    rep.mean_inclusion += r->edge_inclusion;
    const auto& g = r->criteria.front().selected;
    for (auto [i, j] : g.edges()) rep.graph_frequency(i, j) = rep.graph_frequency(j, i) += 1.0;
  }
  rep.mean_inclusion /= static_cast<double>(ok.size());
  rep.graph_frequency /= static_cast<double>(ok.size());
  rep.graph_frequency.diagonal().setOnes();

  for (std::size_t c = 0; c < ok.front()->criteria.size(); ++c) {
    const auto& name = ok.front()->criteria[c].criterion;
    rep.criteria.push_back(name);
    rep.criterion_model[name] = ok.front()->criteria[c].model;
    for (const auto& metric : metric_names()) {
      std::vector<double> xs;
      for (const auto* r : ok)
        if (auto v = metric_value(r->criteria[c].metrics, metric)) xs.push_back(*v);
      rep.metrics[name][metric] = mean_sd(xs);
    }
    for (const auto& [cat, size] : rep.category_sizes) {
      std::vector<double> xs;
      for (const auto* r : ok) {
        const auto& cr = r->criteria[c];
        if (cat == "Overall") xs.push_back(cr.overall_accuracy);
        else
          for (const auto& [pc, acc] : cr.category_accuracy)
            if (summary::to_string(pc) == cat) xs.push_back(acc);
      }
      rep.category_accuracy[name][cat] = mean_sd(xs);
    }
  }

  auto summarize_logmse = [&](const char* quantity, auto member) {
    for (const char* model : {"graphical", "full"})
      for (PairCategory c : summary::all_categories()) {
        std::vector<double> xs;
        for (const auto* r : ok) {
          const auto& by_model = r->*member;
          auto m = by_model.find(model);
          if (m == by_model.end()) continue;
          if (auto it = m->second.find(c); it != m->second.end()) xs.push_back(it->second.value);
        }
        if (xs.empty()) continue;
        LogMseSummary s;
        s.finite = mean_sd(xs);
        s.exact_count = static_cast<int>(std::count_if(xs.begin(), xs.end(), [](double v) { return std::isinf(v); }));
        s.mean = s.exact_count > 0 ? -std::numeric_limits<double>::infinity() : s.finite.mean;
        rep.logmse[quantity][model][summary::to_string(c)] = s;
      }
  };
  summarize_logmse("precision", &ReplicateResult::logmse_precision);
  summarize_logmse("correlation", &ReplicateResult::logmse_correlation);

  int wins = 0, compared = 0;
  for (const auto* r : ok) {
    const auto& g = r->logmse_precision.at("graphical");
    const auto& f = r->logmse_precision.at("full");
    auto gi = g.find(PairCategory::ci_i), fi = f.find(PairCategory::ci_i);
    if (gi == g.end() || fi == f.end()) continue;
    ++compared;
    wins += gi->second.value < fi->second.value;
  }
  if (compared > 0) rep.ci_i_precision_win_rate = static_cast<double>(wins) / compared;

  std::vector<double> ess;
  for (const auto* r : ok) ess.push_back(r->min_ess);
  rep.min_ess = mean_sd(ess);
  return rep;
}

/// Directional checks: graphical specificity at least that of every HPD
/// rule, and graphical CI-I precision logMSE below the full model's.
struct DirectionalCheck {
  std::string name;
  bool passed = false;
};

inline std::vector<DirectionalCheck> directional_checks(const BenchmarkReport& rep) {
  std::vector<DirectionalCheck> out;
  const double g_spec = rep.metrics.at("GGM").at("specificity").mean;
  for (const auto& c : rep.criteria) {
    if (c == "GGM") continue;
    const double f_spec = rep.metrics.at(c).at("specificity").mean;
    out.push_back({"GGM specificity >= " + c + " specificity", g_spec >= f_spec});
  }
  const auto& pr = rep.logmse.at("precision");
  auto g = pr.at("graphical").find("CI-I");
  auto f = pr.at("full").find("CI-I");
  if (g != pr.at("graphical").end() && f != pr.at("full").end()) {
    out.push_back({"graphical CI-I precision logMSE < full", g->second.mean < f->second.mean});
  }
  return out;
}

}  // namespace gptem::simstudy

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// if every selected criterion passes. Pass "--only 1,5,9" to run a subset.

#include "gptem/gwishart/sampler.hpp"
#include "gptem/mcmc/sampler.hpp"
#include "gptem/phylo/brownian.hpp"
#include "gptem/phylo/tree.hpp"
#include "gptem/simstudy/report.hpp"
#include "gptem/summary/posterior.hpp"
#include "random_fixtures.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace gptem;
using gwishart::GWishartParams;
using gwishart::TraitGraph;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const std::string kData = GPTEM_DATA_DIR;

// ---------------------------------------------------------------------------
// 1. Pruning and dense Delta agree.

Outcome pruning_oracle() {
  Rng rng(101);
  std::uniform_int_distribution<int> taxa(2, 20), traits(1, 5);
  std::uniform_real_distribution<double> tau(0.25, 4.0);
  std::normal_distribution<double> z;
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const int n = taxa(rng), p = traits(rng);
    const auto tree = phylo::simulate_tree(n, derive_seed(101, inst));
    phylo::RootPrior root{Vector::Zero(p), tau(rng)};
    for (int k = 0; k < p; ++k) root.mean(k) = z(rng);
    Matrix x(n, p);
    for (int i = 0; i < n * p; ++i) x.data()[i] = 3.0 * z(rng);
    const Matrix dense = phylo::compute_delta_dense(tree, x, root);
    const Matrix pruned = phylo::compute_delta_pruning(tree, x, root);
    worst = std::max(worst, (pruned - dense).cwiseAbs().maxCoeff() / dense.cwiseAbs().maxCoeff());
  }
  return {worst < 1e-8, "200 instances, max |pruning - dense| / max |dense| = " + fmt("%.2e", worst)};
}

// 2. Monte Carlo normalizing constants against closed forms.

Outcome norm_const_oracle() {
  Rng rng(202);
  std::uniform_int_distribution<int> dim(3, 6), small_dim(2, 6);
  std::uniform_real_distribution<double> df(3.0, 6.0);
  int within = 0, total = 0, decomposable = 0;
  std::ostringstream worst;
  double worst_z = 0.0;
  auto check = [&](const TraitGraph& g, const GWishartParams& params, double closed) {
    const auto est = gwishart::log_norm_const_mc(g, params, 100000, rng);
    const double diff = std::abs(est.value - closed);
    // With no free off-graph entries the estimator is exact (SE 0), so the
    // comparison allows for rounding only.
    const bool ok = est.std_error > 0.0 ? diff < 3.0 * est.std_error : diff < 1e-9 * std::max(1.0, std::abs(closed));
    within += ok;
    ++total;
    if (est.std_error > 0.0) worst_z = std::max(worst_z, diff / est.std_error);
  };
  while (decomposable < 20) {
    const int p = dim(rng);
    const auto g = testing_support::random_decomposable(p, rng);
    if (g.edge_count() == TraitGraph::n_slots(p)) continue;
    const GWishartParams params{df(rng), testing_support::random_spd(p, rng)};
    check(g, params, gwishart::decomposable_log_norm_const(g, params));
    ++decomposable;
  }
  for (int k = 0; k < 5; ++k) {
    const int p = small_dim(rng);
    const GWishartParams params{df(rng), testing_support::random_spd(p, rng)};
    check(TraitGraph::complete(p), params, gwishart::wishart_log_norm_const_closed(params));
  }
  const double share = static_cast<double>(within) / total;
  return {share >= 0.9, std::to_string(within) + "/" + std::to_string(total) +
                            " within 3 SE at 100000 samples (largest |z| " + fmt("%.2f", worst_z) + ")"};
}

// 3. Sampler moments and support.

Outcome sampler_moments() {
  Rng rng(303);
  const int p = 5, draws = 10000;
  const double delta = 3.0;
  const Matrix rate = testing_support::random_spd(p, rng);
  const GWishartParams params{delta, rate};
  Matrix sum = Matrix::Zero(p, p);
  int bad = 0;
  for (int d = 0; d < draws; ++d) {
    const Matrix k = gwishart::sample_gwishart(TraitGraph::complete(p), params, rng);
    bad += !is_positive_definite(k);
    sum += k;
  }
  const Matrix expected = (delta + p - 1) * inverse_spd(rate);
  const double rel = (sum / draws - expected).norm() / expected.norm();
  // Support check on a non-decomposable graph (5-cycle plus chord-free tail).
  const auto cycle = TraitGraph::from_edges(p, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}});
  int support_bad = 0;
  for (int d = 0; d < draws; ++d) {
    const Matrix k = gwishart::sample_gwishart(cycle, params, rng);
    support_bad += !is_positive_definite(k) || !cycle.respects(k);
  }
  return {rel < 0.05 && bad == 0 && support_bad == 0,
          "complete-graph mean relative Frobenius error " + fmt("%.4f", rel) + "; non-PD draws " +
              std::to_string(bad) + "; 5-cycle draws violating PD or zeros " + std::to_string(support_bad)};
}

// 4. Prior recovery without data.

Outcome prior_recovery() {
  std::ostringstream detail;
  bool ok = true;
  for (int p : {3, 5}) {
    const auto spec = mcmc::ModelSpec::defaults(mcmc::ModelVariant::graphical, p);
    mcmc::ChainConfig cfg;
    cfg.thin = 10;
    cfg.warmup = 2000;
    cfg.n_iterations = cfg.warmup + 10000 * cfg.thin;  // 10 000 stored draws
    cfg.mc_samples = 1000;
    cfg.seed = 404 + p;
    const auto trace = mcmc::run_chain_on_statistic(Matrix::Zero(p, p), 0, spec, cfg);
    const Matrix pe = summary::edge_inclusion_probabilities(trace);
    double worst = 0.0, worst_se = 0.0;
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j) {
        worst = std::max(worst, std::abs(pe(i, j) - 0.5));
        std::vector<double> ind;
        for (std::size_t s = 0; s < trace.size(); ++s) ind.push_back(trace.graph(s).has_edge(i, j) ? 1.0 : 0.0);
        const double var = pe(i, j) * (1.0 - pe(i, j));
        worst_se = std::max(worst_se, std::sqrt(var / summary::effective_sample_size(ind)));
      }
    ok = ok && worst <= 0.02;
    detail << (p == 3 ? "" : "; ") << "p=" << p << ": max |pe - 0.5| = " << fmt("%.4f", worst) << " over "
           << trace.size() << " draws (largest MC SE " << fmt("%.4f", worst_se) << ")";
  }
  return {ok, detail.str()};
}

// 5. Bayes factor boundary.

Outcome bf_boundary() {
  const long double t = std::sqrt(10.0L);
  const long double exact = t / (1.0L + t);
  const double boundary = summary::inclusion_boundary(std::sqrt(10.0));
  auto included = [](double v) {
    Matrix pe = Matrix::Identity(2, 2);
    pe(0, 1) = pe(1, 0) = v;
    return summary::estimate_graph(pe).graph.has_edge(0, 1);
  };
  const double b = static_cast<double>(exact);
  const bool ok = std::abs(static_cast<long double>(boundary) - exact) < 1e-12L && included(b) && included(b + 1e-12) &&
                  !included(b - 1e-12);
  return {ok, "boundary pe = " + fmt("%.15f", boundary) + ", included at boundary and +1e-12, excluded at -1e-12"};
}

// 6-8. Desk-scale simulation scenarios.

struct ScenarioRun {
  simstudy::ScenarioSpec spec;
  simstudy::BenchmarkReport report;
  double seconds = 0.0;
};

ScenarioRun run_scenario(const std::string& ini) {
  ScenarioRun run;
  const auto t0 = std::chrono::steady_clock::now();
  run.spec = simstudy::load_scenario(kData + "/" + ini);
  if (run.spec.auto_tune) simstudy::tune_chain_length(run.spec);
  run.report = simstudy::aggregate(run.spec, simstudy::run_replicates(run.spec, 1));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

const ScenarioRun& sim1() {
  static const ScenarioRun run = run_scenario("sim1.ini");
  return run;
}

Outcome sim1_metrics() {
  const auto& r = sim1();
  const auto& g = r.report.metrics.at("GGM");
  const double sens = g.at("sensitivity").mean, spec = g.at("specificity").mean, acc = g.at("accuracy").mean;
  const double hpd95 = r.report.metrics.at("HPD_95").at("specificity").mean;
  const bool ok = std::abs(sens - 1.0) <= 0.02 && spec >= 0.95 && acc >= 0.95 && hpd95 < spec;
  return {ok, "RE=" + std::to_string(r.report.n_succeeded) + ", " + std::to_string(r.spec.chain.n_iterations) +
                  " iterations: GGM sensitivity " + fmt("%.3f", sens) + ", specificity " + fmt("%.3f", spec) +
                  ", accuracy " + fmt("%.3f", acc) + "; HPD_95 specificity " + fmt("%.3f", hpd95) + " (" +
                  fmt("%.0f", r.seconds) + " s)"};
}

Outcome sim1_logmse() {
  const auto& r = sim1();
  const auto& g = r.report.logmse.at("precision").at("graphical").at("CI-I");
  const auto& f = r.report.logmse.at("precision").at("full").at("CI-I");
  // The graphical estimate is exactly zero on CI-I pairs whenever no such
  // edge is selected; those replicates carry logMSE = -inf. The finite-only
  // comparison below guards against that making the check vacuous.
  const bool finite_ok = g.finite.n == 0 || g.finite.mean < f.finite.mean;
  const bool ok = g.mean < f.mean && finite_ok;
  return {ok, "CI-I precision logMSE graphical " + simstudy::fixed(g.mean, 3) + " (" + std::to_string(g.exact_count) +
                  " exact replicates, finite mean " + simstudy::fixed(g.finite.mean, 3) + ") vs full " +
                  simstudy::fixed(f.mean, 3) + "; graphical lower in " +
                  fmt("%.0f", 100.0 * r.report.ci_i_precision_win_rate) + "% of replicates"};
}

Outcome sim2_metrics() {
  const auto r = run_scenario("sim2.ini");
  const double prec = r.report.metrics.at("GGM").at("precision").mean;
  const Matrix& pe = r.report.mean_inclusion;
  const Matrix r0 = r.spec.true_correlation();
  double strong_min = 1.0;
  for (auto [i, j] : r.spec.true_graph().edges())
    if (std::abs(r0(i, j)) >= 0.5) strong_min = std::min(strong_min, pe(i, j));
  const double pe89 = pe(7, 8), pe810 = pe(7, 9);
  const bool ok = prec >= 0.95 && pe89 < strong_min && pe810 < strong_min;
  return {ok, "RE=" + std::to_string(r.report.n_succeeded) + ", " + std::to_string(r.spec.chain.n_iterations) +
                  " iterations: GGM precision " + fmt("%.3f", prec) + "; mean pe(8,9) " + fmt("%.3f", pe89) +
                  ", pe(8,10) " + fmt("%.3f", pe810) + " vs lowest strong-edge pe " + fmt("%.3f", strong_min) + " (" +
                  fmt("%.0f", r.seconds) + " s)"};
}

// 9. Geweke joint-distribution test.

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic, with the usual
/// small-sample correction of the scaled statistic).
double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

/// Chi-square test of homogeneity for two samples of small integer values.
double chi_square_homogeneity_p(const std::vector<int>& a, const std::vector<int>& b, int levels) {
  std::vector<double> ca(static_cast<std::size_t>(levels), 0.0), cb(static_cast<std::size_t>(levels), 0.0);
  for (int v : a) ca[static_cast<std::size_t>(v)] += 1.0;
  for (int v : b) cb[static_cast<std::size_t>(v)] += 1.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double stat = 0.0;
  int used = 0;
  for (int k = 0; k < levels; ++k) {
    const double tot = ca[static_cast<std::size_t>(k)] + cb[static_cast<std::size_t>(k)];
    if (tot == 0.0) continue;
    ++used;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    stat += (ca[static_cast<std::size_t>(k)] - ea) * (ca[static_cast<std::size_t>(k)] - ea) / ea +
            (cb[static_cast<std::size_t>(k)] - eb) * (cb[static_cast<std::size_t>(k)] - eb) / eb;
  }
  if (used < 2) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(used - 1), stat));
}

Outcome geweke() {
  const int p = 3, n = 10, draws = 3000, sweeps_between = 10, steps_per_sweep = 4;
  const auto tree = phylo::simulate_tree(n, 909);
  const auto spec = mcmc::ModelSpec::defaults(mcmc::ModelVariant::graphical, p);
  Rng rng(910);
  std::bernoulli_distribution coin(0.5);
  auto prior_graph = [&] {
    TraitGraph g(p);
    for (int k = 0; k < TraitGraph::n_slots(p); ++k) {
      const auto [i, j] = TraitGraph::slot_pair(p, k);
      if (coin(rng)) g.set_edge(i, j, true);
    }
    return g;
  };

  // Marginal-conditional simulation: (G, K) from the prior.
  std::vector<double> fwd_trace;
  std::vector<int> fwd_edges;
  for (int d = 0; d < draws; ++d) {
    const auto g = prior_graph();
    fwd_trace.push_back(gwishart::sample_gwishart(g, spec.gwishart_prior, rng).trace());
    fwd_edges.push_back(g.edge_count());
  }

  // Successive-conditional simulation: alternate the posterior kernel with
  // fresh data drawn given the current K.
  mcmc::ChainState state{prior_graph(), Matrix(), 0, Rng(911)};
  state.precision = gwishart::sample_gwishart(state.graph, spec.gwishart_prior, state.rng);
  mcmc::PriorConstantCache cache(spec.gwishart_prior, 1000, 912);
  mcmc::ChainTrace counters;
  std::vector<double> sc_trace;
  std::vector<int> sc_edges;
  std::uint64_t data_seed = 0;
  for (int d = 0; d < draws; ++d) {
    for (int s = 0; s < sweeps_between; ++s) {
      const auto x = phylo::simulate_traits(tree, state.precision, spec.root_prior, derive_seed(913, data_seed++));
      const Matrix delta = phylo::compute_delta_pruning(tree, x, spec.root_prior);
      const mcmc::PosteriorContext ctx{spec, delta, n, 1000, {}};
      for (int k = 0; k < steps_per_sweep; ++k) mcmc::random_scan_step(state, ctx, cache, 0.5, counters);
    }
    sc_trace.push_back(state.precision.trace());
    sc_edges.push_back(state.graph.edge_count());
  }
  const double p_trace = ks_two_sample_p(fwd_trace, sc_trace);
  const double p_edges = chi_square_homogeneity_p(fwd_edges, sc_edges, TraitGraph::n_slots(p) + 1);
  std::vector<double> sc_edges_d(sc_edges.begin(), sc_edges.end());
  const double ess_trace = summary::effective_sample_size(sc_trace);
  const double ess_edges = summary::effective_sample_size(sc_edges_d);
  return {p_trace > 0.01 && p_edges > 0.01,
          "p=3, N=10, " + std::to_string(draws) + " draws each: KS p(tr K) = " + fmt("%.3f", p_trace) +
              ", chi-square p(edge count) = " + fmt("%.3f", p_edges) + " (successive-conditional ESS " +
              fmt("%.0f", ess_trace) + " and " + fmt("%.0f", ess_edges) + ")"};
}

// 10. Worker-count determinism.

Outcome worker_determinism() {
  auto spec = simstudy::load_scenario(kData + "/sim1.ini");
  spec.n_replicates = 8;
  spec.chain.n_iterations = 2000;
  spec.chain.warmup = 400;
  spec.chain.mc_samples = 200;
  std::ostringstream one, eight;
  simstudy::write_aggregate_csv(one, simstudy::aggregate(spec, simstudy::run_replicates(spec, 1)));
  simstudy::write_aggregate_csv(eight, simstudy::aggregate(spec, simstudy::run_replicates(spec, 8)));
  const bool same = one.str() == eight.str();
  return {same, std::string("aggregate CSV for 8 replicates with 1 and 8 workers: ") +
                    (same ? "byte-identical" : "differs") + " (" + std::to_string(one.str().size()) + " bytes)"};
}

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;  // <= 0 for no hard limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--only" && a + 1 < argc) {
      std::stringstream s(argv[++a]);
      for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
    }
  }
  const std::vector<Criterion> criteria{
      {1, "pruning matches dense Delta", 10, pruning_oracle},
      {2, "normalizing constants match closed forms", 120, norm_const_oracle},
      {3, "G-Wishart sampler moments and support", 60, sampler_moments},
      {4, "prior recovery without data", 120, prior_recovery},
      {5, "Bayes factor threshold boundary", 0, bf_boundary},
      {6, "Sim 1 edge recovery", 0, sim1_metrics},
      {7, "Sim 1 CI-I precision logMSE ordering", 0, sim1_logmse},
      {8, "Sim 2 precision and weak-edge inclusion", 0, sim2_metrics},
      {9, "Geweke joint-distribution test", 0, geweke},
      {10, "benchmark determinism across worker counts", 0, worker_determinism},
  };
  // ctest hides the output of passing tests, so keep a copy next to the binary.
  std::ofstream log(std::filesystem::path(argv[0]).parent_path() / "acceptance_results.txt");
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail = out.detail;
    if (c.budget_seconds > 0.0) {
      const bool in_budget = secs < c.budget_seconds;
      detail += "; runtime " + fmt("%.1f", secs) + " s (limit " + fmt("%.0f", c.budget_seconds) + " s)";
      out.pass = out.pass && in_budget;
    } else {
      detail += "; runtime " + fmt("%.1f", secs) + " s";
    }
    failed += !out.pass;
    const std::string line =
        std::string(out.pass ? "PASS" : "FAIL") + " [" + std::to_string(c.id) + "] " + c.title + ": " + detail;
    std::cout << line << std::endl;
    log << line << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

// gptem: simulate trait data, fit the graphical or full model, summarize
// traces and run simulation benchmarks.
//
// Exit codes: 0 success, 1 runtime or numeric failure, 2 invalid input.

#include "gptem/mcmc/sampler.hpp"
#include "gptem/mcmc/trace_io.hpp"
#include "gptem/phylo/brownian.hpp"
#include "gptem/phylo/tree.hpp"
#include "gptem/simstudy/report.hpp"
#include "gptem/summary/posterior.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gptem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_output(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

void write_json(const std::string& path, const nlohmann::json& j) { open_output(path) << j.dump(2) << '\n'; }

struct Provenance {
  std::string command;
  std::string effective_config;
  std::uint64_t seed = 0;

  nlohmann::json to_json(const nlohmann::json& extra = {}) const {
    nlohmann::json j;
    j["tool"] = "gptem";
    j["tool_version"] = GPTEM_VERSION;
    j["command"] = command;
    j["seed"] = seed;
    j["config_hash"] = hex64(fnv1a(effective_config.data(), effective_config.size()));
    j["config"] = effective_config;
    if (!extra.is_null())
      for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
  }
};

struct PriorOptions {
  std::string model = "graphical";
  std::optional<double> df;
  double rate_scale = 1.0;
  std::string rate_file;
  double tau0 = 1.0;
  std::vector<double> root_mean;

  void add(CLI::App* app) {
    app->add_option("--model", model, "graphical or full")->check(CLI::IsMember({"graphical", "full"}))->capture_default_str();
    app->add_option("--df", df, "prior degrees of freedom (default 3 for graphical, 2 + p for full)");
    app->add_option("--rate-scale", rate_scale, "prior rate matrix D = scale * I")->capture_default_str();
    app->add_option("--rate-file", rate_file, "prior rate matrix D read from a file (overrides --rate-scale)");
    app->add_option("--tau0", tau0, "root prior sample size")->capture_default_str();
    app->add_option("--root-mean", root_mean, "root prior mean, one value per trait (default 0)");
  }

  mcmc::ModelSpec build(int p) const {
    auto spec = mcmc::ModelSpec::defaults(mcmc::parse_variant(model), p);
    if (!(rate_scale > 0.0)) throw InputError("--rate-scale must be positive");
    Matrix rate = rate_scale * Matrix::Identity(p, p);
    if (!rate_file.empty()) {
      rate = simstudy::read_matrix_file(rate_file);
      if (rate.rows() != p) throw InputError("--rate-file must be " + std::to_string(p) + " x " + std::to_string(p));
    }
    spec.gwishart_prior.rate = rate;
    spec.wishart_prior.rate = rate;
    if (df) {
      spec.gwishart_prior.df = *df;
      spec.wishart_prior.df = *df;
    }
    spec.root_prior.sample_size = tau0;
    if (!root_mean.empty()) {
      if (static_cast<int>(root_mean.size()) != p) throw InputError("--root-mean needs one value per trait");
      spec.root_prior.mean = Eigen::Map<const Vector>(root_mean.data(), p);
    }
    spec.validate(p);
    return spec;
  }
};

struct SelectionOptions {
  double bf_threshold = summary::kDefaultBayesFactorThreshold;
  double hpd_level = 0.95;

  void add(CLI::App* app) {
    app->add_option("--bf-threshold", bf_threshold, "Bayes factor threshold for edge inclusion")->capture_default_str();
    app->add_option("--hpd-level", hpd_level, "HPD level for correlation selection")->capture_default_str();
  }
};

std::string short_label(const std::string& s, std::size_t width) {
  return s.size() <= width ? s : s.substr(0, width);
}

/// Correlogram table: posterior mean correlations below the diagonal, pe
/// (graphical) or ps (full) above it. '*' marks edges in the graph estimate
/// or correlations whose HPD interval excludes zero.
void print_correlogram(std::ostream& out, const summary::PosteriorSummary& s, mcmc::ModelVariant variant,
                       const std::vector<std::string>& labels) {
  const auto p = static_cast<int>(s.correlation.rows());
  const bool graphical = variant == mcmc::ModelVariant::graphical;
  const auto& marks = graphical ? s.graph : s.hpd.selected;
  const Matrix& upper = graphical ? s.edge_inclusion : s.sign_probability;
  out << (graphical ? "Estimated graph edges (pe, BF):\n" : "Correlations whose HPD interval excludes zero:\n");
  bool any = false;
  for (auto [i, j] : marks.edges()) {
    any = true;
    out << "  " << labels[static_cast<std::size_t>(i)] << " -- " << labels[static_cast<std::size_t>(j)];
    if (graphical) {
      out << "  pe=" << simstudy::fixed(s.edge_inclusion(i, j), 3) << " BF=" << simstudy::fixed(s.bayes_factors(i, j), 2);
    } else {
      out << "  r=" << simstudy::fixed(s.correlation(i, j), 3) << " HPD=[" << simstudy::fixed(s.hpd.lo(i, j), 3) << ", "
          << simstudy::fixed(s.hpd.hi(i, j), 3) << "]";
    }
    out << '\n';
  }
  if (!any) out << "  (none)\n";
  out << "\nCorrelogram: r below the diagonal, " << (graphical ? "pe" : "ps") << " above, * = "
      << (graphical ? "edge in graph estimate" : "HPD excludes zero") << "\n";
  const int w = 9;
  out << std::setw(w) << "";
  for (int j = 0; j < p; ++j) out << std::setw(w) << short_label(labels[static_cast<std::size_t>(j)], w - 1);
  out << '\n';
  for (int i = 0; i < p; ++i) {
    out << std::setw(w) << short_label(labels[static_cast<std::size_t>(i)], w - 1);
    for (int j = 0; j < p; ++j) {
      std::string cell;
      if (i == j) cell = "1";
      else if (i > j) cell = simstudy::fixed(s.correlation(i, j), 2);
      else cell = simstudy::fixed(upper(i, j), 2) + (marks.has_edge(i, j) ? "*" : "");
      out << std::setw(w) << cell;
    }
    out << '\n';
  }
}

std::vector<std::string> default_labels(int p) {
  std::vector<std::string> v;
  for (int i = 1; i <= p; ++i) v.push_back("trait" + std::to_string(i));
  return v;
}

void summarize_and_report(const mcmc::ChainTrace& trace, const SelectionOptions& sel, const std::string& summary_path,
                          const nlohmann::json& provenance) {
  const auto s = summary::summarize(trace, sel.bf_threshold, sel.hpd_level);
  const auto labels = trace.trait_labels.empty() ? default_labels(trace.p) : trace.trait_labels;
  auto j = summary::to_json(s, labels);
  j["model"] = mcmc::to_string(trace.variant);
  j["bf_threshold"] = sel.bf_threshold;
  j["provenance"] = provenance;
  write_json(summary_path, j);
  print_correlogram(std::cout, s, trace.variant, labels);
}

// ---------------------------------------------------------------------------

struct SimulateCmd {
  std::string precision_file;
  int n_taxa = 50;
  std::uint64_t seed = 1;
  std::string out = "sim";
  double tau0 = 1.0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("simulate", "simulate a Yule tree and Brownian traits under a true precision");
    c->add_option("--precision", precision_file, "true precision matrix K0 (CSV)")->required();
    c->add_option("--taxa", n_taxa, "number of taxa")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
    c->add_option("--out", out, "output prefix: writes PREFIX.tree.nwk, PREFIX.traits.csv, PREFIX.provenance.json")
        ->capture_default_str();
    c->add_option("--tau0", tau0, "root prior sample size")->capture_default_str();
  }

  void run(const Provenance& prov) const {
    const Matrix k0 = simstudy::read_matrix_file(precision_file);
    simstudy::validate_true_precision(k0);
    if (n_taxa < 2) throw InputError("--taxa must be at least 2");
    const int p = static_cast<int>(k0.rows());
    phylo::RootPrior root = phylo::RootPrior::standard(p);
    root.sample_size = tau0;
    root.validate(p);
    const auto tree = phylo::simulate_tree(n_taxa, derive_seed(seed, 1));
    const auto traits = phylo::simulate_traits(tree, k0, root, derive_seed(seed, 2));
    open_output(out + ".tree.nwk") << phylo::to_newick(tree) << '\n';
    {
      auto f = open_output(out + ".traits.csv");
      phylo::write_trait_csv(f, traits);
    }
    write_json(out + ".provenance.json",
               prov.to_json({{"precision_hash", hex64(hash_matrix(k0))}, {"n_taxa", n_taxa}, {"n_traits", p}}));
    std::cout << "wrote " << out << ".tree.nwk, " << out << ".traits.csv (" << n_taxa << " taxa, " << p
              << " traits)\n";
  }
};

struct FitCmd {
  std::string tree_file, traits_file, out = "fit";
  int iterations = 20000;
  std::optional<int> warmup;
  int thin = 10;
  int mc_samples = 1000;
  std::uint64_t seed = 1;
  PriorOptions prior;
  SelectionOptions sel;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("fit", "fit the graphical or full model on a fixed tree");
    c->add_option("--tree", tree_file, "Newick tree")->required();
    c->add_option("--traits", traits_file, "trait CSV (taxon column, then one column per trait)")->required();
    c->add_option("--out", out, "output prefix: writes PREFIX.trace.csv, PREFIX.trace.json, PREFIX.summary.json")
        ->capture_default_str();
    c->add_option("--iterations", iterations, "chain iterations")->capture_default_str();
    c->add_option("--warmup", warmup, "warm-up iterations (default 20% of --iterations)");
    c->add_option("--thin", thin, "thinning stride")->capture_default_str();
    c->add_option("--mc-samples", mc_samples, "Monte Carlo samples per normalizing constant")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
    prior.add(c);
    sel.add(c);
  }

  void run(const Provenance& prov) const {
    const auto tree = phylo::parse_newick(read_file(tree_file));
    const auto traits = phylo::align_to_tree(phylo::read_trait_csv(traits_file), tree);
    const auto spec = prior.build(traits.n_traits());
    mcmc::ChainConfig cfg;
    cfg.n_iterations = iterations;
    cfg.warmup = warmup.value_or(static_cast<int>(std::lround(0.2 * iterations)));
    cfg.thin = thin;
    cfg.mc_samples = mc_samples;
    cfg.seed = seed;
    cfg.validate();
    if (cfg.stored_samples() < 20) throw InputError("chain stores fewer than 20 samples; lengthen it or thin less");
    const auto trace = mcmc::run_chain(tree, traits, spec, cfg);
    mcmc::write_trace(out + ".trace.csv", out + ".trace.json", trace, &spec);
    summarize_and_report(trace, sel, out + ".summary.json", prov.to_json());
  }
};

struct SummarizeCmd {
  std::string trace_file, meta_file, out;
  SelectionOptions sel;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("summarize", "re-summarize an existing trace");
    c->add_option("--trace", trace_file, "trace CSV")->required();
    c->add_option("--meta", meta_file, "trace metadata JSON (default: trace path with .csv replaced by .json)");
    c->add_option("--out", out, "summary JSON path (default: next to the trace)");
    sel.add(c);
  }

  void run(const Provenance& prov) const {
    std::string meta = meta_file;
    if (meta.empty()) meta = fs::path(trace_file).replace_extension(".json").string();
    const auto trace = mcmc::read_trace(trace_file, meta);
    std::string dest = out;
    if (dest.empty()) {
      dest = trace_file;
      const std::string suffix = ".trace.csv";
      if (dest.size() > suffix.size() && dest.compare(dest.size() - suffix.size(), suffix.size(), suffix) == 0) {
        dest = dest.substr(0, dest.size() - suffix.size());
      }
      dest += ".summary.json";
    }
    summarize_and_report(trace, sel, dest, prov.to_json());
  }
};

struct BenchmarkCmd {
  std::string scenario_file;
  std::string out_dir = "benchmark";
  std::optional<int> replicates, iterations, mc_samples;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool no_tune = false;
  bool strict = false;
  bool full_scale = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("benchmark", "run a simulation scenario with both models");
    c->add_option("--scenario", scenario_file, "scenario INI file")->required();
    c->add_option("--out-dir", out_dir, "directory for metrics.csv, aggregate.csv, report.json, report.txt")
        ->capture_default_str();
    c->add_option("--replicates", replicates, "number of replicates (overrides the scenario)");
    c->add_option("--iterations", iterations, "chain iterations (overrides the scenario; warm-up stays 20%)");
    c->add_option("--mc-samples", mc_samples, "Monte Carlo samples per normalizing constant");
    c->add_option("--seed", seed, "base seed (overrides the scenario)");
    c->add_option("--workers", workers, "parallel replicate workers")->capture_default_str();
    c->add_flag("--no-tune", no_tune, "skip the pilot run that tunes chain length");
    c->add_flag("--full-scale", full_scale, "1000 replicates tuned to ESS 500 (long: hours to days)");
    c->add_flag("--strict", strict, "exit 1 if a directional check fails");
  }

  int run(const Provenance& base) const {
    auto spec = simstudy::load_scenario(scenario_file);
    if (full_scale) {
      spec.n_replicates = 1000;
      spec.target_ess = 500;
      spec.auto_tune = true;
      spec.max_iterations = std::max(spec.max_iterations, 200000);
    }
    if (replicates) spec.n_replicates = *replicates;
    if (seed) spec.seed = *seed;
    if (iterations) {
      spec.chain.n_iterations = *iterations;
      spec.chain.warmup = static_cast<int>(std::lround(0.2 * *iterations));
      spec.max_iterations = std::max(spec.max_iterations, *iterations);
    }
    if (mc_samples) spec.chain.mc_samples = *mc_samples;
    if (no_tune) spec.auto_tune = false;
    if (workers < 1) throw InputError("--workers must be positive");
    spec.validate();

    nlohmann::json tuning = nullptr;
    if (spec.auto_tune) {
      std::cerr << "pilot run to tune chain length (target ESS " << spec.target_ess << ")...\n";
      const auto t = simstudy::tune_chain_length(spec);
      tuning = {{"pilot_iterations", t.pilot_iterations}, {"pilot_min_ess", t.pilot_ess},
                {"tuned_iterations", t.tuned_iterations}};
      std::cerr << "pilot min ESS " << simstudy::fixed(t.pilot_ess, 1) << " -> " << spec.chain.n_iterations
                << " iterations\n";
    }
    std::cerr << "running " << spec.n_replicates << " replicates on " << workers << " worker(s)\n";
    const auto results = simstudy::run_replicates(spec, workers, [](const simstudy::ReplicateResult& r) {
      std::cerr << "  replicate " << r.index << (r.ok ? " done" : " FAILED: " + r.error) << '\n';
    });
    const auto rep = simstudy::aggregate(spec, results);
    for (const auto& [i, e] : rep.failures) std::cerr << "warning: replicate " << i << " excluded: " << e << '\n';

    fs::create_directories(out_dir);
    {
      auto f = open_output((fs::path(out_dir) / "metrics.csv").string());
      simstudy::write_metrics_csv(f, results);
    }
    {
      auto f = open_output((fs::path(out_dir) / "aggregate.csv").string());
      simstudy::write_aggregate_csv(f, rep);
    }
    Provenance prov = base;
    prov.seed = spec.seed;
    auto j = simstudy::report_to_json(rep, spec);
    j["tuning"] = tuning;
    j["provenance"] = prov.to_json();
    write_json((fs::path(out_dir) / "report.json").string(), j);
    std::ostringstream text;
    simstudy::write_text_report(text, rep);
    open_output((fs::path(out_dir) / "report.txt").string()) << text.str();
    std::cout << text.str();

    bool all_ok = true;
    for (const auto& c : simstudy::directional_checks(rep)) all_ok = all_ok && c.passed;
    return strict && !all_ok ? 1 : 0;
  }
};

std::string joined_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian graphical models for phylogenetic trait evolution"};
  app.set_version_flag("--version", std::string(GPTEM_VERSION));
  app.set_config("--config", "", "INI/TOML file with option values; command-line flags take precedence");
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "do not print the effective configuration");

  SimulateCmd simulate;
  FitCmd fit;
  SummarizeCmd summarize;
  BenchmarkCmd benchmark;
  simulate.add(app);
  fit.add(app);
  summarize.add(app);
  benchmark.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Provenance prov;
  prov.command = joined_args(argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  prov.effective_config = "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false);
  if (!quiet) std::cerr << "# effective configuration\n" << prov.effective_config << '\n';

  try {
    if (app.got_subcommand("simulate")) {
      prov.seed = simulate.seed;
      simulate.run(prov);
    } else if (app.got_subcommand("fit")) {
      prov.seed = fit.seed;
      fit.run(prov);
    } else if (app.got_subcommand("summarize")) {
      summarize.run(prov);
    } else if (app.got_subcommand("benchmark")) {
      return benchmark.run(prov);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

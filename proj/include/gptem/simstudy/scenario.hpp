// Simulation scenarios: the true precision K0 and how to benchmark against it.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/graph.hpp"
#include "gptem/mcmc/model.hpp"
#include "gptem/phylo/traits.hpp"
#include "gptem/summary/posterior.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace gptem::simstudy {

using gwishart::TraitGraph;

/// Reads a dense matrix written one row per line with comma or whitespace
/// separators. Blank lines and lines starting with '#' are ignored.
inline Matrix parse_matrix(std::istream& in, const std::string& source = "matrix") {
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream cells(line);
    std::vector<double> row;
    std::string cell;
    while (cells >> cell) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InputError(source + " line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(source + " contains no rows");
  const auto p = rows.size();
  Matrix m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    if (rows[i].size() != p) {
      throw InputError(source + " must be square: row " + std::to_string(i + 1) + " has " +
                       std::to_string(rows[i].size()) + " entries, expected " + std::to_string(p));
    }
    for (std::size_t j = 0; j < p; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

inline Matrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open matrix file '" + path + "'");
  return parse_matrix(in, path);
}

/// Checks that K0 is a usable true precision: symmetric and positive
/// definite. The message names the smallest eigenvalue on failure.
inline void validate_true_precision(const Matrix& k0) {
  if (k0.rows() < 2 || k0.rows() != k0.cols()) throw InputError("true precision must be square with p >= 2");
  if (!k0.allFinite()) throw InputError("true precision has non-finite entries");
  if (!is_symmetric(k0, 1e-12)) throw InputError("true precision is not symmetric");
  const double lambda = min_eigenvalue(k0);
  if (!(lambda > 0.0)) {
    std::ostringstream msg;
    msg << "true precision is not positive definite: smallest eigenvalue " << lambda;
    throw InputError(msg.str());
  }
}

/// Parses edges written as "i-j" with 1-based vertex numbers.
inline std::vector<std::pair<int, int>> parse_edge_list(const std::vector<std::string>& tokens) {
  std::vector<std::pair<int, int>> out;
  for (const auto& t : tokens) {
    const auto dash = t.find('-');
    try {
      if (dash == std::string::npos) throw std::invalid_argument(t);
      std::size_t a_used = 0, b_used = 0;
      const std::string a = t.substr(0, dash), b = t.substr(dash + 1);
      const int i = std::stoi(a, &a_used), j = std::stoi(b, &b_used);
      if (a_used != a.size() || b_used != b.size()) throw std::invalid_argument(t);
      out.emplace_back(i - 1, j - 1);
    } catch (const std::exception&) {
      throw InputError("edge '" + t + "' is not of the form i-j");
    }
  }
  return out;
}

struct ScenarioSpec {
  std::string name = "scenario";
  int n_taxa = 50;
  int n_replicates = 50;
  std::uint64_t seed = 1;
  Matrix true_precision;
  mcmc::ChainConfig chain;
  /// Pilot-based chain-length tuning.
  bool auto_tune = false;
  double target_ess = 200.0;
  int max_iterations = 100000;
  double bf_threshold = summary::kDefaultBayesFactorThreshold;
  std::vector<double> hpd_levels{0.90, 0.95};

  int n_traits() const { return static_cast<int>(true_precision.rows()); }
  TraitGraph true_graph() const { return TraitGraph::from_pattern(true_precision); }
  Matrix true_correlation() const { return covariance_to_correlation(inverse_spd(true_precision)); }

  void validate() const {
    validate_true_precision(true_precision);
    if (n_taxa < 2) throw InputError("n_taxa must be at least 2");
    if (n_replicates < 1) throw InputError("n_replicates must be positive");
    chain.validate();
    if (!(target_ess > 0.0)) throw InputError("target_ess must be positive");
    if (max_iterations < chain.n_iterations) throw InputError("max_iterations must be at least n_iterations");
    if (!(bf_threshold > 0.0)) throw InputError("bf_threshold must be positive");
    if (hpd_levels.empty()) throw InputError("at least one HPD level is required");
    for (double g : hpd_levels)
      if (!(g > 0.0 && g < 1.0)) throw InputError("HPD levels must lie in (0, 1)");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["n_taxa"] = n_taxa;
    j["n_traits"] = n_traits();
    j["n_replicates"] = n_replicates;
    j["seed"] = seed;
    j["true_precision"] = summary::matrix_to_json(true_precision);
    j["chain"] = {{"n_iterations", chain.n_iterations}, {"warmup", chain.warmup},       {"thin", chain.thin},
                  {"mc_samples", chain.mc_samples},     {"auto_tune", auto_tune},        {"target_ess", target_ess},
                  {"max_iterations", max_iterations}};
    j["selection"] = {{"bf_threshold", bf_threshold}, {"hpd_levels", hpd_levels}};
    return j;
  }
};

/// Label used for an HPD criterion, e.g. 0.9 -> "HPD_90".
inline std::string hpd_label(double gamma) {
  const double pct = gamma * 100.0;
  std::ostringstream s;
  s << "HPD_";
  if (std::abs(pct - std::round(pct)) < 1e-9) s << static_cast<long>(std::round(pct));
  else s << pct;
  return s.str();
}

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::vector<std::string>& inputs) {
  if (inputs.size() != 1) throw InputError("scenario key '" + key + "' expects a single value");
  T out{};
  if (!CLI::detail::lexical_cast(inputs.front(), out)) {
    throw InputError("scenario key '" + key + "' has invalid value '" + inputs.front() + "'");
  }
  return out;
}

}  // namespace detail

/// Loads a scenario from an INI file. Relative paths inside it resolve
/// against the file's directory. Keys:
///   name, n_taxa, n_replicates, seed, precision_file, expected_edges
///   [chain] n_iterations, warmup, thin, mc_samples, auto_tune, target_ess, max_iterations
///   [selection] bf_threshold, hpd_levels
inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file '" + path + "'");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw InputError("malformed scenario file '" + path + "': " + e.what());
  }
  ScenarioSpec spec;
  std::string precision_file;
  std::optional<std::vector<std::string>> expected_edges;
  std::optional<double> warmup_fraction;
  bool warmup_given = false;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    const std::string section = item.parents.empty() ? "" : item.parents.front();
    const std::string key = section.empty() ? item.name : section + "." + item.name;
    const auto& v = item.inputs;
    using detail::parse_value;
    if (key == "name") spec.name = parse_value<std::string>(key, v);
    else if (key == "n_taxa") spec.n_taxa = parse_value<int>(key, v);
    else if (key == "n_replicates") spec.n_replicates = parse_value<int>(key, v);
    else if (key == "seed") spec.seed = parse_value<std::uint64_t>(key, v);
    else if (key == "precision_file") precision_file = parse_value<std::string>(key, v);
    else if (key == "expected_edges") expected_edges = v;
    else if (key == "chain.n_iterations") spec.chain.n_iterations = parse_value<int>(key, v);
    else if (key == "chain.warmup") {
      spec.chain.warmup = parse_value<int>(key, v);
      warmup_given = true;
    } else if (key == "chain.warmup_fraction") warmup_fraction = parse_value<double>(key, v);
    else if (key == "chain.thin") spec.chain.thin = parse_value<int>(key, v);
    else if (key == "chain.mc_samples") spec.chain.mc_samples = parse_value<int>(key, v);
    else if (key == "chain.auto_tune") spec.auto_tune = parse_value<bool>(key, v);
    else if (key == "chain.target_ess") spec.target_ess = parse_value<double>(key, v);
    else if (key == "chain.max_iterations") spec.max_iterations = parse_value<int>(key, v);
    else if (key == "selection.bf_threshold") spec.bf_threshold = parse_value<double>(key, v);
    else if (key == "selection.hpd_levels") {
      spec.hpd_levels.clear();
      for (const auto& s : v) spec.hpd_levels.push_back(parse_value<double>(key, {s}));
    } else {
      throw InputError("unknown scenario key '" + key + "' in '" + path + "'");
    }
  }
  if (warmup_given && warmup_fraction) throw InputError("give either chain.warmup or chain.warmup_fraction, not both");
  if (!warmup_given) spec.chain.warmup = static_cast<int>(std::lround(warmup_fraction.value_or(0.2) * spec.chain.n_iterations));
  if (precision_file.empty()) throw InputError("scenario '" + path + "' has no precision_file");
  std::filesystem::path pf(precision_file);
  if (pf.is_relative()) pf = std::filesystem::path(path).parent_path() / pf;
  spec.true_precision = read_matrix_file(pf.string());
  spec.validate();
  if (expected_edges) {
    const auto edges = parse_edge_list(*expected_edges);
    for (auto [i, j] : edges)
      if (i < 0 || j < 0 || i >= spec.n_traits() || j >= spec.n_traits() || i == j) {
        throw InputError("expected edge out of range in '" + path + "'");
      }
    const TraitGraph expected = TraitGraph::from_edges(spec.n_traits(), edges);
    if (!(expected == spec.true_graph())) {
      throw InputError("zero pattern of '" + pf.string() + "' does not match expected_edges");
    }
  }
  return spec;
}

}  // namespace gptem::simstudy

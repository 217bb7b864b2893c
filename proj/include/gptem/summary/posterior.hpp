// Posterior estimators computed from a stored chain trace.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/graph.hpp"
#include "gptem/mcmc/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gptem::summary {

using gwishart::TraitGraph;
using mcmc::ChainTrace;

/// Default Bayes factor threshold for edge selection.
inline const double kDefaultBayesFactorThreshold = std::sqrt(10.0);

/// The inclusion probability at which pe / (1 - pe) equals `threshold`.
inline double inclusion_boundary(double threshold) { return threshold / (1.0 + threshold); }

inline void require_samples(const ChainTrace& trace) {
  if (trace.samples.empty()) throw InputError("trace contains no stored samples");
}

/// Fraction of stored samples containing each edge. The diagonal is 1.
inline Matrix edge_inclusion_probabilities(const ChainTrace& trace) {
  require_samples(trace);
  const int p = trace.p;
  const int slots = TraitGraph::n_slots(p);
  std::vector<long> counts(static_cast<std::size_t>(slots), 0);
  for (const auto& s : trace.samples) {
    if (static_cast<int>(s.graph.size()) != slots) throw InputError("trace sample has wrong number of edge indicators");
    for (int k = 0; k < slots; ++k) counts[static_cast<std::size_t>(k)] += s.graph[static_cast<std::size_t>(k)];
  }
  Matrix pe = Matrix::Identity(p, p);
  const double n = static_cast<double>(trace.samples.size());
  for (int k = 0; k < slots; ++k) {
    const auto [i, j] = TraitGraph::slot_pair(p, k);
    pe(i, j) = pe(j, i) = static_cast<double>(counts[static_cast<std::size_t>(k)]) / n;
  }
  return pe;
}

struct GraphEstimate {
  TraitGraph graph;
  /// pe / (1 - pe) off the diagonal; +inf where pe = 1.
  Matrix bayes_factors;
};

/// Includes edge (i,j) iff pe_ij / (1 - pe_ij) >= threshold. The comparison
/// is carried out as pe_ij >= threshold / (1 + threshold), which is the same
/// set but avoids rounding in the division at the boundary.
inline GraphEstimate estimate_graph(const Matrix& pe, double threshold = kDefaultBayesFactorThreshold) {
  if (!(threshold > 0.0)) throw InputError("Bayes factor threshold must be positive");
  const auto p = static_cast<int>(pe.rows());
  if (pe.cols() != p) throw InputError("inclusion probability matrix must be square");
  const double boundary = inclusion_boundary(threshold);
  GraphEstimate est{TraitGraph::empty(p), Matrix::Zero(p, p)};
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double v = pe(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("inclusion probabilities must lie in [0, 1]");
      const double bf = v >= 1.0 ? std::numeric_limits<double>::infinity() : v / (1.0 - v);
      est.bayes_factors(i, j) = est.bayes_factors(j, i) = bf;
      if (v >= boundary) est.graph.set_edge(i, j, true);
    }
  return est;
}

/// Entry-wise mean of k_ij over the samples whose indicator g_ij agrees with
/// the estimated graph. The diagonal averages all samples.
inline Matrix estimate_precision(const ChainTrace& trace, const TraitGraph& graph_estimate) {
  require_samples(trace);
  const int p = trace.p;
  if (graph_estimate.n_vertices() != p) throw InputError("graph estimate and trace dimensions differ");
  Matrix sum = Matrix::Zero(p, p);
  Eigen::MatrixXi count = Eigen::MatrixXi::Zero(p, p);
  for (std::size_t s = 0; s < trace.size(); ++s) {
    const Matrix k = trace.precision(s);
    const auto& g = trace.samples[s].graph;
    for (int i = 0; i < p; ++i) {
      sum(i, i) += k(i, i);
      ++count(i, i);
      for (int j = i + 1; j < p; ++j) {
        const bool present = g[static_cast<std::size_t>(TraitGraph::slot_index(p, i, j))] != 0;
        if (present == graph_estimate.has_edge(i, j)) {
          sum(i, j) += k(i, j);
          ++count(i, j);
        }
      }
    }
  }
  Matrix out(p, p);
  for (int i = 0; i < p; ++i) {
    out(i, i) = sum(i, i) / count(i, i);
    for (int j = i + 1; j < p; ++j) {
      if (count(i, j) == 0) {
        throw NumericError("no stored sample agrees with the estimated graph at entry (" + std::to_string(i + 1) +
                           "," + std::to_string(j + 1) + ")");
      }
      out(i, j) = out(j, i) = sum(i, j) / count(i, j);
    }
  }
  return out;
}

/// Correlation matrix of K^{-1} for every stored sample.
inline std::vector<Matrix> correlation_samples(const ChainTrace& trace) {
  require_samples(trace);
  std::vector<Matrix> out;
  out.reserve(trace.size());
  for (std::size_t s = 0; s < trace.size(); ++s) {
    Eigen::LLT<Matrix> llt(trace.precision(s));
    if (llt.info() != Eigen::Success) {
      throw NumericError("stored precision sample " + std::to_string(s) + " is not positive definite");
    }
    out.push_back(covariance_to_correlation(llt.solve(Matrix::Identity(trace.p, trace.p))));
  }
  return out;
}

inline Matrix estimate_correlation(const std::vector<Matrix>& samples) {
  if (samples.empty()) throw InputError("no correlation samples");
  Matrix sum = Matrix::Zero(samples.front().rows(), samples.front().cols());
  for (const auto& r : samples) sum += r;
  Matrix mean = sum / static_cast<double>(samples.size());
  mean = (0.5 * (mean + mean.transpose())).cwiseMax(-1.0).cwiseMin(1.0);
  mean.diagonal().setOnes();
  return mean;
}

inline Matrix estimate_correlation(const ChainTrace& trace) { return estimate_correlation(correlation_samples(trace)); }

/// Posterior probability that r_ij has the sign of its bulk:
/// max(P(r >= 0), P(r < 0)). The diagonal is 1.
inline Matrix sign_probability(const std::vector<Matrix>& samples) {
  if (samples.empty()) throw InputError("no correlation samples");
  const auto p = samples.front().rows();
  Matrix nonneg = Matrix::Zero(p, p);
  for (const auto& r : samples) nonneg += (r.array() >= 0.0).cast<double>().matrix();
  const double n = static_cast<double>(samples.size());
  Matrix ps(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) ps(i, j) = std::max(nonneg(i, j), n - nonneg(i, j)) / n;
  return ps;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Shortest interval containing ceil(gamma * n) of the samples.
inline Interval hpd_interval(std::vector<double> samples, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("HPD level must be in (0, 1]");
  const std::size_t n = samples.size();
  if (n < 20) throw InputError("HPD interval needs at least 20 samples, got " + std::to_string(n));
  std::sort(samples.begin(), samples.end());
  // Guard against gamma * n landing a hair above an integer.
  auto m = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, n);
  std::size_t best = 0;
  for (std::size_t start = 1; start + m <= n; ++start)
    if (samples[start + m - 1] - samples[start] < samples[best + m - 1] - samples[best]) best = start;
  return {samples[best], samples[best + m - 1]};
}

struct HpdSelection {
  double gamma = 0.95;
  Matrix lo;
  Matrix hi;
  /// Edge (i,j) present iff 0 lies outside the HPD interval of r_ij.
  TraitGraph selected;
};

inline HpdSelection classify_hpd(const std::vector<Matrix>& samples, double gamma) {
  if (samples.empty()) throw InputError("no correlation samples");
  const auto p = static_cast<int>(samples.front().rows());
  HpdSelection out{gamma, Matrix::Ones(p, p), Matrix::Ones(p, p), TraitGraph::empty(p)};
  std::vector<double> series(samples.size());
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      for (std::size_t s = 0; s < samples.size(); ++s) series[s] = samples[s](i, j);
      const Interval iv = hpd_interval(series, gamma);
      out.lo(i, j) = out.lo(j, i) = iv.lo;
      out.hi(i, j) = out.hi(j, i) = iv.hi;
      if (!iv.contains(0.0)) out.selected.set_edge(i, j, true);
    }
  return out;
}

inline HpdSelection classify_hpd(const ChainTrace& trace, double gamma) {
  return classify_hpd(correlation_samples(trace), gamma);
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
inline double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mean) * (x[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 0.0)) return static_cast<double>(n);
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    sum += pair;
  }
  const double tau = -g0 + 2.0 * sum;
  return static_cast<double>(n) * g0 / std::max(tau, g0 / static_cast<double>(n));
}

struct PosteriorSummary {
  Matrix edge_inclusion;
  Matrix bayes_factors;
  TraitGraph graph;
  Matrix precision;
  Matrix correlation;
  Matrix sign_probability;
  HpdSelection hpd;
};

inline PosteriorSummary summarize(const ChainTrace& trace, double bf_threshold = kDefaultBayesFactorThreshold,
                                  double hpd_level = 0.95) {
  PosteriorSummary out;
  out.edge_inclusion = edge_inclusion_probabilities(trace);
  auto g = estimate_graph(out.edge_inclusion, bf_threshold);
  out.graph = std::move(g.graph);
  out.bayes_factors = std::move(g.bayes_factors);
  out.precision = estimate_precision(trace, out.graph);
  const auto rs = correlation_samples(trace);
  out.correlation = estimate_correlation(rs);
  out.sign_probability = sign_probability(rs);
  out.hpd = classify_hpd(rs, hpd_level);
  return out;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (std::isinf(v)) row.push_back(v > 0 ? "inf" : "-inf");
      else row.push_back(v);
    }
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json to_json(const PosteriorSummary& s, const std::vector<std::string>& labels = {}) {
  nlohmann::json j;
  j["pe"] = matrix_to_json(s.edge_inclusion);
  j["bf"] = matrix_to_json(s.bayes_factors);
  nlohmann::json edges = nlohmann::json::array();
  for (auto [a, b] : s.graph.edges()) edges.push_back({a + 1, b + 1});
  j["graph"] = edges;
  j["K_hat"] = matrix_to_json(s.precision);
  j["R_hat"] = matrix_to_json(s.correlation);
  j["ps"] = matrix_to_json(s.sign_probability);
  j["hpd"] = {{"gamma", s.hpd.gamma}, {"lo", matrix_to_json(s.hpd.lo)}, {"hi", matrix_to_json(s.hpd.hi)}};
  if (!labels.empty()) j["trait_labels"] = labels;
  return j;
}

}  // namespace gptem::summary

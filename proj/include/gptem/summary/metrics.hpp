// Edge-recovery and estimation-error metrics against a known truth.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/graph.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <optional>

namespace gptem::summary {

using gwishart::TraitGraph;

struct ConfusionCounts {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  int total() const { return tp + fp + tn + fn; }
};

/// Rates are absent when their denominator is zero.
struct BenchmarkMetrics {
  ConfusionCounts counts;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  std::optional<double> f1;
  double accuracy = 0.0;
};

inline std::optional<double> ratio(int num, int den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Compares an estimated edge set to the truth over all p(p-1)/2 slots.
inline BenchmarkMetrics confusion_metrics(const TraitGraph& estimate, const TraitGraph& truth) {
  const int p = truth.n_vertices();
  if (estimate.n_vertices() != p) throw InputError("estimate and truth have different dimensions");
  if (p < 2) throw InputError("confusion metrics need at least two traits");
  BenchmarkMetrics m;
  auto& c = m.counts;
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const bool e = estimate.has_edge(i, j), t = truth.has_edge(i, j);
      if (e && t) ++c.tp;
      else if (e) ++c.fp;
      else if (t) ++c.fn;
      else ++c.tn;
    }
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  if (m.sensitivity && m.precision && *m.sensitivity + *m.precision > 0.0) {
    m.f1 = 2.0 * *m.sensitivity * *m.precision / (*m.sensitivity + *m.precision);
  } else if (m.sensitivity && m.precision) {
    m.f1 = 0.0;
  }
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return m;
}

/// Pair categories for a true (G0, R0): conditionally independent and
/// independent, conditionally independent but dependent, conditionally
/// dependent and dependent.
enum class PairCategory { ci_i, ci_d, cd_d };

inline const std::vector<PairCategory>& all_categories() {
  static const std::vector<PairCategory> v{PairCategory::ci_i, PairCategory::ci_d, PairCategory::cd_d};
  return v;
}

inline std::string to_string(PairCategory c) {
  switch (c) {
    case PairCategory::ci_i: return "CI-I";
    case PairCategory::ci_d: return "CI-D";
    case PairCategory::cd_d: return "CD-D";
  }
  return "?";
}

/// Category of every upper-triangle slot, in slot order. A correlation with
/// magnitude below `zero_tol` counts as zero.
inline std::vector<PairCategory> categorize_pairs(const TraitGraph& g0, const Matrix& r0, double zero_tol = 1e-12) {
  const int p = g0.n_vertices();
  if (r0.rows() != p || r0.cols() != p) throw InputError("true correlation matrix has wrong dimensions");
  std::vector<PairCategory> out;
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const bool dependent = std::abs(r0(i, j)) > zero_tol;
      if (g0.has_edge(i, j)) {
        if (!dependent) {
          throw InputError("pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                           ") is conditionally dependent but marginally uncorrelated");
        }
        out.push_back(PairCategory::cd_d);
      } else {
        out.push_back(dependent ? PairCategory::ci_d : PairCategory::ci_i);
      }
    }
  return out;
}

/// Log mean squared error. An exactly zero error is kept as -inf and flagged
/// so reports can print "exact" instead of a number.
struct LogMse {
  double value = 0.0;
  bool exact() const { return std::isinf(value) && value < 0.0; }
};

/// Log MSE over the off-diagonal entries of one category for one estimate.
inline LogMse logmse_category(const Matrix& estimate, const Matrix& truth, const std::vector<PairCategory>& categories,
                              PairCategory category) {
  const auto p = static_cast<int>(truth.rows());
  if (estimate.rows() != p || estimate.cols() != p) throw InputError("estimate and truth have different dimensions");
  if (static_cast<int>(categories.size()) != TraitGraph::n_slots(p)) throw InputError("category list has wrong length");
  double sse = 0.0;
  int n = 0;
  for (int k = 0; k < TraitGraph::n_slots(p); ++k) {
    if (categories[static_cast<std::size_t>(k)] != category) continue;
    const auto [i, j] = TraitGraph::slot_pair(p, k);
    const double e = estimate(i, j) - truth(i, j);
    sse += e * e;
    ++n;
  }
  if (n == 0) throw InputError("category " + to_string(category) + " has no pairs");
  const double mse = sse / n;
  return {mse > 0.0 ? std::log(mse) : -std::numeric_limits<double>::infinity()};
}

/// Per-category log MSE for every replicate estimate. Categories without
/// pairs are omitted.
inline std::map<PairCategory, std::vector<LogMse>> logmse_stratified(const std::vector<Matrix>& estimates,
                                                                     const Matrix& truth,
                                                                     const std::vector<PairCategory>& categories) {
  std::map<PairCategory, std::vector<LogMse>> out;
  for (PairCategory c : all_categories()) {
    if (std::find(categories.begin(), categories.end(), c) == categories.end()) continue;
    auto& v = out[c];
    for (const auto& est : estimates) v.push_back(logmse_category(est, truth, categories, c));
  }
  return out;
}

}  // namespace gptem::summary

// Benchmark output: per-replicate and aggregate CSV, JSON, text tables.
#pragma once

#include "gptem/simstudy/benchmark.hpp"

#include <cstdio>
#include <iomanip>
#include <ostream>

namespace gptem::simstudy {

inline std::string format_value(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v < 0 ? "exact" : "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kMetricsHeader = "replicate,model,criterion,category,metric,value\n";

inline void write_row(std::ostream& out, const std::string& rep, const std::string& model, const std::string& criterion,
                      const std::string& category, const std::string& metric, const std::string& value) {
  out << rep << ',' << model << ',' << criterion << ',' << category << ',' << metric << ',' << value << '\n';
}

/// One row per replicate and metric within each rule. Failed replicates get a single
/// "failed" row.
inline void write_metrics_csv(std::ostream& out, const std::vector<ReplicateResult>& results) {
  out << kMetricsHeader;
  for (const auto& r : results) {
    const std::string idx = std::to_string(r.index);
    if (!r.ok) {
      write_row(out, idx, "NA", "NA", "all", "failed", "1");
      continue;
    }
    for (const auto& c : r.criteria) {
      for (const auto& m : metric_names()) {
        const auto v = metric_value(c.metrics, m);
        write_row(out, idx, c.model, c.criterion, "all", m, v ? format_value(*v) : "NA");
      }
      for (const auto& [cat, acc] : c.category_accuracy)
        write_row(out, idx, c.model, c.criterion, summary::to_string(cat), "pair_accuracy", format_value(acc));
      write_row(out, idx, c.model, c.criterion, "Overall", "pair_accuracy", format_value(c.overall_accuracy));
    }
    for (const auto& [quantity, table] : {std::pair{"K_hat", &r.logmse_precision}, std::pair{"R_hat", &r.logmse_correlation}})
      for (const auto& [model, by_cat] : *table)
        for (const auto& [cat, v] : by_cat) write_row(out, idx, model, quantity, summary::to_string(cat), "logmse", format_value(v.value));
  }
}

/// Aggregate rows with replicate = "mean", "sd" or "n".
inline void write_aggregate_csv(std::ostream& out, const BenchmarkReport& rep) {
  out << kMetricsHeader;
  for (const auto& c : rep.criteria) {
    const auto& model = rep.criterion_model.at(c);
    for (const auto& m : metric_names()) {
      const auto& s = rep.metrics.at(c).at(m);
      write_row(out, "mean", model, c, "all", m, format_value(s.mean));
      write_row(out, "sd", model, c, "all", m, format_value(s.sd));
      write_row(out, "n", model, c, "all", m, std::to_string(s.n));
    }
    for (const auto& [cat, s] : rep.category_accuracy.at(c)) {
      write_row(out, "mean", model, c, cat, "pair_accuracy", format_value(s.mean));
      write_row(out, "sd", model, c, cat, "pair_accuracy", format_value(s.sd));
    }
  }
  for (const auto& [quantity, label] : {std::pair{"precision", "K_hat"}, std::pair{"correlation", "R_hat"}}) {
    for (const auto& [model, by_cat] : rep.logmse.at(quantity))
      for (const auto& [cat, s] : by_cat) {
        write_row(out, "mean", model, label, cat, "logmse", format_value(s.mean));
        write_row(out, "mean", model, label, cat, "logmse_finite", format_value(s.finite.mean));
        write_row(out, "sd", model, label, cat, "logmse_finite", format_value(s.finite.sd));
        write_row(out, "n", model, label, cat, "logmse_exact", std::to_string(s.exact_count));
      }
  }
}

inline nlohmann::json mean_sd_json(const MeanSd& s) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"mean", num(s.mean)}, {"sd", num(s.sd)}, {"n", s.n}};
}

inline nlohmann::json report_to_json(const BenchmarkReport& rep, const ScenarioSpec& spec) {
  nlohmann::json j;
  j["scenario"] = spec.to_json();
  j["n_replicates"] = rep.n_replicates;
  j["n_succeeded"] = rep.n_succeeded;
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& [i, e] : rep.failures) fails.push_back({{"replicate", i}, {"error", e}});
  j["failures"] = fails;
  j["graph_frequency"] = summary::matrix_to_json(rep.graph_frequency);
  j["mean_edge_inclusion"] = summary::matrix_to_json(rep.mean_inclusion);
  for (const auto& c : rep.criteria) {
    nlohmann::json m;
    for (const auto& [name, s] : rep.metrics.at(c)) m[name] = mean_sd_json(s);
    nlohmann::json a;
    for (const auto& [cat, s] : rep.category_accuracy.at(c)) a[cat] = mean_sd_json(s);
    j["criteria"][c] = {{"model", rep.criterion_model.at(c)}, {"metrics", m}, {"pair_accuracy", a}};
  }
  j["category_sizes"] = rep.category_sizes;
  for (const auto& [quantity, by_model] : rep.logmse)
    for (const auto& [model, by_cat] : by_model)
      for (const auto& [cat, s] : by_cat) {
        j["logmse"][quantity][model][cat] = {{"mean", format_value(s.mean)},
                                             {"finite", mean_sd_json(s.finite)},
                                             {"exact_count", s.exact_count}};
      }
  j["ci_i_precision_win_rate"] = std::isnan(rep.ci_i_precision_win_rate) ? nlohmann::json(nullptr)
                                                                         : nlohmann::json(rep.ci_i_precision_win_rate);
  j["min_ess"] = mean_sd_json(rep.min_ess);
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : directional_checks(rep)) checks.push_back({{"check", c.name}, {"passed", c.passed}});
  j["directional_checks"] = checks;
  return j;
}

inline std::string fixed(double v, int digits = 2) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v < 0 ? "exact" : "inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

/// Plain-text tables: decision-rule metrics, pairwise accuracy by category,
/// and category-stratified log MSE.
inline void write_text_report(std::ostream& out, const BenchmarkReport& rep) {
  out << "Scenario " << rep.scenario << ": " << rep.n_succeeded << " of " << rep.n_replicates
      << " replicates succeeded\n\n";
  out << "Decision-rule performance, mean (sd)\n";
  out << std::left << std::setw(10) << "model" << std::setw(8) << "rule";
  for (const auto& m : metric_names()) out << std::setw(16) << m;
  out << '\n';
  for (const auto& c : rep.criteria) {
    out << std::setw(10) << rep.criterion_model.at(c) << std::setw(8) << c;
    for (const auto& m : metric_names()) {
      const auto& s = rep.metrics.at(c).at(m);
      out << std::setw(16) << (fixed(s.mean) + " (" + fixed(s.sd, 3) + ")");
    }
    out << '\n';
  }
  out << "\nPairwise accuracy by category, mean (sd)\n";
  out << std::setw(10) << "model" << std::setw(8) << "rule" << std::setw(10) << "category" << std::setw(5) << "n"
      << "accuracy\n";
  for (const char* cat : {"CD-D", "CI-D", "CI-I", "Overall"}) {
    if (!rep.category_sizes.count(cat)) continue;
    for (const auto& c : rep.criteria) {
      const auto& s = rep.category_accuracy.at(c).at(cat);
      out << std::setw(10) << rep.criterion_model.at(c) << std::setw(8) << c << std::setw(10) << cat << std::setw(5)
          << rep.category_sizes.at(cat) << fixed(s.mean) << " (" << fixed(s.sd, 3) << ")\n";
    }
  }
  out << "\nLog mean squared error by category, mean over replicates\n";
  out << std::setw(13) << "quantity" << std::setw(11) << "model" << std::setw(10) << "category" << "logMSE\n";
  for (const auto& [quantity, by_model] : rep.logmse)
    for (const auto& [model, by_cat] : by_model)
      for (const auto& [cat, s] : by_cat) {
        out << std::setw(13) << quantity << std::setw(11) << model << std::setw(10) << cat << fixed(s.mean, 3);
        if (s.exact_count > 0) out << " (" << s.exact_count << " exact; finite mean " << fixed(s.finite.mean, 3) << ")";
        out << '\n';
      }
  out << "\nMonte Carlo graph frequency\n";
  for (Eigen::Index i = 0; i < rep.graph_frequency.rows(); ++i) {
    for (Eigen::Index j = 0; j < rep.graph_frequency.cols(); ++j) out << std::right << std::setw(6) << fixed(rep.graph_frequency(i, j));
    out << '\n';
  }
  out << std::left;
  for (const auto& c : directional_checks(rep)) out << (c.passed ? "[ok] " : "[differs] ") << c.name << '\n';
}

}  // namespace gptem::simstudy

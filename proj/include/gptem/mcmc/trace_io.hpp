// Trace serialization: one CSV row per stored sample plus a JSON sidecar.
#pragma once

#include "gptem/core.hpp"
#include "gptem/mcmc/model.hpp"
#include "gptem/phylo/traits.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace gptem::mcmc {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> trace_header(int p) {
  std::vector<std::string> cols{"iteration"};
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) cols.push_back("g_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) cols.push_back("k_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  return cols;
}

inline void write_trace_csv(std::ostream& out, const ChainTrace& trace) {
  const auto header = trace_header(trace.p);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& s : trace.samples) {
    out << s.iteration;
    for (auto g : s.graph) out << ',' << static_cast<int>(g);
    for (Eigen::Index k = 0; k < s.precision_upper.size(); ++k) out << ',' << format_double(s.precision_upper(k));
    out << '\n';
  }
}

inline nlohmann::json trace_metadata(const ChainTrace& trace, const ModelSpec* spec = nullptr) {
  nlohmann::json j;
  j["tool_version"] = GPTEM_VERSION;
  j["seed"] = trace.seed;
  j["variant"] = to_string(trace.variant);
  j["p"] = trace.p;
  j["n_taxa"] = trace.n_taxa;
  j["n_iterations"] = trace.n_iterations;
  j["warmup"] = trace.warmup;
  j["thin"] = trace.thin;
  j["mc_samples"] = trace.mc_samples;
  j["stored_samples"] = trace.samples.size();
  j["spec_hash"] = trace.spec_hash;
  j["delta_hash"] = trace.delta_hash;
  j["graph_moves_proposed"] = trace.proposed_graph_moves;
  j["graph_moves_accepted"] = trace.accepted_graph_moves;
  j["trait_labels"] = trace.trait_labels;
  if (spec) j["spec"] = spec->to_json();
  return j;
}

inline void write_trace(const std::string& csv_path, const std::string& json_path, const ChainTrace& trace,
                        const ModelSpec* spec = nullptr) {
  std::ofstream csv(csv_path);
  if (!csv) throw InputError("cannot write trace file '" + csv_path + "'");
  write_trace_csv(csv, trace);
  std::ofstream js(json_path);
  if (!js) throw InputError("cannot write trace metadata '" + json_path + "'");
  js << trace_metadata(trace, spec).dump(2) << '\n';
}

/// Reads a trace back from its CSV and JSON sidecar.
inline ChainTrace read_trace(const std::string& csv_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw InputError("cannot open trace metadata '" + json_path + "'");
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed trace metadata '" + json_path + "': " + e.what());
  }
  ChainTrace trace;
  try {
    trace.p = meta.at("p").get<int>();
    trace.variant = parse_variant(meta.at("variant").get<std::string>());
    trace.n_taxa = meta.at("n_taxa").get<int>();
    trace.n_iterations = meta.at("n_iterations").get<int>();
    trace.warmup = meta.at("warmup").get<int>();
    trace.thin = meta.at("thin").get<int>();
    trace.mc_samples = meta.value("mc_samples", 0);
    trace.seed = meta.at("seed").get<std::uint64_t>();
    trace.spec_hash = meta.value("spec_hash", "");
    trace.delta_hash = meta.value("delta_hash", "");
    trace.proposed_graph_moves = meta.value("graph_moves_proposed", 0L);
    trace.accepted_graph_moves = meta.value("graph_moves_accepted", 0L);
    trace.trait_labels = meta.value("trait_labels", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw InputError("incomplete trace metadata '" + json_path + "': " + e.what());
  }
  if (trace.p < 1) throw InputError("trace metadata has invalid p");

  std::ifstream csv(csv_path);
  if (!csv) throw InputError("cannot open trace file '" + csv_path + "'");
  std::string line;
  if (!std::getline(csv, line)) throw InputError("trace file '" + csv_path + "' is empty");
  const auto expected = trace_header(trace.p);
  if (phylo::detail::split_csv_line(line) != expected) throw InputError("trace header does not match metadata p");

  const int slots = trace.p * (trace.p - 1) / 2;
  const int upper = trace.p * (trace.p + 1) / 2;
  int line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = phylo::detail::split_csv_line(line);
    if (cells.size() != expected.size()) {
      throw InputError("trace line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " columns, expected " + std::to_string(expected.size()));
    }
    TraceSample s;
    try {
      s.iteration = std::stol(cells[0]);
      s.graph.resize(slots);
      for (int k = 0; k < slots; ++k) {
        const int v = std::stoi(cells[1 + k]);
        if (v != 0 && v != 1) throw InputError("edge indicator must be 0 or 1");
        s.graph[k] = static_cast<std::uint8_t>(v);
      }
      s.precision_upper.resize(upper);
      for (int k = 0; k < upper; ++k) s.precision_upper(k) = std::stod(cells[1 + slots + k]);
    } catch (const std::logic_error&) {
      throw InputError("trace line " + std::to_string(line_no) + " has a non-numeric cell");
    }
    trace.samples.push_back(std::move(s));
  }
  return trace;
}

}  // namespace gptem::mcmc

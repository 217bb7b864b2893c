// Continuous trait tables and their CSV representation.
#pragma once

#include "gptem/core.hpp"
#include "gptem/phylo/tree.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gptem::phylo {

/// Conjugate normal prior on the root value: mean and prior sample size.
struct RootPrior {
  Vector mean;
  double sample_size = 1.0;

  static RootPrior standard(int p) { return {Vector::Zero(p), 1.0}; }

  void validate(int p) const {
    if (mean.size() != p) {
      throw InputError("root prior mean has length " + std::to_string(mean.size()) +
                       ", expected " + std::to_string(p));
    }
    if (!(sample_size > 0.0) || !std::isfinite(sample_size)) {
      throw InputError("root prior sample size must be positive");
    }
  }
};

/// N x p table of tip observations. Rows follow the tip order of the tree
/// the table is used with (see align_to_tree).
struct TraitMatrix {
  Matrix values;
  std::vector<std::string> taxon_labels;
  std::vector<std::string> trait_labels;

  int n_taxa() const { return static_cast<int>(values.rows()); }
  int n_traits() const { return static_cast<int>(values.cols()); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Reads a trait CSV: header row (first cell names the taxon column, the
/// rest are trait names), then one row per taxon. Missing or non-numeric
/// cells are rejected.
inline TraitMatrix parse_trait_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.size() < 2) throw InputError("trait CSV: header needs a taxon column and at least one trait");
  TraitMatrix out;
  for (std::size_t j = 1; j < header.size(); ++j) out.trait_labels.push_back(detail::trim(header[j]));
  const std::size_t p = out.trait_labels.size();

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != p + 1) {
      throw InputError("trait CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(p + 1) + " cells, found " + std::to_string(cells.size()));
    }
    out.taxon_labels.push_back(detail::trim(cells[0]));
    if (out.taxon_labels.back().empty()) {
      throw InputError("trait CSV line " + std::to_string(line_no) + ": empty taxon label");
    }
    std::vector<double> row(p);
    for (std::size_t j = 0; j < p; ++j) {
      const std::string cell = detail::trim(cells[j + 1]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw InputError("trait CSV line " + std::to_string(line_no) + ": missing or non-numeric value for trait '" +
                         out.trait_labels[j] + "'");
      }
      row[j] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("trait CSV: no data rows");
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

inline TraitMatrix read_trait_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trait file: " + path);
  return parse_trait_csv(in);
}

inline void write_trait_csv(std::ostream& out, const TraitMatrix& traits) {
  out << "taxon";
  for (const auto& t : traits.trait_labels) out << ',' << detail::csv_escape(t);
  out << '\n';
  char buf[32];
  for (int i = 0; i < traits.n_taxa(); ++i) {
    out << detail::csv_escape(traits.taxon_labels[static_cast<std::size_t>(i)]);
    for (int j = 0; j < traits.n_traits(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", traits.values(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

/// Reorders rows so row i holds tip i of `tree`. Labels must match exactly
/// (case-sensitive) in both directions.
inline TraitMatrix align_to_tree(const TraitMatrix& traits, const PhyloTree& tree) {
  std::map<std::string, int> row_of;
  for (int i = 0; i < traits.n_taxa(); ++i) {
    if (!row_of.emplace(traits.taxon_labels[static_cast<std::size_t>(i)], i).second) {
      throw InputError("duplicate taxon in trait table: " + traits.taxon_labels[static_cast<std::size_t>(i)]);
    }
  }
  if (traits.n_taxa() != tree.n_tips()) {
    throw InputError("trait table has " + std::to_string(traits.n_taxa()) + " taxa but tree has " +
                     std::to_string(tree.n_tips()) + " tips");
  }
  TraitMatrix out;
  out.trait_labels = traits.trait_labels;
  out.values.resize(tree.n_tips(), traits.n_traits());
  for (int tip = 0; tip < tree.n_tips(); ++tip) {
    const auto& label = tree.tip_labels()[static_cast<std::size_t>(tip)];
    auto it = row_of.find(label);
    if (it == row_of.end()) throw InputError("tip '" + label + "' has no row in the trait table");
    out.values.row(tip) = traits.values.row(it->second);
    out.taxon_labels.push_back(label);
  }
  return out;
}

}  // namespace gptem::phylo

// Rooted bifurcating phylogenies with Newick I/O and Yule simulation.
#pragma once

#include "gptem/core.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace gptem::phylo {

/// Rooted, strictly bifurcating tree with branch lengths.
///
/// Node numbering: tips are 0..N-1 in left-to-right order, internal nodes
/// follow in post-order, and the root is the last node (2N-2). Every child
/// has a smaller index than its parent, so iterating indices upwards is a
/// post-order traversal and downwards is a pre-order traversal.
class PhyloTree {
 public:
  static constexpr int kNoNode = -1;

  /// Loose node record used to assemble a tree before renumbering.
  struct Draft {
    std::vector<int> children;
    double length = 0.0;
    bool has_length = false;
    std::string label;
  };

  /// Builds a tree from draft nodes rooted at `root`. Validates arity,
  /// branch lengths and tip labels.
  static PhyloTree from_drafts(const std::vector<Draft>& drafts, int root) {
    PhyloTree tree;
    std::size_t n_tips = 0;
    for (const auto& d : drafts) {
      if (d.children.empty()) ++n_tips;
    }
    if (n_tips < 2) throw InputError("tree must have at least two tips");

    const std::size_t n_nodes = 2 * n_tips - 1;
    tree.parent_.assign(n_nodes, kNoNode);
    tree.children_.assign(n_nodes, {kNoNode, kNoNode});
    tree.length_.assign(n_nodes, 0.0);
    tree.tip_labels_.resize(n_tips);

    int next_tip = 0;
    int next_internal = static_cast<int>(n_tips);
    // Iterative post-order so deep caterpillars do not blow the stack.
    struct Frame {
      int draft;
      std::size_t next_child;
      std::array<int, 2> assigned;
    };
    std::vector<Frame> stack{{root, 0, {kNoNode, kNoNode}}};
    std::vector<char> seen(drafts.size(), 0);
    int last_assigned = kNoNode;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const Draft& d = drafts[static_cast<std::size_t>(f.draft)];
      if (f.next_child == 0 && seen[static_cast<std::size_t>(f.draft)]++) {
        throw InputError("tree contains a cycle or shared node");
      }
      if (!d.children.empty() && d.children.size() != 2) {
        throw InputError("node with " + std::to_string(d.children.size()) +
                         " children; only bifurcating trees are supported");
      }
      if (f.next_child > 0) f.assigned[f.next_child - 1] = last_assigned;
      if (f.next_child < d.children.size()) {
        const int child = d.children[f.next_child++];
        stack.push_back({child, 0, {kNoNode, kNoNode}});
        continue;
      }
      int id;
      if (d.children.empty()) {
        id = next_tip++;
        if (d.label.empty()) throw InputError("tip without a label");
        tree.tip_labels_[static_cast<std::size_t>(id)] = d.label;
      } else {
        id = next_internal++;
        tree.children_[static_cast<std::size_t>(id)] = f.assigned;
        for (int c : f.assigned) tree.parent_[static_cast<std::size_t>(c)] = id;
      }
      if (f.draft != root) {
        if (!d.has_length) throw InputError("missing branch length on a non-root edge");
        if (!(d.length >= 0.0) || !std::isfinite(d.length)) {
          throw InputError("negative or non-finite branch length");
        }
        tree.length_[static_cast<std::size_t>(id)] = d.length;
      }
      last_assigned = id;
      stack.pop_back();
    }
    if (static_cast<std::size_t>(next_internal) != n_nodes) {
      throw InputError("tree is not connected");
    }
    std::set<std::string> labels(tree.tip_labels_.begin(), tree.tip_labels_.end());
    if (labels.size() != n_tips) throw InputError("duplicate tip labels");
    bool any_positive = false;
    for (double t : tree.length_) any_positive = any_positive || t > 0.0;
    if (!any_positive) throw InputError("all branch lengths are zero");
    return tree;
  }

  int n_tips() const { return static_cast<int>(tip_labels_.size()); }
  int n_nodes() const { return static_cast<int>(parent_.size()); }
  int root() const { return n_nodes() - 1; }
  bool is_tip(int node) const { return node < n_tips(); }

  int parent(int node) const { return parent_[static_cast<std::size_t>(node)]; }
  const std::array<int, 2>& children(int node) const {
    return children_[static_cast<std::size_t>(node)];
  }
  /// Length of the branch above `node`; zero for the root.
  double branch_length(int node) const { return length_[static_cast<std::size_t>(node)]; }
  const std::vector<std::string>& tip_labels() const { return tip_labels_; }

  void set_tip_labels(std::vector<std::string> labels) {
    if (labels.size() != tip_labels_.size()) throw InputError("set_tip_labels: wrong label count");
    if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size()) {
      throw InputError("duplicate tip labels");
    }
    tip_labels_ = std::move(labels);
  }

  /// Distance from the root to every node.
  std::vector<double> depths() const {
    std::vector<double> d(parent_.size(), 0.0);
    for (int v = root() - 1; v >= 0; --v) d[static_cast<std::size_t>(v)] = d[static_cast<std::size_t>(parent(v))] + branch_length(v);
    return d;
  }

  bool operator==(const PhyloTree&) const = default;

 private:
  std::vector<int> parent_;
  std::vector<std::array<int, 2>> children_;
  std::vector<double> length_;
  std::vector<std::string> tip_labels_;
};

namespace detail {

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  PhyloTree parse() {
    skip_ws();
    const int root = parse_subtree();
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != ';') fail("expected ';' at end of tree");
    ++pos_;
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after ';'");
    return PhyloTree::from_drafts(drafts_, root);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InputError("newick: " + what + " (at offset " + std::to_string(pos_) + ")");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  int parse_subtree() {
    const int id = static_cast<int>(drafts_.size());
    drafts_.emplace_back();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      while (true) {
        const int child = parse_subtree();
        drafts_[static_cast<std::size_t>(id)].children.push_back(child);
        skip_ws();
        if (pos_ >= text_.size()) fail("unterminated '('");
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
    }
    skip_ws();
    drafts_[static_cast<std::size_t>(id)].label = parse_label();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      skip_ws();
      drafts_[static_cast<std::size_t>(id)].length = parse_number();
      drafts_[static_cast<std::size_t>(id)].has_length = true;
    }
    return id;
  }

  std::string parse_label() {
    if (pos_ < text_.size() && text_[pos_] == '\'') {
      std::string out;
      ++pos_;
      while (true) {
        if (pos_ >= text_.size()) fail("unterminated quoted label");
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            out.push_back('\'');
            pos_ += 2;
            continue;
          }
          ++pos_;
          return out;
        }
        out.push_back(text_[pos_++]);
      }
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' ||
          std::isspace(static_cast<unsigned char>(c))) {
        break;
      }
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  double parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == '-' || text_[pos_] == '+' || text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
    }
    double value = 0.0;
    const auto* first = text_.data() + start;
    const auto* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || start == pos_) fail("malformed branch length");
    return value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<PhyloTree::Draft> drafts_;
};

inline std::string format_length(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline bool needs_quotes(const std::string& label) {
  for (char c : label) {
    if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '\'' || c == '[' ||
        c == ']' || std::isspace(static_cast<unsigned char>(c))) {
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Parses a single rooted Newick tree. Every non-root edge needs a length;
/// the root's optional length is ignored. Tip order is left-to-right.
inline PhyloTree parse_newick(std::string_view text) { return detail::NewickParser(text).parse(); }

/// Serializes with round-trip precision branch lengths.
inline std::string to_newick(const PhyloTree& tree) {
  std::string out;
  auto write = [&](auto&& self, int node) -> void {
    if (tree.is_tip(node)) {
      const auto& label = tree.tip_labels()[static_cast<std::size_t>(node)];
      if (detail::needs_quotes(label)) {
        out.push_back('\'');
        for (char c : label) {
          if (c == '\'') out.push_back('\'');
          out.push_back(c);
        }
        out.push_back('\'');
      } else {
        out += label;
      }
    } else {
      out.push_back('(');
      self(self, tree.children(node)[0]);
      out.push_back(',');
      self(self, tree.children(node)[1]);
      out.push_back(')');
    }
    if (node != tree.root()) {
      out.push_back(':');
      out += detail::format_length(tree.branch_length(node));
    }
  };
  write(write, tree.root());
  out.push_back(';');
  return out;
}

/// Pure-birth (Yule) tree with unit speciation rate, grown from a root split
/// until `n_tips` lineages exist, followed by one more exponential waiting
/// time so no tip branch has zero length. Tips are labelled t1..tN in
/// left-to-right order.
inline PhyloTree simulate_tree(int n_tips, std::uint64_t seed) {
  if (n_tips < 2) throw InputError("simulate_tree: n_tips must be at least 2");
  Rng rng(seed);
  std::vector<PhyloTree::Draft> drafts(3);
  drafts[0].children = {1, 2};
  std::vector<int> active{1, 2};
  auto grow = [&](double dt) {
    for (int v : active) {
      drafts[static_cast<std::size_t>(v)].length += dt;
      drafts[static_cast<std::size_t>(v)].has_length = true;
    }
  };
  while (static_cast<int>(active.size()) < n_tips) {
    std::exponential_distribution<double> wait(static_cast<double>(active.size()));
    grow(wait(rng));
    std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
    const std::size_t slot = pick(rng);
    const int parent = active[slot];
    const int a = static_cast<int>(drafts.size());
    drafts.emplace_back();
    drafts.emplace_back();
    drafts[static_cast<std::size_t>(parent)].children = {a, a + 1};
    active[slot] = a;
    active.push_back(a + 1);
  }
  std::exponential_distribution<double> last(static_cast<double>(active.size()));
  grow(last(rng));
  // Temporary labels are unique placeholders; final labels follow tip order.
  for (int v : active) drafts[static_cast<std::size_t>(v)].label = "_" + std::to_string(v);
  PhyloTree tree = PhyloTree::from_drafts(drafts, 0);
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(n_tips));
  for (int i = 1; i <= n_tips; ++i) labels.push_back("t" + std::to_string(i));
  tree.set_tip_labels(std::move(labels));
  return tree;
}

}  // namespace gptem::phylo

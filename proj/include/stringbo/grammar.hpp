#pragma once

// Context-free grammars, discounted random derivations and parse-tree
// genetic operators.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stringbo/rng.hpp"
#include "stringbo/tokens.hpp"

namespace stringbo {

struct Symbol {
  std::string name;
  bool terminal = false;
  bool operator==(const Symbol&) const = default;
};

struct Rule {
  std::string lhs;
  std::vector<Symbol> rhs;
};

/// Derivation tree. Leaves carry a terminal token and rule -1; internal
/// nodes carry a nonterminal and the index of the grammar rule applied.
struct ParseTree {
  std::string symbol;
  int rule = -1;
  std::vector<ParseTree> children;

  bool is_leaf() const { return rule < 0; }
  bool operator==(const ParseTree&) const = default;

  /// Number of internal levels; a node whose rule has only terminals is 1.
  int height() const {
    if (is_leaf()) return 0;
    int h = 0;
    for (const auto& c : children) h = std::max(h, c.height());
    return h + 1;
  }
};

inline void derive_into(const ParseTree& t, Str& out) {
  if (t.is_leaf()) {
    out.push_back(t.symbol);
    return;
  }
  for (const auto& c : t.children) derive_into(c, out);
}

/// Terminal leaves in order.
inline Str derive(const ParseTree& t) {
  Str out;
  derive_into(t, out);
  return out;
}

class Grammar {
 public:
  Grammar() = default;

  /// Rules in order; the first rule's lhs is the start symbol.
  explicit Grammar(std::vector<Rule> rules) : rules_(std::move(rules)) {
    if (rules_.empty()) throw Error("grammar has no rules");
    start_ = rules_.front().lhs;
    for (std::size_t r = 0; r < rules_.size(); ++r) {
      if (!by_lhs_.count(rules_[r].lhs)) nonterminals_.push_back(rules_[r].lhs);
      by_lhs_[rules_[r].lhs].push_back(r);
    }
    for (const auto& rule : rules_) {
      for (const auto& s : rule.rhs) {
        if (s.terminal) {
          if (s.name.empty()) throw Error("empty terminal in rule for " + rule.lhs);
          if (std::find(terminals_.begin(), terminals_.end(), s.name) == terminals_.end())
            terminals_.push_back(s.name);
        } else if (!by_lhs_.count(s.name)) {
          throw Error("unknown symbol '" + s.name + "' in rule for " + rule.lhs);
        }
      }
    }
    compute_heights();
    check_reachable();
  }

  const std::string& start() const { return start_; }
  const std::vector<Rule>& rules() const { return rules_; }
  const Rule& rule(std::size_t r) const { return rules_.at(r); }
  const std::vector<std::string>& nonterminals() const { return nonterminals_; }
  const std::vector<std::string>& terminals() const { return terminals_; }
  bool is_nonterminal(const std::string& s) const { return by_lhs_.count(s) != 0; }

  const std::vector<std::size_t>& rules_for(const std::string& nt) const {
    auto it = by_lhs_.find(nt);
    if (it == by_lhs_.end()) throw Error("unknown nonterminal '" + nt + "'");
    return it->second;
  }

  /// Height of the shortest complete subtree starting with rule r.
  int rule_height(std::size_t r) const { return rule_height_.at(r); }
  int min_height(const std::string& nt) const { return nt_height_.at(nt); }

  std::string to_text() const {
    std::string out;
    for (const auto& nt : nonterminals_) {
      out += nt + " ->";
      bool first = true;
      for (auto r : rules_for(nt)) {
        out += first ? " " : " | ";
        first = false;
        for (std::size_t i = 0; i < rules_[r].rhs.size(); ++i) {
          const auto& s = rules_[r].rhs[i];
          if (i) out += ' ';
          out += s.terminal ? "'" + s.name + "'" : s.name;
        }
      }
      out += '\n';
    }
    return out;
  }

 private:
  void compute_heights() {
    constexpr int inf = std::numeric_limits<int>::max();
    rule_height_.assign(rules_.size(), inf);
    for (const auto& nt : nonterminals_) nt_height_[nt] = inf;
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t r = 0; r < rules_.size(); ++r) {
        int h = 1;
        for (const auto& s : rules_[r].rhs) {
          if (s.terminal) continue;
          const int c = nt_height_[s.name];
          if (c == inf) {
            h = inf;
            break;
          }
          h = std::max(h, c + 1);
        }
        if (h < rule_height_[r]) {
          rule_height_[r] = h;
          changed = true;
        }
        auto& nh = nt_height_[rules_[r].lhs];
        if (h < nh) {
          nh = h;
          changed = true;
        }
      }
    }
    for (const auto& nt : nonterminals_)
      if (nt_height_[nt] == inf) throw Error("nonterminal '" + nt + "' is unproductive");
  }

  void check_reachable() const {
    std::vector<std::string> stack{start_};
    std::map<std::string, bool> seen{{start_, true}};
    while (!stack.empty()) {
      const auto nt = stack.back();
      stack.pop_back();
      for (auto r : rules_for(nt))
        for (const auto& s : rules_[r].rhs)
          if (!s.terminal && !seen[s.name]) {
            seen[s.name] = true;
            stack.push_back(s.name);
          }
    }
    for (const auto& nt : nonterminals_)
      if (!seen.count(nt)) throw Error("nonterminal '" + nt + "' is unreachable from " + start_);
  }

  std::vector<Rule> rules_;
  std::string start_;
  std::vector<std::string> nonterminals_, terminals_;
  std::map<std::string, std::vector<std::size_t>> by_lhs_;
  std::vector<int> rule_height_;
  std::map<std::string, int> nt_height_;
};

namespace detail {

// Splits a rhs into symbols; 'x' and `x' are terminals.
inline std::vector<std::vector<Symbol>> parse_alternatives(std::string_view text, int line) {
  std::vector<std::vector<Symbol>> alts(1);
  std::size_t i = 0;
  auto fail = [&](const std::string& what) {
    throw Error("grammar line " + std::to_string(line) + ": " + what);
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '|') {
      if (alts.back().empty()) fail("empty alternative");
      alts.emplace_back();
      ++i;
    } else if (c == '\'' || c == '`') {
      const auto close = text.find('\'', i + 1);
      if (close == std::string_view::npos) fail("unterminated terminal");
      alts.back().push_back({std::string(text.substr(i + 1, close - i - 1)), true});
      i = close + 1;
    } else {
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
             text[j] != '|' && text[j] != '\'' && text[j] != '`')
        ++j;
      alts.back().push_back({std::string(text.substr(i, j - i)), false});
      i = j;
    }
  }
  if (alts.back().empty()) fail("empty alternative");
  return alts;
}

}  // namespace detail

/// Reads `LHS -> alt1 | alt2` lines. Terminals are quoted 'x' or `x'; other
/// words are nonterminals. Blank lines and '#' comments are skipped.
inline Grammar load_grammar(std::string_view text) {
  std::vector<Rule> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto arrow = line.find("->");
    if (arrow == std::string::npos) throw Error("grammar line " + std::to_string(number) + ": missing '->'");
    std::string lhs = line.substr(0, arrow);
    lhs.erase(0, lhs.find_first_not_of(" \t"));
    lhs.erase(lhs.find_last_not_of(" \t") + 1);
    if (lhs.empty() || lhs.find_first_of(" \t'`|") != std::string::npos)
      throw Error("grammar line " + std::to_string(number) + ": bad left-hand side");
    std::string_view rhs(line);
    rhs.remove_prefix(arrow + 2);
    while (!rhs.empty() && (rhs.back() == '\r' || rhs.back() == ' ')) rhs.remove_suffix(1);
    for (auto& alt : detail::parse_alternatives(rhs, number)) rules.push_back({lhs, std::move(alt)});
  }
  return Grammar(std::move(rules));
}

/// Arithmetic grammar over x used for symbolic regression.
inline const Grammar& builtin_expression_grammar() {
  static const Grammar g = load_grammar(
      "S -> S '+' T\n"
      "S -> S '*' T\n"
      "S -> S '/' T\n"
      "S -> T\n"
      "T -> '(' S ')'\n"
      "T -> 'sin(' S ')'\n"
      "T -> 'exp(' S ')'\n"
      "T -> 'x'\n"
      "T -> '1'\n"
      "T -> '2'\n"
      "T -> '3'\n");
  return g;
}

struct SamplerConfig {
  double discount = 0.1;
  int max_depth = 30;

  void validate() const {
    if (!(discount > 0.0 && discount <= 1.0)) throw Error("discount must lie in (0, 1]");
    if (max_depth < 1) throw Error("max_depth must be at least 1");
  }
};

/// Rule-selection probabilities for a nonterminal at `depth` (root 0), given
/// how often each rule was applied on the path from the root. Rules whose
/// shortest completion would exceed max_depth get probability 0.
inline std::vector<double> rule_probabilities(const Grammar& g, const std::string& nt,
                                              const std::vector<int>& branch_counts, int depth,
                                              const SamplerConfig& cfg) {
  const auto& candidates = g.rules_for(nt);
  std::vector<double> w(candidates.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto r = candidates[i];
    if (depth + g.rule_height(r) > cfg.max_depth) continue;
    w[i] = std::pow(cfg.discount, branch_counts[r]);
    total += w[i];
  }
  if (total == 0.0)
    throw Error("no rule for '" + nt + "' fits within max_depth " + std::to_string(cfg.max_depth));
  for (auto& x : w) x /= total;
  return w;
}

namespace detail {

inline ParseTree grow(const Grammar& g, const std::string& nt, std::vector<int>& counts, int depth,
                      const SamplerConfig& cfg, Rng& rng) {
  const auto p = rule_probabilities(g, nt, counts, depth, cfg);
  const double u = rng.uniform();
  std::size_t pick = p.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    pick = i;
    acc += p[i];
    if (u < acc) break;
  }
  const auto r = g.rules_for(nt)[pick];
  ParseTree t{nt, static_cast<int>(r), {}};
  ++counts[r];
  for (const auto& s : g.rule(r).rhs) {
    if (s.terminal) t.children.push_back({s.name, -1, {}});
    else t.children.push_back(grow(g, s.name, counts, depth + 1, cfg, rng));
  }
  --counts[r];
  return t;
}

}  // namespace detail

/// Random derivation from the start symbol; rule r is drawn with weight
/// discount^(uses of r on the current root-to-node path).
inline ParseTree sample_tree(const Grammar& g, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> counts(g.rules().size(), 0);
  return detail::grow(g, g.start(), counts, 0, cfg, rng);
}

/// Checks every internal node against the grammar.
inline bool is_valid_tree(const Grammar& g, const ParseTree& t) {
  if (t.is_leaf()) return false;
  if (t.rule < 0 || static_cast<std::size_t>(t.rule) >= g.rules().size()) return false;
  const auto& rule = g.rule(static_cast<std::size_t>(t.rule));
  if (rule.lhs != t.symbol || rule.rhs.size() != t.children.size()) return false;
  for (std::size_t i = 0; i < rule.rhs.size(); ++i) {
    const auto& c = t.children[i];
    if (c.symbol != rule.rhs[i].name) return false;
    if (rule.rhs[i].terminal ? !c.is_leaf() || !c.children.empty() : !is_valid_tree(g, c)) return false;
  }
  return true;
}

namespace detail {

struct NodeRef {
  std::vector<std::size_t> path;  // child indices from the root
  int depth = 0;
};

inline void internal_nodes(const ParseTree& t, std::vector<std::size_t>& path, int depth,
                           std::vector<NodeRef>& out) {
  if (t.is_leaf()) return;
  out.push_back({path, depth});
  for (std::size_t i = 0; i < t.children.size(); ++i) {
    path.push_back(i);
    internal_nodes(t.children[i], path, depth + 1, out);
    path.pop_back();
  }
}

inline std::vector<NodeRef> internal_nodes(const ParseTree& t) {
  std::vector<NodeRef> out;
  std::vector<std::size_t> path;
  internal_nodes(t, path, 0, out);
  return out;
}

inline ParseTree& at(ParseTree& t, const std::vector<std::size_t>& path) {
  ParseTree* n = &t;
  for (auto i : path) n = &n->children[i];
  return *n;
}

inline const ParseTree& at(const ParseTree& t, const std::vector<std::size_t>& path) {
  const ParseTree* n = &t;
  for (auto i : path) n = &n->children[i];
  return *n;
}

}  // namespace detail

/// Regrows the subtree under a uniformly chosen internal node from the same
/// nonterminal. The rule counts of the node's ancestors carry into the
/// discount, and the depth budget shrinks with the node's depth.
inline ParseTree mutate_tree(const ParseTree& t, const Grammar& g, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto nodes = detail::internal_nodes(t);
  if (nodes.empty()) throw Error("cannot mutate a bare terminal");
  const auto& ref = nodes[rng.index(nodes.size())];
  std::vector<int> counts(g.rules().size(), 0);
  const ParseTree* n = &t;
  for (auto i : ref.path) {
    ++counts.at(static_cast<std::size_t>(n->rule));
    n = &n->children[i];
  }
  ParseTree out = t;
  detail::at(out, ref.path) = detail::grow(g, n->symbol, counts, ref.depth, cfg, rng);
  return out;
}

struct CrossoverResult {
  ParseTree first, second;
  bool swapped = false;  // false when the parents share no swappable node
};

/// Swaps two subtrees with the same head nonterminal, the pair drawn
/// uniformly from all matching pairs other than root-root. Swapping the roots
/// just exchanges the parents, so when nothing else matches the parents come
/// back unchanged with swapped = false. With max_depth > 0, pairs whose
/// offspring would exceed it are skipped.
inline CrossoverResult crossover_trees(const ParseTree& t1, const ParseTree& t2, Rng& rng,
                                       int max_depth = 0) {
  if (t1.is_leaf() || t2.is_leaf() || t1.symbol != t2.symbol)
    throw Error("crossover parents do not share a start symbol");
  const auto a = detail::internal_nodes(t1);
  const auto b = detail::internal_nodes(t2);
  std::vector<int> ha, hb;
  for (const auto& n : a) ha.push_back(detail::at(t1, n.path).height());
  for (const auto& n : b) hb.push_back(detail::at(t2, n.path).height());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& si = detail::at(t1, a[i].path).symbol;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (detail::at(t2, b[j].path).symbol != si) continue;
      if (max_depth > 0 && (a[i].depth + hb[j] > max_depth || b[j].depth + ha[i] > max_depth)) continue;
      if (i != 0 || j != 0) pairs.emplace_back(i, j);
    }
  }
  if (pairs.empty()) return {t1, t2, false};
  const auto [i, j] = pairs[rng.index(pairs.size())];
  CrossoverResult out{t1, t2, true};
  std::swap(detail::at(out.first, a[i].path), detail::at(out.second, b[j].path));
  return out;
}

namespace detail {

inline void quote_into(const std::string& s, std::string& out) {
  out += '\'';
  for (char c : s) {
    if (c == '\'' || c == '\\') out += '\\';
    out += c;
  }
  out += '\'';
}

}  // namespace detail

/// Parenthesized form: (S#3 (T#7 'x')).
inline std::string serialize(const ParseTree& t) {
  std::string out;
  if (t.is_leaf()) {
    detail::quote_into(t.symbol, out);
    return out;
  }
  out += '(' + t.symbol + '#' + std::to_string(t.rule);
  for (const auto& c : t.children) out += ' ' + serialize(c);
  out += ')';
  return out;
}

namespace detail {

class SexprReader {
 public:
  explicit SexprReader(std::string_view text) : s_(text) {}

  ParseTree read() {
    skip();
    if (i_ >= s_.size()) fail("unexpected end");
    if (s_[i_] == '\'') return {read_quoted(), -1, {}};
    if (s_[i_] != '(') fail("expected '('");
    ++i_;
    const auto start = i_;
    while (i_ < s_.size() && s_[i_] != '#') ++i_;
    if (i_ >= s_.size()) fail("expected '#'");
    ParseTree t{std::string(s_.substr(start, i_ - start)), 0, {}};
    ++i_;
    const auto num = i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
    if (num == i_) fail("expected rule index");
    t.rule = std::stoi(std::string(s_.substr(num, i_ - num)));
    for (;;) {
      skip();
      if (i_ >= s_.size()) fail("unterminated node");
      if (s_[i_] == ')') {
        ++i_;
        return t;
      }
      t.children.push_back(read());
    }
  }

  void finish() {
    skip();
    if (i_ != s_.size()) fail("trailing text");
  }

 private:
  std::string read_quoted() {
    std::string out;
    for (++i_; i_ < s_.size(); ++i_) {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) out += s_[++i_];
      else if (s_[i_] == '\'') {
        ++i_;
        return out;
      } else out += s_[i_];
    }
    fail("unterminated terminal");
  }
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("tree text at offset " + std::to_string(i_) + ": " + what);
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

}  // namespace detail

inline ParseTree parse_tree(std::string_view text) {
  detail::SexprReader r(text);
  auto t = r.read();
  r.finish();
  return t;
}

}  // namespace stringbo

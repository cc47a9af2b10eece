#pragma once

// String spaces: unconstrained, per-position constrained, grammar
// constrained and finite candidate sets.

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "stringbo/grammar.hpp"
#include "stringbo/rng.hpp"
#include "stringbo/tokens.hpp"

namespace stringbo {

/// A string plus, in grammar spaces, the tree that derives it.
struct Candidate {
  Str str;
  std::shared_ptr<const ParseTree> tree;

  Candidate() = default;
  explicit Candidate(Str s) : str(std::move(s)) {}
  explicit Candidate(ParseTree t)
      : str(derive(t)), tree(std::make_shared<const ParseTree>(std::move(t))) {}
};

struct Unconstrained {
  Alphabet alphabet;
  std::size_t min_length = 1;
  std::size_t max_length = 1;
};

struct LocallyConstrained {
  std::vector<std::vector<Token>> allowed;  // per position
  // Optional whole-block moves: blocks[b] lists the permitted contents of
  // positions [b*block_size, (b+1)*block_size). Used for genes written as
  // bases, where a block is a codon.
  std::size_t block_size = 1;
  std::vector<std::vector<Str>> blocks;

  bool block_moves() const { return !blocks.empty(); }
};

struct GrammarConstrained {
  std::shared_ptr<const Grammar> grammar;
  SamplerConfig sampler;
};

struct CandidateSet {
  std::vector<Str> strings;
  std::set<Str> members;
};

class StringSpace {
 public:
  using Kind = std::variant<Unconstrained, LocallyConstrained, GrammarConstrained, CandidateSet>;

  const Kind& kind() const { return kind_; }
  template <class T>
  const T* as() const {
    return std::get_if<T>(&kind_);
  }

  static StringSpace unconstrained(Alphabet alphabet, std::size_t min_length, std::size_t max_length) {
    if (alphabet.size() == 0) throw Error("alphabet must be nonempty");
    if (min_length < 1 || min_length > max_length) throw Error("invalid length range");
    return StringSpace(Unconstrained{std::move(alphabet), min_length, max_length});
  }

  static StringSpace unconstrained(Alphabet alphabet, std::size_t length) {
    return unconstrained(std::move(alphabet), length, length);
  }

  static StringSpace locally_constrained(std::vector<std::vector<Token>> allowed) {
    if (allowed.empty()) throw Error("locally constrained space needs at least one position");
    for (std::size_t i = 0; i < allowed.size(); ++i) {
      if (allowed[i].empty()) throw Error("position " + std::to_string(i) + " allows no tokens");
      std::set<Token> seen;
      for (const auto& t : allowed[i])
        if (t.empty() || !seen.insert(t).second)
          throw Error("position " + std::to_string(i) + " has an empty or repeated token");
    }
    return StringSpace(LocallyConstrained{std::move(allowed), 1, {}});
  }

  /// Per-position sets plus block moves; every block entry must fit the
  /// per-position sets.
  static StringSpace locally_constrained(std::vector<std::vector<Token>> allowed, std::size_t block_size,
                                         std::vector<std::vector<Str>> blocks) {
    auto space = locally_constrained(std::move(allowed));
    auto& lc = std::get<LocallyConstrained>(space.kind_);
    if (block_size == 0 || blocks.size() * block_size != lc.allowed.size())
      throw Error("blocks do not tile the positions");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (blocks[b].empty()) throw Error("block " + std::to_string(b) + " is empty");
      for (const auto& s : blocks[b]) {
        if (s.size() != block_size) throw Error("block entry of wrong size");
        for (std::size_t k = 0; k < block_size; ++k) {
          const auto& opts = lc.allowed[b * block_size + k];
          if (std::find(opts.begin(), opts.end(), s[k]) == opts.end())
            throw Error("block entry outside the position constraints");
        }
      }
    }
    lc.block_size = block_size;
    lc.blocks = std::move(blocks);
    return space;
  }

  static StringSpace grammar_constrained(std::shared_ptr<const Grammar> grammar, SamplerConfig sampler = {}) {
    if (!grammar) throw Error("grammar space needs a grammar");
    sampler.validate();
    if (grammar->min_height(grammar->start()) > sampler.max_depth)
      throw Error("max_depth too small for the grammar");
    return StringSpace(GrammarConstrained{std::move(grammar), sampler});
  }

  /// Deduplicates, keeping first occurrences in order.
  static StringSpace candidate_set(const std::vector<Str>& strings) {
    CandidateSet cs;
    for (const auto& s : strings)
      if (cs.members.insert(s).second) cs.strings.push_back(s);
    if (cs.strings.empty()) throw Error("candidate set is empty");
    return StringSpace(std::move(cs));
  }

  /// Every token that can appear, in a stable order.
  std::vector<Token> symbols() const {
    std::vector<Token> out;
    std::set<Token> seen;
    auto add = [&](const Token& t) {
      if (seen.insert(t).second) out.push_back(t);
    };
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Unconstrained>) {
            for (const auto& t : k.alphabet.tokens()) add(t);
          } else if constexpr (std::is_same_v<T, LocallyConstrained>) {
            for (const auto& pos : k.allowed)
              for (const auto& t : pos) add(t);
          } else if constexpr (std::is_same_v<T, GrammarConstrained>) {
            for (const auto& t : k.grammar->terminals()) add(t);
          } else {
            for (const auto& s : k.strings)
              for (const auto& t : s) add(t);
          }
        },
        kind_);
    return out;
  }

  /// Number of members; nullopt when unbounded (grammar spaces).
  std::optional<double> cardinality() const {
    if (const auto* u = as<Unconstrained>()) {
      double total = 0.0;
      for (std::size_t len = u->min_length; len <= u->max_length; ++len)
        total += std::pow(static_cast<double>(u->alphabet.size()), static_cast<double>(len));
      return total;
    }
    if (const auto* l = as<LocallyConstrained>()) {
      double total = 1.0;
      for (const auto& pos : l->allowed) total *= static_cast<double>(pos.size());
      return total;
    }
    if (const auto* c = as<CandidateSet>()) return static_cast<double>(c->strings.size());
    return std::nullopt;
  }

 private:
  explicit StringSpace(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

/// Membership test. Grammar-space members must carry a tree that validates
/// against the grammar and derives the string.
inline bool is_valid(const StringSpace& space, const Candidate& c) {
  if (const auto* u = space.as<Unconstrained>()) {
    if (c.str.size() < u->min_length || c.str.size() > u->max_length) return false;
    for (const auto& t : c.str)
      if (!u->alphabet.contains(t)) return false;
    return true;
  }
  if (const auto* l = space.as<LocallyConstrained>()) {
    if (c.str.size() != l->allowed.size()) return false;
    for (std::size_t i = 0; i < c.str.size(); ++i) {
      const auto& opts = l->allowed[i];
      if (std::find(opts.begin(), opts.end(), c.str[i]) == opts.end()) return false;
    }
    return true;
  }
  if (const auto* g = space.as<GrammarConstrained>())
    return c.tree && c.tree->symbol == g->grammar->start() && is_valid_tree(*g->grammar, *c.tree) &&
           derive(*c.tree) == c.str;
  return space.as<CandidateSet>()->members.count(c.str) != 0;
}

inline bool is_valid(const StringSpace& space, const Str& s) { return is_valid(space, Candidate(s)); }

/// Uniform draw of one member (per-position uniform for the first two kinds,
/// the discounted sampler for grammars).
inline Candidate sample_one(const StringSpace& space, Rng& rng) {
  if (const auto* u = space.as<Unconstrained>()) {
    Str s(rng.between(u->min_length, u->max_length));
    for (auto& t : s) t = u->alphabet[rng.index(u->alphabet.size())];
    return Candidate(std::move(s));
  }
  if (const auto* l = space.as<LocallyConstrained>()) {
    Str s;
    s.reserve(l->allowed.size());
    if (l->block_moves()) {
      for (const auto& options : l->blocks) {
        const auto& pick = options[rng.index(options.size())];
        s.insert(s.end(), pick.begin(), pick.end());
      }
    } else {
      for (const auto& opts : l->allowed) s.push_back(opts[rng.index(opts.size())]);
    }
    return Candidate(std::move(s));
  }
  if (const auto* g = space.as<GrammarConstrained>()) return Candidate(sample_tree(*g->grammar, g->sampler, rng));
  const auto& cs = *space.as<CandidateSet>();
  return Candidate(cs.strings[rng.index(cs.strings.size())]);
}

/// `count` draws. Candidate sets are drawn without replacement unless count
/// exceeds the set size.
inline std::vector<Candidate> sample(const StringSpace& space, Rng& rng, std::size_t count) {
  if (count < 1) throw Error("sample count must be at least 1");
  std::vector<Candidate> out;
  out.reserve(count);
  if (const auto* cs = space.as<CandidateSet>(); cs && count <= cs->strings.size()) {
    std::vector<std::size_t> idx(cs->strings.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      out.emplace_back(cs->strings[idx[i]]);
    }
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_one(space, rng));
  return out;
}

/// All members in lexicographic order of position choices; refuses spaces
/// larger than `limit`.
inline std::vector<Str> enumerate(const StringSpace& space, std::size_t limit) {
  const auto n = space.cardinality();
  if (!n || *n > static_cast<double>(limit)) throw Error("space too large to enumerate");
  if (const auto* cs = space.as<CandidateSet>()) return cs->strings;
  std::vector<std::vector<std::vector<Token>>> shapes;
  if (const auto* u = space.as<Unconstrained>()) {
    for (std::size_t len = u->min_length; len <= u->max_length; ++len)
      shapes.emplace_back(len, u->alphabet.tokens());
  } else {
    shapes.push_back(space.as<LocallyConstrained>()->allowed);
  }
  std::vector<Str> out;
  for (const auto& allowed : shapes) {
    std::vector<std::size_t> digit(allowed.size(), 0);
    for (bool more = true; more;) {
      Str s(allowed.size());
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = allowed[i][digit[i]];
      out.push_back(std::move(s));
      more = false;
      for (std::size_t i = allowed.size(); i-- > 0;) {
        if (++digit[i] < allowed[i].size()) {
          more = true;
          break;
        }
        digit[i] = 0;
      }
    }
  }
  return out;
}

// Genes.

/// Amino-acid letter to its codons.
struct CodonTable {
  std::map<char, std::vector<std::string>> codons;

  const std::vector<std::string>& at(char residue) const {
    auto it = codons.find(residue);
    if (it == codons.end()) throw Error(std::string("unknown amino acid '") + residue + "'");
    return it->second;
  }
};

/// Lines "X -> cod1|cod2|...". '|' and ',' both separate codons and a
/// trailing '.' is ignored.
inline CodonTable load_codon_table(std::string_view text) {
  CodonTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto where = [&] { return "codon table line " + std::to_string(number) + ": "; };
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto arrow = line.find("->");
    if (arrow == std::string::npos) throw Error(where() + "missing '->'");
    std::string residue;
    for (char c : line.substr(0, arrow))
      if (!std::isspace(static_cast<unsigned char>(c))) residue += c;
    if (residue.size() != 1 || !std::isupper(static_cast<unsigned char>(residue[0])))
      throw Error(where() + "residue must be one capital letter");
    if (table.codons.count(residue[0])) throw Error(where() + "repeated residue " + residue);
    std::vector<std::string> codons;
    std::string cur;
    auto flush = [&] {
      if (cur.empty()) return;
      if (cur.size() != 3 || cur.find_first_not_of("acgt") != std::string::npos)
        throw Error(where() + "bad codon '" + cur + "'");
      if (std::find(codons.begin(), codons.end(), cur) != codons.end())
        throw Error(where() + "repeated codon '" + cur + "'");
      codons.push_back(cur);
      cur.clear();
    };
    for (char c : line.substr(arrow + 2)) {
      if (c == '|' || c == ',' || c == '.' || std::isspace(static_cast<unsigned char>(c))) flush();
      else cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    flush();
    if (codons.empty()) throw Error(where() + "no codons");
    table.codons[residue[0]] = std::move(codons);
  }
  if (table.codons.size() != 20) throw Error("codon table must list the 20 amino acids");
  return table;
}

inline const CodonTable& builtin_codon_table() {
  static const CodonTable t = load_codon_table(
      "F -> ttt|ttc\n"
      "L -> tta|ttg|ctt|ctc|cta, ctg\n"
      "S -> tct|tcc|tca|tcg|agt|agc\n"
      "Y -> tat|tac\n"
      "C -> tgt|tgc\n"
      "W -> tgg\n"
      "P -> cct|ccc|cca|ccg\n"
      "H -> cat|cac\n"
      "Q -> caa|cag\n"
      "R -> cgt|cgc|cga|cgg|aga|agg\n"
      "I -> att|atc|ata\n"
      "M -> atg\n"
      "T -> act|acc|aca|acg\n"
      "N -> aat|aac\n"
      "K -> aaa|aag\n"
      "V -> gtt|gtc|gta|gtg\n"
      "A -> gct|gcc|gca|gcg\n"
      "D -> gat|gac\n"
      "E -> gaa|gag\n"
      "G -> ggt|ggc|gga|ggg.\n");
  return t;
}

enum class GeneRepresentation { codon, base };

/// Genes coding for `protein`. The codon form has one codon token per
/// residue. The base form has three base tokens per residue; its positions
/// allow every base seen at that offset among the residue's codons, and with
/// `codon_moves` sampling and the GA redraw whole codons.
inline StringSpace protein_space(std::string_view protein, const CodonTable& table,
                                 GeneRepresentation rep, bool codon_moves = true) {
  if (protein.empty()) throw Error("protein must be nonempty");
  std::vector<std::vector<Token>> allowed;
  if (rep == GeneRepresentation::codon) {
    for (char r : protein) allowed.push_back(table.at(r));
    return StringSpace::locally_constrained(std::move(allowed));
  }
  std::vector<std::vector<Str>> blocks;
  for (char r : protein) {
    const auto& codons = table.at(r);
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<Token> opts;
      for (const auto& c : codons) {
        Token t(1, c[k]);
        if (std::find(opts.begin(), opts.end(), t) == opts.end()) opts.push_back(t);
      }
      allowed.push_back(std::move(opts));
    }
    std::vector<Str> block;
    for (const auto& c : codons) block.push_back(chars(c));
    blocks.push_back(std::move(block));
  }
  if (!codon_moves) return StringSpace::locally_constrained(std::move(allowed));
  return StringSpace::locally_constrained(std::move(allowed), 3, std::move(blocks));
}

/// Number of distinct genes coding for the protein.
inline double gene_count(std::string_view protein, const CodonTable& table) {
  double n = 1.0;
  for (char r : protein) n *= static_cast<double>(table.at(r).size());
  return n;
}

// Files.

struct CandidateFile {
  std::vector<Str> strings;
  std::map<Str, double> scores;  // from an optional second tab-separated column
};

/// One string per line, '#' comments skipped. Strings are split into
/// characters, or tokenized with `alphabet` when given. A tab followed by a
/// number attaches a known score.
inline CandidateFile load_candidates(std::string_view text, const Alphabet* alphabet = nullptr) {
  CandidateFile out;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::string body = line;
    std::optional<double> score;
    if (const auto tab = line.find('\t'); tab != std::string::npos) {
      body = line.substr(0, tab);
      const std::string rest = line.substr(tab + 1);
      std::size_t used = 0;
      try {
        score = std::stod(rest, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || rest.find_first_not_of(" \t", used) != std::string::npos)
        throw Error("candidate line " + std::to_string(number) + ": bad score '" + rest + "'");
    }
    if (body.empty()) continue;
    Str s = alphabet ? alphabet->tokenize(body) : chars(body);
    if (score) out.scores[s] = *score;
    out.strings.push_back(std::move(s));
  }
  if (out.strings.empty()) throw Error("candidate file has no strings");
  return out;
}

/// Line i lists the tokens allowed at position i, whitespace separated.
inline StringSpace load_local_constraints(std::string_view text) {
  std::vector<std::vector<Token>> allowed;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream words(line);
    std::vector<Token> pos;
    for (std::string w; words >> w;) pos.push_back(w);
    allowed.push_back(std::move(pos));
  }
  return StringSpace::locally_constrained(std::move(allowed));
}

}  // namespace stringbo

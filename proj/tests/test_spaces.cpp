#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "stringbo/spaces.hpp"
#include "support/random_strings.hpp"

using namespace stringbo;
using stringbo::testing::str;

namespace {

StringSpace binary(std::size_t n) { return StringSpace::unconstrained(Alphabet::from_chars("01"), n); }

}  // namespace

TEST(IsValid, Unconstrained) {
  const auto s = binary(20);
  EXPECT_TRUE(is_valid(s, str("01000000000000000000")));
  EXPECT_FALSE(is_valid(s, str("0100000000000000000")));
  EXPECT_FALSE(is_valid(s, str("01000000000000000002")));
  const auto ranged = StringSpace::unconstrained(Alphabet::from_chars("ab"), 2, 4);
  EXPECT_TRUE(is_valid(ranged, str("aba")));
  EXPECT_FALSE(is_valid(ranged, str("a")));
  EXPECT_FALSE(is_valid(ranged, str("aaaaa")));
}

TEST(IsValid, LocallyConstrained) {
  const auto s = StringSpace::locally_constrained({{"a", "b"}, {"a"}, {"b", "c"}});
  EXPECT_TRUE(is_valid(s, str("bab")));
  EXPECT_FALSE(is_valid(s, str("bbb")));
  EXPECT_FALSE(is_valid(s, str("ba")));
  EXPECT_THROW(StringSpace::locally_constrained({{"a"}, {}}), Error);
  EXPECT_THROW(StringSpace::locally_constrained({{"a", "a"}}), Error);
}

TEST(IsValid, CandidateSetMembership) {
  const auto s = StringSpace::candidate_set({str("ab"), str("ba"), str("ab")});
  EXPECT_EQ(s.as<CandidateSet>()->strings.size(), 2u);
  EXPECT_TRUE(is_valid(s, str("ba")));
  EXPECT_FALSE(is_valid(s, str("aa")));
  EXPECT_THROW(StringSpace::candidate_set({}), Error);
}

TEST(IsValid, GrammarNeedsMatchingTree) {
  const auto g = std::make_shared<const Grammar>(builtin_expression_grammar());
  const auto s = StringSpace::grammar_constrained(g);
  Rng rng(1);
  const auto c = sample_one(s, rng);
  EXPECT_TRUE(is_valid(s, c));
  EXPECT_FALSE(is_valid(s, Candidate(c.str)));
  Candidate forged = c;
  forged.str.push_back("x");
  EXPECT_FALSE(is_valid(s, forged));
}

TEST(Sample, DeterminedStringWhenSingletonSets) {
  const auto s = StringSpace::locally_constrained({{"q"}, {"r"}, {"s"}});
  Rng rng(2);
  for (const auto& c : sample(s, rng, 5)) EXPECT_EQ(join(c.str), "qrs");
}

TEST(Sample, PositionFrequencies) {
  const auto s = binary(20);
  Rng rng(3);
  std::vector<int> ones(20, 0);
  const auto draws = sample(s, rng, 10000);
  for (const auto& c : draws) {
    ASSERT_TRUE(is_valid(s, c));
    for (std::size_t i = 0; i < 20; ++i) ones[i] += c.str[i] == "1";
  }
  for (int n : ones) {
    EXPECT_GE(n, 4700);
    EXPECT_LE(n, 5300);
  }
}

TEST(Sample, LengthsCoverRange) {
  const auto s = StringSpace::unconstrained(Alphabet::from_chars("ab"), 2, 5);
  Rng rng(4);
  std::set<std::size_t> lengths;
  for (const auto& c : sample(s, rng, 400)) lengths.insert(c.str.size());
  EXPECT_EQ(lengths, (std::set<std::size_t>{2, 3, 4, 5}));
}

TEST(Sample, CandidateSetWithoutReplacement) {
  const auto s = StringSpace::candidate_set({str("a"), str("b"), str("c")});
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    std::set<Str> got;
    for (const auto& c : sample(s, rng, 3)) got.insert(c.str);
    EXPECT_EQ(got.size(), 3u);
  }
  EXPECT_EQ(sample(s, rng, 7).size(), 7u);
}

TEST(Sample, Deterministic) {
  const auto g = std::make_shared<const Grammar>(builtin_expression_grammar());
  for (const auto& s : {binary(10), StringSpace::grammar_constrained(g)}) {
    Rng a(6), b(6);
    const auto x = sample(s, a, 30), y = sample(s, b, 30);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].str, y[i].str);
  }
}

TEST(Enumerate, MatchesCardinality) {
  const auto s = StringSpace::unconstrained(Alphabet::from_chars("abc"), 1, 3);
  const auto all = enumerate(s, 100);
  EXPECT_EQ(all.size(), 39u);
  EXPECT_EQ(std::set<Str>(all.begin(), all.end()).size(), 39u);
  const auto l = StringSpace::locally_constrained({{"a", "b"}, {"c"}, {"d", "e", "f"}});
  EXPECT_EQ(enumerate(l, 100).size(), 6u);
  EXPECT_THROW(enumerate(binary(20), 4096), Error);
}

TEST(Codons, BuiltinTable) {
  const auto& t = builtin_codon_table();
  EXPECT_EQ(t.codons.size(), 20u);
  EXPECT_EQ(t.at('L').size(), 6u);
  EXPECT_EQ(t.at('G').back(), "ggg");
  std::size_t total = 0;
  for (const auto& [aa, c] : t.codons) total += c.size();
  EXPECT_EQ(total, 61u);
  EXPECT_THROW(t.at('Z'), Error);
}

TEST(Codons, LoaderRejectsBadInput) {
  EXPECT_THROW(load_codon_table("F -> ttt|ttc"), Error);
  EXPECT_THROW(load_codon_table("F -> tt"), Error);
  EXPECT_THROW(load_codon_table("FF -> ttt"), Error);
}

TEST(ProteinSpace, CodonCardinality) {
  const auto s = protein_space("TIKENIFGVS", builtin_codon_table(), GeneRepresentation::codon);
  EXPECT_EQ(*s.cardinality(), 55296.0);
  EXPECT_EQ(gene_count("TIKENIFGVS", builtin_codon_table()), 55296.0);
  EXPECT_EQ(enumerate(s, 100000).size(), 55296u);
  const auto m = protein_space("M", builtin_codon_table(), GeneRepresentation::codon);
  EXPECT_EQ(*m.cardinality(), 1.0);
  Rng rng(7);
  EXPECT_EQ(sample_one(m, rng).str, Str{"atg"});
  EXPECT_THROW(protein_space("MZ", builtin_codon_table(), GeneRepresentation::codon), Error);
}

TEST(ProteinSpace, BaseRepresentation) {
  const auto w = protein_space("W", builtin_codon_table(), GeneRepresentation::base);
  EXPECT_EQ(w.as<LocallyConstrained>()->allowed,
            (std::vector<std::vector<Token>>{{"t"}, {"g"}, {"g"}}));
  const auto s = protein_space("TIKENIFGVS", builtin_codon_table(), GeneRepresentation::base);
  const auto* lc = s.as<LocallyConstrained>();
  EXPECT_EQ(lc->allowed.size(), 30u);
  EXPECT_TRUE(lc->block_moves());
  const auto& codons = builtin_codon_table();
  Rng rng(8);
  for (const auto& c : sample(s, rng, 200)) {
    EXPECT_TRUE(is_valid(s, c));
    for (std::size_t r = 0; r < 10; ++r) {
      const std::string codon = c.str[3 * r] + c.str[3 * r + 1] + c.str[3 * r + 2];
      const auto& opts = codons.at("TIKENIFGVS"[r]);
      EXPECT_NE(std::find(opts.begin(), opts.end(), codon), opts.end());
    }
  }
  const auto relaxed = protein_space("L", builtin_codon_table(), GeneRepresentation::base, false);
  EXPECT_FALSE(relaxed.as<LocallyConstrained>()->block_moves());
  EXPECT_TRUE(is_valid(relaxed, str("cta")));
}

TEST(Files, CandidatesWithCommentsAndScores) {
  const auto f = load_candidates("# header\nabc\n\nbca\t1.5\ncab\t-2e1\n");
  EXPECT_EQ(f.strings.size(), 3u);
  EXPECT_EQ(f.scores.at(str("bca")), 1.5);
  EXPECT_EQ(f.scores.at(str("cab")), -20.0);
  EXPECT_THROW(load_candidates("abc\tnope\n"), Error);
  EXPECT_THROW(load_candidates("# nothing\n"), Error);
  const Alphabet smiles({"C", "Cl", "O", "="});
  EXPECT_EQ(load_candidates("CCl=O\n", &smiles).strings[0], (Str{"C", "Cl", "=", "O"}));
}

TEST(Files, LocalConstraints) {
  const auto s = load_local_constraints("a b\n# skip\nc\nd e f\n");
  EXPECT_EQ(*s.cardinality(), 6.0);
  EXPECT_TRUE(is_valid(s, str("bcf")));
}

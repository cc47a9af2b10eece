#include <set>

#include <gtest/gtest.h>

#include "stringbo/ga.hpp"
#include "stringbo/objectives.hpp"
#include "support/random_strings.hpp"

using namespace stringbo;
using stringbo::testing::str;

namespace {

StringSpace binary(std::size_t n) { return StringSpace::unconstrained(Alphabet::from_chars("01"), n); }

}  // namespace

TEST(MutateString, SingletonSetsNeverChange) {
  const auto s = StringSpace::locally_constrained({{"a"}, {"b"}, {"c"}});
  Rng rng(1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(join(mutate_string(str("abc"), s, rng)), "abc");
}

TEST(MutateString, ChangesAtMostOnePositionUniformly) {
  const auto space = binary(20);
  Rng rng(2);
  const Str base(20, "0");
  std::vector<int> hits(20, 0);
  const int n = 10000;
  int changed = 0;
  for (int t = 0; t < n; ++t) {
    const auto m = mutate_string(base, space, rng);
    int diff = 0;
    for (std::size_t i = 0; i < 20; ++i)
      if (m[i] != base[i]) {
        ++diff;
        ++hits[i];
      }
    EXPECT_LE(diff, 1);
    changed += diff;
  }
  // Half the redraws keep the symbol, so position i changes with prob 1/40.
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / changed, 1.0 / 20, 0.01);
  EXPECT_NEAR(static_cast<double>(changed) / n, 0.5, 0.02);
}

TEST(MutateString, BlockMovesKeepCodons) {
  const auto space = protein_space("TIKENIFGVS", builtin_codon_table(), GeneRepresentation::base);
  Rng rng(3);
  auto c = sample_one(space, rng);
  for (int i = 0; i < 2000; ++i) {
    c = mutate(c, space, rng);
    for (std::size_t r = 0; r < 10; ++r) {
      const std::string codon = c.str[3 * r] + c.str[3 * r + 1] + c.str[3 * r + 2];
      const auto& opts = builtin_codon_table().at("TIKENIFGVS"[r]);
      ASSERT_NE(std::find(opts.begin(), opts.end(), codon), opts.end());
    }
  }
}

TEST(Crossover, DefinitionalSwap) {
  const auto [a, b] = crossover_at(str("AAAA"), str("BBBB"), 2);
  EXPECT_EQ(join(a), "BBAA");
  EXPECT_EQ(join(b), "AABB");
  Rng rng(4);
  const auto [c, d] = crossover_fixed(str("abab"), str("abab"), rng);
  EXPECT_EQ(join(c), "abab");
  EXPECT_EQ(join(d), "abab");
  EXPECT_THROW(crossover_fixed(str("ab"), str("abc"), rng), Error);
}

TEST(Crossover, PointsCoverOneToLMinusOne) {
  Rng rng(5);
  std::set<std::size_t> points;
  for (int i = 0; i < 500; ++i) {
    const auto [a, b] = crossover_fixed(str("00000"), str("11111"), rng);
    points.insert(static_cast<std::size_t>(std::count(a.begin(), a.end(), "1")));
  }
  EXPECT_EQ(points, (std::set<std::size_t>{1, 2, 3, 4}));
}

TEST(Crossover, VariableLengthKeepsParentLengths) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const auto [a, b] = crossover_strings(str("aaaaaaa"), str("bbb"), rng);
    EXPECT_EQ(a.size(), 7u);
    EXPECT_EQ(b.size(), 3u);
  }
}

TEST(Tournament, SingleMemberAndTies) {
  Rng rng(7);
  EXPECT_EQ(tournament({3.0}, 0.5, rng), 0u);
  // All equal: the lowest drawn index wins, so index 0 is favoured heavily.
  int zeros = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto w = tournament({1, 1, 1, 1}, 1.0, rng);
    zeros += w == 0;
  }
  EXPECT_NEAR(zeros / 1000.0, 1.0 - std::pow(0.75, 4), 0.05);
}

TEST(Tournament, FullSampleFindsArgmaxOften) {
  Rng rng(8);
  std::vector<double> s(50);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>((i * 17) % 50);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) hits += tournament(s, 1.0, rng) == 47;  // 47*17 % 50 == 49
  EXPECT_GE(hits / 2000.0, 1.0 - std::pow(1.0 - 1.0 / 50, 50) - 0.03);
}

TEST(Evolve, NoPerturbationCopiesWinners) {
  const auto space = binary(6);
  Rng rng(9);
  std::vector<Individual> pop;
  for (const auto& c : sample(space, rng, 10)) pop.push_back({c, static_cast<double>(pop.size())});
  GaConfig cfg;
  cfg.population = 10;
  cfg.crossover_prob = 0.0;
  cfg.mutation_prob = 0.0;
  const auto next = evolve(pop, cfg, space, rng);
  ASSERT_EQ(next.size(), 10u);
  for (const auto& c : next) {
    bool found = false;
    for (const auto& p : pop) found = found || p.genotype.str == c.str;
    EXPECT_TRUE(found);
  }
}

TEST(Evolve, SizeAlwaysN) {
  const auto space = binary(8);
  Rng rng(10);
  for (std::size_t n : {2u, 3u, 7u, 64u}) {
    std::vector<Individual> pop;
    for (const auto& c : sample(space, rng, n)) pop.push_back({c, rng.uniform()});
    GaConfig cfg;
    cfg.population = n;
    cfg.crossover_prob = 1.0;
    EXPECT_EQ(evolve(pop, cfg, space, rng).size(), n);
  }
}

TEST(Evolve, ClosureOnEveryRegime) {
  const auto g = std::make_shared<const Grammar>(builtin_expression_grammar());
  const std::vector<StringSpace> spaces = {
      StringSpace::unconstrained(Alphabet::from_chars("abc"), 3, 9),
      StringSpace::locally_constrained({{"a", "b"}, {"c"}, {"a", "d", "e"}, {"f", "g"}}),
      protein_space("TIKENIFGVS", builtin_codon_table(), GeneRepresentation::base),
      StringSpace::grammar_constrained(g),
      StringSpace::candidate_set({str("abc"), str("bca"), str("cab"), str("aaa")}),
  };
  GaConfig cfg;
  cfg.population = 20;
  for (const auto& space : spaces) {
    Rng rng(11);
    std::vector<Individual> pop;
    for (const auto& c : sample(space, rng, 20)) pop.push_back({c, rng.uniform()});
    for (int gen = 0; gen < 50; ++gen) {
      const auto next = evolve(pop, cfg, space, rng);
      for (std::size_t i = 0; i < next.size(); ++i) {
        ASSERT_TRUE(is_valid(space, next[i]));
        pop[i] = {next[i], rng.uniform()};
      }
    }
  }
}

TEST(Maximize, ConstantScoreStopsAfterOneGeneration) {
  Rng rng(12);
  GaConfig cfg;
  cfg.population = 16;
  const auto r = maximize([](const Candidate&) { return 1.0; }, binary(8), cfg, rng);
  EXPECT_EQ(r.generations, 1u);
  EXPECT_EQ(r.evaluations, 32u);
  EXPECT_EQ(r.best.score, 1.0);
}

TEST(Maximize, TinySpaceExhaustiveOptimum) {
  GaConfig cfg;
  cfg.population = 16;
  auto value = [](const Candidate& c) {
    double v = 0;
    for (const auto& t : c.str) v = 2 * v + (t == "1");
    return v;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto r = maximize(value, binary(4), cfg, rng);
    EXPECT_EQ(join(r.best.genotype.str), "1111");
  }
}

TEST(Maximize, BestNeverBelowInitialPopulationAndBudget) {
  const auto space = binary(12);
  const auto spec = PatternSpec{chars("101"), CountMode::overlapping, std::nullopt, 0.0};
  GaConfig cfg;
  cfg.population = 30;
  cfg.max_generations = 5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng a(seed), b(seed);
    double initial = -1;
    for (const auto& c : sample(space, b, 30)) initial = std::max(initial, count_pattern(c.str, spec));
    const auto r = maximize([&](const Candidate& c) { return count_pattern(c.str, spec); }, space, cfg, a);
    EXPECT_GE(r.best.score, initial);
    EXPECT_LE(r.evaluations, 30u * 6u);
    EXPECT_EQ(r.final_population.size(), 30u);
  }
}

TEST(Maximize, ParallelScoringDeterministic) {
  const auto space = binary(12);
  const auto spec = PatternSpec{chars("10?1"), CountMode::overlapping, std::nullopt, 0.0};
  GaConfig cfg;
  cfg.population = 40;
  auto score = [&](const Candidate& c) { return count_pattern(c.str, spec); };
  Rng a(13), b(13);
  cfg.jobs = 1;
  const auto r1 = maximize(score, space, cfg, a);
  cfg.jobs = 4;
  const auto r2 = maximize(score, space, cfg, b);
  EXPECT_EQ(r1.best.genotype.str, r2.best.genotype.str);
  EXPECT_EQ(r1.generations, r2.generations);
}

TEST(RandomSearch, Basics) {
  const auto space = StringSpace::candidate_set({str("a"), str("bb"), str("ccc")});
  auto len = [](const Candidate& c) { return static_cast<double>(c.str.size()); };
  Rng rng(14);
  EXPECT_EQ(join(random_search_maximize(len, space, 3, rng).best.genotype.str), "ccc");
  Rng a(15), b(15);
  const auto x = random_search_maximize(len, binary(5), 1, a);
  const auto y = random_search_maximize(len, binary(5), 1, b);
  EXPECT_EQ(x.best.genotype.str, y.best.genotype.str);
  EXPECT_THROW(random_search_maximize(len, space, 0, rng), Error);
}

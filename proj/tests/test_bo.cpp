#include <set>

#include <gtest/gtest.h>

#include "stringbo/bo.hpp"
#include "stringbo/objectives.hpp"
#include "support/random_strings.hpp"

using namespace stringbo;
using stringbo::testing::str;

namespace {

Objective count_of(const std::string& pattern) {
  const PatternSpec spec{chars(pattern), CountMode::overlapping, std::nullopt, 0.0};
  return [spec](const Candidate& c, Rng&) { return count_pattern(c.str, spec); };
}

BoConfig small_config(std::uint64_t seed) {
  BoConfig cfg;
  cfg.budget = 4;
  cfg.seed = seed;
  cfg.ga.population = 20;
  cfg.ga.max_generations = 5;
  cfg.fit.restarts = 2;
  cfg.surrogate.kernel.ssk.max_order = 3;
  return cfg;
}

void expect_running_max(const BoTrace& t) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : t.rows) {
    best = std::max(best, r.value);
    EXPECT_EQ(r.best_so_far, best);
  }
}

}  // namespace

TEST(Bo, DefaultInitCount) {
  EXPECT_EQ(default_init_count(StringSpace::unconstrained(Alphabet::from_chars("01"), 20)), 2u);
  EXPECT_EQ(default_init_count(StringSpace::unconstrained(Alphabet::from_chars("0123456"), 5)), 5u);
  EXPECT_EQ(default_init_count(StringSpace::locally_constrained({{"a"}})), 1u);
}

TEST(Bo, SingleStringSpaceFallsBackToDuplicate) {
  const auto space = StringSpace::locally_constrained({{"a"}, {"a"}});
  auto cfg = small_config(1);
  cfg.budget = 1;
  const auto t = run(count_of("a"), space, cfg);
  ASSERT_FALSE(t.failure);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].step, 0u);
  EXPECT_EQ(t.rows[1].step, 1u);
  EXPECT_EQ(join(t.rows[1].string), "aa");
}

TEST(Bo, EvaluationCountAndRunningMax) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("01"), 10);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto t = run(count_of("101"), space, small_config(seed));
    ASSERT_FALSE(t.failure) << *t.failure;
    EXPECT_EQ(t.rows.size(), 2u + 4u);
    expect_running_max(t);
    for (const auto& r : t.rows) EXPECT_TRUE(is_valid(space, r.string));
  }
}

TEST(Bo, NoiselessRunsNeverRepeatAStringOnLargeSpaces) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("01"), 12);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto cfg = small_config(seed);
    cfg.budget = 8;
    const auto t = run(count_of("11"), space, cfg);
    std::set<Str> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (t.rows[i].step == 0) {
        seen.insert(t.rows[i].string);
        continue;
      }
      EXPECT_TRUE(seen.insert(t.rows[i].string).second) << join(t.rows[i].string);
    }
  }
}

TEST(Bo, SameSeedSameTrace) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("012"), 8);
  auto noisy = [](const Candidate& c, Rng& rng) {
    return count_pattern(c.str, {chars("12"), CountMode::overlapping, std::nullopt, 1.0}, rng);
  };
  const auto a = run(noisy, space, small_config(7));
  const auto b = run(noisy, space, small_config(7));
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].string, b.rows[i].string);
    EXPECT_EQ(a.rows[i].value, b.rows[i].value);
    EXPECT_EQ(a.rows[i].surrogate.noise_variance, b.rows[i].surrogate.noise_variance);
    EXPECT_EQ(a.rows[i].overhead_s, 0.0);
  }
  auto other = small_config(7);
  other.jobs = 3;
  const auto c = run(noisy, space, other);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].string, c.rows[i].string);
}

TEST(Bo, ObjectiveFailureKeepsRows) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("01"), 6);
  int calls = 0;
  auto flaky = [&](const Candidate& c, Rng&) -> double {
    if (++calls == 4) throw Error("scorer crashed");
    return static_cast<double>(std::count(c.str.begin(), c.str.end(), "1"));
  };
  const auto t = run(flaky, space, small_config(2));
  ASSERT_TRUE(t.failure);
  EXPECT_EQ(*t.failure, "scorer crashed");
  EXPECT_EQ(t.rows.size(), 3u);
}

TEST(Bo, RandomSearchOptimizer) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("01"), 10);
  auto cfg = small_config(3);
  cfg.optimizer = AcquisitionOptimizer::rs;
  cfg.rs_samples = 200;
  const auto t = run(count_of("101"), space, cfg);
  ASSERT_FALSE(t.failure);
  EXPECT_EQ(t.rows.size(), 6u);
  expect_running_max(t);
}

TEST(Bo, CandidateSubsampleOnlyProposesUnseenMembers) {
  std::vector<Str> pool;
  Rng rng(4);
  while (pool.size() < 40) {
    auto s = stringbo::testing::random_str(rng, 6, 6, 2);
    if (std::find(pool.begin(), pool.end(), s) == pool.end()) pool.push_back(s);
  }
  const auto space = StringSpace::candidate_set(pool);
  auto cfg = small_config(5);
  cfg.optimizer = AcquisitionOptimizer::subsample;
  cfg.subsample = 10;
  cfg.budget = 10;
  const auto t = run(count_of("ab"), space, cfg);
  ASSERT_FALSE(t.failure);
  std::set<Str> seen;
  for (const auto& r : t.rows) {
    EXPECT_TRUE(is_valid(space, r.string));
    EXPECT_TRUE(seen.insert(r.string).second);
  }
  cfg.optimizer = AcquisitionOptimizer::subsample;
  EXPECT_TRUE(run(count_of("ab"), StringSpace::unconstrained(Alphabet::from_chars("ab"), 3), cfg).failure);
}

TEST(Bo, GrammarSpaceRun) {
  const auto g = std::make_shared<const Grammar>(builtin_expression_grammar());
  const auto space = StringSpace::grammar_constrained(g);
  const auto spec = default_symreg_spec();
  auto cfg = small_config(6);
  cfg.init_count = 5;
  const auto t = run([&](const Candidate& c, Rng&) { return symreg_score(c, spec); }, space, cfg);
  ASSERT_FALSE(t.failure) << *t.failure;
  EXPECT_EQ(t.rows.size(), 9u);
  expect_running_max(t);
}

TEST(Bo, CollapsedFitsAreRedoneWithPinnedNoise) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("01"), 16);
  int collapsed_free = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto cfg = small_config(seed);
    cfg.budget = 6;
    for (bool refit : {false, true}) {
      cfg.refit_on_collapse = refit;
      const auto t = run(count_of("101"), space, cfg);
      ASSERT_FALSE(t.failure);
      for (const auto& r : t.rows) {
        if (r.step < 1 || r.surrogate.output_scale >= kCollapsedScale) continue;
        if (refit) EXPECT_EQ(r.surrogate.noise_variance, cfg.fit.noise_min) << "seed " << seed;
        else ++collapsed_free;
      }
    }
  }
  EXPECT_GT(collapsed_free, 0) << "plain likelihood fits never collapsed; the check above is vacuous";
}

TEST(Bo, ReplicatedMatchesSingleRuns) {
  const auto space = StringSpace::unconstrained(Alphabet::from_chars("01"), 8);
  const auto cfg = small_config(0);
  const auto many = run_replicated(count_of("11"), space, cfg, {3, 9, 11}, 3);
  ASSERT_EQ(many.size(), 3u);
  auto single = cfg;
  single.seed = 9;
  const auto one = run(count_of("11"), space, single);
  EXPECT_EQ(many[1].seed, 9u);
  ASSERT_EQ(many[1].rows.size(), one.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) EXPECT_EQ(many[1].rows[i].string, one.rows[i].string);
  EXPECT_THROW(run_replicated(count_of("11"), space, cfg, {}), Error);
  EXPECT_THROW(run_replicated(count_of("11"), space, cfg, {1, 1}), Error);
}

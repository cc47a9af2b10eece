#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "stringbo/analysis.hpp"
#include "stringbo/config.hpp"

using namespace stringbo;

namespace {

BoTrace trace_of(std::uint64_t seed, const std::vector<double>& best) {
  BoTrace t;
  t.seed = seed;
  for (std::size_t i = 0; i < best.size(); ++i) {
    TraceRow r;
    r.seed = seed;
    r.step = i;
    r.string = chars("ab");
    r.value = best[i];
    r.best_so_far = best[i];
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace

TEST(Kpca, IdenticalStringsShareCoordinates) {
  const std::vector<Str> s = {chars("abab"), chars("bbbb"), chars("abab"), chars("aabb"), chars("baba")};
  KernelSpec spec;
  spec.ssk.max_order = 3;
  const auto r = kpca(s, spec, 2);
  ASSERT_EQ(r.coordinates.size(), 5u);
  ASSERT_EQ(r.eigenvalues.size(), 5u);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(r.coordinates[0][c], r.coordinates[2][c], 1e-10);
  for (std::size_t i = 1; i < r.eigenvalues.size(); ++i) EXPECT_GE(r.eigenvalues[i - 1], r.eigenvalues[i]);
  for (double v : r.eigenvalues) EXPECT_GE(v, -1e-8);

  // Centred coordinates average to zero; their squared norm per component is the eigenvalue.
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (const auto& row : r.coordinates) {
      sum += row[c];
      sq += row[c] * row[c];
    }
    EXPECT_NEAR(sum, 0.0, 1e-9);
    EXPECT_NEAR(sq, r.eigenvalues[c], 1e-9);
  }
  const auto g = gram(s, spec).values;
  double eig_sum = 0.0;
  for (double v : r.eigenvalues) eig_sum += v;
  EXPECT_LE(eig_sum, g.trace() + 1e-8);
  EXPECT_THROW(kpca({chars("a")}, spec), Error);
}

TEST(Aggregate, MeanAndStandardError) {
  const auto rows = aggregate({trace_of(0, {0.0, 0.0}), trace_of(1, {2.0, 4.0})}, ScoreRange{0.0, 4.0});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean_best, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].stderr_best, 1.0);
  EXPECT_DOUBLE_EQ(rows[1].mean_best, 2.0);
  EXPECT_DOUBLE_EQ(rows[1].stderr_best, 2.0);
  EXPECT_DOUBLE_EQ(*rows[1].mean_standardized, 50.0);
  EXPECT_EQ(rows[1].evaluation, 2u);

  const auto one = aggregate({trace_of(3, {5.0})});
  EXPECT_EQ(one[0].stderr_best, 0.0);
  EXPECT_FALSE(one[0].mean_standardized);

  const auto a = aggregate({trace_of(0, {1.0}), trace_of(1, {3.0}), trace_of(2, {8.0})});
  const auto b = aggregate({trace_of(2, {8.0}), trace_of(0, {1.0}), trace_of(1, {3.0})});
  EXPECT_DOUBLE_EQ(a[0].mean_best, b[0].mean_best);
  EXPECT_DOUBLE_EQ(a[0].stderr_best, b[0].stderr_best);

  EXPECT_THROW(aggregate({}), Error);
  EXPECT_THROW(aggregate({trace_of(0, {1.0}), trace_of(1, {1.0, 2.0})}), Error);
}

TEST(Csv, QuotedFieldsSurvive) {
  std::istringstream in("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"line\nbreak\",,x\n");
  const auto r = parse_csv(in);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
  EXPECT_EQ(r[1], (std::vector<std::string>{"line\nbreak", "", "x"}));
  std::istringstream bad("\"open");
  EXPECT_THROW(parse_csv(bad), Error);
}

TEST(Csv, TraceRoundTrip) {
  auto t = trace_of(4, {0.1, 1.0 / 3.0});
  t.rows[1].string = chars("a,\"b");
  t.rows[1].surrogate.noise_variance = 1e-6;
  std::stringstream io;
  write_trace_csv(io, {t, trace_of(9, {2.0})});
  const auto back = read_trace_csv(io);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].seed, 4u);
  ASSERT_EQ(back[0].rows.size(), 2u);
  EXPECT_EQ(back[0].rows[1].string, chars("a,\"b"));
  EXPECT_EQ(back[0].rows[1].best_so_far, 1.0 / 3.0);
  EXPECT_EQ(back[0].rows[1].surrogate.noise_variance, 1e-6);
  EXPECT_EQ(back[1].rows[0].value, 2.0);

  std::istringstream wrong("seed,step\n1,2\n");
  EXPECT_THROW(read_trace_csv(wrong), Error);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  const Json base = Json::parse(R"({"space": {"type": "unconstrained", "alphabet": "01", "length": 8},
                                    "objective": {"type": "pattern", "pattern": "11"}})");
  EXPECT_NO_THROW(parse_run_config(base));
  auto j = base;
  j["bugdet"] = 3;
  EXPECT_THROW(parse_run_config(j), Error);
  j = base;
  j["optimizer"] = "annealing";
  EXPECT_THROW(parse_run_config(j), Error);
  j = base;
  j["surrogate"] = {{"noise", "sometimes"}};
  EXPECT_THROW(parse_run_config(j), Error);
  j = base;
  j.erase("objective");
  EXPECT_THROW(parse_run_config(j), Error);
  j = base;
  j["seeds"] = {1, 1};
  EXPECT_THROW(parse_run_config(j), Error);
  j = base;
  j["objective"]["mode"] = "sideways";
  EXPECT_THROW(build_problem(parse_run_config(j)), Error);
}

TEST(Config, SeedLists) {
  EXPECT_EQ(parse_seed_list("3"), (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(parse_seed_list("4,1,9"), (std::vector<std::uint64_t>{4, 1, 9}));
  EXPECT_THROW(parse_seed_list("1,x"), Error);
  EXPECT_THROW(parse_seed_list("0"), Error);
}

TEST(Config, NoisePolicy) {
  auto c = parse_run_config(find_task("count-101-bin20").config);
  auto p = build_problem(c);
  EXPECT_TRUE(p.deterministic);
  ASSERT_TRUE(p.range);
  EXPECT_EQ(p.range->min, 0.0);
  EXPECT_EQ(p.range->max, 9.0);
  auto b = effective_bo(c, p);
  EXPECT_TRUE(b.refit_on_collapse);
  EXPECT_LT(b.fit.noise_min, b.fit.noise_max);

  c.noise = "fit";
  b = effective_bo(c, p);
  EXPECT_FALSE(b.refit_on_collapse);
  EXPECT_LT(b.fit.noise_min, b.fit.noise_max);

  auto noisy = parse_run_config(find_task("count-101-noisy-bin20").config);
  const auto np = build_problem(noisy);
  EXPECT_FALSE(np.deterministic);
  b = effective_bo(noisy, np);
  EXPECT_FALSE(b.refit_on_collapse);
  EXPECT_LT(b.fit.noise_min, b.fit.noise_max);

  noisy.fixed_noise = 0.25;
  b = effective_bo(noisy, np);
  EXPECT_EQ(b.fit.noise_min, 0.25);
  EXPECT_EQ(b.fit.noise_max, 0.25);
}

TEST(Config, EveryTaskBuilds) {
  for (const auto& t : task_registry()) {
    const auto c = parse_run_config(t.config);
    const auto p = build_problem(c);
    EXPECT_FALSE(p.space.symbols().empty()) << t.name;
    if (t.name != "symreg") {
      EXPECT_TRUE(p.range) << t.name;
    }
  }
  EXPECT_THROW(find_task("nope"), Error);
}

TEST(Config, FileReferencesResolveAgainstTheConfig) {
  const auto dir = std::filesystem::temp_directory_path() / "stringbo_cfg_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "pool.txt") << "aab\t1\nabb\t2\nbbb\t3\n";
    std::ofstream(dir / "run.json") << R"({
      // comments are allowed
      "space": {"type": "candidates", "file": "pool.txt"},
      "objective": {"type": "lookup"},
      "optimizer": "subsample", "subsample": 2, "budget": 1, "seeds": [5]
    })";
  }
  const auto c = load_run_config(dir / "run.json");
  const auto p = build_problem(c);
  ASSERT_TRUE(p.range);
  EXPECT_EQ(p.range->max, 3.0);
  const auto traces = execute(c, p);
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_FALSE(traces[0].failure);
  EXPECT_EQ(traces[0].seed, 5u);
  std::filesystem::remove_all(dir);
}

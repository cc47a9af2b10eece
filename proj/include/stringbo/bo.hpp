#pragma once

// Bayesian-optimization loop over a string space.

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stringbo/acquisition.hpp"
#include "stringbo/ga.hpp"
#include "stringbo/gp.hpp"

namespace stringbo {

enum class AcquisitionOptimizer { ga, rs, subsample };

// Output scale (standardized units) under which a fitted surrogate counts as
// pure noise.
constexpr double kCollapsedScale = 1e-3;

struct BoConfig {
  std::size_t budget = 10;                // evaluations after initialization
  std::optional<std::size_t> init_count;  // default min(5, |alphabet|)
  GpHyperparameters surrogate;            // initial kernel and noise settings
  FitOptions fit;
  GaConfig ga;
  AcquisitionOptimizer optimizer = AcquisitionOptimizer::ga;
  std::size_t rs_samples = 10000;
  std::size_t subsample = 100;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool record_overhead = false;  // wall-clock overhead makes traces nondeterministic
  // Refit with the noise pinned at fit.noise_min when the likelihood fit
  // lands on a pure-noise model (output scale below kCollapsedScale).
  bool refit_on_collapse = false;

  void validate() const {
    if (budget < 1) throw Error("budget must be at least 1");
    if (init_count && *init_count < 1) throw Error("init_count must be at least 1");
    if (rs_samples < 1) throw Error("rs_samples must be at least 1");
    if (subsample < 1) throw Error("subsample must be at least 1");
    surrogate.kernel.ssk.validate();
    ga.validate();
  }
};

struct TraceRow {
  std::uint64_t seed = 0;
  std::size_t step = 0;  // 0 for initialization
  Str string;
  double value = 0.0;
  double best_so_far = 0.0;
  GpHyperparameters surrogate;
  double overhead_s = 0.0;
};

struct BoTrace {
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  std::optional<std::string> failure;  // set when the objective aborted the run

  double best() const { return rows.empty() ? 0.0 : rows.back().best_so_far; }
};

/// Objective with access to a per-evaluation random stream for noise.
using Objective = std::function<double(const Candidate&, Rng&)>;

inline std::size_t default_init_count(const StringSpace& space) {
  return std::min<std::size_t>(5, std::max<std::size_t>(1, space.symbols().size()));
}

namespace detail {

enum Stream : std::uint64_t { init_stream = 0, fit_stream = 1, search_stream = 2, objective_stream = 3 };

using Clock = std::chrono::steady_clock;

// Best unseen proposal: GA/RS population ranked by acquisition, then fresh
// draws, then (tiny exhausted spaces) the raw winner.
inline Candidate pick_unseen(const GaResult& r, const Dataset& data, const StringSpace& space, Rng& rng) {
  if (!data.contains(r.best.genotype.str)) return r.best.genotype;
  const Individual* best = nullptr;
  for (const auto& ind : r.final_population)
    if (!data.contains(ind.genotype.str) && (!best || ind.score > best->score)) best = &ind;
  if (best) return best->genotype;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto c = sample_one(space, rng);
    if (!data.contains(c.str)) return c;
  }
  return r.best.genotype;
}

inline Candidate propose(const GpModel& model, const StringSpace& space, const BoConfig& cfg, Rng& rng) {
  const AcquisitionContext ctx(model);
  const ScoreFn ei = [&](const Candidate& c) { return ctx(c.str); };
  const auto& data = model.data();
  if (cfg.optimizer == AcquisitionOptimizer::subsample) {
    const auto* cs = space.as<CandidateSet>();
    if (!cs) throw Error("candidate subsampling needs a candidate-set space");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < cs->strings.size(); ++i)
      if (!data.contains(cs->strings[i])) pool.push_back(i);
    if (pool.empty()) return sample_one(space, rng);
    const std::size_t take = std::min(cfg.subsample, pool.size());
    std::vector<Candidate> drawn;
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
      drawn.emplace_back(cs->strings[pool[i]]);
    }
    const auto scored = score_all(std::move(drawn), ei, cfg.jobs);
    return scored[argmax(scored)].genotype;
  }
  Rng search = rng.split();
  GaResult r;
  if (cfg.optimizer == AcquisitionOptimizer::rs) {
    r = random_search_maximize(ei, space, cfg.rs_samples, search, cfg.jobs);
  } else {
    GaConfig ga = cfg.ga;
    ga.jobs = cfg.jobs;
    r = maximize(ei, space, ga, search);
  }
  return pick_unseen(r, data, space, rng);
}

}  // namespace detail

/// One optimization run. Objective exceptions stop the run; the rows so far
/// are kept and the message lands in `failure`.
inline BoTrace run(const Objective& objective, const StringSpace& space, const BoConfig& cfg) {
  cfg.validate();
  using detail::Clock;
  BoTrace trace;
  trace.seed = cfg.seed;
  Dataset data;
  GpHyperparameters hyper = cfg.surrogate;
  double best = -std::numeric_limits<double>::infinity();
  double objective_time = 0.0;

  auto evaluate = [&](const Candidate& c, std::size_t step, std::size_t index) {
    Rng noise = Rng::derive(cfg.seed, {detail::objective_stream, step, index});
    const auto t0 = Clock::now();
    const double y = objective(c, noise);
    objective_time += std::chrono::duration<double>(Clock::now() - t0).count();
    if (!std::isfinite(y)) throw Error("objective returned a non-finite value for '" + join(c.str) + "'");
    data.add(c.str, y);
    best = std::max(best, y);
    return y;
  };
  auto push = [&](const Candidate& c, std::size_t step, double y, double overhead) {
    trace.rows.push_back({cfg.seed, step, c.str, y, best, hyper, cfg.record_overhead ? overhead : 0.0});
  };

  std::size_t step = 0;
  try {
    Rng init = Rng::derive(cfg.seed, {detail::init_stream});
    const auto n0 = cfg.init_count.value_or(default_init_count(space));
    const auto first = sample(space, init, n0);
    for (std::size_t i = 0; i < first.size(); ++i) {
      const double y = evaluate(first[i], 0, i);
      push(first[i], 0, y, 0.0);
    }
    for (step = 1; step <= cfg.budget; ++step) {
      const auto t0 = Clock::now();
      const double before = objective_time;
      std::optional<GpModel> model;
      if (data.size() >= 2) {
        Rng fit_rng = Rng::derive(cfg.seed, {detail::fit_stream, step});
        FitOptions fo = cfg.fit;
        fo.jobs = cfg.jobs;
        model.emplace(fit(data, hyper, fo, fit_rng));
        if (cfg.refit_on_collapse && model->hyper().output_scale < kCollapsedScale &&
            fo.noise_min < fo.noise_max) {
          FitOptions pinned = fo;
          pinned.noise_max = fo.noise_min;
          GpHyperparameters start = hyper;
          start.noise_variance = fo.noise_min;
          model.emplace(fit(data, start, pinned, fit_rng));
        }
        hyper = model->hyper();
      } else {
        model.emplace(data, hyper, true, cfg.jobs);
      }
      Rng search = Rng::derive(cfg.seed, {detail::search_stream, step});
      const auto next = detail::propose(*model, space, cfg, search);
      const double y = evaluate(next, step, 0);
      const double total = std::chrono::duration<double>(Clock::now() - t0).count();
      push(next, step, y, total - (objective_time - before));
    }
  } catch (const std::exception& e) {
    trace.failure = e.what();
  }
  return trace;
}

/// Baseline with the same layout as run(): the initial draws, then `budget`
/// further uniform space samples, skipping evaluated strings where possible.
inline BoTrace run_random_search(const Objective& objective, const StringSpace& space, const BoConfig& cfg) {
  cfg.validate();
  BoTrace trace;
  trace.seed = cfg.seed;
  Dataset data;
  double best = -std::numeric_limits<double>::infinity();
  auto evaluate = [&](const Candidate& c, std::size_t step, std::size_t index) {
    Rng noise = Rng::derive(cfg.seed, {detail::objective_stream, step, index});
    const double y = objective(c, noise);
    if (!std::isfinite(y)) throw Error("objective returned a non-finite value for '" + join(c.str) + "'");
    data.add(c.str, y);
    best = std::max(best, y);
    trace.rows.push_back({cfg.seed, step, c.str, y, best, cfg.surrogate, 0.0});
  };
  try {
    Rng init = Rng::derive(cfg.seed, {detail::init_stream});
    const auto first = sample(space, init, cfg.init_count.value_or(default_init_count(space)));
    for (std::size_t i = 0; i < first.size(); ++i) evaluate(first[i], 0, i);
    for (std::size_t step = 1; step <= cfg.budget; ++step) {
      Rng draw = Rng::derive(cfg.seed, {detail::search_stream, step});
      Candidate c = sample_one(space, draw);
      for (int attempt = 0; attempt < 1000 && data.contains(c.str); ++attempt) c = sample_one(space, draw);
      evaluate(c, step, 0);
    }
  } catch (const std::exception& e) {
    trace.failure = e.what();
  }
  return trace;
}

/// Independent runs, one per seed, optionally in parallel. The objective
/// must tolerate concurrent calls when jobs > 1.
inline std::vector<BoTrace> run_replicated(const Objective& objective, const StringSpace& space,
                                           const BoConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                           std::size_t jobs = 1, bool random_baseline = false) {
  if (seeds.empty()) throw Error("run_replicated needs at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw Error("seeds must be distinct");
  std::vector<BoTrace> out(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    BoConfig c = cfg;
    c.seed = seeds[i];
    if (jobs > 1) c.jobs = 1;
    out[i] = random_baseline ? run_random_search(objective, space, c) : run(objective, space, c);
  });
  return out;
}

}  // namespace stringbo

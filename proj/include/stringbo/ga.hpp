#pragma once

// Genetic-algorithm maximizer over string spaces.

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "stringbo/parallel.hpp"
#include "stringbo/spaces.hpp"

namespace stringbo {

struct GaConfig {
  std::size_t population = 100;
  double tournament_fraction = 0.5;
  double crossover_prob = 0.75;
  double mutation_prob = 0.1;
  std::size_t max_generations = 100;
  std::size_t jobs = 1;  // concurrent score evaluations

  void validate() const {
    if (population < 2) throw Error("GA population must be at least 2");
    for (double p : {tournament_fraction, crossover_prob, mutation_prob})
      if (!(p >= 0.0 && p <= 1.0)) throw Error("GA probabilities must lie in [0, 1]");
    if (max_generations < 1) throw Error("GA needs at least one generation");
  }
};

struct Individual {
  Candidate genotype;
  double score = 0.0;
};

using ScoreFn = std::function<double(const Candidate&)>;

/// Redraws the token at one uniform position from the tokens permitted there.
inline Str mutate_string(Str s, const StringSpace& space, Rng& rng) {
  if (s.empty()) return s;
  if (const auto* u = space.as<Unconstrained>()) {
    s[rng.index(s.size())] = u->alphabet[rng.index(u->alphabet.size())];
    return s;
  }
  if (const auto* l = space.as<LocallyConstrained>()) {
    if (s.size() != l->allowed.size()) throw Error("string does not fit the space");
    if (l->block_moves()) {
      const auto b = rng.index(l->blocks.size());
      const auto& pick = l->blocks[b][rng.index(l->blocks[b].size())];
      std::copy(pick.begin(), pick.end(), s.begin() + static_cast<std::ptrdiff_t>(b * l->block_size));
      return s;
    }
    const auto i = rng.index(s.size());
    s[i] = l->allowed[i][rng.index(l->allowed[i].size())];
    return s;
  }
  throw Error("string mutation needs an unconstrained or locally constrained space");
}

/// Swaps the prefixes of length `point`: ("AAAA", "BBBB", 2) -> ("BBAA", "AABB").
inline std::pair<Str, Str> crossover_at(const Str& s1, const Str& s2, std::size_t point) {
  if (point > s1.size() || point > s2.size()) throw Error("crossover point beyond string end");
  const auto p = static_cast<std::ptrdiff_t>(point);
  Str a(s2.begin(), s2.begin() + p), b(s1.begin(), s1.begin() + p);
  a.insert(a.end(), s1.begin() + p, s1.end());
  b.insert(b.end(), s2.begin() + p, s2.end());
  return {std::move(a), std::move(b)};
}

/// Single-point crossover with the point uniform over 1..L-1 of the shorter
/// parent; with `block` > 1 the point falls on block boundaries.
inline std::pair<Str, Str> crossover_strings(const Str& s1, const Str& s2, Rng& rng, std::size_t block = 1) {
  const std::size_t len = std::min(s1.size(), s2.size());
  const std::size_t slots = len / block;
  if (slots < 2) return {s1, s2};
  return crossover_at(s1, s2, block * (1 + rng.index(slots - 1)));
}

/// Fixed-length form: the parents must have equal length.
inline std::pair<Str, Str> crossover_fixed(const Str& s1, const Str& s2, Rng& rng) {
  if (s1.size() != s2.size()) throw Error("crossover parents differ in length");
  return crossover_strings(s1, s2, rng);
}

/// Space-appropriate mutation.
inline Candidate mutate(const Candidate& c, const StringSpace& space, Rng& rng) {
  if (const auto* g = space.as<GrammarConstrained>()) {
    if (!c.tree) throw Error("grammar candidate without a tree");
    return Candidate(mutate_tree(*c.tree, *g->grammar, g->sampler, rng));
  }
  if (space.as<CandidateSet>()) return sample_one(space, rng);
  return Candidate(mutate_string(c.str, space, rng));
}

/// Space-appropriate crossover. Candidate sets have no crossover; the
/// parents pass through.
inline std::pair<Candidate, Candidate> crossover(const Candidate& a, const Candidate& b,
                                                 const StringSpace& space, Rng& rng) {
  if (const auto* g = space.as<GrammarConstrained>()) {
    if (!a.tree || !b.tree) throw Error("grammar candidate without a tree");
    auto r = crossover_trees(*a.tree, *b.tree, rng, g->sampler.max_depth);
    if (!r.swapped) return {a, b};
    return {Candidate(std::move(r.first)), Candidate(std::move(r.second))};
  }
  if (space.as<CandidateSet>()) return {a, b};
  std::size_t block = 1;
  if (const auto* l = space.as<LocallyConstrained>(); l && l->block_moves()) block = l->block_size;
  auto [x, y] = crossover_strings(a.str, b.str, rng, block);
  return {Candidate(std::move(x)), Candidate(std::move(y))};
}

/// Draws ceil(fraction * N) members with replacement and returns the index
/// of the best; equal scores go to the lowest index.
inline std::size_t tournament(const std::vector<double>& scores, double fraction, Rng& rng) {
  if (scores.empty()) throw Error("tournament over an empty population");
  const auto n = scores.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  std::size_t best = rng.index(n);
  for (std::size_t i = 1; i < k; ++i) {
    const auto j = rng.index(n);
    if (scores[j] > scores[best] || (scores[j] == scores[best] && j < best)) best = j;
  }
  return best;
}

/// One generation: tournament winners, crossover with prob p_c, then
/// mutation of each offspring with prob p_m. Returns exactly N members.
inline std::vector<Candidate> evolve(const std::vector<Individual>& pop, const GaConfig& cfg,
                                     const StringSpace& space, Rng& rng) {
  std::vector<double> scores(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) scores[i] = pop[i].score;
  std::vector<Candidate> next;
  next.reserve(pop.size() + 1);
  while (next.size() < pop.size()) {
    const auto& s1 = pop[tournament(scores, cfg.tournament_fraction, rng)].genotype;
    if (rng.uniform() < cfg.crossover_prob) {
      const auto& s2 = pop[tournament(scores, cfg.tournament_fraction, rng)].genotype;
      auto [a, b] = crossover(s1, s2, space, rng);
      if (rng.uniform() < cfg.mutation_prob) a = mutate(a, space, rng);
      if (rng.uniform() < cfg.mutation_prob) b = mutate(b, space, rng);
      next.push_back(std::move(a));
      next.push_back(std::move(b));
    } else {
      next.push_back(rng.uniform() < cfg.mutation_prob ? mutate(s1, space, rng) : s1);
    }
  }
  next.resize(pop.size());
  return next;
}

struct GaResult {
  Individual best;
  std::vector<Individual> final_population;
  std::size_t generations = 0;
  std::size_t evaluations = 0;
};

inline std::vector<Individual> score_all(std::vector<Candidate> members, const ScoreFn& score,
                                         std::size_t jobs) {
  std::vector<Individual> out(members.size());
  parallel_for(members.size(), jobs, [&](std::size_t i) {
    out[i].score = score(members[i]);
    out[i].genotype = std::move(members[i]);
  });
  return out;
}

namespace detail {

// Initial draws; a space no larger than `count` is covered in full first.
inline std::vector<Candidate> initial_sample(const StringSpace& space, Rng& rng, std::size_t count) {
  const auto n = space.cardinality();
  if (!n || *n > static_cast<double>(count) || space.as<CandidateSet>()) return sample(space, rng, count);
  auto all = enumerate(space, count);
  rng.shuffle(all);
  std::vector<Candidate> out(all.begin(), all.end());
  while (out.size() < count) out.push_back(sample_one(space, rng));
  return out;
}

inline std::size_t argmax(const std::vector<Individual>& pop) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.size(); ++i)
    if (pop[i].score > pop[best].score) best = i;
  return best;
}

}  // namespace detail

/// Evolves a sampled population until a generation fails to beat the best
/// score seen so far, or max_generations. Returns the best individual seen
/// in any generation.
inline GaResult maximize(const ScoreFn& score, const StringSpace& space, const GaConfig& cfg, Rng& rng) {
  cfg.validate();
  GaResult r;
  r.final_population = score_all(detail::initial_sample(space, rng, cfg.population), score, cfg.jobs);
  r.evaluations = r.final_population.size();
  r.best = r.final_population[detail::argmax(r.final_population)];
  while (r.generations < cfg.max_generations) {
    Rng gen = rng.split();
    auto next = score_all(evolve(r.final_population, cfg, space, gen), score, cfg.jobs);
    r.evaluations += next.size();
    ++r.generations;
    r.final_population = std::move(next);
    const auto& top = r.final_population[detail::argmax(r.final_population)];
    if (!(top.score > r.best.score)) break;
    r.best = top;
  }
  return r;
}

/// Best of `samples` space draws.
inline GaResult random_search_maximize(const ScoreFn& score, const StringSpace& space, std::size_t samples,
                                       Rng& rng, std::size_t jobs = 1) {
  if (samples < 1) throw Error("random search needs at least one sample");
  GaResult r;
  r.final_population = score_all(detail::initial_sample(space, rng, samples), score, jobs);
  r.evaluations = samples;
  r.best = r.final_population[detail::argmax(r.final_population)];
  return r;
}

}  // namespace stringbo

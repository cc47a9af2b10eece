#pragma once

// JSON run configuration and the built-in benchmark tasks.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stringbo/analysis.hpp"
#include "stringbo/bo.hpp"
#include "stringbo/objectives.hpp"

namespace stringbo {

using Json = nlohmann::json;

/// A space plus an objective over it.
struct Problem {
  StringSpace space;
  Objective objective;
  bool deterministic = false;        // repeated evaluations always agree
  std::optional<ScoreRange> range;   // exact noise-free extremes when known
};

struct RunConfig {
  Json space;
  Json objective;
  BoConfig bo;
  std::string noise = "auto";  // "auto", "fit", or a number held in fixed_noise
  std::optional<double> fixed_noise;
  bool random_baseline = false;  // plain random search instead of BO
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "results";
  std::size_t jobs = 1;
  std::filesystem::path base_dir = ".";  // relative file references resolve here
};

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string("bad value for '") + key + "': " + j.at(key).dump());
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& file) {
  const std::filesystem::path p(file);
  return p.is_absolute() ? p : base / p;
}

inline std::vector<Token> tokens_of(const Json& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("missing '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_string()) return chars(v.get<std::string>());
  if (v.is_array()) return v.get<std::vector<Token>>();
  throw Error(std::string("'") + key + "' must be a string or a list of tokens");
}

inline std::vector<std::uint64_t> parse_seeds(const Json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_number_unsigned() || j.is_number_integer()) {
    const auto n = j.get<std::int64_t>();
    if (n < 1) throw Error("seed count must be positive");
    for (std::int64_t i = 0; i < n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  } else if (j.is_array()) {
    seeds = j.get<std::vector<std::uint64_t>>();
  } else {
    throw Error("seeds must be a count or a list");
  }
  if (seeds.empty()) throw Error("no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw Error("seeds must be distinct");
  return seeds;
}

}  // namespace detail

/// "7" -> 0..6; "1,4,9" -> those seeds.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  if (text.find(',') == std::string::npos) {
    try {
      std::size_t used = 0;
      const auto n = std::stoll(text, &used);
      if (used == text.size()) return detail::parse_seeds(Json(n));
    } catch (const std::logic_error&) {
    }
    throw Error("bad seed list '" + text + "'");
  }
  Json arr = Json::array();
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(part, &used);
      if (used != part.size()) throw Error("");
      arr.push_back(v);
    } catch (const std::exception&) {
      throw Error("bad seed list '" + text + "'");
    }
  }
  return detail::parse_seeds(arr);
}

inline RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir = ".") {
  detail::check_keys(j,
                     {"space", "objective", "kernel", "surrogate", "fit", "ga", "optimizer", "rs_samples",
                      "subsample", "budget", "init_count", "seeds", "jobs", "out", "timing", "strategy"},
                     "config");
  RunConfig c;
  c.base_dir = base_dir;
  if (!j.contains("space")) throw Error("config needs a 'space'");
  if (!j.contains("objective")) throw Error("config needs an 'objective'");
  c.space = j.at("space");
  c.objective = j.at("objective");

  auto& b = c.bo;
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    detail::check_keys(k, {"kind", "match_decay", "gap_decay", "max_order", "splits", "ngram_order", "lengthscale"},
                       "kernel");
    const auto kind = detail::get_or<std::string>(k, "kind", "ssk");
    if (kind == "ssk") b.surrogate.kernel.kind = KernelKind::ssk;
    else if (kind == "ngram") b.surrogate.kernel.kind = KernelKind::ngram;
    else if (kind == "onehot") b.surrogate.kernel.kind = KernelKind::onehot;
    else throw Error("unknown kernel kind '" + kind + "'");
    auto& p = b.surrogate.kernel.ssk;
    p.match_decay = detail::get_or(k, "match_decay", p.match_decay);
    p.gap_decay = detail::get_or(k, "gap_decay", p.gap_decay);
    p.max_order = detail::get_or(k, "max_order", p.max_order);
    p.splits = detail::get_or(k, "splits", p.splits);
    b.surrogate.kernel.ngram_order = detail::get_or(k, "ngram_order", b.surrogate.kernel.ngram_order);
    b.surrogate.kernel.lengthscale = detail::get_or(k, "lengthscale", b.surrogate.kernel.lengthscale);
  }
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    detail::check_keys(s, {"output_scale", "noise_variance", "noise"}, "surrogate");
    b.surrogate.output_scale = detail::get_or(s, "output_scale", b.surrogate.output_scale);
    b.surrogate.noise_variance = detail::get_or(s, "noise_variance", b.surrogate.noise_variance);
    if (s.contains("noise")) {
      const auto& n = s.at("noise");
      if (n.is_number()) {
        c.noise = "fixed";
        c.fixed_noise = n.get<double>();
        if (!(*c.fixed_noise >= 0.0)) throw Error("fixed noise must be non-negative");
      } else if (n == "auto" || n == "fit") {
        c.noise = n.get<std::string>();
      } else {
        throw Error("surrogate.noise must be \"auto\", \"fit\" or a number");
      }
    }
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    detail::check_keys(f, {"restarts", "max_iterations", "noise_min", "noise_max"}, "fit");
    b.fit.restarts = detail::get_or(f, "restarts", b.fit.restarts);
    b.fit.max_iterations = detail::get_or(f, "max_iterations", b.fit.max_iterations);
    b.fit.noise_min = detail::get_or(f, "noise_min", b.fit.noise_min);
    b.fit.noise_max = detail::get_or(f, "noise_max", b.fit.noise_max);
    if (!(b.fit.noise_min > 0.0 && b.fit.noise_min <= b.fit.noise_max)) throw Error("bad noise bounds");
  }
  if (j.contains("ga")) {
    const auto& g = j.at("ga");
    detail::check_keys(g, {"population", "tournament_fraction", "crossover_prob", "mutation_prob", "max_generations"},
                       "ga");
    b.ga.population = detail::get_or(g, "population", b.ga.population);
    b.ga.tournament_fraction = detail::get_or(g, "tournament_fraction", b.ga.tournament_fraction);
    b.ga.crossover_prob = detail::get_or(g, "crossover_prob", b.ga.crossover_prob);
    b.ga.mutation_prob = detail::get_or(g, "mutation_prob", b.ga.mutation_prob);
    b.ga.max_generations = detail::get_or(g, "max_generations", b.ga.max_generations);
  }
  const auto opt = detail::get_or<std::string>(j, "optimizer", "ga");
  if (opt == "ga") b.optimizer = AcquisitionOptimizer::ga;
  else if (opt == "rs") b.optimizer = AcquisitionOptimizer::rs;
  else if (opt == "subsample") b.optimizer = AcquisitionOptimizer::subsample;
  else throw Error("unknown optimizer '" + opt + "'");
  const auto strategy = detail::get_or<std::string>(j, "strategy", "bo");
  if (strategy != "bo" && strategy != "random") throw Error("strategy must be \"bo\" or \"random\"");
  c.random_baseline = strategy == "random";
  b.rs_samples = detail::get_or(j, "rs_samples", b.rs_samples);
  b.subsample = detail::get_or(j, "subsample", b.subsample);
  b.budget = detail::get_or(j, "budget", b.budget);
  if (j.contains("init_count") && !j.at("init_count").is_null()) b.init_count = detail::get_or<std::size_t>(j, "init_count", 1);
  if (j.contains("seeds")) c.seeds = detail::parse_seeds(j.at("seeds"));
  c.jobs = detail::get_or<std::size_t>(j, "jobs", 1);
  if (c.jobs < 1) throw Error("jobs must be at least 1");
  c.out = detail::get_or<std::string>(j, "out", "results");
  b.record_overhead = detail::get_or(j, "timing", false);
  b.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
  Json j;
  try {
    j = Json::parse(detail::read_file(file), nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("cannot parse '" + file.string() + "': " + e.what());
  }
  return parse_run_config(j, file.has_parent_path() ? file.parent_path() : ".");
}

namespace detail {

inline StringSpace build_space(const Json& s, const std::filesystem::path& base,
                               std::shared_ptr<const CandidateFile>& candidates) {
  const auto type = get_or<std::string>(s, "type", "");
  if (type == "unconstrained") {
    check_keys(s, {"type", "alphabet", "length", "min_length", "max_length"}, "space");
    const Alphabet a(tokens_of(s, "alphabet"));
    if (s.contains("length")) return StringSpace::unconstrained(a, get_or<std::size_t>(s, "length", 1));
    return StringSpace::unconstrained(a, get_or<std::size_t>(s, "min_length", 1),
                                      get_or<std::size_t>(s, "max_length", 1));
  }
  if (type == "local") {
    check_keys(s, {"type", "file", "positions"}, "space");
    if (s.contains("file")) return load_local_constraints(read_file(resolve(base, s.at("file").get<std::string>())));
    return StringSpace::locally_constrained(get_or<std::vector<std::vector<Token>>>(s, "positions", {}));
  }
  if (type == "protein") {
    check_keys(s, {"type", "protein", "codon_table", "representation", "codon_moves"}, "space");
    const auto table = s.contains("codon_table")
                           ? load_codon_table(read_file(resolve(base, s.at("codon_table").get<std::string>())))
                           : builtin_codon_table();
    const auto rep = get_or<std::string>(s, "representation", "codon");
    if (rep != "codon" && rep != "base") throw Error("representation must be \"codon\" or \"base\"");
    return protein_space(get_or<std::string>(s, "protein", ""), table,
                         rep == "codon" ? GeneRepresentation::codon : GeneRepresentation::base,
                         get_or(s, "codon_moves", true));
  }
  if (type == "grammar") {
    check_keys(s, {"type", "grammar", "discount", "max_depth"}, "space");
    const auto file = get_or<std::string>(s, "grammar", "builtin");
    auto g = std::make_shared<const Grammar>(file == "builtin" ? builtin_expression_grammar()
                                                               : load_grammar(read_file(resolve(base, file))));
    SamplerConfig sc;
    sc.discount = get_or(s, "discount", sc.discount);
    sc.max_depth = get_or(s, "max_depth", sc.max_depth);
    return StringSpace::grammar_constrained(std::move(g), sc);
  }
  if (type == "candidates") {
    check_keys(s, {"type", "file", "tokens"}, "space");
    std::optional<Alphabet> alpha;
    if (s.contains("tokens")) alpha.emplace(tokens_of(s, "tokens"));
    auto file = std::make_shared<CandidateFile>(
        load_candidates(read_file(resolve(base, get_or<std::string>(s, "file", ""))), alpha ? &*alpha : nullptr));
    candidates = file;
    return StringSpace::candidate_set(file->strings);
  }
  throw Error("unknown space type '" + type + "'");
}

inline std::optional<ScoreRange> exhaustive_range(const StringSpace& space, const std::function<double(const Str&)>& f,
                                                  std::size_t limit = 1u << 18) {
  const auto n = space.cardinality();
  if (!n || *n > static_cast<double>(limit)) return std::nullopt;
  ScoreRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : enumerate(space, limit)) {
    const double v = f(s);
    r.min = std::min(r.min, v);
    r.max = std::max(r.max, v);
  }
  return r;
}

}  // namespace detail

/// Materializes the space and objective of a config.
inline Problem build_problem(const RunConfig& c) {
  std::shared_ptr<const CandidateFile> candidates;
  Problem p{detail::build_space(c.space, c.base_dir, candidates), {}, false, std::nullopt};
  const auto& o = c.objective;
  const auto type = detail::get_or<std::string>(o, "type", "");
  if (type == "pattern") {
    detail::check_keys(o, {"type", "pattern", "mode", "window", "noise_sd", "unit"}, "objective");
    PatternSpec spec;
    spec.pattern = detail::tokens_of(o, "pattern");
    const auto mode = detail::get_or<std::string>(o, "mode", "overlapping");
    if (mode == "overlapping") spec.mode = CountMode::overlapping;
    else if (mode == "non_overlapping") spec.mode = CountMode::non_overlapping;
    else throw Error("unknown count mode '" + mode + "'");
    if (o.contains("window")) {
      const auto w = o.at("window").get<std::vector<std::size_t>>();
      if (w.size() != 2) throw Error("window must be [begin, end]");
      spec.window = {{w[0], w[1]}};
    }
    spec.noise_sd = detail::get_or(o, "noise_sd", 0.0);
    spec.validate();
    const auto unit = detail::get_or<std::string>(o, "unit", "token");
    if (unit != "token" && unit != "char") throw Error("unit must be \"token\" or \"char\"");
    const bool by_char = unit == "char";
    auto view = [by_char](const Str& s) { return by_char ? chars(join(s)) : s; };
    p.objective = [spec, view](const Candidate& cand, Rng& rng) { return count_pattern(view(cand.str), spec, rng); };
    p.deterministic = spec.noise_sd == 0.0;
    auto clean = spec;
    clean.noise_sd = 0.0;
    if (!by_char && (p.space.as<Unconstrained>() ||
                     (p.space.as<LocallyConstrained>() && !p.space.as<LocallyConstrained>()->block_moves())))
      p.range = pattern_count_range(p.space, clean);
    else
      p.range = detail::exhaustive_range(p.space, [&](const Str& s) { return count_pattern(view(s), clean); });
  } else if (type == "symreg") {
    detail::check_keys(o, {"type", "points", "min", "max"}, "objective");
    if (!p.space.as<GrammarConstrained>()) throw Error("symreg needs a grammar space");
    const auto spec = default_symreg_spec(detail::get_or<std::size_t>(o, "points", 1000),
                                          detail::get_or(o, "min", -10.0), detail::get_or(o, "max", 10.0));
    p.objective = [spec](const Candidate& cand, Rng&) { return symreg_score(cand, spec); };
    p.deterministic = true;
  } else if (type == "external") {
    detail::check_keys(o, {"type", "command", "negate", "timeout", "concurrent"}, "objective");
    ExternalCommand cmd;
    cmd.command_template = detail::get_or<std::string>(o, "command", "");
    cmd.negate = detail::get_or(o, "negate", false);
    cmd.timeout_seconds = detail::get_or(o, "timeout", cmd.timeout_seconds);
    cmd.concurrent = detail::get_or(o, "concurrent", false);
    auto f = external_objective(cmd);
    p.objective = [f](const Candidate& cand, Rng&) { return f(cand.str); };
  } else if (type == "lookup") {
    detail::check_keys(o, {"type"}, "objective");
    if (!candidates || candidates->scores.size() != candidates->strings.size())
      throw Error("lookup objective needs a candidates file with a score for every line");
    p.objective = [candidates](const Candidate& cand, Rng&) {
      const auto it = candidates->scores.find(cand.str);
      if (it == candidates->scores.end()) throw Error("no score for '" + join(cand.str) + "'");
      return it->second;
    };
    p.deterministic = true;
    ScoreRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& [s, v] : candidates->scores) {
      r.min = std::min(r.min, v);
      r.max = std::max(r.max, v);
    }
    p.range = r;
  } else {
    throw Error("unknown objective type '" + type + "'");
  }
  return p;
}

/// BoConfig with the noise policy applied. A number pins the noise variance;
/// "auto" fits it, but for deterministic objectives a fit that collapses to
/// pure noise is redone with the noise held at fit.noise_min.
inline BoConfig effective_bo(const RunConfig& c, const Problem& p) {
  BoConfig b = c.bo;
  if (c.fixed_noise) {
    b.fit.noise_min = b.fit.noise_max = *c.fixed_noise;
    b.surrogate.noise_variance = *c.fixed_noise;
  } else if (c.noise == "auto" && p.deterministic) {
    b.refit_on_collapse = true;
  }
  return b;
}

struct TaskInfo {
  std::string name;
  std::string summary;
  Json config;
};

/// Built-in benchmark tasks; each is an ordinary run config.
inline const std::vector<TaskInfo>& task_registry() {
  static const std::vector<TaskInfo> tasks = [] {
    auto pattern_task = [](const std::string& name, const std::string& summary, const std::string& alphabet,
                           std::size_t len, Json objective, std::size_t steps) {
      return TaskInfo{name, summary,
                      Json{{"space", {{"type", "unconstrained"}, {"alphabet", alphabet}, {"length", len}}},
                           {"objective", std::move(objective)},
                           {"budget", steps}}};
    };
    std::vector<TaskInfo> t;
    t.push_back(pattern_task("count-101-bin20", "occurrences of 101 in binary strings of length 20", "01", 20,
                             {{"type", "pattern"}, {"pattern", "101"}}, 10));
    t.push_back(pattern_task("count-101-nonoverlap-bin20", "disjoint occurrences of 101, binary length 20", "01", 20,
                             {{"type", "pattern"}, {"pattern", "101"}, {"mode", "non_overlapping"}}, 15));
    t.push_back(pattern_task("count-10??1-bin20", "occurrences of 10??1, binary length 20", "01", 20,
                             {{"type", "pattern"}, {"pattern", "10??1"}}, 25));
    t.push_back(pattern_task("count-101-first15-bin30", "occurrences of 101 in the first 15 of 30 binary digits",
                             "01", 30, {{"type", "pattern"}, {"pattern", "101"}, {"window", {0, 15}}}, 40));
    t.push_back(pattern_task("count-101-noisy-bin20", "occurrences of 101 plus N(0, 2) noise, binary length 20",
                             "01", 20, {{"type", "pattern"}, {"pattern", "101"}, {"noise_sd", std::sqrt(2.0)}}, 25));
    t.push_back(pattern_task("count-123-quad30", "occurrences of 123 over {0..3}, length 30", "0123", 30,
                             {{"type", "pattern"}, {"pattern", "123"}}, 20));
    t.push_back(pattern_task("count-01??4-quint20", "occurrences of 01??4 over {0..4}, length 20", "01234", 20,
                             {{"type", "pattern"}, {"pattern", "01??4"}}, 50));
    t.push_back({"protein-cg-tikenifgvs", "CG dinucleotides in genes coding TIKENIFGVS (codon tokens)",
                 Json{{"space", {{"type", "protein"}, {"protein", "TIKENIFGVS"}, {"representation", "codon"}}},
                      {"objective", {{"type", "pattern"}, {"pattern", "cg"}, {"unit", "char"}}},
                      {"budget", 25}}});
    t.push_back({"symreg", "expression fitting 1/3 + x + sin(x*x) on [-10, 10]; 15 initial, 50 total",
                 Json{{"space", {{"type", "grammar"}, {"grammar", "builtin"}}},
                      {"objective", {{"type", "symreg"}}},
                      {"init_count", 15},
                      {"budget", 35}}});
    return t;
  }();
  return tasks;
}

inline const TaskInfo& find_task(const std::string& name) {
  for (const auto& t : task_registry())
    if (t.name == name) return t;
  std::string known;
  for (const auto& t : task_registry()) known += (known.empty() ? "" : ", ") + t.name;
  throw Error("unknown task '" + name + "' (known: " + known + ")");
}

/// Runs every seed of a config; traces come back in seed order.
inline std::vector<BoTrace> execute(const RunConfig& c, const Problem& p) {
  return run_replicated(p.objective, p.space, effective_bo(c, p), c.seeds, c.jobs, c.random_baseline);
}

}  // namespace stringbo

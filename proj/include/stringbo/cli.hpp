#pragma once

// Command-line front end: run, benchmark, kpca, aggregate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "stringbo/analysis.hpp"
#include "stringbo/config.hpp"

namespace stringbo {

namespace cli {

inline void setup_logging() {
  auto logger = spdlog::stderr_color_mt("stringbo");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("STRINGBO_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    if (lvl == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("unknown STRINGBO_LOG level '{}', keeping info", env);
    else
      spdlog::set_level(lvl);
  }
}

struct Overrides {
  std::string out, seeds, optimizer, grammar, candidates, codon_table, protein;
  std::size_t jobs = 0;
  bool timing = false;
};

inline void apply(RunConfig& c, const Overrides& o) {
  if (!o.out.empty()) c.out = o.out;
  if (!o.seeds.empty()) c.seeds = parse_seed_list(o.seeds);
  if (o.jobs > 0) c.jobs = o.jobs;
  if (o.timing) c.bo.record_overhead = true;
  if (!o.optimizer.empty()) {
    if (o.optimizer == "ga") c.bo.optimizer = AcquisitionOptimizer::ga;
    else if (o.optimizer == "rs") c.bo.optimizer = AcquisitionOptimizer::rs;
    else c.bo.optimizer = AcquisitionOptimizer::subsample;
  }
  const auto type = c.space.value("type", std::string());
  auto set = [&](const std::string& value, const char* key, const char* needs, const char* flag) {
    if (value.empty()) return;
    if (type != needs) throw Error(std::string(flag) + " needs a '" + needs + "' space, config has '" + type + "'");
    c.space[key] = std::filesystem::absolute(value).string();
  };
  set(o.grammar, "grammar", "grammar", "--grammar");
  set(o.candidates, "file", "candidates", "--candidates");
  set(o.codon_table, "codon_table", "protein", "--codon-table");
  if (!o.protein.empty()) {
    if (type != "protein") throw Error("--protein needs a 'protein' space");
    c.space["protein"] = o.protein;
  }
}

inline void write_file(const std::filesystem::path& p, const std::function<void(std::ostream&)>& body) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  body(out);
  if (!out) throw Error("write to '" + p.string() + "' failed");
}

// Runs the config, writes one trace CSV per seed (plus a summary when asked)
// and returns the number of failed seeds.
inline int execute_and_write(const RunConfig& c, bool summary) {
  const auto problem = build_problem(c);
  std::filesystem::create_directories(c.out);
  spdlog::info("{} seed(s), budget {}, writing to {}", c.seeds.size(), c.bo.budget, c.out.string());
  const auto traces = execute(c, problem);
  int failed = 0;
  for (const auto& t : traces) {
    write_file(c.out / ("trace_seed" + std::to_string(t.seed) + ".csv"),
               [&](std::ostream& out) { write_trace_csv(out, {t}); });
    if (t.failure) {
      ++failed;
      spdlog::error("seed {} stopped after {} evaluations: {}", t.seed, t.rows.size(), *t.failure);
    } else {
      spdlog::info("seed {}: best {}", t.seed, t.best());
    }
  }
  if (summary) {
    if (failed) {
      spdlog::warn("summary skipped: {} seed(s) failed", failed);
    } else {
      write_file(c.out / "summary.csv",
                 [&](std::ostream& out) { write_summary_csv(out, aggregate(traces, problem.range)); });
    }
  }
  return failed;
}

}  // namespace cli

/// Entry point; returns the process exit code.
inline int cli_main(int argc, char** argv) {
  cli::setup_logging();
  CLI::App app{"Bayesian optimization over strings"};
  app.require_subcommand(1);
  cli::Overrides ov;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", ov.out, "output directory");
    sub->add_option("--seeds", ov.seeds, "seed count N (seeds 0..N-1) or a comma list");
    sub->add_option("--jobs", ov.jobs, "replications run in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--optimizer", ov.optimizer, "acquisition optimizer")
        ->check(CLI::IsMember({"ga", "rs", "subsample"}));
    sub->add_flag("--timing", ov.timing, "record wall-clock overhead (makes output nondeterministic)");
  };

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run a JSON config");
  run_cmd->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  add_common(run_cmd);
  run_cmd->add_option("--grammar", ov.grammar, "grammar file for a grammar space")->check(CLI::ExistingFile);
  run_cmd->add_option("--candidates", ov.candidates, "candidate file for a candidate space")->check(CLI::ExistingFile);
  run_cmd->add_option("--codon-table", ov.codon_table, "codon table for a protein space")->check(CLI::ExistingFile);
  run_cmd->add_option("--protein", ov.protein, "amino-acid sequence for a protein space");

  std::string task;
  bool list = false;
  auto* bench_cmd = app.add_subcommand("benchmark", "run a built-in task");
  bench_cmd->add_option("--task", task, "task name");
  bench_cmd->add_flag("--list", list, "list tasks");
  add_common(bench_cmd);

  std::string kpca_in, kpca_out, kpca_tokens;
  std::size_t components = 2;
  KernelParams kp;
  auto* kpca_cmd = app.add_subcommand("kpca", "kernel PCA coordinates for a string file");
  kpca_cmd->add_option("--candidates", kpca_in, "strings, one per line, optional tab-separated score")
      ->required()
      ->check(CLI::ExistingFile);
  kpca_cmd->add_option("--out", kpca_out, "output CSV")->required();
  kpca_cmd->add_option("--components", components, "number of components")->check(CLI::PositiveNumber);
  kpca_cmd->add_option("--match-decay", kp.match_decay, "match decay");
  kpca_cmd->add_option("--gap-decay", kp.gap_decay, "gap decay");
  kpca_cmd->add_option("--max-order", kp.max_order, "longest subsequence");
  kpca_cmd->add_option("--tokens", kpca_tokens, "space-separated token list for multi-character symbols");

  std::vector<std::string> inputs;
  std::string agg_out;
  auto* agg_cmd = app.add_subcommand("aggregate", "mean and standard error over trace CSVs");
  agg_cmd->add_option("inputs", inputs, "trace CSV files")->required()->check(CLI::ExistingFile);
  agg_cmd->add_option("--out", agg_out, "summary CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    std::cerr << app.help();
    return code == 0 ? 2 : code;
  }

  try {
    if (*run_cmd) {
      auto c = load_run_config(config_path);
      cli::apply(c, ov);
      return cli::execute_and_write(c, false) ? 1 : 0;
    }
    if (*bench_cmd) {
      if (list) {
        for (const auto& t : task_registry()) std::cout << t.name << "\t" << t.summary << "\n";
        return 0;
      }
      if (task.empty()) throw Error("benchmark needs --task (or --list)");
      auto c = parse_run_config(find_task(task).config);
      c.out = "results/" + task;
      c.seeds = parse_seed_list("15");
      cli::apply(c, ov);
      return cli::execute_and_write(c, true) ? 1 : 0;
    }
    if (*kpca_cmd) {
      std::optional<Alphabet> alpha;
      if (!kpca_tokens.empty()) {
        std::istringstream in(kpca_tokens);
        std::vector<Token> toks;
        for (std::string t; in >> t;) toks.push_back(t);
        alpha.emplace(std::move(toks));
      }
      const auto file = load_candidates(detail::read_file(kpca_in), alpha ? &*alpha : nullptr);
      KernelSpec spec;
      spec.ssk = kp;
      spec.ssk.validate();
      const auto r = kpca(file.strings, spec, components);
      std::vector<std::optional<double>> scores;
      for (const auto& s : file.strings) {
        const auto it = file.scores.find(s);
        scores.push_back(it == file.scores.end() ? std::nullopt : std::optional<double>(it->second));
      }
      cli::write_file(kpca_out, [&](std::ostream& out) { write_kpca_csv(out, file.strings, r, scores); });
      spdlog::info("top eigenvalue: {}", r.eigenvalues.empty() ? 0.0 : r.eigenvalues.front());
      return 0;
    }
    if (*agg_cmd) {
      std::vector<BoTrace> all;
      for (const auto& f : inputs) {
        std::ifstream in(f, std::ios::binary);
        for (auto& t : read_trace_csv(in)) all.push_back(std::move(t));
      }
      std::sort(all.begin(), all.end(), [](const BoTrace& a, const BoTrace& b) { return a.seed < b.seed; });
      cli::write_file(agg_out, [&](std::ostream& out) { write_summary_csv(out, aggregate(all)); });
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}

}  // namespace stringbo

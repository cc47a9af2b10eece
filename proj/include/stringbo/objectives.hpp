#pragma once

// Benchmark objectives: pattern counting, symbolic regression and an
// adapter for external scoring commands.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "stringbo/grammar.hpp"
#include "stringbo/rng.hpp"
#include "stringbo/spaces.hpp"

namespace stringbo {

// Pattern counting.

enum class CountMode { overlapping, non_overlapping };

struct PatternSpec {
  Str pattern;  // "?" matches any token
  CountMode mode = CountMode::overlapping;
  // Matches must lie fully inside [begin, end).
  std::optional<std::pair<std::size_t, std::size_t>> window;
  double noise_sd = 0.0;

  void validate() const {
    if (pattern.empty()) throw Error("pattern must be nonempty");
    if (window && window->first > window->second) throw Error("pattern window is reversed");
    if (!(noise_sd >= 0.0)) throw Error("noise sd must be non-negative");
  }
};

inline bool matches_at(const Str& s, const Str& pattern, std::size_t start) {
  if (start + pattern.size() > s.size()) return false;
  for (std::size_t k = 0; k < pattern.size(); ++k)
    if (pattern[k] != "?" && pattern[k] != s[start + k]) return false;
  return true;
}

/// Noise-free count.
inline double count_pattern(const Str& s, const PatternSpec& spec) {
  spec.validate();
  const std::size_t p = spec.pattern.size();
  std::size_t begin = 0, end = s.size();
  if (spec.window) {
    begin = std::min(spec.window->first, s.size());
    end = std::min(spec.window->second, s.size());
  }
  int count = 0;
  for (std::size_t i = begin; i + p <= end;) {
    if (matches_at(s, spec.pattern, i)) {
      ++count;
      i += spec.mode == CountMode::non_overlapping ? p : 1;
    } else {
      ++i;
    }
  }
  return count;
}

/// Count plus one N(0, noise_sd^2) draw when noise is configured.
inline double count_pattern(const Str& s, const PatternSpec& spec, Rng& rng) {
  const double c = count_pattern(s, spec);
  return spec.noise_sd > 0.0 ? c + spec.noise_sd * rng.normal() : c;
}

struct ScoreRange {
  double min = 0.0;
  double max = 0.0;
};

/// Exact noise-free minimum and maximum count over strings whose position i
/// takes a token from allowed[i], by dynamic programming over the last
/// |pattern|-1 tokens and the positions still blocked by a counted match.
inline ScoreRange pattern_count_range(const std::vector<std::vector<Token>>& allowed, const PatternSpec& spec) {
  spec.validate();
  const std::size_t p = spec.pattern.size();
  const std::size_t len = allowed.size();
  std::size_t begin = 0, end = len;
  if (spec.window) {
    begin = std::min(spec.window->first, len);
    end = std::min(spec.window->second, len);
  }
  // State: the last (p-1) tokens (fewer at the start) and the cooldown.
  struct Key {
    Str tail;
    std::size_t cooldown;
    bool operator<(const Key& o) const { return std::tie(cooldown, tail) < std::tie(o.cooldown, o.tail); }
  };
  std::map<Key, ScoreRange> layer{{Key{{}, 0}, {0.0, 0.0}}};
  for (std::size_t j = 0; j < len; ++j) {
    std::map<Key, ScoreRange> next;
    for (const auto& [key, range] : layer) {
      for (const auto& tok : allowed[j]) {
        Str window = key.tail;
        window.push_back(tok);
        double gain = 0.0;
        std::size_t cooldown = key.cooldown > 0 ? key.cooldown - 1 : 0;
        if (window.size() == p && j + 1 >= begin + p && j < end && key.cooldown == 0 &&
            matches_at(window, spec.pattern, 0)) {
          gain = 1.0;
          if (spec.mode == CountMode::non_overlapping) cooldown = p - 1;
        }
        if (window.size() == p) window.erase(window.begin());
        if (p == 1) window.clear();
        Key k{std::move(window), cooldown};
        auto [it, fresh] = next.try_emplace(std::move(k), ScoreRange{range.min + gain, range.max + gain});
        if (!fresh) {
          it->second.min = std::min(it->second.min, range.min + gain);
          it->second.max = std::max(it->second.max, range.max + gain);
        }
      }
    }
    layer = std::move(next);
  }
  ScoreRange out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& [key, range] : layer) {
    out.min = std::min(out.min, range.min);
    out.max = std::max(out.max, range.max);
  }
  return out;
}

/// Range over a fixed-length space (unconstrained or locally constrained).
inline ScoreRange pattern_count_range(const StringSpace& space, const PatternSpec& spec) {
  if (const auto* u = space.as<Unconstrained>()) {
    ScoreRange out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (std::size_t len = u->min_length; len <= u->max_length; ++len) {
      const auto r = pattern_count_range(std::vector<std::vector<Token>>(len, u->alphabet.tokens()), spec);
      out.min = std::min(out.min, r.min);
      out.max = std::max(out.max, r.max);
    }
    return out;
  }
  if (const auto* l = space.as<LocallyConstrained>()) return pattern_count_range(l->allowed, spec);
  throw Error("pattern range needs an unconstrained or locally constrained space");
}

/// 100 * (value - min) / (max - min).
inline double standardized_score(double value, const ScoreRange& r) {
  if (!(r.max > r.min)) return 100.0;
  return 100.0 * (value - r.min) / (r.max - r.min);
}

// Symbolic regression.

/// Value of an arithmetic derivation at x. Works on trees of grammars shaped
/// like the built-in one: binary "S op T" nodes, "f( S )" wrappers for
/// '(' 'sin(' 'exp(', pass-through unit rules and literal leaves x/numbers.
/// Division by zero or overflow give inf/nan.
inline double eval_expression(const ParseTree& t, double x) {
  if (t.is_leaf()) {
    if (t.symbol == "x") return x;
    double v = 0.0;
    const auto* b = t.symbol.data();
    const auto [ptr, ec] = std::from_chars(b, b + t.symbol.size(), v);
    if (ec != std::errc() || ptr != b + t.symbol.size()) throw Error("cannot evaluate token '" + t.symbol + "'");
    return v;
  }
  const auto& c = t.children;
  if (c.size() == 1) return eval_expression(c[0], x);
  if (c.size() == 3 && !c[0].is_leaf() && c[1].is_leaf() && !c[2].is_leaf()) {
    const double a = eval_expression(c[0], x), b = eval_expression(c[2], x);
    const auto& op = c[1].symbol;
    if (op == "+") return a + b;
    if (op == "-") return a - b;
    if (op == "*") return a * b;
    if (op == "/") return a / b;
    throw Error("unknown operator '" + op + "'");
  }
  if (c.size() == 3 && c[0].is_leaf() && c[2].is_leaf() && c[2].symbol == ")") {
    const double a = eval_expression(c[1], x);
    const auto& f = c[0].symbol;
    if (f == "(") return a;
    if (f == "sin(") return std::sin(a);
    if (f == "exp(") return std::exp(a);
    if (f == "cos(") return std::cos(a);
    throw Error("unknown function '" + f + "'");
  }
  throw Error("unsupported expression node " + t.symbol);
}

inline double eval_expression(const Candidate& c, double x) {
  if (!c.tree) throw Error("expression '" + join(c.str) + "' has no parse tree");
  return eval_expression(*c.tree, x);
}

struct SymRegSpec {
  std::function<double(double)> target;
  std::vector<double> grid;
};

constexpr double kSymRegPenalty = -10.0;

/// Target 1/3 + x + sin(x*x) on `points` evenly spaced inputs in [lo, hi].
inline SymRegSpec default_symreg_spec(std::size_t points = 1000, double lo = -10.0, double hi = 10.0) {
  SymRegSpec s;
  s.target = [](double x) { return 1.0 / 3.0 + x + std::sin(x * x); };
  for (std::size_t i = 0; i < points; ++i)
    s.grid.push_back(points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  return s;
}

/// -log(1 + MSE) over the grid; kSymRegPenalty if anything is non-finite.
inline double symreg_score(const ParseTree& t, const SymRegSpec& spec) {
  if (spec.grid.empty()) throw Error("symbolic regression grid is empty");
  double sse = 0.0;
  for (double x : spec.grid) {
    const double d = eval_expression(t, x) - spec.target(x);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(spec.grid.size());
  return std::isfinite(mse) ? -std::log1p(mse) : kSymRegPenalty;
}

inline double symreg_score(const Candidate& c, const SymRegSpec& spec) {
  if (!c.tree) throw Error("expression '" + join(c.str) + "' has no parse tree");
  return symreg_score(*c.tree, spec);
}

// External commands.

struct ExternalCommand {
  // Shell command; "{}" is replaced by the single-quoted string. Without a
  // placeholder the string is written to the command's stdin instead.
  std::string command_template;
  bool negate = false;
  double timeout_seconds = 60.0;
  bool concurrent = false;  // allow overlapping invocations
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

inline void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      return;  // reader went away; the exit status tells the rest
    }
    done += static_cast<std::size_t>(n);
  }
}

inline double run_command(const ExternalCommand& cmd, const std::string& text) {
  const bool substitute = cmd.command_template.find("{}") != std::string::npos;
  std::string line = cmd.command_template;
  if (substitute)
    for (std::size_t at = 0; (at = line.find("{}", at)) != std::string::npos;) {
      const auto q = shell_quote(text);
      line.replace(at, 2, q);
      at += q.size();
    }
  auto fail = [&](const std::string& why) -> Error {
    return Error("external objective failed for '" + text + "': " + why);
  };
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw fail("pipe");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw fail("pipe");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw fail("fork");
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", line.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  {
    // A command that ignores stdin may close it early; don't die of SIGPIPE.
    sigset_t block, old;
    sigemptyset(&block);
    sigaddset(&block, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &block, &old);
    if (!substitute) write_all(in_pipe[1], text + "\n");
    ::close(in_pipe[1]);
    const timespec zero{0, 0};
    while (sigtimedwait(&block, nullptr, &zero) > 0) {
    }
    pthread_sigmask(SIG_SETMASK, &old, nullptr);
  }
  std::string output;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(cmd.timeout_seconds);
  bool timed_out = false;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{out_pipe[0], POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) continue;
    char buf[4096];
    const auto n = ::read(out_pipe[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
  }
  ::close(out_pipe[0]);
  if (timed_out) ::kill(-pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) throw fail("timed out after " + std::to_string(cmd.timeout_seconds) + " s");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw fail("exit status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
  const auto b = output.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) throw fail("no output");
  const auto e = output.find_first_of(" \t\r\n", b);
  const std::string token = output.substr(b, e == std::string::npos ? std::string::npos : e - b);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) throw fail("unparseable output '" + token + "'");
  return cmd.negate ? -v : v;
}

}  // namespace detail

/// Closure running the command once per string.
inline std::function<double(const Str&)> external_objective(ExternalCommand cmd) {
  if (cmd.command_template.empty()) throw Error("external objective needs a command");
  if (!(cmd.timeout_seconds > 0.0)) throw Error("timeout must be positive");
  auto lock = std::make_shared<std::mutex>();
  return [cmd = std::move(cmd), lock](const Str& s) {
    if (cmd.concurrent) return detail::run_command(cmd, join(s));
    std::lock_guard guard(*lock);
    return detail::run_command(cmd, join(s));
  };
}

}  // namespace stringbo

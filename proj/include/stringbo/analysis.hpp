#pragma once

// Kernel PCA, trace aggregation and CSV input/output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "stringbo/bo.hpp"
#include "stringbo/objectives.hpp"

namespace stringbo {

struct KpcaResult {
  std::vector<std::vector<double>> coordinates;  // one row per input string
  std::vector<double> eigenvalues;               // all of them, non-increasing
};

/// Projections onto the top principal components of the double-centred
/// Gram matrix, scaled by sqrt(eigenvalue). Each eigenvector's sign is fixed
/// so that its largest-magnitude entry is positive.
inline KpcaResult kpca(const std::vector<Str>& strings, const KernelSpec& spec, std::size_t components = 2,
                       std::size_t jobs = 1) {
  if (strings.size() < 2) throw Error("kpca needs at least two strings");
  const auto n = static_cast<Eigen::Index>(strings.size());
  const Eigen::MatrixXd k = gram(strings, spec, jobs).values;
  const Eigen::VectorXd row_mean = k.rowwise().mean();
  const double total = k.mean();
  Eigen::MatrixXd c = k;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) += total - row_mean(i) - row_mean(j);
  c = 0.5 * (c + c.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  if (eig.info() != Eigen::Success) throw Error("kpca eigendecomposition failed");
  KpcaResult r;
  const auto take = std::min<std::size_t>(components, strings.size());
  r.coordinates.assign(strings.size(), std::vector<double>(take, 0.0));
  for (Eigen::Index idx = n - 1; idx >= 0; --idx) r.eigenvalues.push_back(eig.eigenvalues()(idx));
  for (std::size_t comp = 0; comp < take; ++comp) {
    const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(comp);
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const double scale = std::sqrt(std::max(eig.eigenvalues()(col), 0.0));
    for (Eigen::Index i = 0; i < n; ++i) r.coordinates[static_cast<std::size_t>(i)][comp] = scale * v(i);
  }
  return r;
}

struct SummaryRow {
  std::size_t evaluation = 0;  // 1-based position in every trace
  std::size_t step = 0;
  double mean_best = 0.0;
  double stderr_best = 0.0;
  double mean_overhead_s = 0.0;
  std::optional<double> mean_standardized, stderr_standardized;
};

namespace detail {

inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace detail

/// Per evaluation index: mean and standard error (sample sd / sqrt(n)) of
/// best-so-far across traces, mean overhead, and optionally the same
/// statistics on the 0-100 standardized scale.
inline std::vector<SummaryRow> aggregate(const std::vector<BoTrace>& traces,
                                         std::optional<ScoreRange> range = std::nullopt) {
  if (traces.empty()) throw Error("nothing to aggregate");
  const auto len = traces.front().rows.size();
  for (const auto& t : traces)
    if (t.rows.size() != len) throw Error("traces have unequal lengths");
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<double> best, overhead, standard;
    for (const auto& t : traces) {
      best.push_back(t.rows[i].best_so_far);
      overhead.push_back(t.rows[i].overhead_s);
      if (range) standard.push_back(standardized_score(t.rows[i].best_so_far, *range));
    }
    SummaryRow row;
    row.evaluation = i + 1;
    row.step = traces.front().rows[i].step;
    std::tie(row.mean_best, row.stderr_best) = detail::mean_stderr(best);
    row.mean_overhead_s = detail::mean_stderr(overhead).first;
    if (range) {
      const auto [m, s] = detail::mean_stderr(standard);
      row.mean_standardized = m;
      row.stderr_standardized = s;
    }
    out.push_back(row);
  }
  return out;
}

// CSV.

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// Splits CSV text into records; quoted fields may hold commas, doubled
/// quotes and line breaks.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  char ch;
  auto end_record = [&] {
    if (any || !field.empty() || !record.empty()) {
      record.push_back(std::move(field));
      records.push_back(std::move(record));
    }
    record.clear();
    field.clear();
    any = false;
  };
  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = any = true;
    } else if (ch == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n') {
      end_record();
    } else if (ch != '\r') {
      field += ch;
      any = true;
    }
  }
  if (quoted) throw Error("unterminated quote in CSV");
  end_record();
  return records;
}

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols = {"seed",     "step",     "string",       "value",
                                                "best_so_far", "lambda_m", "lambda_g", "output_scale",
                                                "noise_var", "overhead_s"};
  return cols;
}

inline void write_trace_csv(std::ostream& out, const std::vector<BoTrace>& traces) {
  const auto& cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& t : traces)
    for (const auto& r : t.rows) {
      out << r.seed << ',' << r.step << ',' << csv_quote(join(r.string)) << ',' << format_real(r.value) << ','
          << format_real(r.best_so_far) << ',' << format_real(r.surrogate.kernel.ssk.match_decay) << ','
          << format_real(r.surrogate.kernel.ssk.gap_decay) << ',' << format_real(r.surrogate.output_scale) << ','
          << format_real(r.surrogate.noise_variance) << ',' << format_real(r.overhead_s) << '\n';
    }
}

namespace detail {

inline double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error("not a number in CSV: '" + s + "'");
  }
  if (used != s.size()) throw Error("not a number in CSV: '" + s + "'");
  return v;
}

inline std::uint64_t parse_count(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw Error("not a non-negative integer in CSV: '" + s + "'");
  return std::stoull(s);
}

}  // namespace detail

/// Reads trace CSV back, grouping rows by seed in order of first appearance.
/// Strings come back as one token per character.
inline std::vector<BoTrace> read_trace_csv(std::istream& in) {
  const auto records = parse_csv(in);
  if (records.empty() || records.front() != trace_columns()) throw Error("not a trace CSV (bad header)");
  std::vector<BoTrace> traces;
  std::map<std::uint64_t, std::size_t> where;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != trace_columns().size())
      throw Error("trace CSV line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
    TraceRow r;
    r.seed = detail::parse_count(f[0]);
    r.step = detail::parse_count(f[1]);
    r.string = chars(f[2]);
    r.value = detail::parse_real(f[3]);
    r.best_so_far = detail::parse_real(f[4]);
    r.surrogate.kernel.ssk.match_decay = detail::parse_real(f[5]);
    r.surrogate.kernel.ssk.gap_decay = detail::parse_real(f[6]);
    r.surrogate.output_scale = detail::parse_real(f[7]);
    r.surrogate.noise_variance = detail::parse_real(f[8]);
    r.overhead_s = detail::parse_real(f[9]);
    auto [it, fresh] = where.emplace(r.seed, traces.size());
    if (fresh) {
      traces.emplace_back();
      traces.back().seed = r.seed;
    }
    traces[it->second].rows.push_back(std::move(r));
  }
  return traces;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  const bool standardized = !rows.empty() && rows.front().mean_standardized.has_value();
  out << "evaluation,step,mean_best,stderr_best,mean_overhead_s";
  if (standardized) out << ",mean_standardized,stderr_standardized";
  out << '\n';
  for (const auto& r : rows) {
    out << r.evaluation << ',' << r.step << ',' << format_real(r.mean_best) << ',' << format_real(r.stderr_best)
        << ',' << format_real(r.mean_overhead_s);
    if (standardized) out << ',' << format_real(*r.mean_standardized) << ',' << format_real(*r.stderr_standardized);
    out << '\n';
  }
}

inline void write_kpca_csv(std::ostream& out, const std::vector<Str>& strings, const KpcaResult& r,
                           const std::vector<std::optional<double>>& scores = {}) {
  const auto comps = r.coordinates.empty() ? 0 : r.coordinates.front().size();
  out << "string";
  for (std::size_t c = 0; c < comps; ++c) out << ",pc" << c + 1;
  out << ",score\n";
  for (std::size_t i = 0; i < strings.size(); ++i) {
    out << csv_quote(join(strings[i]));
    for (double v : r.coordinates[i]) out << ',' << format_real(v);
    out << ',';
    if (i < scores.size() && scores[i]) out << format_real(*scores[i]);
    out << '\n';
  }
}

}  // namespace stringbo

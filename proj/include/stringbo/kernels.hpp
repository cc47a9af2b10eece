#pragma once

// Subsequence string kernel (SSK), its gradients, normalized and split
// variants, the two fixed-length baseline kernels, and Gram matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stringbo/parallel.hpp"
#include "stringbo/tokens.hpp"

namespace stringbo {

struct KernelParams {
  double match_decay = 0.5;  // lambda_m
  double gap_decay = 0.5;    // lambda_g
  int max_order = 5;         // longest subsequence feature n
  int splits = 1;            // m contiguous parts per string

  void validate() const {
    if (!std::isfinite(match_decay) || !std::isfinite(gap_decay))
      throw Error("kernel decays must be finite");
    if (!(match_decay > 0.0 && match_decay <= 1.0))
      throw Error("match decay must lie in (0, 1], got " + std::to_string(match_decay));
    if (!(gap_decay > 0.0 && gap_decay <= 1.0))
      throw Error("gap decay must lie in (0, 1], got " + std::to_string(gap_decay));
    if (max_order < 1) throw Error("max subsequence order must be >= 1");
    if (splits < 1) throw Error("split count must be >= 1");
  }
};

/// Kernel value with partials in (match_decay, gap_decay).
struct SskValue {
  double value = 0.0;
  double d_match = 0.0;
  double d_gap = 0.0;
};

namespace detail {

inline void require_nonempty(const Str& a, const Str& b) {
  if (a.empty() || b.empty()) throw Error("string kernel inputs must be nonempty");
}

// out = D^T x D for the la x lb row-major matrix x, where D has zeros on and
// below the diagonal and D[j][k] = gap^(k-j-1) above it. D is Toeplitz, so
// each side is a prefix scan: (x D)[j][q] = gap * (x D)[j][q-1] + x[j][q-1].
inline void apply_gap_matrix(const std::vector<double>& x, std::vector<double>& row_scan,
                             std::vector<double>& out, std::size_t la, std::size_t lb,
                             double gap) {
  // Column-outer order keeps the rows' independent recurrences in flight
  // together instead of one long dependency chain.
  for (std::size_t j = 0; j < la; ++j) row_scan[j * lb] = 0.0;
  for (std::size_t q = 1; q < lb; ++q)
    for (std::size_t j = 0; j < la; ++j)
      row_scan[j * lb + q] = gap * row_scan[j * lb + q - 1] + x[j * lb + q - 1];
  for (std::size_t q = 0; q < lb; ++q) out[q] = 0.0;
  for (std::size_t p = 1; p < la; ++p) {
    const double* zprev = &out[(p - 1) * lb];
    const double* yprev = &row_scan[(p - 1) * lb];
    double* zr = &out[p * lb];
    for (std::size_t q = 0; q < lb; ++q) zr[q] = gap * zprev[q] + yprev[q];
  }
}

// Derivative in gap of D^T x D where x itself depends on gap with derivative
// dx. Differentiating both scans gives the three-term product rule
// dD^T x D + D^T dx D + D^T x dD.
inline void apply_gap_matrix_derivative(const std::vector<double>& row_scan,
                                        const std::vector<double>& z,
                                        const std::vector<double>& dx,
                                        std::vector<double>& drow_scan,
                                        std::vector<double>& out, std::size_t la,
                                        std::size_t lb, double gap) {
  for (std::size_t j = 0; j < la; ++j) drow_scan[j * lb] = 0.0;
  for (std::size_t q = 1; q < lb; ++q)
    for (std::size_t j = 0; j < la; ++j) {
      const std::size_t i = j * lb + q;
      drow_scan[i] = gap * drow_scan[i - 1] + row_scan[i - 1] + dx[i - 1];
    }
  for (std::size_t q = 0; q < lb; ++q) out[q] = 0.0;
  for (std::size_t p = 1; p < la; ++p) {
    const double* dzprev = &out[(p - 1) * lb];
    const double* zprev = &z[(p - 1) * lb];
    const double* dyprev = &drow_scan[(p - 1) * lb];
    double* dzr = &out[p * lb];
    for (std::size_t q = 0; q < lb; ++q) dzr[q] = gap * dzprev[q] + zprev[q] + dyprev[q];
  }
}

// Vectorized SSK recursion. For order i = 1..n the order-i term is
// match^2 * sum(M .* K'_{i-1}); K'_i = D^T (match^2 M .* K'_{i-1}) D.
template <bool WithGrad>
SskValue ssk_recursion(const Str& a, const Str& b, const KernelParams& p) {
  const std::size_t la = a.size(), lb = b.size(), size = la * lb;
  const double lm = p.match_decay, lg = p.gap_decay, lm2 = lm * lm;

  // Small integer ids so the match matrix is built from int comparisons.
  std::vector<const Token*> seen;
  auto id_of = [&seen](const Token& t, bool insert) -> int {
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (*seen[i] == t) return static_cast<int>(i);
    if (!insert) return -1;
    seen.push_back(&t);
    return static_cast<int>(seen.size() - 1);
  };
  thread_local std::vector<int> ida, idb;
  ida.resize(la);
  idb.resize(lb);
  for (std::size_t j = 0; j < la; ++j) ida[j] = id_of(a[j], true);
  for (std::size_t k = 0; k < lb; ++k) idb[k] = id_of(b[k], false);

  // Scratch reused across calls on the same thread; every slot read below is
  // written first in this call.
  thread_local std::vector<double> match, kp, kpp, scan, dkp_m, dkp_g, dkpp_m, dkpp_g, dscan, tmp;
  match.resize(size);
  kp.resize(size);
  kpp.resize(size);
  scan.resize(size);
  for (std::size_t j = 0; j < la; ++j)
    for (std::size_t k = 0; k < lb; ++k) match[j * lb + k] = ida[j] == idb[k] ? 1.0 : 0.0;
  std::fill(kp.begin(), kp.end(), 1.0);
  if constexpr (WithGrad) {
    for (auto* v : {&dkp_m, &dkp_g}) v->assign(size, 0.0);
    for (auto* v : {&dkpp_m, &dkpp_g, &dscan, &tmp}) v->resize(size);
  }

  SskValue r;
  for (int order = 1; order <= p.max_order; ++order) {
    double s = 0.0, sm = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      s += match[i] * kp[i];
      if constexpr (WithGrad) {
        sm += match[i] * dkp_m[i];
        sg += match[i] * dkp_g[i];
      }
    }
    r.value += lm2 * s;
    if constexpr (WithGrad) {
      r.d_match += 2.0 * lm * s + lm2 * sm;
      r.d_gap += lm2 * sg;
    }
    if (order == p.max_order) break;

    for (std::size_t i = 0; i < size; ++i) {
      kpp[i] = match[i] * (lm2 * kp[i]);
      if constexpr (WithGrad) {
        dkpp_m[i] = match[i] * (2.0 * lm * kp[i] + lm2 * dkp_m[i]);
        dkpp_g[i] = match[i] * (lm2 * dkp_g[i]);
      }
    }
    apply_gap_matrix(kpp, scan, kp, la, lb, lg);
    if constexpr (WithGrad) {
      apply_gap_matrix_derivative(scan, kp, dkpp_g, dscan, dkp_g, la, lb, lg);
      apply_gap_matrix(dkpp_m, tmp, dkp_m, la, lb, lg);
    }
  }
  return r;
}

// Orders the arguments canonically so k(a, b) and k(b, a) run the identical
// floating-point computation.
inline bool swap_args(const Str& a, const Str& b) { return b < a; }

}  // namespace detail

/// Raw (unnormalized) SSK: sum over subsequences u of length 1..n of
/// c_u(a) c_u(b).
inline double ssk(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  return detail::swap_args(a, b) ? detail::ssk_recursion<false>(b, a, params).value
                                 : detail::ssk_recursion<false>(a, b, params).value;
}

/// Raw SSK with partials in both decays; value is bit-identical to ssk().
inline SskValue ssk_grad(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  return detail::swap_args(a, b) ? detail::ssk_recursion<true>(b, a, params)
                                 : detail::ssk_recursion<true>(a, b, params);
}

namespace detail {

inline void enumerate_subsequences(const Str& s, std::size_t max_len, double lm, double lg,
                                   std::map<Str, double>& out) {
  std::vector<std::size_t> picked;
  std::function<void(std::size_t)> rec = [&](std::size_t from) {
    if (!picked.empty()) {
      Str u;
      u.reserve(picked.size());
      for (auto i : picked) u.push_back(s[i]);
      const double gaps =
          static_cast<double>(picked.back() - picked.front() - (picked.size() - 1));
      out[u] += std::pow(lm, static_cast<double>(picked.size())) * std::pow(lg, gaps);
    }
    if (picked.size() == max_len) return;
    for (std::size_t i = from; i < s.size(); ++i) {
      picked.push_back(i);
      rec(i + 1);
      picked.pop_back();
    }
  };
  rec(0);
}

}  // namespace detail

/// Contribution c_u(s): match^|u| times the sum over occurrences of u in s of
/// gap^(number of skipped characters inside the occurrence).
inline double contribution(const Str& u, const Str& s, double match_decay, double gap_decay) {
  if (u.empty()) throw Error("subsequence must be nonempty");
  std::vector<std::size_t> picked;
  double total = 0.0;
  std::function<void(std::size_t)> rec = [&](std::size_t from) {
    if (picked.size() == u.size()) {
      const double gaps = static_cast<double>(picked.back() - picked.front() - (u.size() - 1));
      total += std::pow(gap_decay, gaps);
      return;
    }
    for (std::size_t i = from; i < s.size(); ++i) {
      if (s[i] != u[picked.size()]) continue;
      picked.push_back(i);
      rec(i + 1);
      picked.pop_back();
    }
  };
  rec(0);
  return std::pow(match_decay, static_cast<double>(u.size())) * total;
}

/// Explicit feature-space evaluation by enumerating every subsequence of both
/// strings. Exponential; intended as a test oracle for short strings.
inline double ssk_bruteforce(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  if (a.size() > 24 || b.size() > 24) throw Error("ssk_bruteforce is limited to 24 tokens");
  const auto n = static_cast<std::size_t>(params.max_order);
  std::map<Str, double> ca, cb;
  detail::enumerate_subsequences(a, n, params.match_decay, params.gap_decay, ca);
  detail::enumerate_subsequences(b, n, params.match_decay, params.gap_decay, cb);
  double total = 0.0;
  for (const auto& [u, value] : ca) {
    auto it = cb.find(u);
    if (it != cb.end()) total += value * it->second;
  }
  return total;
}

namespace detail {

inline double normalize(double kab, double kaa, double kbb) { return kab / std::sqrt(kaa * kbb); }

inline SskValue normalize_grad(const SskValue& ab, const SskValue& aa, const SskValue& bb) {
  const double s = std::sqrt(aa.value * bb.value);
  SskValue r;
  r.value = ab.value / s;
  r.d_match = (ab.d_match - 0.5 * ab.value * (aa.d_match / aa.value + bb.d_match / bb.value)) / s;
  r.d_gap = (ab.d_gap - 0.5 * ab.value * (aa.d_gap / aa.value + bb.d_gap / bb.value)) / s;
  return r;
}

}  // namespace detail

/// k(a,b) / sqrt(k(a,a) k(b,b)); exactly 1 when a == b.
inline double ssk_normalized(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  if (a == b) return 1.0;
  return detail::normalize(ssk(a, b, params), ssk(a, a, params), ssk(b, b, params));
}

inline SskValue ssk_normalized_grad(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  if (a == b) return {1.0, 0.0, 0.0};
  return detail::normalize_grad(ssk_grad(a, b, params), ssk_grad(a, a, params),
                                ssk_grad(b, b, params));
}

/// Splits s into m contiguous parts; the first |s| mod m parts get one extra
/// token.
inline std::vector<Str> split_parts(const Str& s, int m) {
  if (m < 1) throw Error("split count must be >= 1");
  const auto parts = static_cast<std::size_t>(m);
  if (parts > s.size())
    throw Error("cannot split a string of length " + std::to_string(s.size()) + " into " +
                std::to_string(m) + " parts");
  const std::size_t base = s.size() / parts, extra = s.size() % parts;
  std::vector<Str> out;
  out.reserve(parts);
  auto it = s.begin();
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    out.emplace_back(it, it + static_cast<std::ptrdiff_t>(len));
    it += static_cast<std::ptrdiff_t>(len);
  }
  return out;
}

/// Sum of normalized SSKs over the m aligned parts (tied parameters).
inline double ssk_split(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  if (params.splits == 1) return ssk_normalized(a, b, params);
  const auto pa = split_parts(a, params.splits);
  const auto pb = split_parts(b, params.splits);
  double total = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) total += ssk_normalized(pa[i], pb[i], params);
  return total;
}

inline SskValue ssk_split_grad(const Str& a, const Str& b, const KernelParams& params) {
  params.validate();
  detail::require_nonempty(a, b);
  if (params.splits == 1) return ssk_normalized_grad(a, b, params);
  const auto pa = split_parts(a, params.splits);
  const auto pb = split_parts(b, params.splits);
  SskValue total;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto part = ssk_normalized_grad(pa[i], pb[i], params);
    total.value += part.value;
    total.d_match += part.d_match;
    total.d_gap += part.d_gap;
  }
  return total;
}

/// Counts of every contiguous n-gram, n = 1..max_n.
inline std::map<Str, double> ngram_counts(const Str& s, int max_n) {
  if (max_n < 1) throw Error("n-gram order must be >= 1");
  std::map<Str, double> counts;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n)
    for (std::size_t i = 0; i + n <= s.size(); ++i)
      counts[Str(s.begin() + static_cast<std::ptrdiff_t>(i),
                 s.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  return counts;
}

namespace detail {

inline double squared_distance(const std::map<Str, double>& x, const std::map<Str, double>& y) {
  double d2 = 0.0;
  auto i = x.begin();
  auto j = y.begin();
  while (i != x.end() || j != y.end()) {
    double diff;
    if (j == y.end() || (i != x.end() && i->first < j->first)) {
      diff = i->second;
      ++i;
    } else if (i == x.end() || j->first < i->first) {
      diff = j->second;
      ++j;
    } else {
      diff = i->second - j->second;
      ++i;
      ++j;
    }
    d2 += diff * diff;
  }
  return d2;
}

}  // namespace detail

/// Squared-exponential kernel on bag-of-n-gram count vectors.
inline double ngram_feature_kernel(const Str& a, const Str& b, int max_n, double lengthscale) {
  if (!(lengthscale > 0.0)) throw Error("lengthscale must be positive");
  const double d2 = detail::squared_distance(ngram_counts(a, max_n), ngram_counts(b, max_n));
  return std::exp(-d2 / (2.0 * lengthscale * lengthscale));
}

/// Linear kernel on position-wise one-hot encodings: the number of positions
/// where the two strings agree.
inline double onehot_linear_kernel(const Str& a, const Str& b) {
  if (a.size() != b.size())
    throw Error("one-hot kernel needs equal lengths, got " + std::to_string(a.size()) + " and " +
                std::to_string(b.size()));
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i] ? 1.0 : 0.0;
  return agree;
}

// ---------------------------------------------------------------------------
// Kernel selection used by the surrogate.

enum class KernelKind { ssk, ngram, onehot };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::ssk: return "ssk";
    case KernelKind::ngram: return "ngram";
    case KernelKind::onehot: return "onehot";
  }
  return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "ssk") return KernelKind::ssk;
  if (s == "ngram" || s == "feature") return KernelKind::ngram;
  if (s == "onehot" || s == "linear") return KernelKind::onehot;
  throw Error("unknown kernel kind '" + s + "'");
}

struct KernelSpec {
  KernelKind kind = KernelKind::ssk;
  KernelParams ssk;           // used when kind == ssk
  int ngram_order = 5;        // used when kind == ngram
  double lengthscale = 1.0;   // used when kind == ngram
};

/// Learnable kernel-side parameters: (match, gap) for the SSK, (lengthscale)
/// for the n-gram kernel, none for the one-hot kernel (its variance is the
/// surrogate's output scale).
inline std::vector<double> hyper_values(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::ssk: return {spec.ssk.match_decay, spec.ssk.gap_decay};
    case KernelKind::ngram: return {spec.lengthscale};
    case KernelKind::onehot: return {};
  }
  return {};
}

inline void set_hyper_values(KernelSpec& spec, std::span<const double> values) {
  if (values.size() != hyper_values(spec).size()) throw Error("wrong kernel hyperparameter count");
  switch (spec.kind) {
    case KernelKind::ssk:
      spec.ssk.match_decay = values[0];
      spec.ssk.gap_decay = values[1];
      break;
    case KernelKind::ngram: spec.lengthscale = values[0]; break;
    case KernelKind::onehot: break;
  }
}

/// A string with its kernel-specific precomputation (SSK parts and their
/// self-similarities, or n-gram counts).
struct PreparedString {
  Str str;
  std::vector<Str> parts;
  std::vector<SskValue> part_self;
  std::map<Str, double> ngrams;
};

inline PreparedString prepare(const Str& s, const KernelSpec& spec, bool with_grad = false) {
  PreparedString out;
  out.str = s;
  switch (spec.kind) {
    case KernelKind::ssk:
      spec.ssk.validate();
      if (s.empty()) throw Error("string kernel inputs must be nonempty");
      out.parts = spec.ssk.splits == 1 ? std::vector<Str>{s} : split_parts(s, spec.ssk.splits);
      for (const auto& part : out.parts)
        out.part_self.push_back(with_grad ? ssk_grad(part, part, spec.ssk)
                                          : SskValue{ssk(part, part, spec.ssk), 0.0, 0.0});
      break;
    case KernelKind::ngram: out.ngrams = ngram_counts(s, spec.ngram_order); break;
    case KernelKind::onehot: break;
  }
  return out;
}

struct KernelEval {
  double value = 0.0;
  std::array<double, 2> grad{};  // in the order of hyper_values()
};

/// Kernel value (and optionally gradient in hyper_values()) between two
/// prepared strings. For the SSK this is the normalized, split kernel.
inline KernelEval kernel_eval(const PreparedString& a, const PreparedString& b,
                              const KernelSpec& spec, bool with_grad = false) {
  KernelEval r;
  switch (spec.kind) {
    case KernelKind::ssk: {
      if (a.parts.size() != b.parts.size()) throw Error("strings prepared with different splits");
      for (std::size_t i = 0; i < a.parts.size(); ++i) {
        if (a.parts[i] == b.parts[i]) {
          r.value += 1.0;
          continue;
        }
        if (with_grad) {
          const auto part = detail::normalize_grad(ssk_grad(a.parts[i], b.parts[i], spec.ssk),
                                                   a.part_self[i], b.part_self[i]);
          r.value += part.value;
          r.grad[0] += part.d_match;
          r.grad[1] += part.d_gap;
        } else {
          r.value += detail::normalize(ssk(a.parts[i], b.parts[i], spec.ssk),
                                       a.part_self[i].value, b.part_self[i].value);
        }
      }
      break;
    }
    case KernelKind::ngram: {
      if (!(spec.lengthscale > 0.0)) throw Error("lengthscale must be positive");
      const double d2 = detail::squared_distance(a.ngrams, b.ngrams);
      const double l = spec.lengthscale;
      r.value = std::exp(-d2 / (2.0 * l * l));
      if (with_grad) r.grad[0] = r.value * d2 / (l * l * l);
      break;
    }
    case KernelKind::onehot: r.value = onehot_linear_kernel(a.str, b.str); break;
  }
  return r;
}

/// Single kernel evaluation through the surrogate's kernel selection.
inline double kernel_value(const Str& a, const Str& b, const KernelSpec& spec) {
  return kernel_eval(prepare(a, spec), prepare(b, spec), spec).value;
}

struct GramMatrix {
  Eigen::MatrixXd values;
  std::vector<Str> row_strings;
};

/// Symmetric Gram matrix; only the upper triangle is computed. Entries are
/// independent so the result is identical for any `jobs`.
inline GramMatrix gram(const std::vector<Str>& strings, const KernelSpec& spec,
                       std::size_t jobs = 1) {
  const std::size_t n = strings.size();
  std::vector<PreparedString> prepared(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    try {
      prepared[i] = prepare(strings[i], spec);
    } catch (const Error& e) {
      throw Error("gram: string " + std::to_string(i) + " ('" + join(strings[i]) +
                  "'): " + e.what());
    }
  });
  GramMatrix g{Eigen::MatrixXd(n, n), strings};
  parallel_for(n, jobs, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      try {
        const double v = kernel_eval(prepared[i], prepared[j], spec).value;
        g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        g.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      } catch (const Error& e) {
        throw Error("gram: pair (" + std::to_string(i) + ", " + std::to_string(j) +
                    "): " + e.what());
      }
    }
  });
  return g;
}

/// Gram matrix of prepared strings plus its derivative per kernel
/// hyperparameter. Strings must have been prepared with gradients.
struct GramWithGrad {
  Eigen::MatrixXd values;
  std::vector<Eigen::MatrixXd> grads;
};

inline GramWithGrad gram_with_grad(const std::vector<PreparedString>& prepared,
                                   const KernelSpec& spec, std::size_t jobs = 1) {
  const auto n = static_cast<Eigen::Index>(prepared.size());
  const std::size_t h = hyper_values(spec).size();
  GramWithGrad g{Eigen::MatrixXd(n, n), std::vector<Eigen::MatrixXd>(h, Eigen::MatrixXd(n, n))};
  parallel_for(prepared.size(), jobs, [&](std::size_t ui) {
    const auto i = static_cast<Eigen::Index>(ui);
    for (Eigen::Index j = i; j < n; ++j) {
      const auto e = kernel_eval(prepared[ui], prepared[static_cast<std::size_t>(j)], spec, true);
      g.values(i, j) = g.values(j, i) = e.value;
      for (std::size_t k = 0; k < h; ++k) g.grads[k](i, j) = g.grads[k](j, i) = e.grad[k];
    }
  });
  return g;
}

}  // namespace stringbo

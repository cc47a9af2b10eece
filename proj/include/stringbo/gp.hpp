#pragma once

// Gaussian-process regression over strings.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "stringbo/kernels.hpp"
#include "stringbo/rng.hpp"

namespace stringbo {

/// Evaluated (string, value) pairs. Repeated strings are merged into one
/// entry holding the mean of their observations. Iteration order is the
/// strings' lexicographic order, independent of insertion order.
class Dataset {
 public:
  void add(const Str& s, double y) {
    auto& e = entries_[s];
    e.sum += y;
    e.count += 1;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const Str& s) const { return entries_.count(s) != 0; }

  std::vector<Str> strings() const {
    std::vector<Str> out;
    out.reserve(entries_.size());
    for (const auto& [s, e] : entries_) out.push_back(s);
    return out;
  }

  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& [s, e] : entries_) out.push_back(e.sum / e.count);
    return out;
  }

  double best_value() const {
    if (entries_.empty()) throw Error("empty dataset has no best value");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [s, e] : entries_) best = std::max(best, e.sum / e.count);
    return best;
  }

 private:
  struct Entry {
    double sum = 0.0;
    int count = 0;
  };
  std::map<Str, Entry> entries_;
};

struct GpHyperparameters {
  KernelSpec kernel;
  double output_scale = 1.0;     // sigma_f^2, multiplies the kernel
  double noise_variance = 1e-2;  // sigma^2
};

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// Log evidence and its gradient. Gradient order: hyper_values(kernel)...,
/// output_scale, noise_variance.
struct LikelihoodResult {
  double value = 0.0;
  std::vector<double> grad;
};

namespace detail {

constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-2;

struct Factorization {
  Eigen::MatrixXd lower;
  double jitter_level = 0.0;  // jitter = level * mean diagonal
  double jitter = 0.0;
};

// Cholesky of cov; on failure retries with jitter*I, escalating x10 from 1e-8
// to 1e-2 times the mean diagonal.
inline Factorization factorize(const Eigen::MatrixXd& cov) {
  const Eigen::Index n = cov.rows();
  const double mean_diag = n > 0 ? cov.diagonal().mean() : 1.0;
  if (!std::isfinite(mean_diag)) throw Error("covariance has non-finite diagonal");
  for (double level = 0.0; level <= kJitterMax * 1.0000001;
       level = level == 0.0 ? kJitterStart : level * 10.0) {
    const double jitter = level * mean_diag;
    Eigen::MatrixXd c = cov;
    c.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd l = llt.matrixL();
    if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) continue;
    return {std::move(l), level, jitter};
  }
  throw Error("covariance is not positive definite even with maximal jitter");
}

inline std::vector<PreparedString> prepare_all(const std::vector<Str>& strings,
                                               const KernelSpec& spec, bool with_grad,
                                               std::size_t jobs) {
  std::vector<PreparedString> out(strings.size());
  parallel_for(strings.size(), jobs,
               [&](std::size_t i) { out[i] = prepare(strings[i], spec, with_grad); });
  return out;
}

inline LikelihoodResult likelihood(const std::vector<Str>& strings, const Eigen::VectorXd& y,
                                   const GpHyperparameters& hyper, bool with_grad,
                                   std::size_t jobs) {
  const auto prepared = prepare_all(strings, hyper.kernel, with_grad, jobs);
  const auto t = static_cast<Eigen::Index>(strings.size());
  GramWithGrad g;
  if (with_grad) {
    g = gram_with_grad(prepared, hyper.kernel, jobs);
  } else {
    g.values.resize(t, t);
    parallel_for(prepared.size(), jobs, [&](std::size_t ui) {
      const auto i = static_cast<Eigen::Index>(ui);
      for (Eigen::Index j = i; j < t; ++j)
        g.values(i, j) = g.values(j, i) =
            kernel_eval(prepared[ui], prepared[static_cast<std::size_t>(j)], hyper.kernel).value;
    });
  }
  Eigen::MatrixXd cov = hyper.output_scale * g.values;
  cov.diagonal().array() += hyper.noise_variance;
  const auto f = factorize(cov);
  const auto llt_view = f.lower.triangularView<Eigen::Lower>();
  Eigen::VectorXd alpha = llt_view.solve(y);
  llt_view.transpose().solveInPlace(alpha);

  LikelihoodResult r;
  r.value = -0.5 * y.dot(alpha) - f.lower.diagonal().array().log().sum() -
            0.5 * static_cast<double>(t) * std::log(2.0 * std::numbers::pi);
  if (!with_grad) return r;

  Eigen::MatrixXd cinv = Eigen::MatrixXd::Identity(t, t);
  llt_view.solveInPlace(cinv);
  llt_view.transpose().solveInPlace(cinv);
  // d/dtheta = 0.5 * (alpha' dC alpha - tr(C^-1 dC)). The jitter is
  // level * mean(diag C), so it contributes level * mean(diag dC) to dC.
  auto term = [&](const Eigen::MatrixXd& dc) {
    const double jitter_grad = f.jitter_level * dc.diagonal().mean();
    const double quad = alpha.dot(dc * alpha) + jitter_grad * alpha.squaredNorm();
    const double trace = cinv.cwiseProduct(dc).sum() + jitter_grad * cinv.trace();
    return 0.5 * (quad - trace);
  };
  for (const auto& dk : g.grads) r.grad.push_back(term(hyper.output_scale * dk));
  r.grad.push_back(term(g.values));
  r.grad.push_back(term(Eigen::MatrixXd::Identity(t, t)));
  return r;
}

}  // namespace detail

/// GP posterior over a Dataset with fixed hyperparameters. Immutable once
/// built; predict() is safe to call concurrently.
class GpModel {
 public:
  /// Conditions on `data`. With `standardize`, observations are shifted and
  /// scaled to zero mean / unit variance internally and predictions are
  /// mapped back.
  GpModel(Dataset data, GpHyperparameters hyper, bool standardize = false, std::size_t jobs = 1)
      : data_(std::move(data)), hyper_(std::move(hyper)) {
    if (!(hyper_.output_scale > 0.0)) throw Error("output scale must be positive");
    if (!(hyper_.noise_variance >= 0.0)) throw Error("noise variance must be non-negative");
    const auto values = data_.values();
    const auto t = static_cast<Eigen::Index>(values.size());
    if (standardize && t > 0) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(t);
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double sd = t > 1 ? std::sqrt(ss / static_cast<double>(t - 1)) : 0.0;
      y_mean_ = mean;
      y_scale_ = sd > 1e-12 ? sd : 1.0;
    }
    y_.resize(t);
    for (Eigen::Index i = 0; i < t; ++i)
      y_(i) = (values[static_cast<std::size_t>(i)] - y_mean_) / y_scale_;

    train_ = detail::prepare_all(data_.strings(), hyper_.kernel, false, jobs);
    Eigen::MatrixXd cov(t, t);
    parallel_for(train_.size(), jobs, [&](std::size_t ui) {
      const auto i = static_cast<Eigen::Index>(ui);
      for (Eigen::Index j = i; j < t; ++j)
        cov(i, j) = cov(j, i) =
            hyper_.output_scale *
            kernel_eval(train_[ui], train_[static_cast<std::size_t>(j)], hyper_.kernel).value;
    });
    cov.diagonal().array() += hyper_.noise_variance;
    if (t > 0) {
      auto f = detail::factorize(cov);
      lower_ = std::move(f.lower);
      jitter_ = f.jitter;
      alpha_ = lower_.triangularView<Eigen::Lower>().solve(y_);
      lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
    }
  }

  const Dataset& data() const { return data_; }
  const GpHyperparameters& hyper() const { return hyper_; }
  const Eigen::MatrixXd& cholesky() const { return lower_; }
  double jitter() const { return jitter_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }
  /// Observations as the model sees them (standardized when enabled).
  const Eigen::VectorXd& targets() const { return y_; }

  Posterior predict(const Str& query) const {
    const auto q = prepare(query, hyper_.kernel);
    const double prior = hyper_.output_scale * kernel_eval(q, q, hyper_.kernel).value;
    Posterior p{y_mean_, y_scale_ * y_scale_ * prior};
    if (train_.empty()) return p;
    const auto t = static_cast<Eigen::Index>(train_.size());
    Eigen::VectorXd k(t);
    for (Eigen::Index i = 0; i < t; ++i)
      k(i) = hyper_.output_scale *
             kernel_eval(q, train_[static_cast<std::size_t>(i)], hyper_.kernel).value;
    const double mean = k.dot(alpha_);
    const Eigen::VectorXd v = lower_.triangularView<Eigen::Lower>().solve(k);
    const double var = std::clamp(prior - v.squaredNorm(), 0.0, prior);
    p.mean = y_mean_ + y_scale_ * mean;
    p.variance = y_scale_ * y_scale_ * var;
    return p;
  }

 private:
  Dataset data_;
  GpHyperparameters hyper_;
  std::vector<PreparedString> train_;
  Eigen::MatrixXd lower_;
  Eigen::VectorXd y_, alpha_;
  double jitter_ = 0.0;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
};

/// Log marginal likelihood of the model's (possibly standardized) targets
/// with its gradient in natural parameter units.
inline LikelihoodResult log_marginal_likelihood(const GpModel& model, std::size_t jobs = 1) {
  if (model.data().empty()) throw Error("likelihood of an empty model");
  return detail::likelihood(model.data().strings(), model.targets(), model.hyper(), true, jobs);
}

struct FitOptions {
  std::size_t restarts = 5;  // first one warm-starts from the init values
  std::size_t max_iterations = 40;
  double decay_min = 0.05, decay_max = 0.99;
  double scale_min = 1e-6, scale_max = 1e2;  // output scale
  double noise_min = 1e-6, noise_max = 1e2;
  double lengthscale_min = 1e-2, lengthscale_max = 1e3;
  std::size_t jobs = 1;
};

namespace detail {

// Box-constrained coordinates: every parameter maps to [0, 1], linearly for
// the decays and log-linearly for positive scales.
struct ParameterMap {
  std::vector<double> lo, hi;
  std::vector<bool> log_scale;

  ParameterMap(const KernelSpec& kernel, const FitOptions& o) {
    auto add = [this](double l, double h, bool lg) {
      lo.push_back(lg ? std::log(l) : l);
      hi.push_back(lg ? std::log(h) : h);
      log_scale.push_back(lg);
    };
    switch (kernel.kind) {
      case KernelKind::ssk:
        add(o.decay_min, o.decay_max, false);
        add(o.decay_min, o.decay_max, false);
        break;
      case KernelKind::ngram: add(o.lengthscale_min, o.lengthscale_max, true); break;
      case KernelKind::onehot: break;
    }
    add(o.scale_min, o.scale_max, true);
    if (o.noise_min == o.noise_max) {
      lo.push_back(o.noise_min);  // pinned
      hi.push_back(o.noise_min);
      log_scale.push_back(false);
    } else {
      add(o.noise_min, o.noise_max, true);
    }
  }

  std::size_t size() const { return lo.size(); }

  std::vector<double> to_natural(const std::vector<double>& u) const {
    std::vector<double> x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double v = lo[i] + u[i] * (hi[i] - lo[i]);
      x[i] = log_scale[i] ? std::exp(v) : v;
    }
    return x;
  }

  std::vector<double> to_unit(const std::vector<double>& x) const {
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = log_scale[i] ? std::log(std::max(x[i], 1e-300)) : x[i];
      u[i] = hi[i] > lo[i] ? std::clamp((v - lo[i]) / (hi[i] - lo[i]), 0.0, 1.0) : 0.0;
    }
    return u;
  }

  // d(natural)/d(unit) per coordinate.
  std::vector<double> jacobian(const std::vector<double>& x) const {
    std::vector<double> j(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      j[i] = (hi[i] - lo[i]) * (log_scale[i] ? x[i] : 1.0);
    return j;
  }
};

inline std::vector<double> pack(const GpHyperparameters& h) {
  auto x = hyper_values(h.kernel);
  x.push_back(h.output_scale);
  x.push_back(h.noise_variance);
  return x;
}

inline GpHyperparameters unpack(GpHyperparameters h, const std::vector<double>& x) {
  const std::size_t k = x.size() - 2;
  set_hyper_values(h.kernel, std::span<const double>(x.data(), k));
  h.output_scale = x[k];
  h.noise_variance = x[k + 1];
  return h;
}

}  // namespace detail

/// Maximizes the log marginal likelihood over kernel hyperparameters, output
/// scale and noise variance by projected quasi-Newton ascent in the box. The
/// first restart starts from `init`; the rest start uniformly in the box.
inline GpModel fit(const Dataset& data, const GpHyperparameters& init, const FitOptions& options,
                   Rng& rng) {
  if (data.size() < 2) throw Error("fit needs at least two distinct observations");
  const GpModel standardized(data, init, true, options.jobs);
  const auto strings = data.strings();
  const Eigen::VectorXd& y = standardized.targets();
  const detail::ParameterMap map(init.kernel, options);

  struct Point {
    std::vector<double> u;
    double value = -std::numeric_limits<double>::infinity();
    std::vector<double> grad_u;
  };
  auto evaluate = [&](const std::vector<double>& u) {
    Point p{u, -std::numeric_limits<double>::infinity(), {}};
    const auto x = map.to_natural(u);
    try {
      const auto r = detail::likelihood(strings, y, detail::unpack(init, x), true, options.jobs);
      if (!std::isfinite(r.value)) return p;
      const auto jac = map.jacobian(x);
      p.grad_u.resize(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) p.grad_u[i] = r.grad[i] * jac[i];
      p.value = r.value;
    } catch (const Error&) {
    }
    return p;
  };

  Point best;
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<double> u0(map.size());
    if (r == 0) {
      u0 = map.to_unit(detail::pack(init));
    } else {
      for (auto& v : u0) v = rng.uniform();
    }
    Point cur = evaluate(u0);
    if (!std::isfinite(cur.value)) continue;
    // Projected BFGS ascent: variables pinned at a bound with the gradient
    // pointing outward are frozen for the step.
    const auto d = static_cast<Eigen::Index>(map.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
    bool scaled = false;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      const Eigen::Map<const Eigen::VectorXd> g(cur.grad_u.data(), d);
      std::vector<bool> active(map.size());
      for (std::size_t i = 0; i < map.size(); ++i)
        active[i] = (cur.u[i] <= 0.0 && g(i) < 0.0) || (cur.u[i] >= 1.0 && g(i) > 0.0);
      Eigen::VectorXd gf = g;
      for (Eigen::Index i = 0; i < d; ++i)
        if (active[static_cast<std::size_t>(i)]) gf(i) = 0.0;
      if (gf.lpNorm<Eigen::Infinity>() < 1e-8) break;
      Eigen::VectorXd dir = h * gf;
      for (Eigen::Index i = 0; i < d; ++i)
        if (active[static_cast<std::size_t>(i)]) dir(i) = 0.0;
      if (!(dir.dot(gf) > 0.0)) {
        h.setIdentity();
        dir = gf;
      }
      if (!scaled) dir *= 0.1 / dir.lpNorm<Eigen::Infinity>();
      const double longest = dir.lpNorm<Eigen::Infinity>();
      if (longest > 0.5) dir *= 0.5 / longest;

      bool moved = false;
      Point next;
      for (double t = 1.0; t > 1e-6; t *= 0.5) {
        std::vector<double> u(map.size());
        double expected = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
          u[i] = std::clamp(cur.u[i] + t * dir(static_cast<Eigen::Index>(i)), 0.0, 1.0);
          expected += g(static_cast<Eigen::Index>(i)) * (u[i] - cur.u[i]);
        }
        next = evaluate(u);
        if (next.value > cur.value + 1e-4 * expected && next.value > cur.value) {
          moved = true;
          break;
        }
      }
      if (!moved) break;
      Eigen::VectorXd step(d), change(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        step(i) = next.u[ui] - cur.u[ui];
        change(i) = cur.grad_u[ui] - next.grad_u[ui];
      }
      const double gain = next.value - cur.value;
      cur = std::move(next);
      const double sy = step.dot(change);
      if (sy > 1e-12) {
        if (!scaled) {
          h *= sy / change.squaredNorm();
          scaled = true;
        }
        const double rho = 1.0 / sy;
        const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d) - rho * step * change.transpose();
        h = v * h * v.transpose() + rho * step * step.transpose();
      }
      if (gain < 1e-10 * (1.0 + std::abs(cur.value))) break;
    }
    if (cur.value > best.value) best = std::move(cur);
  }
  if (!std::isfinite(best.value)) throw Error("likelihood is non-finite at every restart");
  return GpModel(data, detail::unpack(init, map.to_natural(best.u)), true, options.jobs);
}

}  // namespace stringbo

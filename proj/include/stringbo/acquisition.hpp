#pragma once

// Expected improvement.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stringbo/gp.hpp"

namespace stringbo {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// EI of a Gaussian N(mean, variance) over `incumbent`.
inline double expected_improvement(double mean, double variance, double incumbent) {
  const double gap = mean - incumbent;
  if (!(variance > 1e-12)) return std::max(gap, 0.0);
  const double s = std::sqrt(variance);
  const double z = gap / s;
  return std::max(gap * normal_cdf(z) + s * normal_pdf(z), 0.0);
}

/// Model plus the best observed value so far.
struct AcquisitionContext {
  const GpModel* model = nullptr;
  double incumbent = 0.0;

  explicit AcquisitionContext(const GpModel& m)
      : model(&m), incumbent(m.data().empty() ? 0.0 : m.data().best_value()) {}

  double operator()(const Str& query) const {
    const auto p = model->predict(query);
    return expected_improvement(p.mean, p.variance, incumbent);
  }
};

inline double expected_improvement(const AcquisitionContext& ctx, const Str& query) { return ctx(query); }

}  // namespace stringbo

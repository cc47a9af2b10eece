#pragma once

// Dense-matrix form of the SSK recursion with explicit D and dD/dgap
// matrices. Independent of the scan-based implementation in the library;
// used only as a test oracle.

#include <cmath>

#include <Eigen/Core>

#include "stringbo/kernels.hpp"

namespace stringbo::testing {

inline Eigen::MatrixXd gap_matrix(Eigen::Index l, double gap) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(l, l);
  for (Eigen::Index j = 0; j < l; ++j)
    for (Eigen::Index k = j + 1; k < l; ++k) d(j, k) = std::pow(gap, static_cast<double>(k - j - 1));
  return d;
}

inline Eigen::MatrixXd gap_matrix_derivative(Eigen::Index l, double gap) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(l, l);
  for (Eigen::Index j = 0; j < l; ++j)
    for (Eigen::Index k = j + 2; k < l; ++k)
      d(j, k) = static_cast<double>(k - j - 1) * std::pow(gap, static_cast<double>(k - j - 2));
  return d;
}

inline SskValue dense_ssk(const Str& a, const Str& b, const KernelParams& p) {
  const auto la = static_cast<Eigen::Index>(a.size());
  const auto lb = static_cast<Eigen::Index>(b.size());
  const double lm = p.match_decay, lm2 = lm * lm;
  Eigen::MatrixXd m(la, lb);
  for (Eigen::Index j = 0; j < la; ++j)
    for (Eigen::Index k = 0; k < lb; ++k)
      m(j, k) = a[static_cast<std::size_t>(j)] == b[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
  const Eigen::MatrixXd da = gap_matrix(la, p.gap_decay), db = gap_matrix(lb, p.gap_decay);
  const Eigen::MatrixXd dda = gap_matrix_derivative(la, p.gap_decay);
  const Eigen::MatrixXd ddb = gap_matrix_derivative(lb, p.gap_decay);

  Eigen::MatrixXd kp = Eigen::MatrixXd::Ones(la, lb);
  Eigen::MatrixXd dkm = Eigen::MatrixXd::Zero(la, lb), dkg = Eigen::MatrixXd::Zero(la, lb);
  SskValue r;
  for (int i = 1; i <= p.max_order; ++i) {
    r.value += lm2 * m.cwiseProduct(kp).sum();
    r.d_match += (2.0 * lm * m.cwiseProduct(kp) + lm2 * m.cwiseProduct(dkm)).sum();
    r.d_gap += lm2 * m.cwiseProduct(dkg).sum();
    const Eigen::MatrixXd kpp = lm2 * m.cwiseProduct(kp);
    const Eigen::MatrixXd dkpp_m = 2.0 * lm * m.cwiseProduct(kp) + lm2 * m.cwiseProduct(dkm);
    const Eigen::MatrixXd dkpp_g = lm2 * m.cwiseProduct(dkg);
    kp = da.transpose() * kpp * db;
    dkm = da.transpose() * dkpp_m * db;
    dkg = dda.transpose() * kpp * db + da.transpose() * dkpp_g * db + da.transpose() * kpp * ddb;
  }
  return r;
}

}  // namespace stringbo::testing

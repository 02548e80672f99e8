#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "votereg/errors.hpp"

namespace votereg {

// Lower step sample quantile: the ceil(n*tau)-th order statistic (1-based).
// Fixed project-wide so intercept updates, KDE anchors and IQR all agree.
inline Eigen::Index lower_quantile_index(Eigen::Index n, double tau) {
  const double raw = static_cast<double>(n) * tau;
  auto idx = static_cast<Eigen::Index>(std::ceil(raw - 1e-9 * (1.0 + raw)));
  return std::clamp<Eigen::Index>(idx, 1, n);
}

inline double quantile_of_sorted(const Eigen::VectorXd& sorted, double tau) {
  return sorted[lower_quantile_index(sorted.size(), tau) - 1];
}

inline Eigen::VectorXd sorted_copy(const Eigen::VectorXd& v) {
  Eigen::VectorXd s = v;
  std::sort(s.data(), s.data() + s.size());
  return s;
}

inline double sample_quantile(const Eigen::VectorXd& v, double tau) {
  return quantile_of_sorted(sorted_copy(v), tau);
}

// Sample standard deviation with divisor n-1.
inline double sample_sd(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) throw InputError("sample_sd needs at least two values");
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

inline double interquartile_range_sorted(const Eigen::VectorXd& sorted) {
  return quantile_of_sorted(sorted, 0.75) - quantile_of_sorted(sorted, 0.25);
}

inline double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("correlation inputs differ in length");
  const double ma = a.mean();
  const double mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma;
  const Eigen::ArrayXd db = b.array() - mb;
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom == 0.0) return 0.0;
  return (da * db).sum() / denom;
}

// Standard normal density and quantile. The quantile uses the Acklam rational
// approximation polished by two Newton steps on the erfc-based CDF, giving
// near machine precision over (0,1).
inline double normal_pdf(double x) {
  return 0.3989422804014326779399461 * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244008444);
}

double normal_quantile(double p);

}  // namespace votereg

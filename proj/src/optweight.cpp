#include "votereg/optweight.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "votereg/stats.hpp"

namespace votereg {

namespace {

void check_levels(std::span<const double> tau) {
  if (tau.empty()) throw InputError("at least one quantile level required");
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!(tau[k] > 0.0 && tau[k] < 1.0))
      throw InputError("quantile levels must lie strictly inside (0,1)");
    if (k > 0 && tau[k] <= tau[k - 1])
      throw InputError("quantile levels must be strictly increasing");
  }
}

Eigen::MatrixXd level_covariance(std::span<const double> tau) {
  const auto k_count = static_cast<Eigen::Index>(tau.size());
  Eigen::MatrixXd r(k_count, k_count);
  for (Eigen::Index i = 0; i < k_count; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double value = std::min(tau[i], tau[j]) - tau[i] * tau[j];
      r(i, j) = value;
      r(j, i) = value;
    }
  return r;
}

}  // namespace

Eigen::VectorXd residuals(const Dataset& data, const std::vector<SparseFit>& fits) {
  data.validate();
  if (fits.empty()) throw InputError("residuals need at least one fit");
  Eigen::VectorXd average = Eigen::VectorXd::Zero(data.p());
  for (const SparseFit& fit : fits) {
    if (fit.coefficients.size() != data.p())
      throw DimensionError("fit coefficient length does not match predictor count");
    average += fit.coefficients;
  }
  average /= static_cast<double>(fits.size());
  return data.y - data.x * average;
}

KdeAtQuantiles kde_at_quantiles(const Eigen::VectorXd& residuals,
                                std::span<const double> tau) {
  check_levels(tau);
  const Eigen::Index n = residuals.size();
  if (n < 10) throw InputError("kernel density estimation needs at least 10 residuals");

  const Eigen::VectorXd sorted = sorted_copy(residuals);
  const double sd = sample_sd(residuals);
  const double iqr = interquartile_range_sorted(sorted);
  // residual spread at rounding scale means there is no error distribution to
  // estimate; treat it the same as an exactly zero bandwidth
  if (sd <= 1e-12 * (1.0 + residuals.cwiseAbs().maxCoeff()))
    throw NumericalError("degenerate residuals: spread at rounding scale");
  const double h = 0.9 * std::pow(static_cast<double>(n), -0.2) *
                   std::min(sd, iqr / 1.34);
  if (!(h > 0.0))
    throw NumericalError("degenerate residuals produced a zero KDE bandwidth");

  KdeAtQuantiles out;
  out.bandwidth = h;
  const auto k_count = static_cast<Eigen::Index>(tau.size());
  out.beta_hat.resize(k_count);
  out.f_hat.resize(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double anchor = quantile_of_sorted(sorted, tau[static_cast<std::size_t>(k)]);
    out.beta_hat[k] = anchor;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      total += normal_pdf((anchor - residuals[i]) / h);
    out.f_hat[k] = total / (static_cast<double>(n) * h);
  }
  return out;
}

Eigen::MatrixXd h_hat(std::span<const double> tau, const Eigen::VectorXd& f_hat) {
  check_levels(tau);
  if (f_hat.size() != static_cast<Eigen::Index>(tau.size()))
    throw DimensionError("density vector length does not match level count");
  if ((f_hat.array() <= 0.0).any())
    throw InputError("density values must be positive");
  Eigen::MatrixXd h = level_covariance(tau);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) /= f_hat[i] * f_hat[j];
  return h;
}

Eigen::MatrixXd analytic_h_inverse(std::span<const double> tau,
                                   const Eigen::VectorXd& f) {
  check_levels(tau);
  const auto k_count = static_cast<Eigen::Index>(tau.size());
  if (f.size() != k_count)
    throw DimensionError("density vector length does not match level count");
  if ((f.array() <= 0.0).any()) throw InputError("density values must be positive");
  const double spacing = 1.0 / static_cast<double>(k_count + 1);
  for (Eigen::Index k = 0; k < k_count; ++k)
    if (std::abs(tau[static_cast<std::size_t>(k)] - static_cast<double>(k + 1) * spacing) >
        1e-12)
      throw InputError("analytic H inverse requires levels tau_k = k/(K+1)");

  Eigen::MatrixXd inverse = Eigen::MatrixXd::Zero(k_count, k_count);
  const double scale = static_cast<double>(k_count + 1);
  for (Eigen::Index i = 0; i < k_count; ++i) {
    inverse(i, i) = 2.0 * scale * f[i] * f[i];
    if (i + 1 < k_count) {
      inverse(i, i + 1) = -scale * f[i] * f[i + 1];
      inverse(i + 1, i) = inverse(i, i + 1);
    }
  }
  return inverse;
}

Eigen::VectorXd optimal_weights(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols() || h.rows() == 0)
    throw DimensionError("H must be a nonempty square matrix");
  if (!h.isApprox(h.transpose(), 1e-10))
    throw InputError("H must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(h);
  const double min_eig = eigen.eigenvalues().minCoeff();
  const double max_eig = eigen.eigenvalues().maxCoeff();
  if (!(min_eig > 0.0)) {
    std::ostringstream message;
    message << "H is singular or indefinite (eigenvalue range [" << min_eig << ", "
            << max_eig << "])";
    throw NumericalError(message.str());
  }
  const Eigen::VectorXd unnormalized =
      eigen.eigenvectors() *
      (eigen.eigenvectors().transpose() * Eigen::VectorXd::Ones(h.rows()))
          .cwiseQuotient(eigen.eigenvalues());
  const double total = unnormalized.sum();
  if (total == 0.0) throw NumericalError("degenerate optimal-weight normalization");
  return unnormalized / total;
}

SparseFit combine(const std::vector<SparseFit>& fits, const Eigen::VectorXd& weights,
                  std::span<const int> expected_support) {
  if (fits.empty()) throw InputError("combine needs at least one fit");
  if (weights.size() != static_cast<Eigen::Index>(fits.size()))
    throw DimensionError("weight count does not match fit count");
  if (std::abs(weights.sum() - 1.0) > 1e-8)
    throw InputError("combination weights must sum to one");

  const Eigen::Index p = fits.front().coefficients.size();
  for (const SparseFit& fit : fits) {
    if (fit.coefficients.size() != p)
      throw DimensionError("fits have mismatched coefficient lengths");
    if (!expected_support.empty() &&
        !std::includes(expected_support.begin(), expected_support.end(),
                       fit.support.begin(), fit.support.end()))
      throw InputError("fit support escapes the expected (voted) support");
  }

  SparseFit out;
  out.coefficients = Eigen::VectorXd::Zero(p);
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const double w = weights[static_cast<Eigen::Index>(k)];
    for (int j : fits[k].support) out.coefficients[j] += w * fits[k].coefficients[j];
  }
  out.support = SparseFit::support_of(out.coefficients);

  const Eigen::Index intercept_len = fits.front().intercepts.size();
  const bool same_intercepts =
      std::all_of(fits.begin(), fits.end(), [&](const SparseFit& fit) {
        return fit.intercepts.size() == intercept_len;
      });
  if (same_intercepts && intercept_len > 0) {
    out.intercepts = Eigen::VectorXd::Zero(intercept_len);
    for (std::size_t k = 0; k < fits.size(); ++k)
      out.intercepts += weights[static_cast<Eigen::Index>(k)] * fits[k].intercepts;
  }
  out.converged = std::all_of(fits.begin(), fits.end(),
                              [](const SparseFit& fit) { return fit.converged; });
  return out;
}

ErrorDensity ErrorDensity::normal(double variance) {
  if (!(variance > 0.0)) throw InputError("normal variance must be positive");
  return ErrorDensity{Family::Normal, variance, 0.0};
}

ErrorDensity ErrorDensity::uniform(double a, double b) {
  if (!(a < b)) throw InputError("uniform endpoints must satisfy a < b");
  return ErrorDensity{Family::Uniform, a, b};
}

double ErrorDensity::pdf(double x) const {
  if (family == Family::Normal) {
    const double sigma = std::sqrt(param1);
    return normal_pdf(x / sigma) / sigma;
  }
  return (x >= param1 && x <= param2) ? 1.0 / (param2 - param1) : 0.0;
}

double ErrorDensity::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw InputError("quantile level must lie in (0,1)");
  if (family == Family::Normal) return std::sqrt(param1) * normal_quantile(p);
  return param1 + p * (param2 - param1);
}

std::string ErrorDensity::describe() const {
  std::ostringstream out;
  if (family == Family::Normal) {
    out << "normal(" << param1 << ")";
  } else {
    out << "uniform(" << param1 << "," << param2 << ")";
  }
  return out.str();
}

std::vector<std::pair<int, double>> fisher_limit_check(const ErrorDensity& density,
                                                       std::span<const int> k_values) {
  std::vector<std::pair<int, double>> table;
  table.reserve(k_values.size());
  for (int k_count : k_values) {
    if (k_count < 1) throw InputError("K must be positive");
    std::vector<double> tau(static_cast<std::size_t>(k_count));
    Eigen::VectorXd f(k_count);
    for (int k = 1; k <= k_count; ++k) {
      tau[static_cast<std::size_t>(k - 1)] =
          static_cast<double>(k) / static_cast<double>(k_count + 1);
      f[k - 1] = density.pdf(density.quantile(tau[static_cast<std::size_t>(k - 1)]));
    }
    const Eigen::MatrixXd inverse = analytic_h_inverse(tau, f);
    table.emplace_back(k_count, inverse.sum());
  }
  return table;
}

WeightPlan make_weight_plan(const Eigen::VectorXd& residuals,
                            std::span<const double> tau) {
  WeightPlan plan;
  plan.tau.assign(tau.begin(), tau.end());
  const KdeAtQuantiles kde = kde_at_quantiles(residuals, tau);
  plan.beta_hat = kde.beta_hat;
  plan.f_hat = kde.f_hat;
  plan.bandwidth = kde.bandwidth;
  plan.h_hat = h_hat(tau, kde.f_hat);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(plan.h_hat);
  const double min_eig = eigen.eigenvalues().minCoeff();
  const double max_eig = eigen.eigenvalues().maxCoeff();
  if (min_eig > 0.0 && max_eig / min_eig <= 1e10) {
    plan.w_star = optimal_weights(plan.h_hat);
  } else {
    plan.w_star = Eigen::VectorXd::Constant(plan.h_hat.rows(),
                                            1.0 / static_cast<double>(plan.h_hat.rows()));
    plan.uniform_fallback = true;
  }
  return plan;
}

Eigen::VectorXd xi_weights(std::span<const double> tau, const Eigen::VectorXd& f_hat) {
  check_levels(tau);
  if (f_hat.size() != static_cast<Eigen::Index>(tau.size()))
    throw DimensionError("density vector length does not match level count");
  const Eigen::MatrixXd r = level_covariance(tau);
  Eigen::LDLT<Eigen::MatrixXd> solver(r);
  if (solver.info() != Eigen::Success)
    throw NumericalError("level covariance matrix R failed to factor");
  return solver.solve(f_hat);
}

}  // namespace votereg

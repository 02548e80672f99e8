#pragma once

#include <span>
#include <utility>
#include <vector>

#include "votereg/lincore.hpp"

namespace votereg {

// Everything needed to weight the post-selection refits: quantile anchors of
// the residual distribution, kernel density values there, the K x K matrix
// H_ij = {min(tau_i,tau_j) - tau_i*tau_j} / {f(b_i) f(b_j)}, and the
// variance-minimizing convex weights.
struct WeightPlan {
  std::vector<double> tau;
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd f_hat;
  Eigen::MatrixXd h_hat;
  Eigen::VectorXd w_star;
  double bandwidth = 0.0;
  bool uniform_fallback = false;  // H was near-singular; fell back to equal weights
};

// Residuals of the uniformly averaged post-selection estimator: slopes only,
// intercepts are deliberately not subtracted.
Eigen::VectorXd residuals(const Dataset& data, const std::vector<SparseFit>& fits);

struct KdeAtQuantiles {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd f_hat;
  double bandwidth = 0.0;
};

// Gaussian KDE evaluated at the lower-step sample quantiles of the residuals,
// with the rule-of-thumb bandwidth h = 0.9 n^{-1/5} min(SD, IQR/1.34).
KdeAtQuantiles kde_at_quantiles(const Eigen::VectorXd& residuals,
                                std::span<const double> tau);

Eigen::MatrixXd h_hat(std::span<const double> tau, const Eigen::VectorXd& f_hat);

// Closed-form tridiagonal inverse of H, valid only for equispaced levels
// tau_k = k/(K+1): diagonal 2(K+1) f_i^2, off-diagonal -(K+1) f_i f_{i+1}.
Eigen::MatrixXd analytic_h_inverse(std::span<const double> tau,
                                   const Eigen::VectorXd& f);

// w* = (r' H^-1 r)^-1 H^-1 r, normalized to sum exactly to one.
Eigen::VectorXd optimal_weights(const Eigen::MatrixXd& h);

// Coefficient-wise weighted average. Entries outside `expected_support`
// (or outside the union of the fits' supports when it is empty) stay exactly
// zero; a fit whose support escapes `expected_support` is an error.
SparseFit combine(const std::vector<SparseFit>& fits, const Eigen::VectorXd& weights,
                  std::span<const int> expected_support = {});

// Error densities with analytic quantile functions, for the efficiency
// diagnostics below.
struct ErrorDensity {
  enum class Family { Normal, Uniform };
  Family family = Family::Normal;
  double param1 = 1.0;  // Normal: variance; Uniform: lower endpoint
  double param2 = 0.0;  // Uniform: upper endpoint

  static ErrorDensity normal(double variance);
  static ErrorDensity uniform(double a, double b);

  double pdf(double x) const;
  double quantile(double p) const;
  std::string describe() const;
};

// r' H^-1 r per K with H built from the true density at its tau_k = k/(K+1)
// quantiles; converges to the Fisher information (plus the boundary term for
// compactly supported densities) as K grows.
std::vector<std::pair<int, double>> fisher_limit_check(const ErrorDensity& density,
                                                       std::span<const int> k_values);

// KDE -> H -> w* in one pass, with the uniform fallback when the estimated H
// is numerically near-singular (condition above 1e10).
WeightPlan make_weight_plan(const Eigen::VectorXd& residuals,
                            std::span<const double> tau);

// xi = R^-1 psi_hat with R_ij = min(tau_i,tau_j) - tau_i*tau_j and psi_hat the
// estimated density values; the weights of the alpha-selection criterion.
Eigen::VectorXd xi_weights(std::span<const double> tau, const Eigen::VectorXd& f_hat);

}  // namespace votereg

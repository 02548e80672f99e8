#pragma once

#include <optional>
#include <span>
#include <vector>

#include "votereg/lincore.hpp"

namespace votereg {

// Weighted-Lasso penalty: n * lambda * sum_j weights[j] * |theta_j|.
struct PenaltyConfig {
  double lambda = 0.0;
  Eigen::VectorXd weights;  // length p, nonnegative
  double scad_b = 3.7;

  void validate(Eigen::Index p) const;
};

struct SolverConfig {
  int max_outer_iterations = 50;    // LLA iterations
  int max_cd_sweeps = 500;          // total coordinate sweeps per solve
  double tolerance = 1e-6;          // max absolute coefficient change per sweep
  int support_stability_rounds = 2; // consecutive LLA rounds with a fixed support
  bool standardize_columns = false; // scale columns inside each solve, then back-transform
  // Coordinate descent on the nonsmooth losses can stall at points that are
  // coordinatewise optimal but not global (the check-loss kinks couple the
  // slopes with the intercepts). A polish phase rechecks each coordinate with
  // the intercepts profiled out exactly; penalized solves run it when
  // n <= polish_max_n, restricted (unpenalized) fits use the same gate.
  Eigen::Index polish_max_n = 64;

  void validate() const;
};

// Derivative of the SCAD penalty: lambda * d(x) with
// d(x) = I(|x| <= lambda) + (b*lambda - |x|)_+ / ((b-1)*lambda) * I(|x| > lambda),
// so the value is lambda at 0, tapers linearly, and vanishes past b*lambda.
double scad_weight(double x, double lambda, double b);

// SCAD penalty itself, used for the reported objective of fit_scad_lla.
double scad_penalty(double x, double lambda, double b);

// Minimizes sum_i loss(y_i - x_i' theta; beta) + n*lambda*sum_j d_j*|theta_j|
// jointly over theta and the unpenalized intercepts beta by cyclic coordinate
// descent in index order. Quantile-type coordinates solve the exact univariate
// weighted-L1 subproblem by sorted breakpoint search; squared-loss coordinates
// soft-threshold. The squared data term is x^2/2, pairing with the unit-slope
// subgradient so the stationarity system reads |sum_i x_ij psi(r_i)| <= n*lambda*d_j.
// Zeros are exact (pinned by the threshold, never clipped).
SparseFit fit_weighted_lasso(const Dataset& data, const LossSpec& loss,
                             const PenaltyConfig& penalty,
                             const std::optional<Eigen::VectorXd>& init,
                             const SolverConfig& config);

// Iteratively reweighted Lasso with weights from the SCAD derivative evaluated
// at the previous iterate (local linear approximation). Starts from the
// uniform-weight Lasso solution at the same lambda; `lasso_warm_start` only
// seeds that initial Lasso solve. Stops once the coefficients move less than
// the tolerance and the support has been stable for the configured number of
// consecutive rounds.
SparseFit fit_scad_lla(const Dataset& data, const LossSpec& loss, double lambda,
                       double scad_b, const SolverConfig& config,
                       const std::optional<Eigen::VectorXd>& lasso_warm_start = std::nullopt);

// Unpenalized fit constrained to theta_j = 0 off the given support. The
// squared loss solves the normal equations directly; other losses run
// coordinate descent from two deterministic starts (zero and, when available,
// the least-squares solution) and keep the better objective.
SparseFit fit_restricted(const Dataset& data, const LossSpec& loss,
                         std::span<const int> support, const SolverConfig& config);

// Intercepts minimizing the loss of a constant-only model (means/quantiles).
Eigen::VectorXd constant_fit(const LossSpec& loss, const Eigen::VectorXd& y);

// Smallest lambda at which the unit-weight Lasso keeps no predictor:
// max_j |sum_i x_ij psi(y_i; beta0)| / n at the intercept-only fit.
double lasso_lambda_max(const Dataset& data, const LossSpec& loss);

}  // namespace votereg

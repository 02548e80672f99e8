#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "votereg/errors.hpp"

namespace votereg {

// Response vector plus design matrix; rows are observations. Column names are
// optional (empty, or one unique name per predictor).
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  std::vector<std::string> column_names;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return x.cols(); }

  // Throws InputError/DimensionError when the invariants fail:
  // n >= 2, finite entries, consistent shapes, unique names.
  void validate() const;
};

// One loss function: quantile check loss at a level, squared loss, absolute
// loss, or the composite check loss over several levels. The per-level shifts
// (the beta intercepts) are estimated by the solver, not stored here.
struct LossSpec {
  enum class Kind { QuantileCheck, Squared, Absolute, CompositeQuantile };

  Kind kind = Kind::Squared;
  std::vector<double> tau;  // one level for QuantileCheck, K for CompositeQuantile

  static LossSpec quantile(double tau);
  static LossSpec squared() { return LossSpec{Kind::Squared, {}}; }
  static LossSpec absolute() { return LossSpec{Kind::Absolute, {}}; }
  static LossSpec composite(std::vector<double> levels);

  // Number of intercept parameters the loss carries (K for composite, else 1).
  int intercept_count() const {
    return kind == Kind::CompositeQuantile ? static_cast<int>(tau.size()) : 1;
  }

  bool is_quantile() const { return kind == Kind::QuantileCheck; }

  bool operator==(const LossSpec& other) const {
    return kind == other.kind && tau == other.tau;
  }

  std::string describe() const;

  void validate() const;
};

// Result of one penalized or restricted fit. `support` is exactly the nonzero
// pattern of `coefficients`; intercepts hold the per-level shifts.
struct SparseFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd intercepts;
  std::vector<int> support;              // sorted
  double objective_value = 0.0;
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> objective_history; // solver diagnostics, one entry per sweep

  static std::vector<int> support_of(const Eigen::VectorXd& coefficients);
};

// Loss of a residual under `spec`, shifted by the given intercepts.
// Empty intercepts mean zero shift for the single-intercept losses; the
// composite loss requires all K shifts. For the check loss this evaluates
// (x - b) * (tau - I(x < b)) and the composite loss sums those terms.
double loss_value(const LossSpec& spec, double residual,
                  const Eigen::VectorXd& intercepts);

// Subdifferential convention paired with loss_value: tau - I(x - b < 0) for
// the check loss (value tau at the kink), x - b for squared, sign(x - b) for
// absolute, and the sum of the check terms for the composite loss.
double subgradient(const LossSpec& spec, double residual,
                   const Eigen::VectorXd& intercepts);

// Total loss of a residual vector; convenience for validation criteria.
double loss_sum(const LossSpec& spec, const Eigen::VectorXd& residuals,
                const Eigen::VectorXd& intercepts);

}  // namespace votereg

#include "votereg/lincore.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace votereg {

void Dataset::validate() const {
  if (y.size() < 2) throw InputError("dataset needs at least two observations");
  if (x.rows() != y.size())
    throw DimensionError("design matrix rows (" + std::to_string(x.rows()) +
                         ") do not match response length (" + std::to_string(y.size()) + ")");
  if (!y.allFinite() || !x.allFinite())
    throw InputError("dataset contains non-finite values");
  if (!column_names.empty()) {
    if (static_cast<Eigen::Index>(column_names.size()) != x.cols())
      throw DimensionError("column_names length does not match predictor count");
    std::set<std::string> seen(column_names.begin(), column_names.end());
    if (seen.size() != column_names.size())
      throw InputError("column_names must be unique");
  }
}

LossSpec LossSpec::quantile(double tau) {
  LossSpec spec{Kind::QuantileCheck, {tau}};
  spec.validate();
  return spec;
}

LossSpec LossSpec::composite(std::vector<double> levels) {
  LossSpec spec{Kind::CompositeQuantile, std::move(levels)};
  spec.validate();
  return spec;
}

void LossSpec::validate() const {
  switch (kind) {
    case Kind::QuantileCheck:
      if (tau.size() != 1) throw InputError("quantile loss needs exactly one level");
      break;
    case Kind::CompositeQuantile:
      if (tau.empty()) throw InputError("composite loss needs at least one level");
      break;
    default:
      if (!tau.empty()) throw InputError("squared/absolute losses carry no levels");
      return;
  }
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!(tau[k] > 0.0 && tau[k] < 1.0))
      throw InputError("quantile levels must lie strictly inside (0,1)");
    if (k > 0 && tau[k] <= tau[k - 1])
      throw InputError("quantile levels must be strictly increasing");
  }
}

std::string LossSpec::describe() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::Squared: return "squared";
    case Kind::Absolute: return "absolute";
    case Kind::QuantileCheck:
      out << "quantile(" << tau.front() << ")";
      return out.str();
    case Kind::CompositeQuantile:
      out << "composite(";
      for (std::size_t k = 0; k < tau.size(); ++k) out << (k ? "," : "") << tau[k];
      out << ")";
      return out.str();
  }
  return "?";
}

std::vector<int> SparseFit::support_of(const Eigen::VectorXd& coefficients) {
  std::vector<int> support;
  for (Eigen::Index j = 0; j < coefficients.size(); ++j)
    if (coefficients[j] != 0.0) support.push_back(static_cast<int>(j));
  return support;
}

namespace {

void check_intercepts(const LossSpec& spec, const Eigen::VectorXd& intercepts) {
  const int expected = spec.intercept_count();
  if (intercepts.size() == 0) {
    if (spec.kind == LossSpec::Kind::CompositeQuantile)
      throw DimensionError("composite loss requires one intercept per level");
    return;
  }
  if (intercepts.size() != expected)
    throw DimensionError("intercept vector has length " + std::to_string(intercepts.size()) +
                         ", expected " + std::to_string(expected));
}

inline double check_loss(double x, double beta, double tau) {
  const double z = x - beta;
  return z >= 0.0 ? z * tau : z * (tau - 1.0);
}

// I(0 < 0) = 0, so the kink evaluates to tau.
inline double check_psi(double x, double beta, double tau) {
  return tau - (x - beta < 0.0 ? 1.0 : 0.0);
}

}  // namespace

double loss_value(const LossSpec& spec, double residual, const Eigen::VectorXd& intercepts) {
  check_intercepts(spec, intercepts);
  const double beta0 = intercepts.size() > 0 ? intercepts[0] : 0.0;
  switch (spec.kind) {
    case LossSpec::Kind::QuantileCheck:
      return check_loss(residual, beta0, spec.tau.front());
    case LossSpec::Kind::Squared: {
      const double z = residual - beta0;
      return z * z;
    }
    case LossSpec::Kind::Absolute:
      return std::abs(residual - beta0);
    case LossSpec::Kind::CompositeQuantile: {
      double total = 0.0;
      for (std::size_t k = 0; k < spec.tau.size(); ++k)
        total += check_loss(residual, intercepts[static_cast<Eigen::Index>(k)], spec.tau[k]);
      return total;
    }
  }
  return 0.0;
}

double subgradient(const LossSpec& spec, double residual, const Eigen::VectorXd& intercepts) {
  check_intercepts(spec, intercepts);
  const double beta0 = intercepts.size() > 0 ? intercepts[0] : 0.0;
  switch (spec.kind) {
    case LossSpec::Kind::QuantileCheck:
      return check_psi(residual, beta0, spec.tau.front());
    case LossSpec::Kind::Squared:
      return residual - beta0;
    case LossSpec::Kind::Absolute: {
      const double z = residual - beta0;
      return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
    }
    case LossSpec::Kind::CompositeQuantile: {
      double total = 0.0;
      for (std::size_t k = 0; k < spec.tau.size(); ++k)
        total += check_psi(residual, intercepts[static_cast<Eigen::Index>(k)], spec.tau[k]);
      return total;
    }
  }
  return 0.0;
}

double loss_sum(const LossSpec& spec, const Eigen::VectorXd& residuals,
                const Eigen::VectorXd& intercepts) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i)
    total += loss_value(spec, residuals[i], intercepts);
  return total;
}

}  // namespace votereg

#include "votereg/simbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "votereg/rng.hpp"

namespace votereg {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct DistInfo {
  ErrorDist dist;
  const char* token;
  const char* label;
};

constexpr DistInfo kDists[] = {
    {ErrorDist::T2, "t2", "T2"},
    {ErrorDist::Normal3, "n03", "N(0;3)"},
    {ErrorDist::ScaleMixNormal, "smn", "SMN"},
    {ErrorDist::LocMixNormal, "lmn", "LMN"},
    {ErrorDist::Gamma11, "gamma", "Gamma(1;1)"},
    {ErrorDist::DoubleExp, "de", "DE"},
    {ErrorDist::Beta13, "beta", "B(1;3)"},
    {ErrorDist::Uniform33, "unif", "U(-3;3)"},
};

struct MethodInfo {
  Method method;
  const char* token;
};

constexpr MethodInfo kMethods[] = {
    {Method::WqrVote, "wqr-vote"},
    {Method::Ladr, "ladr"},
    {Method::Lsr, "lsr"},
    {Method::Cqr, "cqr"},
};

LossSpec loss_of(Method method, std::span<const double> levels) {
  switch (method) {
    case Method::Ladr: return LossSpec::absolute();
    case Method::Lsr: return LossSpec::squared();
    case Method::Cqr:
      return LossSpec::composite(std::vector<double>(levels.begin(), levels.end()));
    case Method::WqrVote:
      throw InputError("WQR-vote is driven by run_pipeline, not run_baselines");
  }
  throw InputError("unknown method");
}

std::vector<LossSpec> quantile_losses(std::span<const double> levels) {
  std::vector<LossSpec> losses;
  losses.reserve(levels.size());
  for (double tau : levels) losses.push_back(LossSpec::quantile(tau));
  return losses;
}

double squared_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  return (estimate - truth).squaredNorm();
}

// Oracle counterpart of the WQR-vote estimator: unpenalized quantile refits on
// the known support, combined with the estimated optimal weights.
SparseFit wqr_oracle(const Dataset& data, std::span<const double> levels,
                     std::span<const int> true_support, const SolverConfig& solver) {
  std::vector<SparseFit> refits;
  refits.reserve(levels.size());
  for (double tau : levels)
    refits.push_back(fit_restricted(data, LossSpec::quantile(tau), true_support, solver));
  Eigen::VectorXd weights;
  try {
    weights = make_weight_plan(residuals(data, refits), levels).w_star;
  } catch (const Error&) {
    weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(levels.size()),
                                        1.0 / static_cast<double>(levels.size()));
  }
  return combine(refits, weights, true_support);
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

std::string name_of(ErrorDist dist) {
  for (const DistInfo& info : kDists)
    if (info.dist == dist) return info.token;
  return "?";
}

std::string label_of(ErrorDist dist) {
  for (const DistInfo& info : kDists)
    if (info.dist == dist) return info.label;
  return "?";
}

std::string name_of(Method method) {
  for (const MethodInfo& info : kMethods)
    if (info.method == method) return info.token;
  return "?";
}

std::optional<ErrorDist> parse_dist(const std::string& token) {
  for (const DistInfo& info : kDists)
    if (token == info.token) return info.dist;
  return std::nullopt;
}

std::optional<Method> parse_method(const std::string& token) {
  for (const MethodInfo& info : kMethods)
    if (token == info.token) return info.method;
  return std::nullopt;
}

std::vector<ErrorDist> all_dists() {
  std::vector<ErrorDist> dists;
  for (const DistInfo& info : kDists) dists.push_back(info.dist);
  return dists;
}

void SimDesign::validate() const {
  if (n < 2 || p < 1) throw InputError("simulation design needs n >= 2 and p >= 1");
  if (!(rho > -1.0 && rho < 1.0)) throw InputError("rho must lie in (-1, 1)");
  if (replicates < 1) throw InputError("at least one replicate required");
  if (validation_n < 2) throw InputError("validation_n must be at least 2");
  if (quantile_levels.empty()) throw InputError("quantile levels required");
  for (const auto& [index, value] : true_beta) {
    if (index < 1 || index > p)
      throw InputError("true_beta index " + std::to_string(index) + " outside [1, p]");
    if (!std::isfinite(value)) throw InputError("true_beta values must be finite");
  }
}

Eigen::VectorXd SimDesign::coefficient_vector() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  for (const auto& [index, value] : true_beta) theta[index - 1] = value;
  return theta;
}

std::vector<int> SimDesign::true_support() const {
  std::vector<int> support;
  for (const auto& [index, value] : true_beta)
    if (value != 0.0) support.push_back(index - 1);
  std::sort(support.begin(), support.end());
  return support;
}

Eigen::MatrixXd gen_design(int n, int p, double rho, std::uint64_t seed) {
  if (n < 1 || p < 1) throw InputError("design dimensions must be positive");
  if (!(rho > -1.0 && rho < 1.0)) throw InputError("rho must lie in (-1, 1)");
  Rng rng(seed);
  Eigen::MatrixXd x(n, p);
  const double innovation = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    for (int j = 1; j < p; ++j) x(i, j) = rho * x(i, j - 1) + innovation * rng.normal();
  }
  return x;
}

Eigen::VectorXd gen_errors(ErrorDist dist, int n, std::uint64_t seed) {
  if (n < 1) throw InputError("error count must be positive");
  Rng rng(seed);
  Eigen::VectorXd e(n);
  switch (dist) {
    case ErrorDist::T2:
      for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        e[i] = z / std::sqrt(rng.exponential());
      }
      break;
    case ErrorDist::Normal3:
      for (int i = 0; i < n; ++i) e[i] = std::sqrt(3.0) * rng.normal();
      break;
    case ErrorDist::ScaleMixNormal:
      for (int i = 0; i < n; ++i) {
        const bool wide = rng.uniform() < 0.5;
        e[i] = (wide ? std::sqrt(6.0) : std::sqrt(6.0 * 0.015625)) * rng.normal();
      }
      break;
    case ErrorDist::LocMixNormal:
      for (int i = 0; i < n; ++i) {
        const double center = rng.uniform() < 0.5 ? -2.0 : 2.0;
        e[i] = center + rng.normal();
      }
      break;
    case ErrorDist::Gamma11:
      for (int i = 0; i < n; ++i) e[i] = rng.exponential();
      break;
    case ErrorDist::DoubleExp:
      for (int i = 0; i < n; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        e[i] = sign * rng.exponential();
      }
      break;
    case ErrorDist::Beta13:
      for (int i = 0; i < n; ++i) e[i] = 1.0 - std::cbrt(1.0 - rng.uniform());
      break;
    case ErrorDist::Uniform33:
      for (int i = 0; i < n; ++i) e[i] = rng.uniform(-3.0, 3.0);
      break;
  }
  return e;
}

SparseFit run_baselines(const Dataset& data, const Dataset& validation, Method which,
                        const SolverConfig& solver, const PipelineConfig& config,
                        std::span<const double> quantile_levels) {
  TuningCriterion tuning;
  tuning.validation = validation;
  return tune_scad_path(data, loss_of(which, quantile_levels), tuning, solver, config).fit;
}

SparseFit oracle_fit(const Dataset& data, const LossSpec& loss,
                     std::span<const int> true_support, const SolverConfig& solver) {
  return fit_restricted(data, loss, true_support, solver);
}

void SimReport::append(const SimReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  records.insert(records.end(), other.records.begin(), other.records.end());
}

SimReport run_study(const SimDesign& design, const std::vector<Method>& methods,
                    const WorkerPool* pool) {
  design.validate();
  if (methods.empty()) throw InputError("run_study needs at least one method");

  const Eigen::VectorXd theta = design.coefficient_vector();
  const std::vector<int> true_support = design.true_support();
  const auto replicate_count = static_cast<std::size_t>(design.replicates);
  const std::size_t method_count = methods.size();

  std::vector<ReplicateRecord> records(replicate_count * method_count);

  WorkerPool::run(pool, replicate_count, [&](std::size_t rep) {
    const std::uint64_t rep_seed = Rng::mix(design.seed, rep);
    Dataset train;
    train.x = gen_design(design.n, design.p, design.rho, Rng::mix(rep_seed, 1));
    train.y = train.x * theta + gen_errors(design.error_dist, design.n, Rng::mix(rep_seed, 2));
    Dataset validation;
    validation.x =
        gen_design(design.validation_n, design.p, design.rho, Rng::mix(rep_seed, 3));
    validation.y = validation.x * theta +
                   gen_errors(design.error_dist, design.validation_n, Rng::mix(rep_seed, 4));

    TuningCriterion tuning;
    tuning.validation = validation;

    for (std::size_t m = 0; m < method_count; ++m) {
      ReplicateRecord& record = records[rep * method_count + m];
      record.replicate = static_cast<int>(rep);
      record.method = methods[m];
      record.dist = design.error_dist;
      const auto start = std::chrono::steady_clock::now();
      try {
        std::vector<int> selected;
        Eigen::VectorXd estimate;
        double se_oracle;
        if (methods[m] == Method::WqrVote) {
          const std::vector<LossSpec> losses = quantile_losses(design.quantile_levels);
          PipelineResult run = run_pipeline(train, losses, losses, tuning, design.solver,
                                            design.pipeline, nullptr);
          selected = run.vote.selected;
          estimate = run.combined.coefficients;
          se_oracle = squared_error(
              wqr_oracle(train, design.quantile_levels, true_support, design.solver)
                  .coefficients,
              theta);
        } else {
          const SparseFit fit = run_baselines(train, validation, methods[m], design.solver,
                                              design.pipeline, design.quantile_levels);
          selected = fit.support;
          estimate = fit.coefficients;
          se_oracle = squared_error(
              oracle_fit(train, loss_of(methods[m], design.quantile_levels), true_support,
                         design.solver)
                  .coefficients,
              theta);
        }
        int mnc = 0;
        for (int j : selected)
          if (std::binary_search(true_support.begin(), true_support.end(), j)) ++mnc;
        record.mnc = mnc;
        record.mni = static_cast<int>(selected.size()) - mnc;
        record.se = squared_error(estimate, theta);
        record.se_oracle = se_oracle;
      } catch (const Error&) {
        record.failed = true;
      }
      record.time_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    }
  });

  SimReport report;
  report.records = std::move(records);

  double wqr_se_mean = kNan;
  for (std::size_t m = 0; m < method_count; ++m) {
    if (methods[m] != Method::WqrVote) continue;
    double total = 0.0;
    int count = 0;
    for (std::size_t rep = 0; rep < replicate_count; ++rep) {
      const ReplicateRecord& record = report.records[rep * method_count + m];
      if (record.failed) continue;
      total += record.se;
      ++count;
    }
    if (count > 0) wqr_se_mean = total / count;
  }

  for (std::size_t m = 0; m < method_count; ++m) {
    MethodSummary row;
    row.method = methods[m];
    row.dist = design.error_dist;
    double mnc = 0.0;
    double mni = 0.0;
    double oracle_se = 0.0;
    std::vector<double> times;
    for (std::size_t rep = 0; rep < replicate_count; ++rep) {
      const ReplicateRecord& record = report.records[rep * method_count + m];
      if (record.failed) {
        ++row.failures;
        continue;
      }
      mnc += record.mnc;
      mni += record.mni;
      oracle_se += record.se_oracle;
      times.push_back(record.time_ms);
      ++row.replicates;
    }
    if (row.replicates > 0) {
      mnc /= row.replicates;
      mni /= row.replicates;
      oracle_se /= row.replicates;
    }
    row.mnc_mean = mnc;
    row.mni_mean = mni;
    row.re = std::isnan(wqr_se_mean) || wqr_se_mean == 0.0 ? kNan : oracle_se / wqr_se_mean;
    row.time_ms = median_of(std::move(times));
    report.rows.push_back(row);
  }
  return report;
}

void write_report_csv(const SimReport& report, std::ostream& out, bool include_timing) {
  out << "method,dist,mnc,mni,re,time_ms,replicates\n";
  char line[256];
  for (const MethodSummary& row : report.rows) {
    std::snprintf(line, sizeof(line), "%s,%s,%.4f,%.4f,%.4f,%.3f,%d\n",
                  name_of(row.method).c_str(), name_of(row.dist).c_str(), row.mnc_mean,
                  row.mni_mean, row.re, include_timing ? row.time_ms : 0.0,
                  row.replicates);
    out << line;
  }
}

std::string format_report_table(const SimReport& report, bool include_timing) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-12s %8s %8s %8s %12s %6s\n", "method",
                "dist", "mnc", "mni", "re", "time_ms", "reps");
  out << line;
  for (const MethodSummary& row : report.rows) {
    std::snprintf(line, sizeof(line), "%-10s %-12s %8.4f %8.4f %8.4f %12.3f %6d\n",
                  name_of(row.method).c_str(), label_of(row.dist).c_str(), row.mnc_mean,
                  row.mni_mean, row.re, include_timing ? row.time_ms : 0.0,
                  row.replicates);
    out << line;
    if (row.failures > 0) {
      std::snprintf(line, sizeof(line), "  (%d replicate failures)\n", row.failures);
      out << line;
    }
  }
  return out.str();
}

}  // namespace votereg

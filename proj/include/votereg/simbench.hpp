#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "votereg/lincore.hpp"
#include "votereg/parallel.hpp"
#include "votereg/voteselect.hpp"

namespace votereg {

// The eight error distributions of the benchmark designs.
enum class ErrorDist {
  T2,             // Student t, 2 degrees of freedom
  Normal3,        // N(0, 3)
  ScaleMixNormal, // 0.5 N(0,6) + 0.5 N(0, 6 * 0.5^6), variance parameters
  LocMixNormal,   // 0.5 N(-2,1) + 0.5 N(2,1)
  Gamma11,        // Gamma(1,1)
  DoubleExp,      // double exponential, mean 0 variance 2 (rate 1)
  Beta13,         // Beta(1,3)
  Uniform33       // U(-3,3)
};

enum class Method { WqrVote, Ladr, Lsr, Cqr };

std::string name_of(ErrorDist dist);
std::string label_of(ErrorDist dist);
std::string name_of(Method method);
std::optional<ErrorDist> parse_dist(const std::string& token);
std::optional<Method> parse_method(const std::string& token);
std::vector<ErrorDist> all_dists();

struct SimDesign {
  int n = 200;
  int p = 12;
  double rho = 0.5;
  std::vector<std::pair<int, double>> true_beta =  // 1-based index -> value
      {{1, 3.0}, {2, 1.5}, {5, 2.0}};
  ErrorDist error_dist = ErrorDist::Normal3;
  int replicates = 200;
  int validation_n = 2000;
  std::uint64_t seed = 0;
  std::vector<double> quantile_levels = {0.1, 0.2, 0.3, 0.4, 0.5,
                                         0.6, 0.7, 0.8, 0.9};
  SolverConfig solver;
  PipelineConfig pipeline;

  void validate() const;
  Eigen::VectorXd coefficient_vector() const;
  std::vector<int> true_support() const;  // sorted, 0-based
};

// Rows i.i.d. N(0, Sigma) with Sigma_ij = rho^|i-j|, generated by the exact
// AR(1) recursion; a pure function of its arguments.
Eigen::MatrixXd gen_design(int n, int p, double rho, std::uint64_t seed);

Eigen::VectorXd gen_errors(ErrorDist dist, int n, std::uint64_t seed);

// One penalized competitor: SCAD-LLA with the method's loss, lambda tuned on
// the validation set.
SparseFit run_baselines(const Dataset& data, const Dataset& validation, Method which,
                        const SolverConfig& solver, const PipelineConfig& config,
                        std::span<const double> quantile_levels);

// Unpenalized fit on the known support.
SparseFit oracle_fit(const Dataset& data, const LossSpec& loss,
                     std::span<const int> true_support, const SolverConfig& solver);

struct ReplicateRecord {
  int replicate = 0;
  Method method = Method::WqrVote;
  ErrorDist dist = ErrorDist::Normal3;
  bool failed = false;
  int mnc = 0;
  int mni = 0;
  double se = 0.0;         // ||estimate - theta||^2
  double se_oracle = 0.0;  // ||oracle estimate - theta||^2
  double time_ms = 0.0;
};

struct MethodSummary {
  Method method = Method::WqrVote;
  ErrorDist dist = ErrorDist::Normal3;
  double mnc_mean = 0.0;
  double mni_mean = 0.0;
  double re = 0.0;        // mean oracle SE over mean WQR-vote SE
  double time_ms = 0.0;   // median wall time per replicate
  int replicates = 0;     // successful replicates
  int failures = 0;
};

struct SimReport {
  std::vector<MethodSummary> rows;
  std::vector<ReplicateRecord> records;

  void append(const SimReport& other);
};

// Runs every method on the same `replicates` data sets. Per-replicate seeds
// are counter-derived from the design seed, and replicates fan out over the
// pool with index-ordered reduction, so the report does not depend on worker
// count. Per-replicate failures are recorded, not fatal.
SimReport run_study(const SimDesign& design, const std::vector<Method>& methods,
                    const WorkerPool* pool = nullptr);

// CSV schema: method,dist,mnc,mni,re,time_ms,replicates. Timing is volatile,
// so it is written as zero unless `include_timing` is set.
void write_report_csv(const SimReport& report, std::ostream& out, bool include_timing);

std::string format_report_table(const SimReport& report, bool include_timing);

}  // namespace votereg

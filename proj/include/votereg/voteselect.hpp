#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "votereg/lincore.hpp"
#include "votereg/optweight.hpp"
#include "votereg/parallel.hpp"
#include "votereg/pensolve.hpp"

namespace votereg {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Aggregated selection state: which of the K preliminary fits kept each
// predictor, the per-predictor vote counts, and the set that cleared the
// threshold alpha.
struct VoteResult {
  BoolMatrix support_matrix;  // K x p
  std::vector<int> vote_counts;
  int alpha = 1;
  std::vector<int> selected;  // sorted

  static VoteResult make(const BoolMatrix& support_matrix, int alpha);
};

// {j : sum_k I(theta_kj != 0) >= alpha}.
std::vector<int> vote(const BoolMatrix& support_matrix, int alpha);

BoolMatrix support_matrix_of(const std::vector<SparseFit>& fits, Eigen::Index p);

// How lambda_k and alpha are scored: held-out prediction loss when a
// validation set is present, otherwise seed-deterministic V-fold
// cross-validation on the training data.
struct TuningCriterion {
  std::optional<Dataset> validation;
  Eigen::VectorXd xi_weights;         // empty -> estimated from the KDE, or uniform
  std::vector<int> alpha_candidates;  // empty -> {ceil(K/2), ..., K-1}
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;
};

// Orchestration knobs shared by the pipeline and the baseline tuners.
struct PipelineConfig {
  int lambda_grid_size = 40;      // log-spaced points down from lambda_max
  double lambda_min_ratio = 1e-3; // grid floor as a fraction of lambda_max
  double scad_b = 3.7;
  // Abort the descending lambda path once a Lasso support grows past this
  // size (0 = auto: max(16, n/2), negative = disabled). Cut grid points score
  // +inf and can never be selected.
  Eigen::Index max_path_support = 0;
};

struct TunedFit {
  SparseFit fit;  // SCAD-LLA fit at the selected lambda
  double lambda = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> criterion_values;  // +inf where the path was cut
};

// SCAD path over the lambda grid with warm starts along the path; returns the
// fit whose tuning criterion is smallest (ties keep the larger lambda).
TunedFit tune_scad_path(const Dataset& data, const LossSpec& loss,
                        const TuningCriterion& tuning, const SolverConfig& solver,
                        const PipelineConfig& config);

// Picks the alpha whose xi-weighted held-out loss over the K restricted refits
// is smallest; ties go to the larger alpha (the sparser model). Requires a
// validation set in the criterion.
int select_alpha(const std::map<int, std::vector<SparseFit>>& fits_by_alpha,
                 const std::vector<LossSpec>& losses, const TuningCriterion& criterion);

struct PipelineResult {
  VoteResult vote;
  std::vector<SparseFit> preliminary;   // K tuned SCAD fits
  std::vector<double> lambda_by_loss;
  Eigen::VectorXd xi;                   // weights used by the alpha criterion
  std::vector<SparseFit> refits;        // K' restricted refits on the voted set
  WeightPlan plan;
  SparseFit combined;                   // weighted final estimator
  bool empty_selection = false;
  std::vector<std::string> warnings;
};

// The full two-step process: K tuned SCAD fits, the vote with tuned alpha,
// K' restricted refits on the voted set, and the optimally weighted
// combination. The K tunings, the per-candidate refits and the per-fold work
// fan out over `pool` (null = serial); reductions are in index order, so the
// result is identical for any worker count.
PipelineResult run_pipeline(const Dataset& data,
                            const std::vector<LossSpec>& selection_losses,
                            const std::vector<LossSpec>& estimation_losses,
                            const TuningCriterion& tuning, const SolverConfig& solver,
                            const PipelineConfig& config = {},
                            const WorkerPool* pool = nullptr);

}  // namespace votereg

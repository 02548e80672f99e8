#include "votereg/voteselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "votereg/rng.hpp"
#include "votereg/stats.hpp"

namespace votereg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd fit_residuals(const Dataset& data, const SparseFit& fit) {
  Eigen::VectorXd r = data.y;
  for (int j : fit.support) r.noalias() -= data.x.col(j) * fit.coefficients[j];
  return r;
}

double heldout_loss(const Dataset& heldout, const LossSpec& loss, const SparseFit& fit) {
  return loss_sum(loss, fit_residuals(heldout, fit), fit.intercepts);
}

std::vector<double> lambda_grid_of(double lambda_max, const PipelineConfig& config) {
  const int size = std::max(config.lambda_grid_size, 1);
  const double top = std::max(lambda_max, 1e-12);
  std::vector<double> grid(static_cast<std::size_t>(size));
  if (size == 1) {
    grid[0] = top;
    return grid;
  }
  const double log_top = std::log(top);
  const double log_ratio = std::log(config.lambda_min_ratio);
  for (int i = 0; i < size; ++i)
    grid[static_cast<std::size_t>(i)] =
        std::exp(log_top + log_ratio * static_cast<double>(i) / static_cast<double>(size - 1));
  return grid;
}

Eigen::Index path_guard(const PipelineConfig& config, Eigen::Index n) {
  if (config.max_path_support < 0) return std::numeric_limits<Eigen::Index>::max();
  if (config.max_path_support > 0) return config.max_path_support;
  return std::max<Eigen::Index>(16, n / 2);
}

// Fits the SCAD path on `train` and scores each grid point on `heldout`,
// adding into `scores`; fits at selected lambdas can be recovered by refitting.
void score_path(const Dataset& train, const Dataset& heldout, const LossSpec& loss,
                const std::vector<double>& grid, const SolverConfig& solver,
                const PipelineConfig& config, std::vector<double>& scores) {
  const Eigen::Index guard = path_guard(config, train.n());
  std::optional<Eigen::VectorXd> warm;
  PenaltyConfig uniform;
  uniform.scad_b = config.scad_b;
  uniform.weights = Eigen::VectorXd::Ones(train.p());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    uniform.lambda = grid[i];
    SparseFit lasso = fit_weighted_lasso(train, loss, uniform, warm, solver);
    if (static_cast<Eigen::Index>(lasso.support.size()) > guard) {
      for (std::size_t rest = i; rest < grid.size(); ++rest) scores[rest] += kInf;
      return;
    }
    SparseFit scad = fit_scad_lla(train, loss, grid[i], config.scad_b, solver,
                                  lasso.coefficients);
    scores[i] += heldout_loss(heldout, loss, scad);
    warm = std::move(lasso.coefficients);
  }
}

// Seed-deterministic fold labels: a shuffled round-robin assignment.
std::vector<int> fold_labels(Eigen::Index n, int folds, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::mix(seed, 0x666f6c64));  // "fold"
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        static_cast<int>(i % folds);
  return labels;
}

Dataset rows_subset(const Dataset& data, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.x.resize(static_cast<Eigen::Index>(rows.size()), data.p());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.y[static_cast<Eigen::Index>(i)] = data.y[rows[i]];
    out.x.row(static_cast<Eigen::Index>(i)) = data.x.row(rows[i]);
  }
  out.column_names = data.column_names;
  return out;
}

struct FoldSplit {
  Dataset train;
  Dataset heldout;
};

std::vector<FoldSplit> make_folds(const Dataset& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cross-validation needs at least two folds");
  if (data.n() < folds) throw InputError("more folds than observations");
  const std::vector<int> labels = fold_labels(data.n(), folds, seed);
  std::vector<FoldSplit> splits;
  splits.reserve(static_cast<std::size_t>(folds));
  for (int v = 0; v < folds; ++v) {
    std::vector<Eigen::Index> in;
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < data.n(); ++i)
      (labels[static_cast<std::size_t>(i)] == v ? out : in).push_back(i);
    splits.push_back({rows_subset(data, in), rows_subset(data, out)});
  }
  return splits;
}

std::vector<double> quantile_levels_of(const std::vector<LossSpec>& losses) {
  std::vector<double> tau;
  tau.reserve(losses.size());
  for (const LossSpec& loss : losses) {
    if (!loss.is_quantile()) return {};
    tau.push_back(loss.tau.front());
  }
  for (std::size_t k = 1; k < tau.size(); ++k)
    if (tau[k] <= tau[k - 1]) return {};
  return tau;
}

std::vector<int> default_alpha_candidates(int k_count) {
  const int low = (k_count + 1) / 2;  // ceil(K/2)
  std::vector<int> candidates;
  for (int a = low; a <= k_count - 1; ++a) candidates.push_back(a);
  if (candidates.empty()) candidates.push_back(k_count);
  return candidates;
}

}  // namespace

std::vector<int> vote(const BoolMatrix& support_matrix, int alpha) {
  if (alpha < 1 || alpha > support_matrix.rows())
    throw InputError("vote threshold alpha must lie in [1, K]");
  std::vector<int> selected;
  for (Eigen::Index j = 0; j < support_matrix.cols(); ++j) {
    int count = 0;
    for (Eigen::Index k = 0; k < support_matrix.rows(); ++k)
      count += support_matrix(k, j) ? 1 : 0;
    if (count >= alpha) selected.push_back(static_cast<int>(j));
  }
  return selected;
}

VoteResult VoteResult::make(const BoolMatrix& support_matrix, int alpha) {
  VoteResult result;
  result.support_matrix = support_matrix;
  result.alpha = alpha;
  result.vote_counts.resize(static_cast<std::size_t>(support_matrix.cols()));
  for (Eigen::Index j = 0; j < support_matrix.cols(); ++j) {
    int count = 0;
    for (Eigen::Index k = 0; k < support_matrix.rows(); ++k)
      count += support_matrix(k, j) ? 1 : 0;
    result.vote_counts[static_cast<std::size_t>(j)] = count;
  }
  result.selected = vote(support_matrix, alpha);
  return result;
}

BoolMatrix support_matrix_of(const std::vector<SparseFit>& fits, Eigen::Index p) {
  BoolMatrix matrix(static_cast<Eigen::Index>(fits.size()), p);
  matrix.setConstant(false);
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].coefficients.size() != p)
      throw DimensionError("fit coefficient length does not match predictor count");
    for (int j : fits[k].support) matrix(static_cast<Eigen::Index>(k), j) = true;
  }
  return matrix;
}

TunedFit tune_scad_path(const Dataset& data, const LossSpec& loss,
                        const TuningCriterion& tuning, const SolverConfig& solver,
                        const PipelineConfig& config) {
  data.validate();
  loss.validate();

  TunedFit tuned;
  tuned.lambda_grid = lambda_grid_of(lasso_lambda_max(data, loss), config);
  tuned.criterion_values.assign(tuned.lambda_grid.size(), 0.0);

  if (tuning.validation) {
    tuning.validation->validate();
    score_path(data, *tuning.validation, loss, tuned.lambda_grid, solver, config,
               tuned.criterion_values);
  } else {
    for (const FoldSplit& split : make_folds(data, tuning.cv_folds, tuning.cv_seed))
      score_path(split.train, split.heldout, loss, tuned.lambda_grid, solver, config,
                 tuned.criterion_values);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < tuned.lambda_grid.size(); ++i)
    if (tuned.criterion_values[i] < tuned.criterion_values[best]) best = i;
  tuned.lambda = tuned.lambda_grid[best];
  tuned.fit = fit_scad_lla(data, loss, tuned.lambda, config.scad_b, solver);
  return tuned;
}

int select_alpha(const std::map<int, std::vector<SparseFit>>& fits_by_alpha,
                 const std::vector<LossSpec>& losses, const TuningCriterion& criterion) {
  if (fits_by_alpha.empty()) throw InputError("select_alpha needs at least one candidate");
  if (!criterion.validation)
    throw InputError("select_alpha requires a validation set in the criterion");
  const auto k_count = losses.size();
  if (k_count == 0) throw InputError("select_alpha needs the selection losses");

  Eigen::VectorXd xi = criterion.xi_weights;
  if (xi.size() != static_cast<Eigen::Index>(k_count))
    xi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k_count));

  int best_alpha = fits_by_alpha.begin()->first;
  double best_value = kInf;
  for (const auto& [alpha, fits] : fits_by_alpha) {
    if (fits.size() != k_count)
      throw InputError("each alpha candidate needs one refit per loss");
    double value = 0.0;
    for (std::size_t k = 0; k < k_count; ++k)
      value += xi[static_cast<Eigen::Index>(k)] *
               heldout_loss(*criterion.validation, losses[k], fits[k]);
    if (value <= best_value) {  // ties keep the larger (sparser) alpha
      best_value = value;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

PipelineResult run_pipeline(const Dataset& data,
                            const std::vector<LossSpec>& selection_losses,
                            const std::vector<LossSpec>& estimation_losses,
                            const TuningCriterion& tuning, const SolverConfig& solver,
                            const PipelineConfig& config, const WorkerPool* pool) {
  data.validate();
  if (selection_losses.empty() || estimation_losses.empty())
    throw InputError("the pipeline needs at least one selection and one estimation loss");
  for (const LossSpec& loss : selection_losses) loss.validate();
  for (const LossSpec& loss : estimation_losses) loss.validate();

  const auto k_count = selection_losses.size();
  PipelineResult result;

  // Step 1: per-loss SCAD fits, each lambda tuned independently.
  std::vector<TunedFit> tuned(k_count);
  WorkerPool::run(pool, k_count, [&](std::size_t k) {
    tuned[k] = tune_scad_path(data, selection_losses[k], tuning, solver, config);
  });
  result.preliminary.reserve(k_count);
  result.lambda_by_loss.reserve(k_count);
  for (TunedFit& t : tuned) {
    result.preliminary.push_back(std::move(t.fit));
    result.lambda_by_loss.push_back(t.lambda);
  }

  // xi weights for the alpha criterion; estimated from the preliminary
  // residuals when the selection losses are quantile losses.
  const std::vector<double> selection_tau = quantile_levels_of(selection_losses);
  if (tuning.xi_weights.size() == static_cast<Eigen::Index>(k_count)) {
    result.xi = tuning.xi_weights;
  } else if (!selection_tau.empty()) {
    try {
      const Eigen::VectorXd prelim_residuals = residuals(data, result.preliminary);
      const KdeAtQuantiles kde = kde_at_quantiles(prelim_residuals, selection_tau);
      result.xi = xi_weights(selection_tau, kde.f_hat);
    } catch (const Error&) {
      result.xi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k_count));
      result.warnings.push_back("xi estimation failed; using uniform xi weights");
    }
  } else {
    result.xi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k_count));
  }

  // Step 2: vote across the K supports at each candidate threshold.
  const BoolMatrix support_matrix = support_matrix_of(result.preliminary, data.p());
  std::vector<int> candidates = tuning.alpha_candidates.empty()
                                    ? default_alpha_candidates(static_cast<int>(k_count))
                                    : tuning.alpha_candidates;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (int a : candidates)
    if (a < 1 || a > static_cast<int>(k_count))
      throw InputError("alpha candidate " + std::to_string(a) + " outside [1, K]");

  std::vector<std::vector<int>> candidate_sets;
  candidate_sets.reserve(candidates.size());
  for (int a : candidates) candidate_sets.push_back(vote(support_matrix, a));

  // Candidates sharing a voted set share their refits.
  std::vector<std::vector<int>> unique_sets;
  std::vector<std::size_t> set_of_candidate(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto found =
        std::find(unique_sets.begin(), unique_sets.end(), candidate_sets[c]);
    if (found == unique_sets.end()) {
      set_of_candidate[c] = unique_sets.size();
      unique_sets.push_back(candidate_sets[c]);
    } else {
      set_of_candidate[c] = static_cast<std::size_t>(found - unique_sets.begin());
    }
  }

  std::vector<std::vector<SparseFit>> refits_by_set(
      unique_sets.size(), std::vector<SparseFit>(k_count));
  std::vector<double> criterion_by_set(unique_sets.size(), 0.0);

  if (tuning.validation) {
    tuning.validation->validate();
    WorkerPool::run(pool, unique_sets.size() * k_count, [&](std::size_t task) {
      const std::size_t s = task / k_count;
      const std::size_t k = task % k_count;
      refits_by_set[s][k] =
          fit_restricted(data, selection_losses[k], unique_sets[s], solver);
    });
    std::map<int, std::vector<SparseFit>> fits_by_alpha;
    for (std::size_t c = 0; c < candidates.size(); ++c)
      fits_by_alpha[candidates[c]] = refits_by_set[set_of_candidate[c]];
    TuningCriterion alpha_criterion = tuning;
    alpha_criterion.xi_weights = result.xi;
    result.vote = VoteResult::make(
        support_matrix, select_alpha(fits_by_alpha, selection_losses, alpha_criterion));
  } else {
    // Cross-validated alpha: refit each candidate set on each fold complement
    // and score the held-out fold; the full-data refits are computed alongside.
    const std::vector<FoldSplit> folds =
        make_folds(data, tuning.cv_folds, tuning.cv_seed);
    const std::size_t per_fold = unique_sets.size() * k_count;
    std::vector<double> task_scores(folds.size() * per_fold, 0.0);
    WorkerPool::run(pool, (folds.size() + 1) * per_fold, [&](std::size_t task) {
      const std::size_t block = task / per_fold;
      const std::size_t s = (task % per_fold) / k_count;
      const std::size_t k = task % k_count;
      if (block == folds.size()) {
        refits_by_set[s][k] =
            fit_restricted(data, selection_losses[k], unique_sets[s], solver);
        return;
      }
      const FoldSplit& split = folds[block];
      const SparseFit fold_fit =
          fit_restricted(split.train, selection_losses[k], unique_sets[s], solver);
      task_scores[task] = heldout_loss(split.heldout, selection_losses[k], fold_fit) *
                          result.xi[static_cast<Eigen::Index>(k)];
    });
    for (std::size_t task = 0; task < task_scores.size(); ++task)
      criterion_by_set[(task % per_fold) / k_count] += task_scores[task];
    int best_alpha = candidates.front();
    double best_value = kInf;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double value = criterion_by_set[set_of_candidate[c]];
      if (value <= best_value) {
        best_value = value;
        best_alpha = candidates[c];
      }
    }
    result.vote = VoteResult::make(support_matrix, best_alpha);
  }

  const std::vector<int>& selected = result.vote.selected;
  if (selected.empty()) {
    result.empty_selection = true;
    result.warnings.push_back("empty voted set; refits are intercept-only");
  }
  if (static_cast<Eigen::Index>(selected.size()) >= data.n())
    throw NumericalError("voted set is as large as the sample; refits are not identifiable");

  // Step 3: K' restricted refits on the voted set, reusing the alpha-stage
  // refits when an estimation loss coincides with a selection loss.
  const std::size_t chosen_set = [&] {
    const auto found = std::find(unique_sets.begin(), unique_sets.end(), selected);
    return found == unique_sets.end() ? unique_sets.size()
                                      : static_cast<std::size_t>(found - unique_sets.begin());
  }();
  const auto kprime = estimation_losses.size();
  result.refits.resize(kprime);
  std::vector<std::size_t> to_fit;
  for (std::size_t k = 0; k < kprime; ++k) {
    bool reused = false;
    if (chosen_set < unique_sets.size()) {
      for (std::size_t s = 0; s < k_count; ++s)
        if (selection_losses[s] == estimation_losses[k]) {
          result.refits[k] = refits_by_set[chosen_set][s];
          reused = true;
          break;
        }
    }
    if (!reused) to_fit.push_back(k);
  }
  WorkerPool::run(pool, to_fit.size(), [&](std::size_t i) {
    const std::size_t k = to_fit[i];
    result.refits[k] = fit_restricted(data, estimation_losses[k], selected, solver);
  });

  // Step 4: optimal weighting of the refits.
  const std::vector<double> estimation_tau = quantile_levels_of(estimation_losses);
  const auto kprime_index = static_cast<Eigen::Index>(kprime);
  if (!estimation_tau.empty()) {
    try {
      result.plan = make_weight_plan(residuals(data, result.refits), estimation_tau);
    } catch (const Error&) {
      result.plan.w_star =
          Eigen::VectorXd::Constant(kprime_index, 1.0 / static_cast<double>(kprime));
      result.plan.uniform_fallback = true;
      result.warnings.push_back("weight estimation failed; using uniform weights");
    }
  } else {
    result.plan.w_star =
        Eigen::VectorXd::Constant(kprime_index, 1.0 / static_cast<double>(kprime));
    if (kprime > 1) {
      result.plan.uniform_fallback = true;
      result.warnings.push_back(
          "optimal weights are only estimated for quantile losses; using uniform weights");
    }
  }
  result.combined = combine(result.refits, result.plan.w_star, selected);
  return result;
}

}  // namespace votereg

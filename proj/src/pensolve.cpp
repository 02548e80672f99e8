#include "votereg/pensolve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "votereg/stats.hpp"

namespace votereg {

void PenaltyConfig::validate(Eigen::Index p) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InputError("penalty lambda must be finite and nonnegative");
  if (weights.size() != p)
    throw DimensionError("penalty weights length " + std::to_string(weights.size()) +
                         " does not match predictor count " + std::to_string(p));
  if (!weights.allFinite() || (weights.array() < 0.0).any())
    throw InputError("penalty weights must be finite and nonnegative");
  if (!(scad_b > 2.0)) throw InputError("scad_b must exceed 2");
}

void SolverConfig::validate() const {
  if (max_outer_iterations <= 0 || max_cd_sweeps <= 0 || support_stability_rounds <= 0)
    throw InputError("solver iteration budgets must be positive");
  if (!(tolerance > 0.0)) throw InputError("solver tolerance must be positive");
}

double scad_weight(double x, double lambda, double b) {
  const double ax = std::abs(x);
  if (ax <= lambda) return lambda;
  const double tail = b * lambda - ax;
  return tail > 0.0 ? tail / (b - 1.0) : 0.0;
}

double scad_penalty(double x, double lambda, double b) {
  const double ax = std::abs(x);
  if (ax <= lambda) return lambda * ax;
  if (ax >= b * lambda) return 0.5 * lambda * lambda * (b + 1.0);
  return (2.0 * b * lambda * ax - ax * ax - lambda * lambda) / (2.0 * (b - 1.0));
}

namespace {

// One V-shaped kink of a convex piecewise-linear function: slope -left on the
// near side of pos, +right beyond it.
struct Kink {
  double pos;
  double left;
  double right;
};

// Exact argmin by sorting kinks and walking until the slope turns nonnegative.
double piecewise_argmin(std::vector<Kink>& kinks) {
  double slope = 0.0;
  for (const Kink& k : kinks) slope -= k.left;
  std::sort(kinks.begin(), kinks.end(),
            [](const Kink& a, const Kink& b) { return a.pos < b.pos; });
  for (const Kink& k : kinks) {
    slope += k.left + k.right;
    if (slope >= 0.0) return k.pos;
  }
  return kinks.back().pos;
}

// Check-loss level seen by the coordinate updates; the absolute loss is the
// tau = 1/2 level with doubled slope mass.
struct Level {
  double tau;
  double scale;
};

std::vector<Level> levels_of(const LossSpec& loss) {
  switch (loss.kind) {
    case LossSpec::Kind::QuantileCheck:
      return {{loss.tau.front(), 1.0}};
    case LossSpec::Kind::Absolute:
      return {{0.5, 2.0}};
    case LossSpec::Kind::CompositeQuantile: {
      std::vector<Level> levels;
      levels.reserve(loss.tau.size());
      for (double t : loss.tau) levels.push_back({t, 1.0});
      return levels;
    }
    case LossSpec::Kind::Squared:
      return {};
  }
  return {};
}

struct CdOutcome {
  Eigen::VectorXd theta;
  Eigen::VectorXd beta;
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> history;
};

class CdSolver {
 public:
  CdSolver(const Dataset& data, const LossSpec& loss, double lambda,
           const Eigen::VectorXd& weights, const SolverConfig& config)
      : data_(data),
        loss_(loss),
        config_(config),
        levels_(levels_of(loss)),
        n_(data.n()),
        p_(data.p()),
        penalty_(weights * (lambda * static_cast<double>(data.n()))) {
    if (loss.kind == LossSpec::Kind::Squared)
      col_sq_ = data_.x.colwise().squaredNorm();
    kinks_.reserve(static_cast<std::size_t>(n_) * std::max<std::size_t>(levels_.size(), 1) + 1);
  }

  CdOutcome solve(Eigen::VectorXd theta0, const std::vector<int>& allowed,
                  bool polish = false) {
    CdOutcome out;
    theta_ = std::move(theta0);
    beta_ = Eigen::VectorXd::Zero(loss_.intercept_count());
    refresh_residual();
    // warm starts carry their intercepts; cold starts leave beta at zero so
    // constant-collinear columns keep their slope (see the sweep order note)
    if (!theta_.isZero(0.0)) update_intercepts();

    int sweeps = 0;
    bool converged = false;
    while (sweeps < config_.max_cd_sweeps) {
      refresh_residual();
      const double delta = sweep(allowed);
      ++sweeps;
      out.history.push_back(objective());
      if (delta < config_.tolerance) {
        converged = true;
        break;
      }
      std::vector<int> active;
      for (int j : allowed)
        if (theta_[j] != 0.0) active.push_back(j);
      while (!active.empty() && sweeps < config_.max_cd_sweeps) {
        const double inner_delta = sweep(active);
        ++sweeps;
        out.history.push_back(objective());
        if (inner_delta < config_.tolerance) break;
      }
    }

    if (polish) polish_joint(allowed, out.history);

    out.theta = theta_;
    out.beta = beta_;
    out.objective = objective();
    out.sweeps = sweeps;
    out.converged = converged;
    return out;
  }

  double objective() const {
    double value;
    if (loss_.kind == LossSpec::Kind::Squared) {
      value = 0.5 * (residual_.array() - beta_[0]).square().sum();
    } else {
      value = loss_sum(loss_, residual_, beta_);
    }
    for (Eigen::Index j = 0; j < p_; ++j)
      if (theta_[j] != 0.0) value += penalty_[j] * std::abs(theta_[j]);
    return value;
  }

 private:
  void refresh_residual() {
    residual_ = data_.y;
    for (Eigen::Index j = 0; j < p_; ++j)
      if (theta_[j] != 0.0) residual_.noalias() -= data_.x.col(j) * theta_[j];
  }

  void update_intercepts() {
    if (loss_.kind == LossSpec::Kind::Squared) {
      beta_[0] = residual_.mean();
      return;
    }
    const Eigen::VectorXd sorted = sorted_copy(residual_);
    if (loss_.kind == LossSpec::Kind::Absolute) {
      beta_[0] = quantile_of_sorted(sorted, 0.5);
    } else {
      for (std::size_t k = 0; k < levels_.size(); ++k)
        beta_[static_cast<Eigen::Index>(k)] = quantile_of_sorted(sorted, levels_[k].tau);
    }
  }

  // One pass over `coords` in ascending index order, then the intercept
  // refresh; returns max |coefficient delta|. Coordinates go first (with beta
  // starting at zero) so that slopes, not the intercept, absorb signal when a
  // column is collinear with the constant.
  double sweep(const std::vector<int>& coords) {
    double max_delta = 0.0;
    for (int j : coords) {
      const double updated = loss_.kind == LossSpec::Kind::Squared
                                 ? squared_update(j)
                                 : piecewise_update(j);
      const double delta = updated - theta_[j];
      if (delta != 0.0) {
        residual_.noalias() -= data_.x.col(j) * delta;
        theta_[j] = updated;
      }
      max_delta = std::max(max_delta, std::abs(delta));
    }
    update_intercepts();
    return max_delta;
  }

  double squared_update(int j) {
    const double ssq = col_sq_[j];
    if (ssq <= 0.0) return 0.0;
    const double z =
        data_.x.col(j).dot(residual_) - beta_[0] * data_.x.col(j).sum() + ssq * theta_[j];
    const double threshold = penalty_[j];
    if (std::abs(z) <= threshold) return 0.0;
    return (z > 0.0 ? z - threshold : z + threshold) / ssq;
  }

  // Objective along theta + t*d with every intercept profiled out exactly:
  // G(t) = sum_j pen_j |theta_j + t d_j|
  //        + sum_k min_b sum_i scale_k * check_{tau_k}(residual_i - t w_i - b),
  // where w = X d. Convex and piecewise linear in t.
  double profiled_objective(const Eigen::VectorXd& w,
                            const std::vector<std::pair<int, double>>& direction,
                            double t) {
    scratch_ = residual_ - t * w;
    Eigen::VectorXd sorted = scratch_;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    double value = 0.0;
    for (const auto& [j, dj] : direction)
      if (penalty_[j] > 0.0) value += penalty_[j] * std::abs(theta_[j] + t * dj);
    for (const Level& level : levels_) {
      const double b = quantile_of_sorted(sorted, level.tau);
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double z = scratch_[i] - b;
        value += level.scale * (z >= 0.0 ? z * level.tau : z * (level.tau - 1.0));
      }
    }
    return value;
  }

  // Exact-to-rounding line search of the profiled objective along a sparse
  // direction: expanding bracket, golden-section, then candidate comparison.
  // Candidates include t = 0 and the exact zero-crossings of each coefficient,
  // accepted only on strict improvement.
  bool line_update(const std::vector<std::pair<int, double>>& direction) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n_);
    for (const auto& [j, dj] : direction) w.noalias() += data_.x.col(j) * dj;
    if (w.cwiseAbs().maxCoeff() == 0.0) return false;

    auto value_at = [&](double t) { return profiled_objective(w, direction, t); };

    double lo = 0.0;
    double hi = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (w[i] == 0.0) continue;
      const double crossing = residual_[i] / w[i];
      lo = std::min(lo, crossing);
      hi = std::max(hi, crossing);
    }
    for (const auto& [j, dj] : direction) {
      if (dj == 0.0) continue;
      const double crossing = -theta_[j] / dj;
      lo = std::min(lo, crossing);
      hi = std::max(hi, crossing);
    }
    double width = std::max(hi - lo, 1.0);
    lo -= 0.05 * width;
    hi += 0.05 * width;
    for (int grow = 0; grow < 60; ++grow) {
      const bool left_open = value_at(lo) < value_at(lo + 1e-9 * width);
      const bool right_open = value_at(hi) < value_at(hi - 1e-9 * width);
      if (!left_open && !right_open) break;
      if (left_open) lo -= width;
      if (right_open) hi += width;
      width = hi - lo;
    }

    const double golden = 0.6180339887498949;
    double x1 = hi - golden * (hi - lo);
    double x2 = lo + golden * (hi - lo);
    double f1 = value_at(x1);
    double f2 = value_at(x2);
    for (int it = 0; it < 120 && hi - lo > 1e-13 * (1.0 + std::abs(lo) + std::abs(hi));
         ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - golden * (hi - lo);
        f1 = value_at(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + golden * (hi - lo);
        f2 = value_at(x2);
      }
    }

    const double current = value_at(0.0);
    double best_t = 0.0;
    double best_value = current;
    std::vector<double> candidates = {0.5 * (lo + hi), x1, x2};
    for (const auto& [j, dj] : direction)
      if (dj != 0.0) candidates.push_back(-theta_[j] / dj);
    for (double candidate : candidates) {
      const double value = value_at(candidate);
      if (value < best_value - 1e-12 * (1.0 + std::abs(best_value))) {
        best_value = value;
        best_t = candidate;
      }
    }
    if (best_t == 0.0) return false;
    for (const auto& [j, dj] : direction) {
      const double updated = theta_[j] + best_t * dj;
      // snap coefficients that the candidate drove through zero
      theta_[j] = std::abs(updated) < 1e-15 ? 0.0 : updated;
    }
    residual_.noalias() -= best_t * w;
    update_intercepts();
    return true;
  }

  // Closed-form joint (theta_j, beta) refinement for the squared loss: the
  // intercept is profiled by centering, which removes the slow geometric
  // crawl of alternating updates when a column correlates with the constant.
  // Columns collinear with the constant have no profiled direction and are
  // left alone.
  bool squared_joint_update(int j) {
    const auto& column = data_.x.col(j);
    const double mean_x = column.mean();
    Eigen::VectorXd centered = column.array() - mean_x;
    const double ssq = centered.squaredNorm();
    if (ssq <= 0.0) return false;
    const Eigen::VectorXd base = residual_ + column * theta_[j];
    const double z = centered.dot(base);
    const double threshold = penalty_[j];
    double updated = 0.0;
    if (std::abs(z) > threshold) updated = (z > 0.0 ? z - threshold : z + threshold) / ssq;
    if (updated == theta_[j]) return false;
    const double old_objective = objective();
    const double old_theta = theta_[j];
    const Eigen::VectorXd old_beta = beta_;
    residual_.noalias() -= column * (updated - theta_[j]);
    theta_[j] = updated;
    update_intercepts();
    if (objective() < old_objective - 1e-12 * (1.0 + std::abs(old_objective))) return true;
    residual_.noalias() -= column * (old_theta - theta_[j]);
    theta_[j] = old_theta;
    beta_ = old_beta;
    return false;
  }

  // Profiled coordinate refinement. This clears intercept-coupled stalls;
  // stalls across several slopes are handled by the exact LP route instead.
  void polish_joint(const std::vector<int>& coords, std::vector<double>& history) {
    update_intercepts();
    if (loss_.kind == LossSpec::Kind::Squared) {
      for (int round = 0; round < 200; ++round) {
        bool improved = false;
        for (int j : coords)
          if (squared_joint_update(j)) improved = true;
        history.push_back(objective());
        if (!improved) break;
      }
      return;
    }
    for (int round = 0; round < 100; ++round) {
      bool improved = false;
      for (int j : coords)
        if (line_update({{j, 1.0}})) improved = true;
      history.push_back(objective());
      if (!improved) break;
    }
  }

  double piecewise_update(int j) {
    kinks_.clear();
    const auto& column = data_.x.col(j);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double xij = column[i];
      if (xij == 0.0) continue;
      const double base = residual_[i] + xij * theta_[j];
      const double ax = std::abs(xij);
      for (std::size_t k = 0; k < levels_.size(); ++k) {
        const double pos = (base - beta_[static_cast<Eigen::Index>(k)]) / xij;
        const double mass = ax * levels_[k].scale;
        const double tau_mass = levels_[k].tau * mass;
        if (xij > 0.0) {
          kinks_.push_back({pos, tau_mass, mass - tau_mass});
        } else {
          kinks_.push_back({pos, mass - tau_mass, tau_mass});
        }
      }
    }
    if (penalty_[j] > 0.0) kinks_.push_back({0.0, penalty_[j], penalty_[j]});
    if (kinks_.empty()) return 0.0;
    return piecewise_argmin(kinks_);
  }

  const Dataset& data_;
  const LossSpec& loss_;
  const SolverConfig& config_;
  std::vector<Level> levels_;
  Eigen::Index n_;
  Eigen::Index p_;
  Eigen::VectorXd penalty_;  // n * lambda * d_j per coordinate
  Eigen::VectorXd col_sq_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd residual_;
  Eigen::VectorXd scratch_;
  std::vector<Kink> kinks_;
};

std::vector<int> all_coords(Eigen::Index p) {
  std::vector<int> coords(static_cast<std::size_t>(p));
  std::iota(coords.begin(), coords.end(), 0);
  return coords;
}

// ---------------------------------------------------------------------------
// Exact LP route for the piecewise-linear losses on small problems. The
// penalized objective is a linear program:
//   minimize sum_{i,k} scale_k [tau_k u_ik + (1-tau_k) v_ik]
//            + n lambda sum_j d_j (tp_j + tm_j)
//   s.t. x_i'(tp - tm) + (bp_k - bm_k) + u_ik - v_ik = y_i,   all >= 0.
// Solved by a dense revised primal simplex with Bland's rule; the (u, v)
// columns give an immediate feasible basis. Coordinate descent can stall at
// coordinatewise-optimal points of these losses, so small fits are finished
// with this exact route and the better objective wins.
struct PiecewiseLpResult {
  Eigen::VectorXd theta;  // full length p, zeros off `allowed`
  Eigen::VectorXd beta;
  double objective = 0.0;
  bool ok = false;
};

PiecewiseLpResult solve_piecewise_lp(const Dataset& data, const LossSpec& loss,
                                     double lambda, const Eigen::VectorXd& weights,
                                     const std::vector<int>& allowed) {
  PiecewiseLpResult result;
  const std::vector<Level> levels = levels_of(loss);
  if (levels.empty()) return result;
  const Eigen::Index n = data.n();
  const auto level_count = static_cast<Eigen::Index>(levels.size());
  const auto active = static_cast<Eigen::Index>(allowed.size());
  const Eigen::Index rows = n * level_count;
  const Eigen::Index cols = 2 * active + 2 * level_count + 2 * rows;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd b(rows);
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols);
  const double penalty_scale = lambda * static_cast<double>(n);
  for (Eigen::Index j = 0; j < active; ++j) {
    cost[2 * j] = penalty_scale * weights[allowed[static_cast<std::size_t>(j)]];
    cost[2 * j + 1] = cost[2 * j];
  }
  const Eigen::Index beta_offset = 2 * active;
  const Eigen::Index split_offset = beta_offset + 2 * level_count;
  for (Eigen::Index k = 0; k < level_count; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = k * n + i;
      b[row] = data.y[i];
      for (Eigen::Index j = 0; j < active; ++j) {
        const double xij = data.x(i, allowed[static_cast<std::size_t>(j)]);
        a(row, 2 * j) = xij;
        a(row, 2 * j + 1) = -xij;
      }
      a(row, beta_offset + 2 * k) = 1.0;
      a(row, beta_offset + 2 * k + 1) = -1.0;
      a(row, split_offset + 2 * row) = 1.0;
      a(row, split_offset + 2 * row + 1) = -1.0;
      const double scale = levels[static_cast<std::size_t>(k)].scale;
      const double tau = levels[static_cast<std::size_t>(k)].tau;
      cost[split_offset + 2 * row] = scale * tau;
      cost[split_offset + 2 * row + 1] = scale * (1.0 - tau);
    }
  }

  // initial basis: u_row when y >= 0, else v_row
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(rows));
  Eigen::MatrixXd binv = Eigen::MatrixXd::Zero(rows, rows);
  Eigen::VectorXd xb(rows);
  for (Eigen::Index row = 0; row < rows; ++row) {
    if (b[row] >= 0.0) {
      basis[static_cast<std::size_t>(row)] = split_offset + 2 * row;
      binv(row, row) = 1.0;
      xb[row] = b[row];
    } else {
      basis[static_cast<std::size_t>(row)] = split_offset + 2 * row + 1;
      binv(row, row) = -1.0;
      xb[row] = -b[row];
    }
  }

  std::vector<char> in_basis(static_cast<std::size_t>(cols), 0);
  for (Eigen::Index row = 0; row < rows; ++row)
    in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(row)])] = 1;

  const double rc_tol = 1e-9;
  const long max_pivots = 600 + 60L * static_cast<long>(rows);
  Eigen::VectorXd duals(rows);
  Eigen::VectorXd direction(rows);
  auto rebuild_inverse = [&] {
    Eigen::MatrixXd basis_matrix(rows, rows);
    for (Eigen::Index row = 0; row < rows; ++row)
      basis_matrix.col(row) = a.col(basis[static_cast<std::size_t>(row)]);
    binv = basis_matrix.partialPivLu().inverse();
    xb = (binv * b).cwiseMax(0.0);
  };
  for (long pivot = 0; pivot < max_pivots; ++pivot) {
    for (Eigen::Index row = 0; row < rows; ++row)
      duals[row] = cost[basis[static_cast<std::size_t>(row)]];
    duals = binv.transpose() * duals;

    // Bland's rule over the columns with negative reduced cost, skipping any
    // whose direction offers no numerically sound pivot (a degeneracy
    // artifact; cost >= 0 rules out true unboundedness)
    Eigen::Index entering = -1;
    Eigen::Index leaving_row = -1;
    double best_ratio = 0.0;
    bool saw_negative = false;
    for (Eigen::Index col = 0; col < cols && leaving_row < 0; ++col) {
      if (in_basis[static_cast<std::size_t>(col)]) continue;
      const double reduced = cost[col] - duals.dot(a.col(col));
      if (reduced >= -rc_tol) continue;
      saw_negative = true;
      direction = binv * a.col(col);
      for (Eigen::Index row = 0; row < rows; ++row) {
        if (direction[row] <= 1e-9) continue;
        const double ratio = xb[row] / direction[row];
        if (leaving_row < 0 || ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 &&
             basis[static_cast<std::size_t>(row)] <
                 basis[static_cast<std::size_t>(leaving_row)])) {
          leaving_row = row;
          best_ratio = ratio;
        }
      }
      if (leaving_row >= 0) entering = col;
    }
    if (!saw_negative) {
      result.ok = true;
      break;
    }
    if (leaving_row < 0) return result;  // no workable pivot anywhere

    const double step = direction[leaving_row];
    xb -= best_ratio * direction;
    xb[leaving_row] = best_ratio;
    binv.row(leaving_row) /= step;
    for (Eigen::Index row = 0; row < rows; ++row) {
      if (row == leaving_row) continue;
      const double factor = direction[row];
      if (factor != 0.0) binv.row(row) -= factor * binv.row(leaving_row);
    }
    in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(leaving_row)])] = 0;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    basis[static_cast<std::size_t>(leaving_row)] = entering;
    if (std::abs(step) < 1e-6) rebuild_inverse();
  }
  if (!result.ok) return result;

  Eigen::VectorXd solution = Eigen::VectorXd::Zero(cols);
  for (Eigen::Index row = 0; row < rows; ++row)
    solution[basis[static_cast<std::size_t>(row)]] = std::max(xb[row], 0.0);
  // degenerate vertices leave basic variables at rounding-scale values; snap
  // them so reported zeros are exact
  const double snap = 1e-11 * (1.0 + b.cwiseAbs().maxCoeff());
  result.theta = Eigen::VectorXd::Zero(data.p());
  for (Eigen::Index j = 0; j < active; ++j) {
    const double value = solution[2 * j] - solution[2 * j + 1];
    result.theta[allowed[static_cast<std::size_t>(j)]] =
        std::abs(value) < snap ? 0.0 : value;
  }
  result.beta.resize(level_count);
  for (Eigen::Index k = 0; k < level_count; ++k)
    result.beta[k] =
        solution[beta_offset + 2 * k] - solution[beta_offset + 2 * k + 1];

  // Recompute the objective from the extracted parameters. Degenerate-basis
  // refreshes clamp the simplex state, so the internal cost can understate an
  // infeasible vertex; the recomputed value is what adoption must compare.
  Eigen::VectorXd residual = data.y;
  for (Eigen::Index j = 0; j < active; ++j) {
    const int col = allowed[static_cast<std::size_t>(j)];
    if (result.theta[col] != 0.0)
      residual.noalias() -= data.x.col(col) * result.theta[col];
  }
  double objective = 0.0;
  for (Eigen::Index k = 0; k < level_count; ++k) {
    const double tau = levels[static_cast<std::size_t>(k)].tau;
    const double scale = levels[static_cast<std::size_t>(k)].scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = residual[i] - result.beta[k];
      objective += scale * (z >= 0.0 ? z * tau : z * (tau - 1.0));
    }
  }
  for (Eigen::Index j = 0; j < active; ++j)
    objective += penalty_scale * weights[allowed[static_cast<std::size_t>(j)]] *
                 std::abs(result.theta[allowed[static_cast<std::size_t>(j)]]);
  result.objective = objective;
  return result;
}

// LP problems stay small enough for the dense simplex when n * K is modest;
// pipeline-scale fits stay on the fast coordinate route.
bool lp_route_fits(const Dataset& data, const LossSpec& loss) {
  if (loss.kind == LossSpec::Kind::Squared) return false;
  return data.n() * static_cast<Eigen::Index>(levels_of(loss).size()) <= 80;
}

// Runs the LP after coordinate descent. The LP solution wins ties as well as
// strict improvements: its zeros are nonbasic variables, i.e. exact, which the
// coordinate route cannot guarantee when residuals are at rounding scale.
CdOutcome best_of_cd_and_lp(const Dataset& data, const LossSpec& loss, double lambda,
                            const Eigen::VectorXd& weights,
                            const std::vector<int>& allowed, CdOutcome cd) {
  PiecewiseLpResult lp = solve_piecewise_lp(data, loss, lambda, weights, allowed);
  if (!lp.ok) return cd;
  if (lp.objective > cd.objective + 1e-10 * (1.0 + std::abs(cd.objective))) return cd;
  cd.theta = std::move(lp.theta);
  cd.beta = std::move(lp.beta);
  if (lp.objective <= cd.objective) cd.history.push_back(lp.objective);
  cd.objective = lp.objective;
  cd.converged = true;
  return cd;
}

SparseFit to_fit(CdOutcome&& out) {
  SparseFit fit;
  fit.coefficients = std::move(out.theta);
  // Degenerate problems (exactly noiseless data) can park coefficients at
  // rounding scale because the data kinks sit at ~1e-17 positions; values
  // twelve orders below the fit's own scale are float noise, not model.
  const double scale = fit.coefficients.size() > 0
                           ? fit.coefficients.cwiseAbs().maxCoeff()
                           : 0.0;
  const double dust = 1e-12 * std::max(1.0, scale);
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j)
    if (fit.coefficients[j] != 0.0 && std::abs(fit.coefficients[j]) < dust)
      fit.coefficients[j] = 0.0;
  fit.intercepts = std::move(out.beta);
  fit.support = SparseFit::support_of(fit.coefficients);
  fit.objective_value = out.objective;
  fit.iterations_used = out.sweeps;
  fit.converged = out.converged;
  fit.objective_history = std::move(out.history);
  return fit;
}

// Column scaling with back-transformation; columns with zero spread are left alone.
struct Scaling {
  Dataset data;
  Eigen::VectorXd factors;
};

Scaling scale_columns(const Dataset& data) {
  Scaling scaled{data, Eigen::VectorXd::Ones(data.p())};
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const double sd = sample_sd(data.x.col(j));
    if (sd > 0.0) {
      scaled.factors[j] = sd;
      scaled.data.x.col(j) /= sd;
    }
  }
  return scaled;
}

// Least squares on [1, X_S]; returns false when the restricted design is rank
// deficient.
bool restricted_least_squares(const Dataset& data, std::span<const int> support,
                              Eigen::VectorXd& theta, double& intercept) {
  const Eigen::Index n = data.n();
  const Eigen::Index s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd design(n, s + 1);
  design.col(0).setOnes();
  for (Eigen::Index k = 0; k < s; ++k) design.col(k + 1) = data.x.col(support[k]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < s + 1) return false;
  const Eigen::VectorXd solution = qr.solve(data.y);
  intercept = solution[0];
  theta = Eigen::VectorXd::Zero(data.p());
  for (Eigen::Index k = 0; k < s; ++k) theta[support[k]] = solution[k + 1];
  return true;
}

std::string support_to_string(std::span<const int> support) {
  std::ostringstream out;
  out << "{";
  for (std::size_t k = 0; k < support.size(); ++k) out << (k ? "," : "") << support[k];
  out << "}";
  return out.str();
}

void check_support(std::span<const int> support, Eigen::Index n, Eigen::Index p) {
  int previous = -1;
  for (int j : support) {
    if (j < 0 || j >= p)
      throw InputError("support index " + std::to_string(j) + " out of range");
    if (j <= previous) throw InputError("support must be sorted and unique");
    previous = j;
  }
  if (static_cast<Eigen::Index>(support.size()) >= n)
    throw InputError("restricted support size must be below the sample size");
}

}  // namespace

SparseFit fit_weighted_lasso(const Dataset& data, const LossSpec& loss,
                             const PenaltyConfig& penalty,
                             const std::optional<Eigen::VectorXd>& init,
                             const SolverConfig& config) {
  data.validate();
  loss.validate();
  penalty.validate(data.p());
  config.validate();
  if (init && init->size() != data.p())
    throw DimensionError("init vector length does not match predictor count");

  if (config.standardize_columns) {
    Scaling scaled = scale_columns(data);
    SolverConfig plain = config;
    plain.standardize_columns = false;
    std::optional<Eigen::VectorXd> scaled_init;
    if (init) scaled_init = init->cwiseProduct(scaled.factors);
    SparseFit fit = fit_weighted_lasso(scaled.data, loss, penalty, scaled_init, plain);
    fit.coefficients = fit.coefficients.cwiseQuotient(scaled.factors);
    fit.support = SparseFit::support_of(fit.coefficients);
    return fit;
  }

  CdSolver solver(data, loss, penalty.lambda, penalty.weights, config);
  Eigen::VectorXd theta0 = init ? *init : Eigen::VectorXd::Zero(data.p());
  const bool polish = data.n() <= config.polish_max_n;
  const std::vector<int> allowed = all_coords(data.p());
  CdOutcome outcome = solver.solve(std::move(theta0), allowed, polish);
  if (lp_route_fits(data, loss))
    outcome = best_of_cd_and_lp(data, loss, penalty.lambda, penalty.weights, allowed,
                                std::move(outcome));
  return to_fit(std::move(outcome));
}

SparseFit fit_scad_lla(const Dataset& data, const LossSpec& loss, double lambda,
                       double scad_b, const SolverConfig& config,
                       const std::optional<Eigen::VectorXd>& lasso_warm_start) {
  data.validate();
  loss.validate();
  config.validate();
  if (!(lambda > 0.0)) throw InputError("SCAD lambda must be positive");
  if (!(scad_b > 2.0)) throw InputError("scad_b must exceed 2");

  if (config.standardize_columns) {
    Scaling scaled = scale_columns(data);
    SolverConfig plain = config;
    plain.standardize_columns = false;
    std::optional<Eigen::VectorXd> scaled_warm;
    if (lasso_warm_start) scaled_warm = lasso_warm_start->cwiseProduct(scaled.factors);
    SparseFit fit = fit_scad_lla(scaled.data, loss, lambda, scad_b, plain, scaled_warm);
    fit.coefficients = fit.coefficients.cwiseQuotient(scaled.factors);
    fit.support = SparseFit::support_of(fit.coefficients);
    return fit;
  }

  PenaltyConfig round;
  round.lambda = lambda;
  round.scad_b = scad_b;
  round.weights = Eigen::VectorXd::Ones(data.p());
  SparseFit current = fit_weighted_lasso(data, loss, round, lasso_warm_start, config);

  int stable_rounds = 0;
  int iterations = 0;
  bool converged = false;
  while (iterations < config.max_outer_iterations) {
    for (Eigen::Index j = 0; j < data.p(); ++j)
      round.weights[j] = scad_weight(current.coefficients[j], lambda, scad_b) / lambda;
    SparseFit next =
        fit_weighted_lasso(data, loss, round, current.coefficients, config);
    ++iterations;
    const double delta =
        (next.coefficients - current.coefficients).cwiseAbs().maxCoeff();
    stable_rounds = next.support == current.support ? stable_rounds + 1 : 0;
    const bool inner_ok = next.converged;
    current = std::move(next);
    if (delta < config.tolerance && stable_rounds >= config.support_stability_rounds) {
      converged = inner_ok;
      break;
    }
  }

  current.iterations_used = iterations;
  current.converged = converged;
  double scad_term = 0.0;
  for (int j : current.support)
    scad_term += scad_penalty(current.coefficients[j], lambda, scad_b);
  double data_term;
  {
    Eigen::VectorXd residual = data.y;
    for (int j : current.support)
      residual.noalias() -= data.x.col(j) * current.coefficients[j];
    data_term = loss.kind == LossSpec::Kind::Squared
                    ? 0.5 * (residual.array() - current.intercepts[0]).square().sum()
                    : loss_sum(loss, residual, current.intercepts);
  }
  current.objective_value = data_term + static_cast<double>(data.n()) * scad_term;
  return current;
}

SparseFit fit_restricted(const Dataset& data, const LossSpec& loss,
                         std::span<const int> support, const SolverConfig& config) {
  data.validate();
  loss.validate();
  config.validate();
  check_support(support, data.n(), data.p());

  if (support.empty()) {
    SparseFit fit;
    fit.coefficients = Eigen::VectorXd::Zero(data.p());
    fit.intercepts = constant_fit(loss, data.y);
    fit.objective_value = loss.kind == LossSpec::Kind::Squared
                              ? 0.5 * (data.y.array() - fit.intercepts[0]).square().sum()
                              : loss_sum(loss, data.y, fit.intercepts);
    fit.converged = true;
    return fit;
  }

  Eigen::VectorXd ls_theta;
  double ls_intercept = 0.0;
  const bool ls_ok = restricted_least_squares(data, support, ls_theta, ls_intercept);

  if (loss.kind == LossSpec::Kind::Squared) {
    if (!ls_ok)
      throw NumericalError("restricted design is rank deficient on support " +
                           support_to_string(support));
    SparseFit fit;
    fit.coefficients = std::move(ls_theta);
    fit.intercepts = Eigen::VectorXd::Constant(1, ls_intercept);
    fit.support = SparseFit::support_of(fit.coefficients);
    Eigen::VectorXd residual = data.y - data.x * fit.coefficients;
    fit.objective_value = 0.5 * (residual.array() - ls_intercept).square().sum();
    fit.converged = true;
    return fit;
  }

  const std::vector<int> allowed(support.begin(), support.end());
  const Eigen::VectorXd no_weights = Eigen::VectorXd::Zero(data.p());
  const bool polish = data.n() <= config.polish_max_n;
  CdSolver solver(data, loss, 0.0, no_weights, config);
  CdOutcome best = solver.solve(Eigen::VectorXd::Zero(data.p()), allowed, polish);
  if (ls_ok) {
    CdSolver second(data, loss, 0.0, no_weights, config);
    CdOutcome from_ls = second.solve(std::move(ls_theta), allowed, polish);
    if (from_ls.objective < best.objective) best = std::move(from_ls);
  }
  if (lp_route_fits(data, loss))
    best = best_of_cd_and_lp(data, loss, 0.0, no_weights, allowed, std::move(best));
  return to_fit(std::move(best));
}

Eigen::VectorXd constant_fit(const LossSpec& loss, const Eigen::VectorXd& y) {
  Eigen::VectorXd beta(loss.intercept_count());
  switch (loss.kind) {
    case LossSpec::Kind::Squared:
      beta[0] = y.mean();
      break;
    case LossSpec::Kind::Absolute:
      beta[0] = sample_quantile(y, 0.5);
      break;
    case LossSpec::Kind::QuantileCheck:
      beta[0] = sample_quantile(y, loss.tau.front());
      break;
    case LossSpec::Kind::CompositeQuantile: {
      const Eigen::VectorXd sorted = sorted_copy(y);
      for (std::size_t k = 0; k < loss.tau.size(); ++k)
        beta[static_cast<Eigen::Index>(k)] = quantile_of_sorted(sorted, loss.tau[k]);
      break;
    }
  }
  return beta;
}

double lasso_lambda_max(const Dataset& data, const LossSpec& loss) {
  data.validate();
  loss.validate();
  const Eigen::VectorXd beta = constant_fit(loss, data.y);
  Eigen::VectorXd psi(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i)
    psi[i] = subgradient(loss, data.y[i], beta);
  const Eigen::VectorXd gradient = data.x.transpose() * psi;
  return gradient.cwiseAbs().maxCoeff() / static_cast<double>(data.n());
}

}  // namespace votereg

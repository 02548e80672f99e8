#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "votereg/optweight.hpp"
#include "votereg/rng.hpp"
#include "votereg/stats.hpp"

using namespace votereg;

namespace {

SparseFit fit_of(const Eigen::VectorXd& coefficients) {
  SparseFit fit;
  fit.coefficients = coefficients;
  fit.support = SparseFit::support_of(coefficients);
  fit.intercepts = Eigen::VectorXd::Zero(1);
  fit.converged = true;
  return fit;
}

Eigen::VectorXd normal_draws(int n, std::uint64_t seed, double scale = 1.0,
                             double shift = 0.0) {
  Rng rng(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = shift + scale * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("residuals of the averaged fit") {
  Dataset data;
  data.x = Eigen::MatrixXd::Random(12, 3);
  data.y = Eigen::VectorXd::Random(12);

  SUBCASE("zero coefficients leave the response untouched") {
    const std::vector<SparseFit> fits = {fit_of(Eigen::VectorXd::Zero(3))};
    CHECK((residuals(data, fits) - data.y).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identical fits average to themselves") {
    Eigen::VectorXd theta(3);
    theta << 1.0, -2.0, 0.5;
    const std::vector<SparseFit> fits(3, fit_of(theta));
    const Eigen::VectorXd expected = data.y - data.x * theta;
    CHECK((residuals(data, fits) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("noiseless data with the exact fit gives zero residuals") {
    Eigen::VectorXd theta(3);
    theta << 2.0, 0.0, -1.0;
    data.y = data.x * theta;
    const std::vector<SparseFit> fits = {fit_of(theta)};
    CHECK(residuals(data, fits).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("dimension mismatch") {
    const std::vector<SparseFit> fits = {fit_of(Eigen::VectorXd::Zero(5))};
    CHECK_THROWS_AS(residuals(data, fits), DimensionError);
  }
}

TEST_CASE("KDE at quantiles: normal density values within 5%") {
  const Eigen::VectorXd sample = normal_draws(100000, 424242);
  const std::vector<double> tau = {0.3, 0.5, 0.7};
  const KdeAtQuantiles kde = kde_at_quantiles(sample, tau);
  for (int k = 0; k < 3; ++k) {
    const double truth = normal_pdf(normal_quantile(tau[static_cast<std::size_t>(k)]));
    CHECK(std::abs(kde.f_hat[k] - truth) / truth <= 0.05);
  }
}

TEST_CASE("KDE translation and scaling identities") {
  const Eigen::VectorXd sample = normal_draws(100, 7, 1.3, 0.4);
  const std::vector<double> tau = {0.25, 0.5, 0.75};
  const KdeAtQuantiles base = kde_at_quantiles(sample, tau);

  SUBCASE("constant shift moves the anchors and keeps the density") {
    const double shift = 5.25;
    const KdeAtQuantiles moved =
        kde_at_quantiles(sample.array() + shift, tau);
    for (int k = 0; k < 3; ++k) {
      CHECK(moved.beta_hat[k] == doctest::Approx(base.beta_hat[k] + shift).epsilon(1e-12));
      CHECK(moved.f_hat[k] == doctest::Approx(base.f_hat[k]).epsilon(1e-12));
    }
    CHECK(moved.bandwidth == doctest::Approx(base.bandwidth).epsilon(1e-12));
  }
  SUBCASE("scaling by c scales the bandwidth by c and the density by 1/c") {
    const double c = 2.5;
    const KdeAtQuantiles scaled = kde_at_quantiles(sample * c, tau);
    CHECK(scaled.bandwidth == doctest::Approx(c * base.bandwidth).epsilon(1e-12));
    for (int k = 0; k < 3; ++k)
      CHECK(scaled.f_hat[k] == doctest::Approx(base.f_hat[k] / c).epsilon(1e-12));
  }
}

TEST_CASE("KDE rule-of-thumb bandwidth and errors") {
  const Eigen::VectorXd sample = normal_draws(200, 99);
  const KdeAtQuantiles kde = kde_at_quantiles(sample, std::vector<double>{0.5});
  const Eigen::VectorXd sorted = sorted_copy(sample);
  const double expected =
      0.9 * std::pow(200.0, -0.2) *
      std::min(sample_sd(sample), interquartile_range_sorted(sorted) / 1.34);
  CHECK(kde.bandwidth == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(kde_at_quantiles(Eigen::VectorXd::Zero(5), std::vector<double>{0.5}),
                  InputError);  // too few points
  CHECK_THROWS_AS(kde_at_quantiles(Eigen::VectorXd::Zero(50), std::vector<double>{0.5}),
                  NumericalError);  // degenerate residuals
}

TEST_CASE("H matrix entries") {
  SUBCASE("scalar case") {
    const Eigen::MatrixXd h =
        h_hat(std::vector<double>{0.5}, Eigen::VectorXd::Constant(1, 0.4));
    CHECK(h(0, 0) == doctest::Approx(0.25 / 0.16).epsilon(1e-12));
  }
  SUBCASE("two thirds") {
    const Eigen::MatrixXd h =
        h_hat(std::vector<double>{1.0 / 3.0, 2.0 / 3.0}, Eigen::VectorXd::Ones(2));
    CHECK(h(0, 0) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
    CHECK(h(0, 1) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(h(1, 0) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(h(1, 1) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  }
  SUBCASE("factorization: H_ij f_i f_j depends only on tau") {
    Rng rng(555);
    const std::vector<double> tau = {0.2, 0.45, 0.8};
    Eigen::VectorXd f(3);
    for (int k = 0; k < 3; ++k) f[k] = rng.uniform(0.1, 2.0);
    const Eigen::MatrixXd h = h_hat(tau, f);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(h(i, j) * f[i] * f[j] ==
              doctest::Approx(std::min(tau[static_cast<std::size_t>(i)],
                                       tau[static_cast<std::size_t>(j)]) -
                              tau[static_cast<std::size_t>(i)] *
                                  tau[static_cast<std::size_t>(j)])
                  .epsilon(1e-12));
  }
  SUBCASE("nonpositive densities are rejected") {
    CHECK_THROWS_AS(h_hat(std::vector<double>{0.5}, Eigen::VectorXd::Zero(1)),
                    InputError);
  }
}

TEST_CASE("analytic H inverse") {
  SUBCASE("scalar inversion at tau = 1/2") {
    const Eigen::VectorXd f = Eigen::VectorXd::Constant(1, 0.37);
    const Eigen::MatrixXd inverse = analytic_h_inverse(std::vector<double>{0.5}, f);
    CHECK(inverse(0, 0) == doctest::Approx(4.0 * 0.37 * 0.37).epsilon(1e-12));
    const Eigen::MatrixXd h = h_hat(std::vector<double>{0.5}, f);
    CHECK(inverse(0, 0) == doctest::Approx(1.0 / h(0, 0)).epsilon(1e-12));
  }
  SUBCASE("K=5 matrix product against the numeric H") {
    Rng rng(808);
    std::vector<double> tau;
    for (int k = 1; k <= 5; ++k) tau.push_back(k / 6.0);
    Eigen::VectorXd f(5);
    for (int k = 0; k < 5; ++k) f[k] = rng.uniform(0.2, 1.5);
    const Eigen::MatrixXd h = h_hat(tau, f);
    const Eigen::MatrixXd inverse = analytic_h_inverse(tau, f);
    const double deviation =
        (h * inverse - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff();
    CHECK(deviation < 1e-10);
  }
  SUBCASE("K=9 quadratic form identity at f = 1") {
    std::vector<double> tau;
    for (int k = 1; k <= 9; ++k) tau.push_back(k / 10.0);
    const Eigen::VectorXd f = Eigen::VectorXd::Ones(9);
    const Eigen::MatrixXd inverse = analytic_h_inverse(tau, f);
    // r'H^-1 r = 2(K+1)[sum f_k^2 - sum f_k f_{k+1}] = 2*10*(9-8)
    CHECK(inverse.sum() == doctest::Approx(20.0).epsilon(1e-12));
  }
  SUBCASE("non-equispaced levels are rejected") {
    CHECK_THROWS_AS(analytic_h_inverse(std::vector<double>{0.3, 0.5},
                                       Eigen::VectorXd::Ones(2)),
                    InputError);
  }
  SUBCASE("equispaced consistency with numeric inversion up to K = 20") {
    Rng rng(2468);
    for (int k_count = 1; k_count <= 20; ++k_count) {
      std::vector<double> tau;
      for (int k = 1; k <= k_count; ++k)
        tau.push_back(static_cast<double>(k) / (k_count + 1));
      Eigen::VectorXd f(k_count);
      for (int k = 0; k < k_count; ++k) f[k] = rng.uniform(0.1, 2.0);
      const Eigen::MatrixXd numeric = h_hat(tau, f).inverse();
      const Eigen::MatrixXd analytic = analytic_h_inverse(tau, f);
      CHECK((numeric - analytic).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("optimal weights") {
  SUBCASE("identity gives uniform weights") {
    const Eigen::VectorXd w = optimal_weights(Eigen::MatrixXd::Identity(3, 3));
    for (int k = 0; k < 3; ++k) CHECK(w[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("diagonal gives inverse-variance weights") {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
    h(0, 0) = 1.0;
    h(1, 1) = 4.0;
    const Eigen::VectorXd w = optimal_weights(h);
    CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("random SPD beats 10^4 random simplex points") {
    Rng rng(1357);
    Eigen::MatrixXd root(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) root(i, j) = rng.normal();
    const Eigen::MatrixXd h =
        root * root.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::VectorXd w = optimal_weights(h);
    const double best = w.dot(h * w);
    for (int trial = 0; trial < 10000; ++trial) {
      Eigen::VectorXd candidate(3);
      double total = 0.0;
      for (int k = 0; k < 3; ++k) {
        candidate[k] = -std::log1p(-rng.uniform());
        total += candidate[k];
      }
      candidate /= total;
      CHECK(candidate.dot(h * candidate) >= best - 1e-12);
    }
  }
  SUBCASE("weights are invariant to rescaling H") {
    Rng rng(9753);
    Eigen::MatrixXd root(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) root(i, j) = rng.normal();
    const Eigen::MatrixXd h =
        root * root.transpose() + 0.2 * Eigen::MatrixXd::Identity(4, 4);
    const Eigen::VectorXd w1 = optimal_weights(h);
    const Eigen::VectorXd w2 = optimal_weights(37.5 * h);
    CHECK((w1 - w2).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("indefinite H is a numerical error") {
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
    h(1, 1) = -1.0;
    CHECK_THROWS_AS(optimal_weights(h), NumericalError);
  }
}

TEST_CASE("combine") {
  Eigen::VectorXd a(4);
  a << 1.0, 0.0, 2.0, 0.0;
  Eigen::VectorXd b(4);
  b << 3.0, 0.0, -1.0, 0.0;

  SUBCASE("uniform weights over identical fits return the fit") {
    const std::vector<SparseFit> fits = {fit_of(a), fit_of(a), fit_of(a)};
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    const SparseFit combined = combine(fits, w);
    CHECK((combined.coefficients - a).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("single fit with weight one") {
    const std::vector<SparseFit> fits = {fit_of(b)};
    const SparseFit combined = combine(fits, Eigen::VectorXd::Ones(1));
    CHECK((combined.coefficients - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("weight (1,0) returns the first fit exactly") {
    const std::vector<SparseFit> fits = {fit_of(a), fit_of(b)};
    Eigen::VectorXd w(2);
    w << 1.0, 0.0;
    const SparseFit combined = combine(fits, w);
    CHECK((combined.coefficients - a).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("off-support entries stay exactly zero") {
    const std::vector<SparseFit> fits = {fit_of(a), fit_of(b)};
    Eigen::VectorXd w(2);
    w << 0.3, 0.7;
    const std::vector<int> voted = {0, 2};
    const SparseFit combined = combine(fits, w, voted);
    CHECK(combined.coefficients[1] == 0.0);
    CHECK(combined.coefficients[3] == 0.0);
  }
  SUBCASE("weights must sum to one") {
    const std::vector<SparseFit> fits = {fit_of(a), fit_of(b)};
    Eigen::VectorXd w(2);
    w << 0.7, 0.7;
    CHECK_THROWS_AS(combine(fits, w), InputError);
  }
  SUBCASE("a fit escaping the expected support is an error") {
    const std::vector<SparseFit> fits = {fit_of(a)};
    const std::vector<int> voted = {0};  // but the fit also uses column 2
    CHECK_THROWS_AS(combine(fits, Eigen::VectorXd::Ones(1), voted), InputError);
  }
}

TEST_CASE("fisher limit diagnostics") {
  SUBCASE("standard normal approaches Fisher information 1") {
    const auto table =
        fisher_limit_check(ErrorDensity::normal(1.0), std::vector<int>{9, 29, 99});
    REQUIRE(table.size() == 3);
    CHECK(table[0].second < table[1].second);
    CHECK(table[1].second < table[2].second);
    CHECK(std::abs(table[2].second - 1.0) < 0.02);
  }
  SUBCASE("variance-3 normal approaches 1/3") {
    const auto table =
        fisher_limit_check(ErrorDensity::normal(3.0), std::vector<int>{99});
    CHECK(std::abs(table[0].second - 1.0 / 3.0) / (1.0 / 3.0) < 0.02);
  }
  SUBCASE("uniform diverges") {
    const auto table =
        fisher_limit_check(ErrorDensity::uniform(-3.0, 3.0), std::vector<int>{9, 99});
    CHECK(table[1].second / table[0].second >= 5.0);
  }
}

TEST_CASE("weight plan falls back to uniform on a near-singular H") {
  // two nearly identical quantile levels make H ill-conditioned
  const Eigen::VectorXd sample = normal_draws(500, 6060);
  const std::vector<double> tau = {0.5, 0.5 + 1e-12};
  const WeightPlan plan = make_weight_plan(sample, tau);
  CHECK(plan.uniform_fallback);
  CHECK(plan.w_star[0] == doctest::Approx(0.5));
  CHECK(plan.w_star[1] == doctest::Approx(0.5));
}

TEST_CASE("weight plan on well-separated levels is optimal and normalized") {
  const Eigen::VectorXd sample = normal_draws(2000, 777);
  const std::vector<double> tau = {0.2, 0.4, 0.6, 0.8};
  const WeightPlan plan = make_weight_plan(sample, tau);
  CHECK(!plan.uniform_fallback);
  CHECK(plan.w_star.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((plan.f_hat.array() > 0.0).all());
  // global rescaling of f leaves the weights unchanged
  const Eigen::MatrixXd h_scaled = h_hat(tau, plan.f_hat * 2.0);
  CHECK((optimal_weights(h_scaled) - plan.w_star).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("xi weights solve R xi = f") {
  const std::vector<double> tau = {0.25, 0.5, 0.75};
  Eigen::VectorXd f(3);
  f << 0.3, 0.4, 0.3;
  const Eigen::VectorXd xi = xi_weights(tau, f);
  Eigen::MatrixXd r(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r(i, j) = std::min(tau[static_cast<std::size_t>(i)], tau[static_cast<std::size_t>(j)]) -
                tau[static_cast<std::size_t>(i)] * tau[static_cast<std::size_t>(j)];
  CHECK((r * xi - f).cwiseAbs().maxCoeff() <= 1e-10);
}

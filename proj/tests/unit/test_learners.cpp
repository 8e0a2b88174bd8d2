#include <doctest.h>

#include <random>

#include "blipvar/errors.hpp"
#include "blipvar/learners.hpp"
#include "blipvar/math_util.hpp"

using namespace blipvar;

namespace {

// Logistic draws from expit(x beta) for the MLE consistency checks.
std::pair<MatrixXd, VectorXd> simulate_logistic(int n, const VectorXd& beta,
                                                std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd x(n, beta.size());
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < beta.size(); ++j) x(i, j) = normal(engine);
    y[i] = unif(engine) < expit(x.row(i).dot(beta)) ? 1.0 : 0.0;
  }
  return {x, y};
}

}  // namespace

TEST_CASE("intercept-only MLE is logit of the mean") {
  MatrixXd x = MatrixXd::Ones(10, 1);
  VectorXd y(10);
  y << 1, 1, 1, 0, 0, 0, 0, 0, 0, 0;
  const auto fit = fit_logistic_mle(x, y);
  CHECK(fit.beta[0] == doctest::Approx(logit(0.3)).epsilon(1e-9));
}

TEST_CASE("separable data without a penalty fails to converge") {
  MatrixXd x(8, 2);
  VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i - 3.5;
    y[i] = i >= 4 ? 1.0 : 0.0;
  }
  CHECK_THROWS_AS(fit_logistic_mle(x, y), NonConvergenceError);

  // A ridge penalty restores a finite optimum.
  LogisticOptions ridge;
  ridge.l2 = 1.0;
  ridge.unpenalized = {0};
  CHECK_NOTHROW(fit_logistic_mle(x, y, ridge));
}

TEST_CASE("MLE recovers the data-generating coefficients") {
  VectorXd beta(2);
  beta << 1.0, 2.0;
  const auto [x, y] = simulate_logistic(10000, beta, 991);
  const auto fit = fit_logistic_mle(x, y);
  CHECK(fit.beta[0] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(fit.beta[1] == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("fits satisfy the stationarity condition") {
  VectorXd beta(3);
  beta << 0.3, -0.8, 0.5;
  const auto [x, y] = simulate_logistic(600, beta, 17);

  SUBCASE("unpenalized") {
    const auto fit = fit_logistic_mle(x, y);
    CHECK(logistic_stationarity_gap(x, y, fit.beta) <= 1e-8);
  }
  SUBCASE("ridge") {
    LogisticOptions opt;
    opt.l2 = 2.5;
    const auto fit = fit_logistic_mle(x, y, opt);
    CHECK(logistic_stationarity_gap(x, y, fit.beta, opt) <= 1e-8);
  }
  SUBCASE("lasso") {
    LogisticOptions opt;
    opt.l1 = 3.0;
    opt.unpenalized = {0};
    const auto fit = fit_logistic_mle(x, y, opt);
    CHECK(logistic_stationarity_gap(x, y, fit.beta, opt) <= 1e-7);
  }
  SUBCASE("lasso shrinks exactly to zero at large lambda") {
    LogisticOptions opt;
    opt.l1 = 1e4;
    const auto fit = fit_logistic_mle(x, y, opt);
    CHECK(fit.beta.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("penalized objective decreases monotonically") {
  VectorXd beta(3);
  beta << 0.2, 1.0, -1.2;
  const auto [x, y] = simulate_logistic(400, beta, 55);
  for (double l1 : {0.0, 2.0}) {
    LogisticOptions opt;
    opt.l1 = l1;
    opt.l2 = l1 > 0.0 ? 0.0 : 0.5;
    opt.record_objective = true;
    const auto fit = fit_logistic_mle(x, y, opt);
    REQUIRE(fit.objective_trace.size() > 1);
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
      const double prev = fit.objective_trace[k - 1];
      CHECK(fit.objective_trace[k] <= prev + 1e-12 * (1.0 + std::abs(prev)));
    }
  }
}

TEST_CASE("rank-deficient designs error without a penalty") {
  MatrixXd x(20, 3);
  VectorXd y(20);
  std::mt19937_64 engine(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = unif(engine);
    x(i, 2) = 2.0 * x(i, 1);  // exact collinearity
    y[i] = unif(engine) < 0.5 ? 1.0 : 0.0;
  }
  CHECK_THROWS_AS(fit_logistic_mle(x, y), RankDeficientError);
}

TEST_CASE("predictions are clipped strictly inside (0,1)") {
  MatrixXd x = MatrixXd::Ones(5, 1);
  const VectorXd y = VectorXd::Ones(5);
  const auto learner = fit_learner(LearnerSpec{LearnerKind::mean}, x, y);
  const VectorXd pred = learner->predict(x);
  CHECK(pred[0] == doctest::Approx(1.0 - 1e-6));

  VectorXd beta(1);
  beta << 50.0;
  CHECK(predict_logistic(beta, x)[0] == doctest::Approx(1.0 - 1e-6));
}

TEST_CASE("knn probabilities use the smoothed count rule") {
  MatrixXd x(4, 1);
  x << 0.0, 1.0, 2.0, 3.0;
  VectorXd y(4);
  y << 1, 0, 0, 1;
  LearnerSpec spec{LearnerKind::knn};
  spec.k = 1;
  const auto learner = fit_learner(spec, x, y);
  MatrixXd q(1, 1);
  q << 0.0;
  // nearest neighbour has y=1: (1 + 0.5) / (1 + 1)
  CHECK(learner->predict(q)[0] == doctest::Approx(0.75));
}

TEST_CASE("singleton library gets weight one and predicts the mean") {
  std::mt19937_64 engine(10);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd x(40, 2);
  VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = unif(engine);
    x(i, 1) = unif(engine);
    y[i] = unif(engine) < 0.4 ? 1.0 : 0.0;
  }
  const auto fit = fit_ensemble(x, y, {LearnerSpec{LearnerKind::mean}}, 5, 3);
  REQUIRE(fit.weights.size() == 1);
  CHECK(fit.weights[0] == 1.0);
  CHECK(predict(fit, x)[0] == doctest::Approx(y.mean()));
}

TEST_CASE("stacking favors the correct model family") {
  VectorXd beta(3);
  beta << 0.5, 1.5, -1.0;
  const auto [design, y] = simulate_logistic(5000, beta, 2024);
  const MatrixXd features = design.rightCols(2);  // learners add their own intercept
  const auto fit = fit_ensemble(
      features, y, {LearnerSpec{LearnerKind::mean}, LearnerSpec{LearnerKind::logistic_main}},
      10, 7);
  REQUIRE(fit.weights.size() == 2);
  CHECK(fit.weights[1] >= 0.9);
}

TEST_CASE("ties between identical learners break to the earlier index") {
  std::mt19937_64 engine(4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd x(60, 1);
  VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    x(i, 0) = unif(engine);
    y[i] = unif(engine) < 0.5 ? 1.0 : 0.0;
  }
  const auto fit = fit_ensemble(
      x, y, {LearnerSpec{LearnerKind::mean}, LearnerSpec{LearnerKind::mean}}, 5, 3);
  CHECK(fit.weights[0] == 1.0);
  CHECK(fit.weights[1] == 0.0);
}

TEST_CASE("ensemble CV risk never exceeds the best single learner") {
  std::mt19937_64 engine(123);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    MatrixXd x(300, 3);
    VectorXd y(300);
    for (int i = 0; i < 300; ++i) {
      for (int j = 0; j < 3; ++j) x(i, j) = normal(engine);
      y[i] = unif(engine) < expit(0.5 * x(i, 0) - x(i, 1) * x(i, 2)) ? 1.0 : 0.0;
    }
    std::vector<LearnerSpec> library{
        LearnerSpec{LearnerKind::mean},
        LearnerSpec{LearnerKind::logistic_main},
        LearnerSpec{LearnerKind::logistic_main_interactions},
        LearnerSpec::parse("knn:20"),
        LearnerSpec::parse("polynomial-logistic:2"),
    };
    const auto fit = fit_ensemble(x, y, library, 5, 1000 + rep);
    CHECK(fit.ensemble_cv_risk <= fit.cv_risks.minCoeff() + 1e-10);
    CHECK(fit.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.weights.minCoeff() >= 0.0);
  }
}

TEST_CASE("failing learners are dropped with a warning") {
  // y is a deterministic threshold of w: every logistic fit separates.
  MatrixXd x(50, 1);
  VectorXd y(50);
  for (int i = 0; i < 50; ++i) {
    x(i, 0) = i / 49.0 - 0.5;
    y[i] = x(i, 0) > 0.0 ? 1.0 : 0.0;
  }
  const auto fit = fit_ensemble(
      x, y, {LearnerSpec{LearnerKind::logistic_main}, LearnerSpec{LearnerKind::mean}},
      5, 2);
  REQUIRE(fit.specs.size() == 1);
  CHECK(fit.specs[0].kind == LearnerKind::mean);
  CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("manual convex combinations average predictions") {
  MatrixXd x1 = MatrixXd::Zero(3, 1);
  EnsembleFit fit;
  fit.specs = {LearnerSpec{LearnerKind::mean}, LearnerSpec{LearnerKind::mean}};
  fit.learners = {fit_learner(LearnerSpec{LearnerKind::mean}, x1,
                              VectorXd::Constant(5, 0.2)),
                  fit_learner(LearnerSpec{LearnerKind::mean}, x1,
                              VectorXd::Constant(5, 0.6))};
  fit.weights = VectorXd(2);
  fit.weights << 0.5, 0.5;
  CHECK(predict(fit, x1)[0] == doctest::Approx(0.4));
  fit.weights << 1.0, 0.0;
  CHECK(predict(fit, x1)[0] == doctest::Approx(0.2));
}

TEST_CASE("polynomial expansion drops duplicate columns for binary features") {
  std::mt19937_64 engine(9);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd x(200, 2);
  VectorXd y(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = unif(engine) < 0.5 ? 1.0 : 0.0;  // binary: squares collapse
    x(i, 1) = unif(engine);
    y[i] = unif(engine) < expit(x(i, 0) - x(i, 1)) ? 1.0 : 0.0;
  }
  LearnerSpec spec{LearnerKind::polynomial_logistic};
  spec.degree = 3;
  CHECK_NOTHROW(fit_learner(spec, x, y));
}

TEST_CASE("learner spec parsing and validation") {
  CHECK(LearnerSpec::parse("knn:7").k == 7);
  CHECK(LearnerSpec::parse("polynomial-logistic:3").degree == 3);
  CHECK(LearnerSpec::parse("logistic-l2:0.5").lambda == doctest::Approx(0.5));
  CHECK(LearnerSpec::parse("mean").kind == LearnerKind::mean);
  CHECK_THROWS_AS(LearnerSpec::parse("boosted-trees"), ValidationError);
  CHECK_THROWS_AS(LearnerSpec::parse("knn:0"), ValidationError);
  CHECK_THROWS_AS(LearnerSpec::parse("polynomial-logistic:4"), ValidationError);
  CHECK_THROWS_AS(LearnerSpec::parse("logistic-l1:-1"), ValidationError);
}

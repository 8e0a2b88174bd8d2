#include <doctest.h>

#include "blipvar/discrete.hpp"
#include "blipvar/errors.hpp"
#include "blipvar/rng.hpp"

using namespace blipvar;

namespace {

DiscreteDistribution two_strata() {
  VectorXd pw(2), g1(2), q1(2), q0(2);
  pw << 0.4, 0.6;
  g1 << 0.3, 0.7;
  q1 << 0.8, 0.5;
  q0 << 0.2, 0.4;
  return DiscreteDistribution::from_factors(pw, g1, q1, q0);
}

}  // namespace

TEST_CASE("factorized accessors invert from_factors") {
  const auto dist = two_strata();
  CHECK(dist.p_w()[0] == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(dist.g1()[1] == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(dist.qbar(1)[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(dist.qbar(0)[1] == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("params computes the exact blip moments") {
  const auto dist = two_strata();
  // b = (0.6, 0.1); ATE = 0.4*0.6 + 0.6*0.1 = 0.3;
  // VTE = 0.4*(0.3)^2 + 0.6*(-0.2)^2 = 0.036 + 0.024 = 0.06.
  const auto [ate, vte] = dist.params();
  CHECK(ate == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(vte == doctest::Approx(0.06).epsilon(1e-14));
}

TEST_CASE("zero score gives zero derivative and zero inner product") {
  const auto dist = two_strata();
  const VectorXd score = VectorXd::Zero(static_cast<Eigen::Index>(dist.atoms.size()));
  const auto check = pathwise_derivative_oracle(dist, score, 1e-5);
  CHECK(check.deriv_ate == 0.0);
  CHECK(check.deriv_vte == 0.0);
  CHECK(check.inner_ate == 0.0);
  CHECK(check.inner_vte == 0.0);
}

TEST_CASE("single stratum: VTE is identically zero along every path") {
  VectorXd pw(1), g1(1), q1(1), q0(1);
  pw << 1.0;
  g1 << 0.4;
  q1 << 0.7;
  q0 << 0.3;
  const auto dist = DiscreteDistribution::from_factors(pw, g1, q1, q0);
  auto engine = make_engine(3);
  const VectorXd score = random_score(dist, engine);
  const auto check = pathwise_derivative_oracle(dist, score, 1e-5);
  CHECK(std::abs(check.deriv_vte) <= 1e-12);
  CHECK(std::abs(check.inner_vte) <= 1e-14);
}

TEST_CASE("riesz identity holds over random distributions and scores") {
  int cases = 0;
  for (int d = 0; d < 20; ++d) {
    auto engine = make_engine(500, static_cast<std::uint64_t>(d));
    const auto dist = random_distribution(4, engine);
    for (int s = 0; s < 20; ++s) {
      const VectorXd score = random_score(dist, engine);
      const auto check = pathwise_derivative_oracle(dist, score, 1e-5);
      CHECK(std::abs(check.deriv_ate - check.inner_ate) <= 1e-6);
      CHECK(std::abs(check.deriv_vte - check.inner_vte) <= 1e-6);
      ++cases;
    }
  }
  CHECK(cases == 400);
}

TEST_CASE("invalid scores are rejected") {
  const auto dist = two_strata();
  const VectorXd uncentered =
      VectorXd::Ones(static_cast<Eigen::Index>(dist.atoms.size()));
  CHECK_THROWS_AS(pathwise_derivative_oracle(dist, uncentered, 1e-5), ValidationError);

  auto engine = make_engine(4);
  const VectorXd score = random_score(dist, engine);
  // |eps * s| >= 1 somewhere pushes an atom mass nonpositive.
  CHECK_THROWS_AS(
      pathwise_derivative_oracle(dist, score, 1.5 / score.cwiseAbs().maxCoeff()),
      ValidationError);
}

TEST_CASE("per-atom EIC has mean zero under the distribution") {
  auto engine = make_engine(6);
  const auto dist = random_distribution(4, engine);
  const auto [d1, d2] = dist.eic();
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < dist.atoms.size(); ++i) {
    m1 += dist.atoms[i].prob * d1[static_cast<Eigen::Index>(i)];
    m2 += dist.atoms[i].prob * d2[static_cast<Eigen::Index>(i)];
  }
  CHECK(std::abs(m1) <= 1e-12);
  CHECK(std::abs(m2) <= 1e-12);
}

TEST_CASE("validation catches broken supports") {
  auto dist = two_strata();
  dist.atoms[0].prob = -dist.atoms[0].prob;
  CHECK_THROWS_AS(dist.validate(), ValidationError);

  auto dist2 = two_strata();
  dist2.atoms[0].prob += 0.1;  // sums to 1.1
  CHECK_THROWS_AS(dist2.validate(), ValidationError);
}

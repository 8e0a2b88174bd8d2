#include <doctest.h>

#include <cmath>

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/rng.hpp"
#include "blipvar/simlab.hpp"

using namespace blipvar;

TEST_CASE("propensity spot values at W = 0") {
  const MatrixXd w0 = MatrixXd::Zero(1, 4);
  // case1 / wellspec: expit(-0.075); controlled-noise: expit(0.5 * -0.15).
  for (auto kind : {DgpKind::case1, DgpKind::wellspec, DgpKind::controlled_noise}) {
    Dgp dgp{DgpSpec{kind}};
    CHECK(dgp.g1(w0)[0] == doctest::Approx(0.48125878412146476).epsilon(1e-14));
  }
  for (auto kind : {DgpKind::case2, DgpKind::case3}) {
    Dgp dgp{DgpSpec{kind}};
    CHECK(dgp.g1(w0)[0] == doctest::Approx(0.40999162477111996).epsilon(1e-14));
  }
}

TEST_CASE("outcome-model spot values") {
  const MatrixXd w0 = MatrixXd::Zero(1, 4);
  Dgp case1{DgpSpec{DgpKind::case1}};
  CHECK(case1.qbar(1.0, w0)[0] == doctest::Approx(0.97441921168799231).epsilon(1e-14));
  CHECK(case1.qbar(0.0, w0)[0] == doctest::Approx(0.53494294515821449).epsilon(1e-14));

  Dgp ws{DgpSpec{DgpKind::wellspec}};
  CHECK(ws.qbar(1.0, w0)[0] == doctest::Approx(0.56954622393922902).epsilon(1e-14));
  CHECK(ws.qbar(0.0, w0)[0] == doctest::Approx(0.5).epsilon(1e-14));

  Dgp case2{DgpSpec{DgpKind::case2}};
  CHECK(case2.qbar(1.0, w0)[0] == doctest::Approx(0.81757447619364366).epsilon(1e-14));
  Dgp case3{DgpSpec{DgpKind::case3}};
  CHECK(case3.qbar(1.0, w0)[0] == doctest::Approx(0.24048908305088893).epsilon(1e-14));
  CHECK(case3.qbar(0.0, w0)[0] == doctest::Approx(0.41338242108266994).epsilon(1e-14));

  MatrixXd w1 = MatrixXd::Ones(1, 4);
  Dgp cn{DgpSpec{DgpKind::controlled_noise}};
  CHECK(cn.qbar(1.0, w1)[0] == doctest::Approx(0.39174096925348558).epsilon(1e-14));
}

TEST_CASE("datasets are bit-identical across draws with the same seed") {
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = 50;
  auto e1 = make_engine(44);
  auto e2 = make_engine(44);
  const auto [d1, g1] = draw_dataset(spec, e1);
  const auto [d2, g2] = draw_dataset(spec, e2);
  CHECK(d1.y == d2.y);
  CHECK(d1.a == d2.a);
  CHECK(d1.w == d2.w);
}

TEST_CASE("controlled-noise perturbation vanishes in the rate -> -inf limit") {
  DgpSpec spec;
  spec.kind = DgpKind::controlled_noise;
  Dgp dgp{spec};
  auto engine = make_engine(5);
  const MatrixXd w = dgp.draw_w(100, engine);
  auto noise_engine = make_engine(6);
  const auto [q1, q0] = perturb_controlled_noise(
      dgp, w, 1000, -std::numeric_limits<double>::infinity(), noise_engine);
  CHECK((q1 - dgp.qbar(1.0, w)).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((q0 - dgp.qbar(0.0, w)).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK_THROWS_AS(perturb_controlled_noise(dgp, w, 1000, 0.5, noise_engine),
                  ValidationError);
}

TEST_CASE("perturbation error decays like n^rate") {
  DgpSpec spec;
  spec.kind = DgpKind::controlled_noise;
  Dgp dgp{spec};
  auto engine = make_engine(7);
  const MatrixXd w = dgp.draw_w(30000, engine);
  const VectorXd b0 = dgp.blip(w);

  std::vector<double> log_n, log_rms;
  for (int n : {250, 1000, 4000}) {
    auto noise_engine = make_engine(8, static_cast<std::uint64_t>(n));
    const auto [q1, q0] = perturb_controlled_noise(dgp, w, n, -1.0 / 3.0, noise_engine);
    const VectorXd b = q1 - q0;
    const double rms = std::sqrt((b - b0).array().square().mean());
    log_n.push_back(std::log(static_cast<double>(n)));
    log_rms.push_back(std::log(rms));
  }
  // Least-squares slope over the three points.
  const double mx = (log_n[0] + log_n[1] + log_n[2]) / 3.0;
  const double my = (log_rms[0] + log_rms[1] + log_rms[2]) / 3.0;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < 3; ++k) {
    sxy += (log_n[k] - mx) * (log_rms[k] - my);
    sxx += (log_n[k] - mx) * (log_n[k] - mx);
  }
  const double slope = sxy / sxx;
  CHECK(slope == doctest::Approx(-1.0 / 3.0).epsilon(0.15));
  CHECK(std::abs(slope + 1.0 / 3.0) <= 0.05);
}

TEST_CASE("truth oracle reproduces the known blip moments") {
  DgpSpec cn;
  cn.kind = DgpKind::controlled_noise;
  const auto t_cn = true_params(cn, 2'000'000, 101);
  // Exact quadrature of the blip moments gives VTE = 0.050584.
  CHECK(std::abs(t_cn.vte0 - 0.050584) <= 0.001);
  CHECK(t_cn.mc_se_vte < 2e-4);

  DgpSpec c1;
  c1.kind = DgpKind::case1;
  const auto t_c1 = true_params(c1, 8'000'000, 102);
  CHECK(std::abs(t_c1.ate0 - 0.078) <= 0.001);
  CHECK(std::abs(t_c1.vte0 - 0.085) <= 0.001);
  // Exact quadrature: ATE = 0.077177, VTE = 0.085180.
  CHECK(std::abs(t_c1.ate0 - 0.077177) <= 4.0 * t_c1.mc_se_ate);
  CHECK(std::abs(t_c1.vte0 - 0.085180) <= 4.0 * t_c1.mc_se_vte);

  DgpSpec ws;
  ws.kind = DgpKind::wellspec;  // defaults (a,b) = (3,1)
  const auto t_ws = true_params(ws, 2'000'000, 103);
  CHECK(std::abs(t_ws.vte0 - 0.0241) <= 0.001);
}

TEST_CASE("oracle estimator sanity-checks the harness") {
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 120;
  SimEstimator oracle;
  oracle.name = "oracle";
  oracle.kind = SimEstimatorKind::oracle;
  const TrueParams truth = true_params(spec, 200000, 9);
  const auto result = run_replicates(spec, {oracle}, 20, 0.05, 1, 3, truth);
  REQUIRE(result.metrics.size() == 1);
  CHECK(result.metrics[0].bias == doctest::Approx(0.0));
  CHECK(result.metrics[0].coverage == 1.0);
  CHECK(result.metrics[0].reps_ok == 20);
}

TEST_CASE("metrics satisfy mse = var + bias^2") {
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 150;
  SimEstimator plugin;
  plugin.name = "lr-plugin";
  plugin.kind = SimEstimatorKind::lr_plugin;
  const TrueParams truth = true_params(spec, 200000, 9);
  const auto result = run_replicates(spec, {plugin}, 12, 0.05, 1, 5, truth);
  const auto& row = result.metrics[0];
  CHECK(row.mse == doctest::Approx(row.var + row.bias * row.bias).epsilon(1e-12));
}

TEST_CASE("parallel replicate runs are identical to serial ones") {
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = 200;
  SimEstimator plugin;
  plugin.name = "lr-plugin";
  plugin.kind = SimEstimatorKind::lr_plugin;
  const TrueParams truth = true_params(spec, 200000, 9);
  const auto serial = run_replicates(spec, {plugin}, 8, 0.05, 1, 99, truth);
  const auto parallel = run_replicates(spec, {plugin}, 8, 0.05, 2, 99, truth);
  REQUIRE(serial.raw.size() == parallel.raw.size());
  for (std::size_t i = 0; i < serial.raw.size(); ++i) {
    CHECK(serial.raw[i].est_vte == parallel.raw[i].est_vte);
    CHECK(serial.raw[i].ci_lo == parallel.raw[i].ci_lo);
  }
  CHECK(metrics_to_csv(serial.metrics) == metrics_to_csv(parallel.metrics));
}

TEST_CASE("failing estimators are excluded and counted") {
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 100;
  SimEstimator broken;
  broken.name = "broken";
  broken.kind = SimEstimatorKind::tmle;  // no q_library: nuisance fit throws
  const TrueParams truth = true_params(spec, 200000, 9);
  const auto result = run_replicates(spec, {broken}, 3, 0.05, 1, 7, truth);
  CHECK(result.metrics[0].reps_ok == 0);
  for (const auto& rec : result.raw) {
    CHECK_FALSE(rec.ok);
    CHECK_FALSE(rec.error.empty());
  }
  CHECK(raw_to_csv(result.raw) ==
        "replicate,estimator,est_ate,est_vte,ci_lo,ci_hi,covered\n");
}

TEST_CASE("campaign config validation names the offending field") {
  nlohmann::json good = {
      {"spec", {{"kind", "case1"}}},
      {"estimators", {{{"kind", "lr-plugin"}}}},
      {"reps", 3},
      {"n_grid", {100}},
      {"seed", 5},
  };
  CHECK_NOTHROW(parse_campaign_config(good));

  auto no_reps = good;
  no_reps.erase("reps");
  try {
    parse_campaign_config(no_reps);
    FAIL("expected a schema error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("reps") != std::string::npos);
  }

  auto bad_kind = good;
  bad_kind["estimators"][0]["kind"] = "magic";
  CHECK_THROWS_AS(parse_campaign_config(bad_kind), ValidationError);

  auto needs_library = good;
  needs_library["estimators"][0]["kind"] = "tmle";
  CHECK_THROWS_AS(parse_campaign_config(needs_library), ValidationError);
}

TEST_CASE("noise_initial is rejected outside the controlled-noise dgp") {
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = 100;
  SimEstimator est;
  est.name = "bad";
  est.kind = SimEstimatorKind::tmle;
  est.noise_initial = true;
  est.use_true_g = true;
  const TrueParams truth = true_params(spec, 200000, 9);
  const auto result = run_replicates(spec, {est}, 2, 0.05, 1, 7, truth);
  CHECK(result.metrics[0].reps_ok == 0);
}

#include <doctest.h>

#include <random>

#include "blipvar/errors.hpp"
#include "blipvar/pipeline.hpp"
#include "blipvar/simlab.hpp"

using namespace blipvar;

TEST_CASE("estimator kinds round-trip through strings") {
  for (auto kind :
       {EstimatorKind::tmle, EstimatorKind::cv_tmle, EstimatorKind::lr_plugin}) {
    CHECK(estimator_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(estimator_kind_from_string("ipw"), ValidationError);
}

TEST_CASE("TMLE and CV-TMLE coincide given the same full-sample initial fits") {
  std::mt19937_64 engine(6);
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 400;
  const auto [data, dgp] = draw_dataset(spec, engine);

  NuisancePredictions nuisance;
  nuisance.qbar1 = dgp.qbar(1.0, data.w);
  nuisance.qbar0 = dgp.qbar(0.0, data.w);
  nuisance.g1 = dgp.g1(data.w);
  nuisance.mode = NuisanceMode::full_sample;

  const auto tmle = run_targeted_estimator(data, nuisance, EstimatorKind::tmle, {});
  const auto cv = run_targeted_estimator(data, nuisance, EstimatorKind::cv_tmle, {});
  CHECK(tmle.psi1_s == cv.psi1_s);
  CHECK(tmle.psi2_s == cv.psi2_s);
  CHECK(tmle.fit.iterations == cv.fit.iterations);
  CHECK(tmle.eic.sd1 == cv.eic.sd1);
}

TEST_CASE("cross-fitting needs n >= 2 folds of data") {
  std::mt19937_64 engine(7);
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 15;
  const auto [data, dgp] = draw_dataset(spec, engine);
  EstimatorOptions options;
  options.kind = EstimatorKind::cv_tmle;
  options.folds = 10;
  options.nuisance.q_library = {LearnerSpec{LearnerKind::mean}};
  options.nuisance.g_library = {LearnerSpec{LearnerKind::mean}};
  CHECK_THROWS_AS(run_estimator(data, options), ValidationError);
}

TEST_CASE("end-to-end estimate produces a coherent report") {
  std::mt19937_64 engine(8);
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 600;
  const auto [data, dgp] = draw_dataset(spec, engine);

  EstimatorOptions options;
  options.kind = EstimatorKind::cv_tmle;
  options.folds = 5;
  options.seed = 31;
  options.nuisance.q_library = {LearnerSpec{LearnerKind::mean},
                                LearnerSpec{LearnerKind::logistic_main}};
  options.nuisance.g_library = {LearnerSpec{LearnerKind::logistic_main}};

  ReportOptions report_options;
  report_options.include_sqrt = true;
  report_options.sim_draws = 100000;
  report_options.seed = 31;
  const auto report = estimate_with_report(data, options, report_options);
  CHECK(report.estimator == "cv-tmle");
  CHECK(report.n == 600);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[1].est >= 0.0);
  CHECK(report.rows[1].se > 0.0);
}

TEST_CASE("estimates back-scale through the outcome range") {
  std::mt19937_64 engine(9);
  DgpSpec spec;
  spec.kind = DgpKind::wellspec;
  spec.n = 300;
  auto [data, dgp] = draw_dataset(spec, engine);

  NuisancePredictions nuisance;
  nuisance.qbar1 = dgp.qbar(1.0, data.w);
  nuisance.qbar0 = dgp.qbar(0.0, data.w);
  nuisance.g1 = dgp.g1(data.w);

  auto scaled_data = data;
  scaled_data.scale = OutcomeScale{0.0, 10.0, true};
  const auto unit = run_targeted_estimator(data, nuisance, EstimatorKind::tmle, {});
  const auto scaled =
      run_targeted_estimator(scaled_data, nuisance, EstimatorKind::tmle, {});
  CHECK(scaled.estimates().ate == doctest::Approx(10.0 * unit.estimates().ate));
  CHECK(scaled.estimates().vte == doctest::Approx(100.0 * unit.estimates().vte));
  CHECK(scaled.estimates().se_vte ==
        doctest::Approx(100.0 * unit.estimates().se_vte));
}

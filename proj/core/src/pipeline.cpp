#include "blipvar/pipeline.hpp"

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/rng.hpp"

namespace blipvar {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::tmle: return "tmle";
    case EstimatorKind::cv_tmle: return "cv-tmle";
    case EstimatorKind::lr_plugin: return "lr-plugin";
  }
  return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& text) {
  if (text == "tmle") return EstimatorKind::tmle;
  if (text == "cv-tmle") return EstimatorKind::cv_tmle;
  if (text == "lr-plugin") return EstimatorKind::lr_plugin;
  throw ValidationError("unknown estimator: " + text);
}

EstimationResult run_targeted_estimator(const ObservedDataset& data,
                                        const NuisancePredictions& nuisance,
                                        EstimatorKind kind,
                                        const TargetingOptions& targeting) {
  EstimationResult result;
  result.kind = kind;
  result.scale = data.scale;
  result.n = data.n();
  result.fit = run_targeting(data, nuisance, targeting);
  result.eic = evaluate_eic(data, result.fit.qbar1_star, result.fit.qbar0_star,
                            result.fit.qbarA_star, nuisance.g1);
  result.psi1_s = result.eic.psi1_hat;
  result.psi2_s = result.eic.psi2_hat;
  return result;
}

EstimationResult run_estimator(const ObservedDataset& data,
                               const EstimatorOptions& options) {
  validate(data);
  if (options.kind == EstimatorKind::lr_plugin) {
    PluginFit fit = fit_plugin(data);
    EstimationResult result;
    result.kind = options.kind;
    result.scale = data.scale;
    result.n = data.n();
    result.psi1_s = fit.psi1;
    result.psi2_s = fit.psi2;
    result.eic.d1 = fit.ic_psi.col(0);
    result.eic.d2 = fit.ic_psi.col(1);
    result.eic.mean1 = result.eic.d1.mean();
    result.eic.mean2 = result.eic.d2.mean();
    result.eic.sd1 = sample_sd(result.eic.d1);
    result.eic.sd2 = sample_sd(result.eic.d2);
    result.eic.psi1_hat = fit.psi1;
    result.eic.psi2_hat = fit.psi2;
    return result;
  }

  const bool cross_fit = options.kind == EstimatorKind::cv_tmle;
  std::optional<FoldPlan> folds;
  if (cross_fit) {
    if (data.n() < 2 * options.folds) {
      throw ValidationError("run_estimator: need n >= 2 * folds for cross-fitting");
    }
    folds = make_folds(data.n(), options.folds, substream(options.seed, 0));
  }
  const auto nuisance = fit_nuisance(
      data, options.nuisance,
      cross_fit ? NuisanceMode::cross_fitted : NuisanceMode::full_sample, folds,
      substream(options.seed, 1));
  return run_targeted_estimator(data, nuisance, options.kind, options.targeting);
}

EstimateReport estimate_with_report(const ObservedDataset& data,
                                    const EstimatorOptions& options,
                                    const ReportOptions& report_options) {
  const auto result = run_estimator(data, options);
  ReportOptions opts = report_options;
  opts.estimator_tag = to_string(options.kind);
  return build_report(result.eic, result.psi1_s, result.psi2_s, result.n, result.scale,
                      opts);
}

}  // namespace blipvar

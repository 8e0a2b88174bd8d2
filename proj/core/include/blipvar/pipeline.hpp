#pragma once

#include <string>

#include "blipvar/dataset.hpp"
#include "blipvar/inference.hpp"
#include "blipvar/nuisance.hpp"
#include "blipvar/plugin_lr.hpp"
#include "blipvar/targeting.hpp"

namespace blipvar {

enum class EstimatorKind { tmle, cv_tmle, lr_plugin };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& text);

struct EstimatorOptions {
  EstimatorKind kind = EstimatorKind::cv_tmle;
  NuisanceSpec nuisance;
  int folds = 10;  // cross-fitting folds (cv-tmle only)
  TargetingOptions targeting;
  std::uint64_t seed = 1;
};

// Everything downstream inference needs, in scaled-outcome units; accessors
// apply the back-scaling.
struct EstimationResult {
  EstimatorKind kind = EstimatorKind::cv_tmle;
  double psi1_s = 0.0;  // ATE on the scaled outcome
  double psi2_s = 0.0;  // VTE on the scaled outcome
  EicEvaluation eic;    // scaled units
  OutcomeScale scale;
  long n = 0;
  TargetedFit fit;  // tmle / cv-tmle diagnostics; empty for lr-plugin

  UnscaledEstimates estimates() const {
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    return unscale_estimates(psi1_s, psi2_s, eic.sd1 / sqrt_n, eic.sd2 / sqrt_n, scale);
  }
};

// Ingestion happens upstream; this runs nuisance -> targeting -> EIC for the
// TMLE flavors and the parametric plug-in otherwise. Beyond the provenance of
// the initial predictions (cross-fitted vs full-sample), TMLE and CV-TMLE
// share the identical targeting path.
EstimationResult run_estimator(const ObservedDataset& data,
                               const EstimatorOptions& options);

// Same, from externally supplied initial predictions (the controlled-noise
// experiments feed synthetic initial estimates straight into targeting).
EstimationResult run_targeted_estimator(const ObservedDataset& data,
                                        const NuisancePredictions& nuisance,
                                        EstimatorKind kind,
                                        const TargetingOptions& targeting);

EstimateReport estimate_with_report(const ObservedDataset& data,
                                    const EstimatorOptions& options,
                                    const ReportOptions& report_options);

}  // namespace blipvar

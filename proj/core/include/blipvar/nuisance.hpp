#pragma once

#include <functional>
#include <optional>

#include "blipvar/dataset.hpp"
#include "blipvar/folds.hpp"
#include "blipvar/learners.hpp"

namespace blipvar {

enum class NuisanceMode { full_sample, cross_fitted };

// Evaluates P(A=1|W) row-wise on a covariate matrix.
using PropensityFn = std::function<VectorXd(const MatrixXd&)>;

struct NuisancePredictions {
  VectorXd qbar1;  // predictions at a = 1
  VectorXd qbar0;  // predictions at a = 0
  VectorXd g1;     // P(A=1|W), truncated to [g_trunc, 1-g_trunc]
  NuisanceMode mode = NuisanceMode::full_sample;
  std::optional<FoldPlan> fold_plan;
  bool g_known = false;
  double g_trunc = 0.01;

  VectorXd qbar_at(const VectorXd& a) const {
    return (a.array() * qbar1.array() + (1.0 - a.array()) * qbar0.array()).matrix();
  }
};

struct NuisanceSpec {
  std::vector<LearnerSpec> q_library;
  std::vector<LearnerSpec> g_library;
  std::optional<PropensityFn> known_g;  // bypasses the g fit entirely
  double g_trunc = 0.01;
  int ensemble_folds = 10;  // inner CV folds for stacking weights
};

// Initial estimates of the outcome model at both arms and of the propensity.
// full_sample fits on all n and predicts on all n; cross_fitted predicts each
// fold with models trained on its complement. In cross-fitted mode a fold
// plan is required, and the dataset must satisfy n >= 2v.
NuisancePredictions fit_nuisance(const ObservedDataset& data, const NuisanceSpec& spec,
                                 NuisanceMode mode,
                                 const std::optional<FoldPlan>& folds,
                                 std::uint64_t seed);

}  // namespace blipvar

#include "blipvar/nuisance.hpp"

#include <algorithm>

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/rng.hpp"

namespace blipvar {

namespace {

// Q regresses y on (a, w); counterfactual predictions pin the first column.
MatrixXd q_features(const VectorXd& a, const MatrixXd& w) {
  MatrixXd x(w.rows(), w.cols() + 1);
  x.col(0) = a;
  x.rightCols(w.cols()) = w;
  return x;
}

MatrixXd rows_of(const MatrixXd& m, const std::vector<int>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = m.row(idx[r]);
  return out;
}

VectorXd entries_of(const VectorXd& v, const std::vector<int>& idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
  return out;
}

VectorXd truncate_propensity(VectorXd g, double g_trunc) {
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    g[i] = std::clamp(g[i], g_trunc, 1.0 - g_trunc);
  }
  return g;
}

int inner_folds(int requested, int n_train) {
  return std::max(2, std::min(requested, n_train / 2));
}

}  // namespace

NuisancePredictions fit_nuisance(const ObservedDataset& data, const NuisanceSpec& spec,
                                 NuisanceMode mode,
                                 const std::optional<FoldPlan>& folds,
                                 std::uint64_t seed) {
  validate(data);
  if (spec.q_library.empty()) {
    throw ValidationError("fit_nuisance: empty outcome-model library");
  }
  if (!spec.known_g && spec.g_library.empty()) {
    throw ValidationError("fit_nuisance: no propensity library and no known g");
  }
  if (!(spec.g_trunc > 0.0 && spec.g_trunc < 0.5)) {
    throw ValidationError("fit_nuisance: g_trunc must be in (0, 0.5)");
  }

  const int n = data.n();
  NuisancePredictions out;
  out.mode = mode;
  out.g_trunc = spec.g_trunc;
  out.qbar1.resize(n);
  out.qbar0.resize(n);
  out.g1.resize(n);

  const MatrixXd x_obs = q_features(data.a, data.w);
  const MatrixXd x_arm1 = q_features(VectorXd::Ones(n), data.w);
  const MatrixXd x_arm0 = q_features(VectorXd::Zero(n), data.w);

  if (mode == NuisanceMode::full_sample) {
    const int v = inner_folds(spec.ensemble_folds, n);
    const auto q_fit = fit_ensemble(x_obs, data.y, spec.q_library, v,
                                    substream(seed, 1));
    out.qbar1 = predict(q_fit, x_arm1);
    out.qbar0 = predict(q_fit, x_arm0);
    if (spec.known_g) {
      out.g_known = true;
      out.g1 = truncate_propensity((*spec.known_g)(data.w), spec.g_trunc);
    } else {
      const auto g_fit = fit_ensemble(data.w, data.a, spec.g_library, v,
                                      substream(seed, 2));
      out.g1 = truncate_propensity(predict(g_fit, data.w), spec.g_trunc);
    }
    return out;
  }

  // Cross-fitted: each subject predicted by models trained without its fold.
  if (!folds) {
    throw ValidationError("fit_nuisance: cross-fitted mode requires a fold plan");
  }
  const FoldPlan& plan = *folds;
  if (static_cast<int>(plan.assignment.size()) != n) {
    throw ValidationError("fit_nuisance: fold plan length mismatch");
  }
  if (n < 2 * plan.v) {
    throw ValidationError("fit_nuisance: need n >= 2 folds worth of data");
  }

  if (spec.known_g) {
    out.g_known = true;
    out.g1 = truncate_propensity((*spec.known_g)(data.w), spec.g_trunc);
  }

  for (int f = 0; f < plan.v; ++f) {
    const auto train = plan.training_rows(f);
    const auto valid = plan.validation_rows(f);
    const MatrixXd xt = rows_of(x_obs, train);
    const VectorXd yt = entries_of(data.y, train);
    const int v_inner = inner_folds(spec.ensemble_folds, static_cast<int>(train.size()));

    const auto q_fit = fit_ensemble(xt, yt, spec.q_library, v_inner,
                                    substream(seed, 10 + 2 * f));
    const VectorXd q1 = predict(q_fit, rows_of(x_arm1, valid));
    const VectorXd q0 = predict(q_fit, rows_of(x_arm0, valid));
    for (std::size_t r = 0; r < valid.size(); ++r) {
      out.qbar1[valid[r]] = q1[r];
      out.qbar0[valid[r]] = q0[r];
    }
    if (!spec.known_g) {
      const auto g_fit = fit_ensemble(rows_of(data.w, train), entries_of(data.a, train),
                                      spec.g_library, v_inner,
                                      substream(seed, 11 + 2 * f));
      const VectorXd g = predict(g_fit, rows_of(data.w, valid));
      for (std::size_t r = 0; r < valid.size(); ++r) {
        out.g1[valid[r]] = std::clamp(g[r], spec.g_trunc, 1.0 - spec.g_trunc);
      }
    }
  }
  out.fold_plan = plan;
  return out;
}

}  // namespace blipvar

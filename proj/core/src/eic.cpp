#include "blipvar/eic.hpp"

#include <cmath>

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"

namespace blipvar {

CleverCovariates clever_covariates(const VectorXd& qbar1, const VectorXd& qbar0,
                                   const VectorXd& g1, const VectorXd& a) {
  const Eigen::Index n = a.size();
  if (qbar1.size() != n || qbar0.size() != n || g1.size() != n) {
    throw ValidationError("clever_covariates: size mismatch");
  }
  CleverCovariates cc;
  cc.h1.resize(n);
  cc.h2.resize(n);
  const VectorXd b = qbar1 - qbar0;
  const double bbar = b.mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = g1[i];
    if (!(g > 0.0 && g < 1.0)) {
      throw ValidationError("clever_covariates: g must lie in (0,1)");
    }
    const double g_obs = a[i] == 1.0 ? g : 1.0 - g;
    cc.h1[i] = (2.0 * a[i] - 1.0) / g_obs;
    cc.h2[i] = 2.0 * (b[i] - bbar) * cc.h1[i];
  }
  return cc;
}

EicEvaluation evaluate_eic(const VectorXd& y, const VectorXd& a, const VectorXd& qbar1,
                           const VectorXd& qbar0, const VectorXd& qbarA,
                           const VectorXd& g1) {
  const Eigen::Index n = y.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double expected = a[i] * qbar1[i] + (1.0 - a[i]) * qbar0[i];
    if (std::abs(qbarA[i] - expected) > 1e-12) {
      throw ValidationError("evaluate_eic: qbarA inconsistent with (qbar1, qbar0, a)");
    }
  }
  const auto cc = clever_covariates(qbar1, qbar0, g1, a);
  const VectorXd b = qbar1 - qbar0;
  const double bbar = b.mean();
  const VectorXd centered = (b.array() - bbar).matrix();
  const double psi2 = centered.array().square().mean();
  const VectorXd resid = y - qbarA;

  EicEvaluation eval;
  eval.d1 = (cc.h1.array() * resid.array() + centered.array()).matrix();
  eval.d2 = (cc.h2.array() * resid.array() + centered.array().square() - psi2).matrix();
  eval.mean1 = eval.d1.mean();
  eval.mean2 = eval.d2.mean();
  eval.sd1 = sample_sd(eval.d1);
  eval.sd2 = sample_sd(eval.d2);
  eval.psi1_hat = bbar;
  eval.psi2_hat = psi2;
  return eval;
}

EicEvaluation evaluate_eic(const ObservedDataset& data, const VectorXd& qbar1,
                           const VectorXd& qbar0, const VectorXd& qbarA,
                           const VectorXd& g1) {
  return evaluate_eic(data.y, data.a, qbar1, qbar0, qbarA, g1);
}

RemainderR2 remainder_r2(const CondMeanFns& estimated, const TruthFns& truth,
                         long mc_draws, std::uint64_t seed) {
  if (mc_draws < 1) throw ValidationError("remainder_r2: mc_draws must be >= 1");
  const MatrixXd w = truth.draw_w(static_cast<int>(mc_draws), seed);

  const VectorXd q1 = estimated.qbar1(w);
  const VectorXd q0 = estimated.qbar0(w);
  const VectorXd g = estimated.g1(w);
  const VectorXd q1_0 = truth.means.qbar1(w);
  const VectorXd q0_0 = truth.means.qbar0(w);
  const VectorXd g_0 = truth.means.g1(w);

  const VectorXd b = q1 - q0;
  const VectorXd b0 = q1_0 - q0_0;
  const double eb = b.mean();
  const double eb0 = b0.mean();

  // Cross term of the remainder expansion; vanishes when g = g0.
  const VectorXd bracket =
      ((g_0.array() - g.array()) / g.array() * (q1_0.array() - q1.array()) -
       ((1.0 - g_0.array()) - (1.0 - g.array())) / (1.0 - g.array()) *
           (q0_0.array() - q0.array()))
          .matrix();

  RemainderR2 r2;
  r2.r2_ate = bracket.mean();
  const double cross = (2.0 * (b.array() - eb) * bracket.array()).mean();
  const double sq = (b0 - b).array().square().mean();
  r2.r2_vte = (eb0 - eb) * (eb0 - eb) + cross - sq;
  return r2;
}

}  // namespace blipvar

#include "blipvar/targeting.hpp"

#include <cmath>

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"

namespace blipvar {

namespace {

struct EicMean {
  double pn1 = 0.0;  // (1/n) sum H1 (y - qbarA); the W-terms average to zero
  double pn2 = 0.0;
  double norm = 0.0;
};

EicMean eic_mean(const VectorXd& qbar1, const VectorXd& qbar0, const VectorXd& g1,
                 const VectorXd& a, const VectorXd& y) {
  const Eigen::Index n = y.size();
  const VectorXd b = qbar1 - qbar0;
  const double bbar = b.mean();
  EicMean m;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g_obs = a[i] == 1.0 ? g1[i] : 1.0 - g1[i];
    const double h1 = (2.0 * a[i] - 1.0) / g_obs;
    const double resid = y[i] - (a[i] == 1.0 ? qbar1[i] : qbar0[i]);
    m.pn1 += h1 * resid;
    m.pn2 += 2.0 * (b[i] - bbar) * h1 * resid;
  }
  m.pn1 /= static_cast<double>(n);
  m.pn2 /= static_cast<double>(n);
  m.norm = std::hypot(m.pn1, m.pn2);
  return m;
}

// Logit shift for both arms along the submodel direction, scaled by step.
void apply_step(VectorXd& eta1, VectorXd& eta0, const VectorXd& qbar1,
                const VectorXd& qbar0, const VectorXd& g1, double dir1, double dir2,
                double step) {
  const VectorXd b = qbar1 - qbar0;
  const double bbar = b.mean();
  for (Eigen::Index i = 0; i < eta1.size(); ++i) {
    const double centered2 = 2.0 * (b[i] - bbar);
    const double h1_arm1 = 1.0 / g1[i];
    const double h1_arm0 = -1.0 / (1.0 - g1[i]);
    eta1[i] += step * h1_arm1 * (dir1 + centered2 * dir2);
    eta0[i] += step * h1_arm0 * (dir1 + centered2 * dir2);
  }
}

// Allocation-free per-iteration statistics: means and sample SDs of the two
// EIC components of the current fit.
struct IterStats {
  double mean1, mean2, sd1, sd2, norm;
};

IterStats iter_stats(const VectorXd& q1, const VectorXd& q0, const VectorXd& g1,
                     const VectorXd& a, const VectorXd& y, VectorXd& d1buf,
                     VectorXd& d2buf) {
  const Eigen::Index n = y.size();
  double bbar = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) bbar += q1[i] - q0[i];
  bbar /= static_cast<double>(n);
  double psi2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = q1[i] - q0[i] - bbar;
    psi2 += c * c;
  }
  psi2 /= static_cast<double>(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double centered = q1[i] - q0[i] - bbar;
    const double g_obs = a[i] == 1.0 ? g1[i] : 1.0 - g1[i];
    const double h1 = (2.0 * a[i] - 1.0) / g_obs;
    const double resid = y[i] - (a[i] == 1.0 ? q1[i] : q0[i]);
    d1buf[i] = h1 * resid + centered;
    d2buf[i] = 2.0 * centered * h1 * resid + centered * centered - psi2;
  }
  IterStats s{};
  s.mean1 = d1buf.mean();
  s.mean2 = d2buf.mean();
  s.sd1 = sample_sd(d1buf);
  s.sd2 = sample_sd(d2buf);
  s.norm = std::hypot(s.mean1, s.mean2);
  return s;
}

}  // namespace

double empirical_loss(const VectorXd& y, const VectorXd& qbarA) {
  return quasibinomial_loss(y, qbarA);
}

std::pair<VectorXd, VectorXd> targeting_step(const VectorXd& qbar1,
                                             const VectorXd& qbar0,
                                             const VectorXd& g1, const VectorXd& a,
                                             const VectorXd& y, double d_eps) {
  if (d_eps <= 0.0) throw ValidationError("targeting_step: d_eps must be positive");
  const auto m = eic_mean(qbar1, qbar0, g1, a, y);
  if (m.norm == 0.0) {
    throw NumericError("targeting_step: zero EIC norm; targeting should have stopped");
  }
  VectorXd eta1 = logit_vec(qbar1);
  VectorXd eta0 = logit_vec(qbar0);
  apply_step(eta1, eta0, qbar1, qbar0, g1, m.pn1 / m.norm, m.pn2 / m.norm, d_eps);
  return {expit_vec(eta1), expit_vec(eta0)};
}

TargetedFit run_targeting(const ObservedDataset& data,
                          const NuisancePredictions& nuisance,
                          const TargetingOptions& options) {
  if (options.d_eps <= 0.0) throw ValidationError("run_targeting: d_eps must be > 0");
  const Eigen::Index n = data.n();
  const VectorXd& a = data.a;
  const VectorXd& y = data.y;
  const VectorXd& g1 = nuisance.g1;

  VectorXd q1 = clip_probs(nuisance.qbar1);
  VectorXd q0 = clip_probs(nuisance.qbar0);
  VectorXd eta1 = logit_vec(q1);
  VectorXd eta0 = logit_vec(q0);
  auto qbar_obs = [&](const VectorXd& v1, const VectorXd& v0) {
    return (a.array() * v1.array() + (1.0 - a.array()) * v0.array()).matrix();
  };

  TargetedFit fit;
  VectorXd qA = qbar_obs(q1, q0);
  double loss = empirical_loss(y, qA);
  fit.loss_trace.push_back(loss);

  VectorXd d1buf(n), d2buf(n);
  VectorXd eta1_next(n), eta0_next(n);
  const double nd = static_cast<double>(n);
  int m = 0;
  while (true) {
    const auto stats = iter_stats(q1, q0, g1, a, y, d1buf, d2buf);
    fit.eic_norm_trace.push_back(stats.norm);

    const bool within =
        std::abs(stats.mean1) < stats.sd1 / nd && std::abs(stats.mean2) < stats.sd2 / nd;
    if (within || stats.norm == 0.0) {
      fit.stopped_reason = StopReason::tolerance_met;
      break;
    }
    if (m >= options.max_iter) {
      fit.stopped_reason = StopReason::max_iter;
      break;
    }

    eta1_next = eta1;
    eta0_next = eta0;
    apply_step(eta1_next, eta0_next, q1, q0, g1, stats.mean1 / stats.norm,
               stats.mean2 / stats.norm, options.d_eps);
    const VectorXd q1_next = expit_vec(eta1_next);
    const VectorXd q0_next = expit_vec(eta0_next);
    const VectorXd qA_next = qbar_obs(q1_next, q0_next);
    const double loss_next = empirical_loss(y, qA_next);

    if (loss_next > loss) {
      // Keep the last loss-improving iterate.
      fit.stopped_reason = StopReason::loss_increased;
      break;
    }
    eta1.swap(eta1_next);
    eta0.swap(eta0_next);
    q1 = q1_next;
    q0 = q0_next;
    qA = qA_next;
    loss = loss_next;
    fit.loss_trace.push_back(loss);
    ++m;
  }

  fit.qbar1_star = q1;
  fit.qbar0_star = q0;
  fit.qbarA_star = qA;
  fit.iterations = m;
  return fit;
}

ClfmCheck clfm_derivative_check(const VectorXd& qbar1, const VectorXd& qbar0,
                                const VectorXd& g1, const VectorXd& a,
                                const VectorXd& y, double d_eps) {
  if (d_eps <= 0.0) throw ValidationError("clfm check: step must be positive");
  const auto m = eic_mean(qbar1, qbar0, g1, a, y);
  ClfmCheck check;
  check.eic_norm = m.norm;
  if (m.norm == 0.0) return check;  // flat direction, slope 0

  const double dir1 = m.pn1 / m.norm;
  const double dir2 = m.pn2 / m.norm;
  auto loss_at = [&](double t) {
    VectorXd eta1 = logit_vec(qbar1);
    VectorXd eta0 = logit_vec(qbar0);
    // Path parametrized so that +t increases loss at rate ||Pn D*||.
    apply_step(eta1, eta0, qbar1, qbar0, g1, dir1, dir2, -t);
    const VectorXd q1 = expit_vec(eta1);
    const VectorXd q0 = expit_vec(eta0);
    const VectorXd qA =
        (a.array() * q1.array() + (1.0 - a.array()) * q0.array()).matrix();
    return empirical_loss(y, qA);
  };
  check.loss_slope = (loss_at(d_eps) - loss_at(-d_eps)) / (2.0 * d_eps);
  return check;
}

}  // namespace blipvar

#include "blipvar/discrete.hpp"

#include <cmath>

#include "blipvar/errors.hpp"

namespace blipvar {

DiscreteDistribution DiscreteDistribution::from_factors(const VectorXd& p_w,
                                                        const VectorXd& g1,
                                                        const VectorXd& qbar1,
                                                        const VectorXd& qbar0) {
  const int k = static_cast<int>(p_w.size());
  if (g1.size() != k || qbar1.size() != k || qbar0.size() != k) {
    throw ValidationError("DiscreteDistribution: factor length mismatch");
  }
  DiscreteDistribution dist;
  dist.n_strata = k;
  dist.atoms.reserve(4 * k);
  for (int w = 0; w < k; ++w) {
    const double q[2] = {qbar0[w], qbar1[w]};
    const double g[2] = {1.0 - g1[w], g1[w]};
    for (int a = 0; a < 2; ++a) {
      for (int y = 0; y < 2; ++y) {
        const double prob = p_w[w] * g[a] * (y == 1 ? q[a] : 1.0 - q[a]);
        dist.atoms.push_back({w, a, y, prob});
      }
    }
  }
  dist.validate();
  return dist;
}

void DiscreteDistribution::validate() const {
  if (atoms.empty()) throw ValidationError("DiscreteDistribution: empty support");
  double total = 0.0;
  std::vector<double> arm_mass(2 * n_strata, 0.0);
  for (const auto& atom : atoms) {
    if (atom.prob <= 0.0) {
      throw ValidationError("DiscreteDistribution: nonpositive atom probability");
    }
    if (atom.y != 0 && atom.y != 1) {
      throw ValidationError("DiscreteDistribution: y must be binary");
    }
    if (atom.a != 0 && atom.a != 1) {
      throw ValidationError("DiscreteDistribution: a must be binary");
    }
    if (atom.w < 0 || atom.w >= n_strata) {
      throw ValidationError("DiscreteDistribution: stratum index out of range");
    }
    total += atom.prob;
    arm_mass[2 * atom.w + atom.a] += atom.prob;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("DiscreteDistribution: probabilities do not sum to 1");
  }
  for (double mass : arm_mass) {
    if (mass <= 0.0) {
      throw ValidationError("DiscreteDistribution: positivity violated");
    }
  }
}

VectorXd DiscreteDistribution::p_w() const {
  VectorXd out = VectorXd::Zero(n_strata);
  for (const auto& atom : atoms) out[atom.w] += atom.prob;
  return out;
}

VectorXd DiscreteDistribution::g1() const {
  VectorXd arm1 = VectorXd::Zero(n_strata);
  VectorXd all = VectorXd::Zero(n_strata);
  for (const auto& atom : atoms) {
    all[atom.w] += atom.prob;
    if (atom.a == 1) arm1[atom.w] += atom.prob;
  }
  return (arm1.array() / all.array()).matrix();
}

VectorXd DiscreteDistribution::qbar(int arm) const {
  VectorXd y1 = VectorXd::Zero(n_strata);
  VectorXd all = VectorXd::Zero(n_strata);
  for (const auto& atom : atoms) {
    if (atom.a != arm) continue;
    all[atom.w] += atom.prob;
    if (atom.y == 1) y1[atom.w] += atom.prob;
  }
  return (y1.array() / all.array()).matrix();
}

VectorXd DiscreteDistribution::blip() const { return qbar(1) - qbar(0); }

std::pair<double, double> DiscreteDistribution::params() const {
  const VectorXd pw = p_w();
  const VectorXd b = blip();
  const double ate = pw.dot(b);
  const double vte = (pw.array() * (b.array() - ate).square()).sum();
  return {ate, vte};
}

std::pair<VectorXd, VectorXd> DiscreteDistribution::eic() const {
  const VectorXd b = blip();
  const VectorXd g = g1();
  const VectorXd q1 = qbar(1);
  const VectorXd q0 = qbar(0);
  const auto [ate, vte] = params();

  VectorXd d1(atoms.size()), d2(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& atom = atoms[i];
    const double g_obs = atom.a == 1 ? g[atom.w] : 1.0 - g[atom.w];
    const double qbar_obs = atom.a == 1 ? q1[atom.w] : q0[atom.w];
    const double h1 = (2.0 * atom.a - 1.0) / g_obs;
    const double resid = atom.y - qbar_obs;
    const double centered = b[atom.w] - ate;
    d1[i] = h1 * resid + centered;
    d2[i] = 2.0 * centered * h1 * resid + centered * centered - vte;
  }
  return {d1, d2};
}

DiscreteDistribution DiscreteDistribution::perturb(const VectorXd& score,
                                                   double eps) const {
  if (score.size() != static_cast<Eigen::Index>(atoms.size())) {
    throw ValidationError("perturb: score length mismatch");
  }
  DiscreteDistribution out = *this;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double factor = 1.0 + eps * score[static_cast<Eigen::Index>(i)];
    if (factor <= 0.0) {
      throw ValidationError("perturb: density leaves the simplex (1 + eps*s <= 0)");
    }
    out.atoms[i].prob = atoms[i].prob * factor;
  }
  return out;
}

PathwiseCheck pathwise_derivative_oracle(const DiscreteDistribution& p,
                                         const VectorXd& score, double eps) {
  if (eps <= 0.0) throw ValidationError("pathwise oracle: eps must be positive");
  double mean = 0.0;
  for (std::size_t i = 0; i < p.atoms.size(); ++i) {
    mean += p.atoms[i].prob * score[static_cast<Eigen::Index>(i)];
  }
  if (std::abs(mean) > 1e-12) {
    throw ValidationError("pathwise oracle: score must have mean zero under p");
  }

  const auto plus = p.perturb(score, eps);
  const auto minus = p.perturb(score, -eps);
  const auto [ate_p, vte_p] = plus.params();
  const auto [ate_m, vte_m] = minus.params();

  PathwiseCheck check;
  check.deriv_ate = (ate_p - ate_m) / (2.0 * eps);
  check.deriv_vte = (vte_p - vte_m) / (2.0 * eps);

  const auto [d1, d2] = p.eic();
  for (std::size_t i = 0; i < p.atoms.size(); ++i) {
    const double ps = p.atoms[i].prob * score[static_cast<Eigen::Index>(i)];
    check.inner_ate += ps * d1[static_cast<Eigen::Index>(i)];
    check.inner_vte += ps * d2[static_cast<Eigen::Index>(i)];
  }
  return check;
}

VectorXd center_score(const DiscreteDistribution& p, const VectorXd& raw) {
  double mean = 0.0;
  for (std::size_t i = 0; i < p.atoms.size(); ++i) {
    mean += p.atoms[i].prob * raw[static_cast<Eigen::Index>(i)];
  }
  return (raw.array() - mean).matrix();
}

DiscreteDistribution random_distribution(int max_strata, std::mt19937_64& engine) {
  std::uniform_int_distribution<int> strata_dist(1, max_strata);
  const int k = strata_dist(engine);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  VectorXd pw(k);
  for (int w = 0; w < k; ++w) pw[w] = 0.05 + unif(engine);
  pw /= pw.sum();

  VectorXd g1(k), q1(k), q0(k);
  for (int w = 0; w < k; ++w) {
    g1[w] = 0.15 + 0.7 * unif(engine);   // positivity bounded away from 0/1
    q1[w] = 0.10 + 0.8 * unif(engine);
    q0[w] = 0.10 + 0.8 * unif(engine);
  }
  return DiscreteDistribution::from_factors(pw, g1, q1, q0);
}

VectorXd random_score(const DiscreteDistribution& p, std::mt19937_64& engine) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  VectorXd raw(static_cast<Eigen::Index>(p.atoms.size()));
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw[i] = unif(engine);
  VectorXd centered = center_score(p, raw);
  const double max_abs = centered.lpNorm<Eigen::Infinity>();
  if (max_abs > 1.0) centered /= max_abs;  // keep |eps * s| << 1
  return centered;
}

}  // namespace blipvar

#pragma once

#include <Eigen/Dense>
#include <random>
#include <utility>
#include <vector>

namespace blipvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Exact finite-support distribution over (w-stratum, a, y) atoms with binary
// a and y. Used by the pathwise-derivative oracle: every functional of P is
// computed by enumeration, no estimation anywhere.
struct DiscreteDistribution {
  struct Atom {
    int w;
    int a;
    int y;
    double prob;
  };
  std::vector<Atom> atoms;
  int n_strata = 0;

  // Assembles the 4 atoms per stratum from the factorized pieces
  // p(w,a,y) = p_w(w) g(a|w) q(y|a,w).
  static DiscreteDistribution from_factors(const VectorXd& p_w, const VectorXd& g1,
                                           const VectorXd& qbar1,
                                           const VectorXd& qbar0);

  void validate() const;

  VectorXd p_w() const;
  VectorXd g1() const;           // P(A=1|w) per stratum
  VectorXd qbar(int arm) const;  // E[Y|A=arm, w] per stratum
  VectorXd blip() const;         // qbar(1) - qbar(0)

  // (ATE, VTE) evaluated exactly.
  std::pair<double, double> params() const;

  // Per-atom efficient influence curve components (aligned with atoms).
  std::pair<VectorXd, VectorXd> eic() const;

  // Density p_eps = (1 + eps * s) p; requires 1 + eps*s > 0 atom-wise.
  DiscreteDistribution perturb(const VectorXd& score, double eps) const;
};

struct PathwiseCheck {
  double deriv_ate = 0.0;   // central difference (Psi(P_eps)-Psi(P_-eps))/(2 eps)
  double deriv_vte = 0.0;
  double inner_ate = 0.0;   // exact E_p[D*_j S]
  double inner_vte = 0.0;
};

// Riesz-representation check: the pathwise derivative of (ATE, VTE) along the
// score direction must match the inner product with the influence curve.
PathwiseCheck pathwise_derivative_oracle(const DiscreteDistribution& p,
                                         const VectorXd& score, double eps);

// Centers a raw per-atom function to mean zero under p.
VectorXd center_score(const DiscreteDistribution& p, const VectorXd& raw);

// Random positivity-respecting distribution with at most max_strata strata,
// and a bounded mean-zero score; generators for the oracle test batteries.
DiscreteDistribution random_distribution(int max_strata, std::mt19937_64& engine);
VectorXd random_score(const DiscreteDistribution& p, std::mt19937_64& engine);

}  // namespace blipvar

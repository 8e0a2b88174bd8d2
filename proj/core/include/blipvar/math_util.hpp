#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace blipvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Predictions are kept strictly inside (0,1); also applied before any log().
inline constexpr double kProbClip = 1e-6;

inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clip_prob(double p) {
  return std::clamp(p, kProbClip, 1.0 - kProbClip);
}

inline VectorXd expit_vec(const VectorXd& x) {
  VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = expit(x[i]);
  return out;
}

inline VectorXd logit_vec(const VectorXd& p) {
  VectorXd out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) out[i] = logit(clip_prob(p[i]));
  return out;
}

inline VectorXd clip_probs(const VectorXd& p) {
  return p.array().min(1.0 - kProbClip).max(kProbClip).matrix();
}

// Sample standard deviation (n-1 denominator); 0 for n < 2.
double sample_sd(const VectorXd& x);

// Sample skewness m3 / m2^{3/2} with central moments over n.
double sample_skewness(const VectorXd& x);

// Pearson correlation; 0 when either side is degenerate.
double sample_correlation(const VectorXd& x, const VectorXd& y);

// Standard normal CDF.
double normal_cdf(double x);

// Standard normal quantile, Wichura's AS 241 (double precision).
double normal_quantile(double p);

// Mean quasibinomial negative log-likelihood -[y log q + (1-y) log(1-q)];
// predictions clipped to [1e-6, 1-1e-6] before the logs.
double quasibinomial_loss(const VectorXd& y, const VectorXd& q);

}  // namespace blipvar

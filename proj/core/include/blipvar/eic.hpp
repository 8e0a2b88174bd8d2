#pragma once

#include <cstdint>
#include <functional>

#include "blipvar/dataset.hpp"

namespace blipvar {

// H1(A,W) = (2A-1)/g(A|W); H2(A,W) = 2(b(W) - mean b) H1(A,W), with
// b = qbar1 - qbar0 and the sample mean as centering constant.
struct CleverCovariates {
  VectorXd h1;
  VectorXd h2;
};

CleverCovariates clever_covariates(const VectorXd& qbar1, const VectorXd& qbar0,
                                   const VectorXd& g1, const VectorXd& a);

// Per-subject efficient influence curve components for (ATE, VTE):
//   d1_i = H1_i (y_i - qbarA_i) + b_i - bbar
//   d2_i = H2_i (y_i - qbarA_i) + (b_i - bbar)^2 - psi2_hat
// The centered W-terms average to zero, so mean1/mean2 equal the means of the
// residual terms.
struct EicEvaluation {
  VectorXd d1;
  VectorXd d2;
  double mean1 = 0.0;
  double mean2 = 0.0;
  double sd1 = 0.0;  // sample standard deviations
  double sd2 = 0.0;
  double psi1_hat = 0.0;  // mean of b
  double psi2_hat = 0.0;  // mean of (b - bbar)^2
};

EicEvaluation evaluate_eic(const VectorXd& y, const VectorXd& a, const VectorXd& qbar1,
                           const VectorXd& qbar0, const VectorXd& qbarA,
                           const VectorXd& g1);

EicEvaluation evaluate_eic(const ObservedDataset& data, const VectorXd& qbar1,
                           const VectorXd& qbar0, const VectorXd& qbarA,
                           const VectorXd& g1);

// Conditional-mean functions of W used by the remainder diagnostic.
struct CondMeanFns {
  std::function<VectorXd(const MatrixXd&)> qbar1;
  std::function<VectorXd(const MatrixXd&)> qbar0;
  std::function<VectorXd(const MatrixXd&)> g1;
};

struct TruthFns {
  CondMeanFns means;
  std::function<MatrixXd(int, std::uint64_t)> draw_w;  // n draws from p_W
};

struct RemainderR2 {
  double r2_ate = 0.0;
  double r2_vte = 0.0;
};

// Truth-requiring diagnostic of the second-order remainder, Monte Carlo over
// the covariate law. For the ATE it is the doubly-robust cross term; for the
// VTE it adds (E0 b0 - E b)^2 and subtracts E0 (b0 - b)^2, the term that
// breaks double robustness.
RemainderR2 remainder_r2(const CondMeanFns& estimated, const TruthFns& truth,
                         long mc_draws = 1'000'000, std::uint64_t seed = 1);

}  // namespace blipvar

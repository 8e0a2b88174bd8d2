#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace blipvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class LearnerKind {
  mean,
  logistic_main,
  logistic_main_interactions,
  logistic_l1,
  logistic_l2,
  knn,
  polynomial_logistic,
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::logistic_main;
  int k = 25;            // knn neighbourhood size, k >= 1
  int degree = 2;        // polynomial-logistic, in {1,2,3}
  double lambda = 1.0;   // l1/l2 penalty, >= 0

  std::string name() const;
  // Accepts "kind" or "kind:param", e.g. "knn:25", "logistic-l2:0.5",
  // "polynomial-logistic:3".
  static LearnerSpec parse(const std::string& text);
};

void validate(const LearnerSpec& spec);

struct LogisticOptions {
  double l1 = 0.0;
  double l2 = 0.0;
  VectorXd weights;               // optional observation weights; empty = 1
  std::vector<int> unpenalized;   // column indices exempt from the penalty
  int max_iter = 200;
  double tol = 1e-8;              // max-norm stationarity tolerance
  bool record_objective = false;
};

struct LogisticFit {
  VectorXd beta;
  int iterations = 0;
  std::vector<double> objective_trace;  // per accepted iteration when recorded
};

// Penalized quasibinomial MLE. IRLS when l1 = 0 (ridge folded into the
// normal equations); quadratic-approximation coordinate descent when l1 > 0.
// Both paths backtrack so the penalized objective never increases.
LogisticFit fit_logistic_mle(const MatrixXd& x, const VectorXd& y,
                             const LogisticOptions& options = {});

// Max-norm of the stationarity residual (score minus penalty subgradient);
// the convergence criterion of fit_logistic_mle, exposed for tests.
double logistic_stationarity_gap(const MatrixXd& x, const VectorXd& y,
                                 const VectorXd& beta,
                                 const LogisticOptions& options = {});

// expit(x beta), clipped to (0,1).
VectorXd predict_logistic(const VectorXd& beta, const MatrixXd& x);

// A base learner fit on raw features; prediction handles its own expansion.
class FittedLearner {
 public:
  virtual ~FittedLearner() = default;
  virtual VectorXd predict(const MatrixXd& x) const = 0;
};

std::shared_ptr<const FittedLearner> fit_learner(const LearnerSpec& spec,
                                                 const MatrixXd& x,
                                                 const VectorXd& y);

struct EnsembleFit {
  std::vector<LearnerSpec> specs;  // surviving library entries, original order
  VectorXd weights;                // simplex over surviving learners
  VectorXd cv_risks;               // per-learner cross-validated mean loss
  double ensemble_cv_risk = 0.0;
  std::vector<std::shared_ptr<const FittedLearner>> learners;  // full-data refits
  std::vector<std::string> warnings;  // dropped learners
};

// Cross-validated stacking under quasibinomial loss: simplex weights minimize
// the CV risk of the convex combination of out-of-fold predictions; base
// learners are refit on the full data for prediction. Failing learners are
// dropped with a warning; ties in the weight search go to the earlier
// library index.
EnsembleFit fit_ensemble(const MatrixXd& x, const VectorXd& y,
                         const std::vector<LearnerSpec>& library, int v,
                         std::uint64_t seed);

VectorXd predict(const EnsembleFit& fit, const MatrixXd& x);

}  // namespace blipvar

#include "blipvar/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blipvar/errors.hpp"
#include "blipvar/folds.hpp"
#include "blipvar/math_util.hpp"

namespace blipvar {

namespace {

constexpr double kBetaBound = 1e4;   // past this the fit is deemed separated
constexpr double kWeightFloor = 1e-10;

// Backtracking acceptance slack: near the optimum a full Newton step moves
// the objective by less than one ulp and can round upward.
inline double objective_slack(double obj) { return 1e-13 * (1.0 + std::abs(obj)); }

std::string kind_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::mean: return "mean";
    case LearnerKind::logistic_main: return "logistic-main";
    case LearnerKind::logistic_main_interactions: return "logistic-main-interactions";
    case LearnerKind::logistic_l1: return "logistic-l1";
    case LearnerKind::logistic_l2: return "logistic-l2";
    case LearnerKind::knn: return "knn";
    case LearnerKind::polynomial_logistic: return "polynomial-logistic";
  }
  return "?";
}

VectorXd effective_weights(const LogisticOptions& options, Eigen::Index n) {
  if (options.weights.size() == 0) return VectorXd::Ones(n);
  if (options.weights.size() != n) {
    throw ValidationError("fit_logistic_mle: weight length mismatch");
  }
  return options.weights;
}

VectorXd penalty_mask(const LogisticOptions& options, Eigen::Index p) {
  VectorXd mask = VectorXd::Ones(p);
  for (int j : options.unpenalized) {
    if (j >= 0 && j < p) mask[j] = 0.0;
  }
  return mask;
}

double penalized_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                           const VectorXd& mask, const VectorXd& beta, double l1,
                           double l2) {
  const VectorXd eta = x * beta;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double q = clip_prob(expit(eta[i]));
    nll -= w[i] * (y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
  }
  const double ridge = 0.5 * l2 * (mask.array() * beta.array().square()).sum();
  const double lasso = l1 * (mask.array() * beta.array().abs()).sum();
  return nll + ridge + lasso;
}

// score_j = sum_i w_i x_ij (y_i - mu_i)
VectorXd score_vector(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                      const VectorXd& beta) {
  const VectorXd mu = expit_vec(x * beta);
  return x.transpose() * (w.array() * (y - mu).array()).matrix();
}

}  // namespace

std::string LearnerSpec::name() const {
  switch (kind) {
    case LearnerKind::knn: return "knn(" + std::to_string(k) + ")";
    case LearnerKind::polynomial_logistic:
      return "polynomial-logistic(" + std::to_string(degree) + ")";
    case LearnerKind::logistic_l1:
    case LearnerKind::logistic_l2: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s(%g)", kind_string(kind).c_str(), lambda);
      return buf;
    }
    default: return kind_string(kind);
  }
}

LearnerSpec LearnerSpec::parse(const std::string& text) {
  std::string kind_text = text;
  std::string param;
  if (const auto pos = text.find(':'); pos != std::string::npos) {
    kind_text = text.substr(0, pos);
    param = text.substr(pos + 1);
  }
  LearnerSpec spec;
  if (kind_text == "mean") spec.kind = LearnerKind::mean;
  else if (kind_text == "logistic-main") spec.kind = LearnerKind::logistic_main;
  else if (kind_text == "logistic-main-interactions")
    spec.kind = LearnerKind::logistic_main_interactions;
  else if (kind_text == "logistic-l1") spec.kind = LearnerKind::logistic_l1;
  else if (kind_text == "logistic-l2") spec.kind = LearnerKind::logistic_l2;
  else if (kind_text == "knn") spec.kind = LearnerKind::knn;
  else if (kind_text == "polynomial-logistic")
    spec.kind = LearnerKind::polynomial_logistic;
  else throw ValidationError("unknown learner kind: " + kind_text);

  if (!param.empty()) {
    try {
      switch (spec.kind) {
        case LearnerKind::knn: spec.k = std::stoi(param); break;
        case LearnerKind::polynomial_logistic: spec.degree = std::stoi(param); break;
        case LearnerKind::logistic_l1:
        case LearnerKind::logistic_l2: spec.lambda = std::stod(param); break;
        default:
          throw ValidationError("learner '" + kind_text + "' takes no parameter");
      }
    } catch (const std::invalid_argument&) {
      throw ValidationError("bad learner parameter: " + text);
    }
  }
  validate(spec);
  return spec;
}

void validate(const LearnerSpec& spec) {
  if (spec.kind == LearnerKind::knn && spec.k < 1) {
    throw ValidationError("knn: k must be >= 1");
  }
  if (spec.kind == LearnerKind::polynomial_logistic &&
      (spec.degree < 1 || spec.degree > 3)) {
    throw ValidationError("polynomial-logistic: degree must be in {1,2,3}");
  }
  if ((spec.kind == LearnerKind::logistic_l1 || spec.kind == LearnerKind::logistic_l2) &&
      spec.lambda < 0.0) {
    throw ValidationError("penalized logistic: lambda must be >= 0");
  }
}

double logistic_stationarity_gap(const MatrixXd& x, const VectorXd& y,
                                 const VectorXd& beta,
                                 const LogisticOptions& options) {
  const VectorXd w = effective_weights(options, y.size());
  const VectorXd mask = penalty_mask(options, x.cols());
  const VectorXd score = score_vector(x, y, w, beta);
  double gap = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double target = score[j] - options.l2 * mask[j] * beta[j];
    double r;
    if (options.l1 > 0.0 && mask[j] > 0.0) {
      if (beta[j] != 0.0) {
        r = std::abs(target - options.l1 * (beta[j] > 0.0 ? 1.0 : -1.0));
      } else {
        r = std::max(0.0, std::abs(target) - options.l1);
      }
    } else {
      r = std::abs(target);
    }
    gap = std::max(gap, r);
  }
  return gap;
}

namespace {

LogisticFit fit_irls(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                     const VectorXd& mask, const LogisticOptions& options) {
  const Eigen::Index p = x.cols();
  if (options.l2 == 0.0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    if (qr.rank() < p) {
      throw RankDeficientError("fit_logistic_mle: design matrix is rank deficient");
    }
  }

  // Unpenalized MLEs on (quasi-)separated data push the fitted logits to
  // infinity while the score underflows to zero; treat logits past +/-30 as
  // divergence rather than convergence.
  auto check_separation = [&](const VectorXd& beta) {
    if (options.l1 == 0.0 && options.l2 == 0.0 &&
        (x * beta).lpNorm<Eigen::Infinity>() > 30.0) {
      throw NonConvergenceError(
          "fit_logistic_mle: coefficients diverge (separable data?)");
    }
  };

  LogisticFit fit;
  fit.beta = VectorXd::Zero(p);
  double obj = penalized_objective(x, y, w, mask, fit.beta, 0.0, options.l2);
  if (options.record_objective) fit.objective_trace.push_back(obj);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    if (logistic_stationarity_gap(x, y, fit.beta, options) <= options.tol) {
      check_separation(fit.beta);
      fit.iterations = iter - 1;
      return fit;
    }
    const VectorXd eta = x * fit.beta;
    const VectorXd mu = expit_vec(eta);
    VectorXd irls_w(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      irls_w[i] = std::max(w[i] * mu[i] * (1.0 - mu[i]), kWeightFloor);
    }
    VectorXd grad = score_vector(x, y, w, fit.beta) -
                    options.l2 * (mask.array() * fit.beta.array()).matrix();
    MatrixXd hess = x.transpose() * irls_w.asDiagonal() * x;
    hess.diagonal() += options.l2 * mask;
    const VectorXd step = hess.ldlt().solve(grad);

    double t = 1.0;
    VectorXd candidate = fit.beta + step;
    double cand_obj = penalized_objective(x, y, w, mask, candidate, 0.0, options.l2);
    int halvings = 0;
    while (cand_obj > obj + objective_slack(obj) && halvings < 40) {
      t *= 0.5;
      candidate = fit.beta + t * step;
      cand_obj = penalized_objective(x, y, w, mask, candidate, 0.0, options.l2);
      ++halvings;
    }
    fit.beta = candidate;
    obj = cand_obj;
    if (options.record_objective) fit.objective_trace.push_back(obj);
    if (fit.beta.lpNorm<Eigen::Infinity>() > kBetaBound) {
      throw NonConvergenceError(
          "fit_logistic_mle: coefficients diverge (separable data?)");
    }
  }
  if (logistic_stationarity_gap(x, y, fit.beta, options) <= options.tol) {
    check_separation(fit.beta);
    fit.iterations = options.max_iter;
    return fit;
  }
  throw NonConvergenceError("fit_logistic_mle: no convergence after " +
                            std::to_string(options.max_iter) + " iterations");
}

// Outer quadratic approximation with an exact coordinate-wise minimizer of
// the weighted least squares surrogate plus l1/l2.
LogisticFit fit_coordinate_descent(const MatrixXd& x, const VectorXd& y,
                                   const VectorXd& w, const VectorXd& mask,
                                   const LogisticOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  LogisticFit fit;
  fit.beta = VectorXd::Zero(p);
  double obj = penalized_objective(x, y, w, mask, fit.beta, options.l1, options.l2);
  if (options.record_objective) fit.objective_trace.push_back(obj);

  auto soft = [](double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
  };

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    if (logistic_stationarity_gap(x, y, fit.beta, options) <= options.tol) {
      fit.iterations = iter - 1;
      return fit;
    }
    VectorXd eta = x * fit.beta;
    const VectorXd mu = expit_vec(eta);
    VectorXd qw(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = std::max(w[i] * mu[i] * (1.0 - mu[i]), 1e-6);
      qw[i] = wi;
      z[i] = eta[i] + w[i] * (y[i] - mu[i]) / wi;
    }
    VectorXd beta_new = fit.beta;
    VectorXd resid = z - x * beta_new;
    for (int sweep = 0; sweep < 200; ++sweep) {
      double max_delta = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const VectorXd& xj = x.col(j);
        const double denom =
            (qw.array() * xj.array().square()).sum() + options.l2 * mask[j];
        if (denom <= 0.0) continue;
        const double rho =
            (qw.array() * xj.array() * resid.array()).sum() + denom * beta_new[j] -
            options.l2 * mask[j] * beta_new[j];
        const double updated =
            mask[j] > 0.0 ? soft(rho, options.l1) / denom : rho / denom;
        const double delta = updated - beta_new[j];
        if (delta != 0.0) {
          resid -= delta * xj;
          beta_new[j] = updated;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      if (max_delta < 1e-12) break;
    }

    VectorXd direction = beta_new - fit.beta;
    double t = 1.0;
    VectorXd candidate = beta_new;
    double cand_obj =
        penalized_objective(x, y, w, mask, candidate, options.l1, options.l2);
    int halvings = 0;
    while (cand_obj > obj + objective_slack(obj) && halvings < 40) {
      t *= 0.5;
      candidate = fit.beta + t * direction;
      cand_obj = penalized_objective(x, y, w, mask, candidate, options.l1, options.l2);
      ++halvings;
    }
    if (cand_obj > obj + objective_slack(obj)) {
      // No descent left; report convergence state via the gap check below.
      break;
    }
    fit.beta = candidate;
    obj = cand_obj;
    if (options.record_objective) fit.objective_trace.push_back(obj);
    if (fit.beta.lpNorm<Eigen::Infinity>() > kBetaBound) {
      throw NonConvergenceError(
          "fit_logistic_mle: coefficients diverge (separable data?)");
    }
  }
  if (logistic_stationarity_gap(x, y, fit.beta, options) <= options.tol * 10.0) {
    return fit;
  }
  throw NonConvergenceError("fit_logistic_mle: coordinate descent did not converge");
}

}  // namespace

LogisticFit fit_logistic_mle(const MatrixXd& x, const VectorXd& y,
                             const LogisticOptions& options) {
  if (x.rows() != y.size()) throw ValidationError("fit_logistic_mle: size mismatch");
  if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) {
    throw ValidationError("fit_logistic_mle: outcomes must lie in [0,1]");
  }
  const VectorXd w = effective_weights(options, y.size());
  const VectorXd mask = penalty_mask(options, x.cols());
  if (options.l1 > 0.0) return fit_coordinate_descent(x, y, w, mask, options);
  return fit_irls(x, y, w, mask, options);
}

VectorXd predict_logistic(const VectorXd& beta, const MatrixXd& x) {
  if (x.cols() != beta.size()) {
    throw ValidationError("predict_logistic: dimension mismatch");
  }
  return clip_probs(expit_vec(x * beta));
}

// ---------------------------------------------------------------------------
// Design expansions. Learners receive raw features and expand internally.

namespace {

MatrixXd with_intercept(const MatrixXd& x) {
  MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

MatrixXd main_interactions(const MatrixXd& x) {
  const Eigen::Index p = x.cols();
  MatrixXd out(x.rows(), 1 + p + p * (p - 1) / 2);
  out.col(0).setOnes();
  out.middleCols(1, p) = x;
  Eigen::Index c = 1 + p;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) {
      out.col(c++) = x.col(i).array() * x.col(j).array();
    }
  }
  return out;
}

// Monomial exponent tuples of total degree <= degree (excluding the constant).
std::vector<std::vector<int>> monomial_exponents(int p, int degree) {
  std::vector<std::vector<int>> all;
  std::vector<int> tuple(p, 0);
  auto gen = [&](auto&& self, int pos, int used) -> void {
    if (pos == p) {
      if (used >= 1) all.push_back(tuple);
      return;
    }
    for (int d = 0; d + used <= degree; ++d) {
      tuple[pos] = d;
      self(self, pos + 1, used + d);
    }
    tuple[pos] = 0;
  };
  gen(gen, 0, 0);
  // Order by total degree then lexicographic for a stable layout.
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    const int da = std::accumulate(a.begin(), a.end(), 0);
    const int db = std::accumulate(b.begin(), b.end(), 0);
    if (da != db) return da < db;
    return a < b;
  });
  return all;
}

// Polynomial basis with duplicate columns dropped (binary features make
// higher powers collapse onto lower ones).
MatrixXd polynomial_basis(const MatrixXd& x, int degree,
                          const std::vector<std::vector<int>>& exponents,
                          std::vector<int>* kept) {
  std::vector<VectorXd> cols;
  std::vector<int> kept_local;
  cols.emplace_back(VectorXd::Ones(x.rows()));
  for (std::size_t t = 0; t < exponents.size(); ++t) {
    VectorXd col = VectorXd::Ones(x.rows());
    for (int j = 0; j < x.cols(); ++j) {
      for (int d = 0; d < exponents[t][j]; ++d) col.array() *= x.col(j).array();
    }
    bool duplicate = false;
    for (const auto& existing : cols) {
      if ((existing - col).lpNorm<Eigen::Infinity>() == 0.0) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      cols.push_back(std::move(col));
      kept_local.push_back(static_cast<int>(t));
    }
  }
  MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(c) = cols[c];
  if (kept) *kept = kept_local;
  return out;
}

MatrixXd polynomial_from_kept(const MatrixXd& x,
                              const std::vector<std::vector<int>>& exponents,
                              const std::vector<int>& kept) {
  MatrixXd out(x.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
  out.col(0).setOnes();
  for (std::size_t c = 0; c < kept.size(); ++c) {
    VectorXd col = VectorXd::Ones(x.rows());
    for (int j = 0; j < x.cols(); ++j) {
      for (int d = 0; d < exponents[kept[c]][j]; ++d) col.array() *= x.col(j).array();
    }
    out.col(static_cast<Eigen::Index>(c) + 1) = col;
  }
  return out;
}

class MeanLearner final : public FittedLearner {
 public:
  explicit MeanLearner(double mean) : mean_(clip_prob(mean)) {}
  VectorXd predict(const MatrixXd& x) const override {
    return VectorXd::Constant(x.rows(), mean_);
  }

 private:
  double mean_;
};

class LogisticLearner final : public FittedLearner {
 public:
  enum class Basis { main, interactions, polynomial };

  LogisticLearner(Basis basis, int degree, VectorXd beta,
                  std::vector<std::vector<int>> exponents, std::vector<int> kept,
                  int p)
      : basis_(basis),
        degree_(degree),
        beta_(std::move(beta)),
        exponents_(std::move(exponents)),
        kept_(std::move(kept)),
        p_(p) {}

  VectorXd predict(const MatrixXd& x) const override {
    if (x.cols() != p_) throw ValidationError("learner predict: dimension mismatch");
    return predict_logistic(beta_, expand(x));
  }

  MatrixXd expand(const MatrixXd& x) const {
    switch (basis_) {
      case Basis::main: return with_intercept(x);
      case Basis::interactions: return main_interactions(x);
      case Basis::polynomial: return polynomial_from_kept(x, exponents_, kept_);
    }
    throw Error("unreachable");
  }

 private:
  Basis basis_;
  int degree_;
  VectorXd beta_;
  std::vector<std::vector<int>> exponents_;
  std::vector<int> kept_;
  int p_;
};

class KnnLearner final : public FittedLearner {
 public:
  KnnLearner(MatrixXd x, VectorXd y, int k) : y_(std::move(y)), k_(k) {
    // Standardize features for the distance; constant columns pass through.
    means_ = x.colwise().mean().transpose();
    sds_.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double sd = sample_sd(x.col(j));
      sds_[j] = sd > 0.0 ? sd : 1.0;
    }
    x_ = (x.rowwise() - means_.transpose()).array().rowwise() /
         sds_.transpose().array();
    k_ = std::min<int>(k_, static_cast<int>(x_.rows()));
  }

  VectorXd predict(const MatrixXd& x) const override {
    if (x.cols() != x_.cols()) {
      throw ValidationError("knn predict: dimension mismatch");
    }
    const MatrixXd q = (x.rowwise() - means_.transpose()).array().rowwise() /
                       sds_.transpose().array();
    VectorXd out(x.rows());
    const int n_train = static_cast<int>(x_.rows());
    std::vector<std::pair<double, int>> dist(n_train);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (int t = 0; t < n_train; ++t) {
        dist[t] = {(x_.row(t) - q.row(i)).squaredNorm(), t};
      }
      std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
      double total = 0.0;
      for (int t = 0; t < k_; ++t) total += y_[dist[t].second];
      out[i] = clip_prob((total + 0.5) / (k_ + 1.0));  // smoothed into (0,1)
    }
    return out;
  }

 private:
  MatrixXd x_;
  VectorXd y_;
  VectorXd means_;
  VectorXd sds_;
  int k_;
};

}  // namespace

std::shared_ptr<const FittedLearner> fit_learner(const LearnerSpec& spec,
                                                 const MatrixXd& x,
                                                 const VectorXd& y) {
  validate(spec);
  switch (spec.kind) {
    case LearnerKind::mean:
      return std::make_shared<MeanLearner>(y.mean());
    case LearnerKind::logistic_main: {
      const auto fit = fit_logistic_mle(with_intercept(x), y);
      return std::make_shared<LogisticLearner>(LogisticLearner::Basis::main, 1,
                                               fit.beta,
                                               std::vector<std::vector<int>>{},
                                               std::vector<int>{},
                                               static_cast<int>(x.cols()));
    }
    case LearnerKind::logistic_main_interactions: {
      const auto fit = fit_logistic_mle(main_interactions(x), y);
      return std::make_shared<LogisticLearner>(LogisticLearner::Basis::interactions,
                                               2, fit.beta,
                                               std::vector<std::vector<int>>{},
                                               std::vector<int>{},
                                               static_cast<int>(x.cols()));
    }
    case LearnerKind::logistic_l1:
    case LearnerKind::logistic_l2: {
      LogisticOptions options;
      (spec.kind == LearnerKind::logistic_l1 ? options.l1 : options.l2) = spec.lambda;
      options.unpenalized = {0};
      const auto fit = fit_logistic_mle(with_intercept(x), y, options);
      return std::make_shared<LogisticLearner>(LogisticLearner::Basis::main, 1,
                                               fit.beta,
                                               std::vector<std::vector<int>>{},
                                               std::vector<int>{},
                                               static_cast<int>(x.cols()));
    }
    case LearnerKind::knn:
      return std::make_shared<KnnLearner>(x, y, spec.k);
    case LearnerKind::polynomial_logistic: {
      const auto exponents = monomial_exponents(static_cast<int>(x.cols()), spec.degree);
      std::vector<int> kept;
      const MatrixXd design = polynomial_basis(x, spec.degree, exponents, &kept);
      const auto fit = fit_logistic_mle(design, y);
      return std::make_shared<LogisticLearner>(LogisticLearner::Basis::polynomial,
                                               spec.degree, fit.beta, exponents, kept,
                                               static_cast<int>(x.cols()));
    }
  }
  throw Error("unreachable");
}

// ---------------------------------------------------------------------------
// Stacking.

namespace {

double cv_risk_of(const VectorXd& y, const VectorXd& q) {
  return quasibinomial_loss(y, q);
}

VectorXd project_to_simplex(VectorXd v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    const double t = (css - 1.0) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      tau = t;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::max(0.0, v[i] - tau);
  return v;
}

// Exhaustive simplex grid at resolution 0.01 for <= 3 learners; enumeration
// order puts weight on earlier library indices first so ties resolve there.
VectorXd grid_weights(const MatrixXd& z, const VectorXd& y) {
  const int L = static_cast<int>(z.cols());
  const int steps = 100;
  VectorXd best = VectorXd::Zero(L);
  best[0] = 1.0;
  double best_risk = cv_risk_of(y, z * best);
  VectorXd w(L);
  if (L == 1) return best;
  if (L == 2) {
    for (int i = steps; i >= 0; --i) {
      w[0] = i / 100.0;
      w[1] = 1.0 - w[0];
      const double risk = cv_risk_of(y, z * w);
      if (risk < best_risk - 1e-15) {
        best_risk = risk;
        best = w;
      }
    }
    return best;
  }
  for (int i = steps; i >= 0; --i) {
    for (int j = steps - i; j >= 0; --j) {
      w[0] = i / 100.0;
      w[1] = j / 100.0;
      w[2] = 1.0 - w[0] - w[1];
      if (w[2] < -1e-12) continue;
      w[2] = std::max(0.0, w[2]);
      const double risk = cv_risk_of(y, z * w);
      if (risk < best_risk - 1e-15) {
        best_risk = risk;
        best = w;
      }
    }
  }
  return best;
}

// Projected gradient from the best single vertex; the backtracking step keeps
// the risk non-increasing, so the ensemble can never do worse than that vertex.
VectorXd projected_gradient_weights(const MatrixXd& z, const VectorXd& y,
                                    const VectorXd& cv_risks) {
  const Eigen::Index L = z.cols();
  Eigen::Index best_vertex = 0;
  cv_risks.minCoeff(&best_vertex);
  VectorXd w = VectorXd::Zero(L);
  w[best_vertex] = 1.0;
  double risk = cv_risk_of(y, z * w);
  const double n = static_cast<double>(y.size());
  double step = 1.0;
  for (int iter = 0; iter < 500; ++iter) {
    const VectorXd q = z * w;
    VectorXd grad = VectorXd::Zero(L);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double qi = clip_prob(q[i]);
      const double dq = (-y[i] / qi + (1.0 - y[i]) / (1.0 - qi)) / n;
      grad += dq * z.row(i).transpose();
    }
    bool improved = false;
    double t = step;
    for (int back = 0; back < 30; ++back) {
      const VectorXd cand = project_to_simplex(w - t * grad);
      const double cand_risk = cv_risk_of(y, z * cand);
      if (cand_risk < risk - 1e-14) {
        w = cand;
        risk = cand_risk;
        step = t * 2.0;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
  }
  return w;
}

}  // namespace

EnsembleFit fit_ensemble(const MatrixXd& x, const VectorXd& y,
                         const std::vector<LearnerSpec>& library, int v,
                         std::uint64_t seed) {
  if (library.empty()) throw ValidationError("fit_ensemble: empty library");
  if (v < 2) throw ValidationError("fit_ensemble: need at least 2 folds");
  const int n = static_cast<int>(y.size());
  const FoldPlan plan = make_folds(n, v, seed);

  const int L = static_cast<int>(library.size());
  MatrixXd z = MatrixXd::Zero(n, L);
  std::vector<bool> ok(L, true);
  std::vector<std::string> warnings;

  for (int l = 0; l < L; ++l) {
    try {
      for (int f = 0; f < v; ++f) {
        const auto train = plan.training_rows(f);
        const auto valid = plan.validation_rows(f);
        MatrixXd xt(train.size(), x.cols());
        VectorXd yt(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) {
          xt.row(r) = x.row(train[r]);
          yt[r] = y[train[r]];
        }
        MatrixXd xv(valid.size(), x.cols());
        for (std::size_t r = 0; r < valid.size(); ++r) xv.row(r) = x.row(valid[r]);
        const auto fitted = fit_learner(library[l], xt, yt);
        const VectorXd pred = fitted->predict(xv);
        for (std::size_t r = 0; r < valid.size(); ++r) {
          z(valid[r], l) = clip_prob(pred[r]);
        }
      }
    } catch (const Error& e) {
      ok[l] = false;
      warnings.push_back("learner " + library[l].name() + " dropped: " + e.what());
    }
  }

  // Full-data refits; a failure here also drops the learner.
  std::vector<std::shared_ptr<const FittedLearner>> full_fits(L);
  for (int l = 0; l < L; ++l) {
    if (!ok[l]) continue;
    try {
      full_fits[l] = fit_learner(library[l], x, y);
    } catch (const Error& e) {
      ok[l] = false;
      warnings.push_back("learner " + library[l].name() +
                         " dropped on full-data refit: " + e.what());
    }
  }

  std::vector<int> surviving;
  for (int l = 0; l < L; ++l) {
    if (ok[l]) surviving.push_back(l);
  }
  if (surviving.empty()) {
    throw NumericError("fit_ensemble: all learners failed");
  }

  MatrixXd zs(n, surviving.size());
  VectorXd risks(surviving.size());
  for (std::size_t c = 0; c < surviving.size(); ++c) {
    zs.col(c) = z.col(surviving[c]);
    risks[c] = cv_risk_of(y, zs.col(c));
  }

  const VectorXd w = surviving.size() <= 3 ? grid_weights(zs, y)
                                           : projected_gradient_weights(zs, y, risks);

  EnsembleFit fit;
  for (int l : surviving) {
    fit.specs.push_back(library[l]);
    fit.learners.push_back(full_fits[l]);
  }
  fit.weights = w;
  fit.cv_risks = risks;
  fit.ensemble_cv_risk = cv_risk_of(y, zs * w);
  fit.warnings = std::move(warnings);
  return fit;
}

VectorXd predict(const EnsembleFit& fit, const MatrixXd& x) {
  if (fit.learners.empty()) throw ValidationError("predict: empty ensemble");
  VectorXd out = VectorXd::Zero(x.rows());
  for (std::size_t l = 0; l < fit.learners.size(); ++l) {
    if (fit.weights[static_cast<Eigen::Index>(l)] == 0.0) continue;
    out += fit.weights[static_cast<Eigen::Index>(l)] * fit.learners[l]->predict(x);
  }
  return clip_probs(out);
}

}  // namespace blipvar

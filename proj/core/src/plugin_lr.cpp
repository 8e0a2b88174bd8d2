#include "blipvar/plugin_lr.hpp"

#include <cmath>

#include "blipvar/errors.hpp"
#include "blipvar/learners.hpp"
#include "blipvar/math_util.hpp"

namespace blipvar {

int plugin_design_dim(int p) { return 1 + (p + 1) + p + p * (p - 1) / 2; }

MatrixXd plugin_design(const VectorXd& a, const MatrixXd& w) {
  const Eigen::Index n = w.rows();
  const int p = static_cast<int>(w.cols());
  MatrixXd x(n, plugin_design_dim(p));
  Eigen::Index c = 0;
  x.col(c++).setOnes();
  x.col(c++) = a;
  for (int j = 0; j < p; ++j) x.col(c++) = w.col(j);
  for (int j = 0; j < p; ++j) x.col(c++) = a.array() * w.col(j).array();
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      x.col(c++) = w.col(i).array() * w.col(j).array();
    }
  }
  return x;
}

VectorXd score_beta(const VectorXd& beta, const VectorXd& x_row, double y) {
  if (beta.size() != x_row.size()) throw ValidationError("score_beta: size mismatch");
  return x_row * (y - expit(beta.dot(x_row)));
}

MatrixXd ic_beta(const VectorXd& beta, const MatrixXd& x, const VectorXd& y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const VectorXd mu = expit_vec(x * beta);
  VectorXd weight(n);
  for (Eigen::Index i = 0; i < n; ++i) weight[i] = mu[i] * (1.0 - mu[i]);
  MatrixXd info = x.transpose() * weight.asDiagonal() * x / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(info);
  const double lambda_min = solver.eigenvalues().minCoeff();
  const double lambda_max = solver.eigenvalues().maxCoeff();
  if (lambda_min <= 0.0 || lambda_max / lambda_min > 1e12) {
    throw SingularMatrixError("ic_beta: information matrix numerically singular");
  }
  const MatrixXd info_inv = solver.eigenvectors() *
                            solver.eigenvalues().cwiseInverse().asDiagonal() *
                            solver.eigenvectors().transpose();

  MatrixXd scores(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    scores.row(i) = x.row(i) * (y[i] - mu[i]);
  }
  return scores * info_inv;  // row i = M^{-1} S_beta(O_i), M symmetric
}

PluginFit fit_plugin(const ObservedDataset& data) {
  validate(data);
  const Eigen::Index n = data.n();
  const MatrixXd x = plugin_design(data.a, data.w);
  const auto mle = fit_logistic_mle(x, data.y);

  PluginFit fit;
  fit.beta = mle.beta;
  fit.ic_beta = ic_beta(fit.beta, x, data.y);

  const MatrixXd x1 = plugin_design(VectorXd::Ones(n), data.w);
  const MatrixXd x0 = plugin_design(VectorXd::Zero(n), data.w);
  const VectorXd mu1 = expit_vec(x1 * fit.beta);
  const VectorXd mu0 = expit_vec(x0 * fit.beta);
  fit.blip = mu1 - mu0;
  fit.psi1 = fit.blip.mean();
  fit.psi2 = (fit.blip.array() - fit.psi1).square().mean();

  // f_beta(w) = mu1(1-mu1) X(1,w) - mu0(1-mu0) X(0,w), the blip gradient.
  const Eigen::Index d = x.cols();
  VectorXd f_mean = VectorXd::Zero(d);
  VectorXd f2_mean = VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd f_i = mu1[i] * (1.0 - mu1[i]) * x1.row(i).transpose() -
                         mu0[i] * (1.0 - mu0[i]) * x0.row(i).transpose();
    f_mean += f_i;
    f2_mean += 2.0 * (fit.blip[i] - fit.psi1) * f_i;
  }
  f_mean /= static_cast<double>(n);
  f2_mean /= static_cast<double>(n);

  fit.ic_psi.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double centered = fit.blip[i] - fit.psi1;
    fit.ic_psi(i, 0) = fit.ic_beta.row(i).dot(f_mean) + centered;
    fit.ic_psi(i, 1) =
        fit.ic_beta.row(i).dot(f2_mean) + centered * centered - fit.psi2;
  }
  return fit;
}

std::pair<PluginFit, EstimateReport> plugin_estimate(const ObservedDataset& data,
                                                     const ReportOptions& options) {
  PluginFit fit = fit_plugin(data);

  EicEvaluation eval;
  eval.d1 = fit.ic_psi.col(0);
  eval.d2 = fit.ic_psi.col(1);
  eval.mean1 = eval.d1.mean();
  eval.mean2 = eval.d2.mean();
  eval.sd1 = sample_sd(eval.d1);
  eval.sd2 = sample_sd(eval.d2);
  eval.psi1_hat = fit.psi1;
  eval.psi2_hat = fit.psi2;

  ReportOptions opts = options;
  opts.estimator_tag = "lr-plugin";
  EstimateReport report =
      build_report(eval, fit.psi1, fit.psi2, data.n(), data.scale, opts);
  return {std::move(fit), std::move(report)};
}

}  // namespace blipvar

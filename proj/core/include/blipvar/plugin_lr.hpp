#pragma once

#include <utility>

#include "blipvar/dataset.hpp"
#include "blipvar/inference.hpp"

namespace blipvar {

// Design for the parametric baseline: intercept, A, W_1..W_p, and all
// pairwise interactions among (A, W), i.e. A*W_j and W_i*W_j.
MatrixXd plugin_design(const VectorXd& a, const MatrixXd& w);
int plugin_design_dim(int p);

struct PluginFit {
  VectorXd beta;
  MatrixXd ic_beta;  // n x d, rows M^{-1} S_beta(O_i)
  MatrixXd ic_psi;   // n x 2, telescoped influence curve for (ATE, VTE)
  VectorXd blip;     // b_beta(W_i)
  double psi1 = 0.0;
  double psi2 = 0.0;
};

// S_beta(O) = x (y - expit(beta'x)).
VectorXd score_beta(const VectorXd& beta, const VectorXd& x_row, double y);

// Per-subject influence curve of the MLE: M^{-1} S_beta(O_i) with
// M = (1/n) sum mu_i (1 - mu_i) x_i x_i'. Errors when M is numerically
// singular (condition estimate above 1e12).
MatrixXd ic_beta(const VectorXd& beta, const MatrixXd& x, const VectorXd& y);

// MLE plug-in estimates of (ATE, VTE) with the full delta-method influence
// curve: IC_psi = E[(f, 2(b - psi1) f)] IC_beta + ((b - psi1), (b-psi1)^2 - psi2),
// where f_beta(w) is the gradient of the blip in beta and the E[.] are
// empirical means.
PluginFit fit_plugin(const ObservedDataset& data);

std::pair<PluginFit, EstimateReport> plugin_estimate(const ObservedDataset& data,
                                                     const ReportOptions& options);

}  // namespace blipvar

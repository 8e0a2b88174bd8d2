#pragma once

#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "blipvar/dataset.hpp"
#include "blipvar/pipeline.hpp"

namespace blipvar {

enum class DgpKind { controlled_noise, wellspec, case1, case2, case3 };

std::string to_string(DgpKind kind);
DgpKind dgp_kind_from_string(const std::string& text);

struct DgpSpec {
  DgpKind kind = DgpKind::case1;
  double rate = -1.0 / 3.0;  // controlled-noise perturbation rate, < -1/4
  double wellspec_a = 3.0;   // blip-variance knobs; (3,1) gives VTE ~ 0.024
  double wellspec_b = 1.0;
  int n = 1000;
  std::uint64_t seed = 1;
};

// True conditional means of a DGP; all four covariates W1..W4 with
// W1 ~ uniform[-3,3], W2 binary (controlled-noise) or standard normal, and
// W3, W4 standard normal.
struct Dgp {
  DgpSpec spec;

  int p() const { return 4; }
  MatrixXd draw_w(int n, std::mt19937_64& engine) const;
  VectorXd g1(const MatrixXd& w) const;
  VectorXd qbar(double arm, const MatrixXd& w) const;
  VectorXd blip(const MatrixXd& w) const { return qbar(1.0, w) - qbar(0.0, w); }
};

// n iid draws of (W, A ~ Bern(g0), Y ~ Bern(Q0)); the Dgp carries the truth
// functions for oracle use.
std::pair<ObservedDataset, Dgp> draw_dataset(const DgpSpec& spec,
                                             std::mt19937_64& engine);

// Controlled-noise initial estimates: heteroskedastic logit-scale noise of
// order n^rate added to the truth, correlated across arms:
//   qbar1_0 = expit(logit(Q0(1,W)) + b(1,W,n,Z))
//   qbar0_0 = expit(logit(Q0(0,W)) + 0.5 b(1,W,n,Z) + sqrt(0.75) b(0,W,n,X))
// with b(A,W,n,Z) = bias(A,W,n) + Z sigma(A,W,n). rate <= -infinity is
// accepted and makes the perturbation vanish.
std::pair<VectorXd, VectorXd> perturb_controlled_noise(const Dgp& dgp,
                                                       const MatrixXd& w, int n,
                                                       double rate,
                                                       std::mt19937_64& engine);

struct TrueParams {
  double ate0 = 0.0;
  double vte0 = 0.0;
  long mc_draws = 0;
  double mc_se_ate = 0.0;
  double mc_se_vte = 0.0;
};

// Monte-Carlo mean and variance of the true blip over the covariate law.
TrueParams true_params(const DgpSpec& spec, long mc_draws, std::uint64_t seed = 9001);

enum class SimEstimatorKind { tmle, cv_tmle, lr_plugin, oracle };

struct SimEstimator {
  std::string name;
  SimEstimatorKind kind = SimEstimatorKind::cv_tmle;
  bool use_true_g = false;        // plug in the DGP propensity instead of fitting
  bool noise_initial = false;     // controlled-noise perturbation as initial Q
  std::vector<LearnerSpec> q_library;
  std::vector<LearnerSpec> g_library;
  int folds = 10;
  double g_trunc = 0.01;
  TargetingOptions targeting;
};

struct ReplicateRecord {
  int replicate = 0;
  std::string estimator;
  bool ok = true;
  std::string error;
  double est_ate = 0.0;
  double est_vte = 0.0;
  double ci_lo = 0.0;  // marginal VTE interval
  double ci_hi = 0.0;
  bool covered = false;
};

struct MetricsRow {
  std::string estimator;
  int n = 0;
  double var = 0.0;   // population variance of the VTE estimates
  double bias = 0.0;  // mean VTE estimate minus the truth
  double mse = 0.0;   // var + bias^2
  double coverage = 0.0;
  double skewness = 0.0;
  int reps_ok = 0;
};

struct ReplicateResult {
  std::vector<MetricsRow> metrics;
  std::vector<ReplicateRecord> raw;
  TrueParams truth;
};

// Draws one dataset per replicate, runs every estimator on it, and aggregates
// Table-1-style VTE metrics. Replicates are parallelized over `parallelism`
// workers with precomputed substream seeds, so the output is identical for
// any worker count. Individual replicate failures are recorded and excluded.
ReplicateResult run_replicates(const DgpSpec& spec,
                               const std::vector<SimEstimator>& estimators, int reps,
                               double alpha, int parallelism, std::uint64_t seed,
                               const TrueParams& truth);

struct CampaignConfig {
  DgpSpec spec;
  std::vector<SimEstimator> estimators;
  int reps = 100;
  std::vector<int> n_grid;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int parallelism = 1;
  long mc_truth_draws = 4'000'000;
};

// Parses and validates the campaign JSON; schema violations name the field.
CampaignConfig parse_campaign_config(const nlohmann::json& j);
SimEstimator parse_sim_estimator(const nlohmann::json& j);

struct CampaignResult {
  std::vector<MetricsRow> metrics;                       // ordered by n_grid
  std::vector<std::pair<int, std::vector<ReplicateRecord>>> raw_by_n;
  std::vector<std::pair<int, TrueParams>> truths;
};

CampaignResult run_campaign(const CampaignConfig& config);

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
std::string raw_to_csv(const std::vector<ReplicateRecord>& rows);

}  // namespace blipvar

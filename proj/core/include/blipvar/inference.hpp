#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "blipvar/dataset.hpp"
#include "blipvar/eic.hpp"

namespace blipvar {

// (1-alpha) Monte-Carlo quantile of max_j |Z_j| for Z ~ N(0, corr); the
// number of standard errors needed to cover all coordinates simultaneously.
// Draws are generated in fixed-size chunks with independent substreams, so
// the result depends only on (corr, alpha, draws, seed).
double simultaneous_quantile(const MatrixXd& corr, double alpha, long draws,
                             std::uint64_t seed);

struct ReportRow {
  std::string name;     // "ATE", "VTE", "sqrt(VTE)"
  double est = 0.0;
  double se = 0.0;
  double lower = 0.0;      // marginal, est -/+ z * se
  double upper = 0.0;
  double lower_clamped = 0.0;  // max(0, lower) for the variance-scale rows
  double sim_lower = 0.0;      // simultaneous, est -/+ q * se
  double sim_upper = 0.0;
  bool se_defined = true;  // false for sqrt(VTE) when the VTE estimate is 0
};

struct EstimateReport {
  std::string estimator;  // tmle | cv-tmle | lr-plugin
  long n = 0;
  double alpha = 0.05;
  std::vector<ReportRow> rows;
  double q_simultaneous = 0.0;
  double z_marginal = 0.0;
  std::uint64_t seed = 0;
  OutcomeScale scale;
};

struct ReportOptions {
  double alpha = 0.05;
  bool include_sqrt = false;
  long sim_draws = 5'000'000;
  std::uint64_t seed = 1;
  std::string estimator_tag = "cv-tmle";
};

// Assembles the three-parameter report from the influence-curve evaluation:
// se_j = sd_j / sqrt(n), marginal CIs with z, simultaneous CIs with the
// Monte-Carlo quantile of the IC sample correlation (extended by the
// delta-method sqrt(VTE) row when requested), back-scaling applied last.
EstimateReport build_report(const EicEvaluation& eic, double psi1, double psi2,
                            long n, const OutcomeScale& scale,
                            const ReportOptions& options);

// Variance-scale lower bounds below zero are reported raw with a
// clamped-at-zero annotation.
double lower_bound_policy(double ci_lower);

nlohmann::json report_to_json(const EstimateReport& report);
EstimateReport report_from_json(const nlohmann::json& j);
std::string report_to_table(const EstimateReport& report);

}  // namespace blipvar

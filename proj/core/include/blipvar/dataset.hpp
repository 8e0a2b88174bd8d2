#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace blipvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Linear outcome scaling record: y_s = (y - lower) / (upper - lower).
struct OutcomeScale {
  double lower = 0.0;
  double upper = 1.0;
  bool applied = false;

  double range() const { return applied ? upper - lower : 1.0; }
};

// Immutable after construction; safe for concurrent reads.
struct ObservedDataset {
  MatrixXd w;  // n x p covariates
  VectorXd a;  // binary treatment
  VectorXd y;  // outcome, in [0,1] after scaling
  OutcomeScale scale;
  std::vector<std::string> w_names;
  std::string y_name;
  std::string a_name;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(w.cols()); }
};

// Checks the dataset invariants (binary a, y in [0,1], consistent sizes).
void validate(const ObservedDataset& data);

struct CsvColumns {
  std::string y;
  std::string a;
  std::vector<std::string> w;
};

// Strict CSV ingestion: one header row, named columns, UTF-8, decimal-point
// numerals. Continuous outcomes are auto-scaled with the column min/max
// unless explicit bounds are supplied.
ObservedDataset load_csv(const std::string& path, const CsvColumns& columns,
                         std::optional<std::pair<double, double>> y_bounds = {});

VectorXd scale_outcome(const VectorXd& y, double lower, double upper);

struct UnscaledEstimates {
  double ate;
  double vte;
  double se_ate;
  double se_vte;
};

// ATE and its SE scale by (b-a); VTE and its SE by (b-a)^2. Identity when the
// scale was never applied.
UnscaledEstimates unscale_estimates(double ate_s, double vte_s, double se_ate_s,
                                    double se_vte_s, const OutcomeScale& scale);

}  // namespace blipvar

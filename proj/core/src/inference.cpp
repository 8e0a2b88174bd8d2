#include "blipvar/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/rng.hpp"

namespace blipvar {

namespace {

constexpr long kQuantileChunk = 1 << 20;
constexpr double kEigenvalueFloor = 1e-10;

MatrixXd gaussian_factor(const MatrixXd& corr) {
  const Eigen::Index d = corr.rows();
  if (corr.cols() != d) throw ValidationError("simultaneous_quantile: non-square matrix");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(corr(i, i) - 1.0) > 1e-8) {
      throw ValidationError("simultaneous_quantile: diagonal must be 1");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      if (std::abs(corr(i, j) - corr(j, i)) > 1e-10) {
        throw ValidationError("simultaneous_quantile: matrix must be symmetric");
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(corr);
  VectorXd evals = solver.eigenvalues();
  if (evals.minCoeff() < -1e-8) {
    throw ValidationError("simultaneous_quantile: matrix is not positive semi-definite");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    evals[i] = std::sqrt(std::max(evals[i], kEigenvalueFloor));
  }
  return solver.eigenvectors() * evals.asDiagonal();
}

}  // namespace

double simultaneous_quantile(const MatrixXd& corr, double alpha, long draws,
                             std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("simultaneous_quantile: alpha must be in (0,1)");
  }
  if (draws < 1) throw ValidationError("simultaneous_quantile: draws must be >= 1");
  const MatrixXd factor = gaussian_factor(corr);
  const Eigen::Index d = corr.rows();

  std::vector<double> max_abs(static_cast<std::size_t>(draws));
  const long n_chunks = (draws + kQuantileChunk - 1) / kQuantileChunk;
  for (long c = 0; c < n_chunks; ++c) {
    auto engine = make_engine(seed, static_cast<std::uint64_t>(c));
    std::normal_distribution<double> normal(0.0, 1.0);
    const long begin = c * kQuantileChunk;
    const long end = std::min(draws, begin + kQuantileChunk);
    VectorXd xi(d);
    for (long t = begin; t < end; ++t) {
      for (Eigen::Index j = 0; j < d; ++j) xi[j] = normal(engine);
      const VectorXd z = factor * xi;
      max_abs[static_cast<std::size_t>(t)] = z.cwiseAbs().maxCoeff();
    }
  }
  const long k = static_cast<long>(std::ceil((1.0 - alpha) * static_cast<double>(draws)));
  const long idx = std::clamp(k - 1, 0L, draws - 1);
  std::nth_element(max_abs.begin(), max_abs.begin() + idx, max_abs.end());
  return max_abs[static_cast<std::size_t>(idx)];
}

double lower_bound_policy(double ci_lower) { return std::max(0.0, ci_lower); }

EstimateReport build_report(const EicEvaluation& eic, double psi1, double psi2,
                            long n, const OutcomeScale& scale,
                            const ReportOptions& options) {
  if (n < 2) throw ValidationError("build_report: n must be >= 2");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double z = normal_quantile(1.0 - options.alpha / 2.0);

  // Scaled-outcome standard errors, back-scaled below.
  const double se1_s = eic.sd1 / sqrt_n;
  const double se2_s = eic.sd2 / sqrt_n;
  const bool sqrt_defined = psi2 > 0.0;

  // Correlation of the IC rows; the sqrt(VTE) delta-method IC is d2/(2 sqrt)
  // so its correlation with the VTE row is 1 by construction.
  const double rho12 = sample_correlation(eic.d1, eic.d2);
  MatrixXd corr;
  if (options.include_sqrt && sqrt_defined) {
    corr = MatrixXd::Identity(3, 3);
    corr(0, 1) = corr(1, 0) = rho12;
    corr(1, 2) = corr(2, 1) = 1.0;
    corr(0, 2) = corr(2, 0) = rho12;
  } else {
    corr = MatrixXd::Identity(2, 2);
    corr(0, 1) = corr(1, 0) = rho12;
  }
  const double q = simultaneous_quantile(corr, options.alpha, options.sim_draws,
                                         options.seed);

  const auto unscaled = unscale_estimates(psi1, psi2, se1_s, se2_s, scale);

  EstimateReport report;
  report.estimator = options.estimator_tag;
  report.n = n;
  report.alpha = options.alpha;
  report.q_simultaneous = q;
  report.z_marginal = z;
  report.seed = options.seed;
  report.scale = scale;

  auto make_row = [&](const std::string& name, double est, double se, bool clamp,
                      bool defined) {
    ReportRow row;
    row.name = name;
    row.est = est;
    row.se = se;
    row.se_defined = defined;
    if (defined) {
      row.lower = est - z * se;
      row.upper = est + z * se;
      row.sim_lower = est - q * se;
      row.sim_upper = est + q * se;
    } else {
      row.lower = row.upper = row.sim_lower = row.sim_upper =
          std::numeric_limits<double>::quiet_NaN();
    }
    row.lower_clamped = clamp && defined ? lower_bound_policy(row.lower) : row.lower;
    return row;
  };

  report.rows.push_back(make_row("ATE", unscaled.ate, unscaled.se_ate, false, true));
  report.rows.push_back(make_row("VTE", unscaled.vte, unscaled.se_vte, true, true));
  if (options.include_sqrt) {
    const double psi3 = std::sqrt(unscaled.vte);
    const double se3 = sqrt_defined ? unscaled.se_vte / (2.0 * psi3)
                                    : std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(make_row("sqrt(VTE)", psi3, se3, true, sqrt_defined));
  }
  return report;
}

namespace {

nlohmann::json number_or_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

double null_to_nan(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

nlohmann::json report_to_json(const EstimateReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"name", row.name},
                    {"est", row.est},
                    {"se", number_or_null(row.se)},
                    {"lower", number_or_null(row.lower)},
                    {"upper", number_or_null(row.upper)},
                    {"lower_clamped", number_or_null(row.lower_clamped)},
                    {"sim_lower", number_or_null(row.sim_lower)},
                    {"sim_upper", number_or_null(row.sim_upper)}});
  }
  return nlohmann::json{{"estimator", report.estimator},
                        {"n", report.n},
                        {"alpha", report.alpha},
                        {"rows", rows},
                        {"q_simultaneous", report.q_simultaneous},
                        {"seed", report.seed}};
}

EstimateReport report_from_json(const nlohmann::json& j) {
  EstimateReport report;
  report.estimator = j.at("estimator").get<std::string>();
  report.n = j.at("n").get<long>();
  report.alpha = j.at("alpha").get<double>();
  report.q_simultaneous = j.at("q_simultaneous").get<double>();
  report.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& rj : j.at("rows")) {
    ReportRow row;
    row.name = rj.at("name").get<std::string>();
    row.est = rj.at("est").get<double>();
    row.se = null_to_nan(rj.at("se"));
    row.lower = null_to_nan(rj.at("lower"));
    row.upper = null_to_nan(rj.at("upper"));
    row.lower_clamped = null_to_nan(rj.at("lower_clamped"));
    row.sim_lower = null_to_nan(rj.at("sim_lower"));
    row.sim_upper = null_to_nan(rj.at("sim_upper"));
    row.se_defined = !rj.at("se").is_null();
    report.rows.push_back(row);
  }
  return report;
}

std::string report_to_table(const EstimateReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "estimator: %s   n: %ld   alpha: %g\n",
                report.estimator.c_str(), report.n, report.alpha);
  out << line;
  std::snprintf(line, sizeof(line), "%-10s %12s %12s %12s %12s\n", "", "est", "se",
                "lower", "upper");
  out << line;
  for (const auto& row : report.rows) {
    if (row.se_defined) {
      std::snprintf(line, sizeof(line), "%-10s %12.6f %12.6f %12.6f %12.6f\n",
                    row.name.c_str(), row.est, row.se, row.lower, row.upper);
    } else {
      std::snprintf(line, sizeof(line), "%-10s %12.6f %12s %12s %12s\n",
                    row.name.c_str(), row.est, "NA", "NA", "NA");
    }
    out << line;
  }
  std::snprintf(line, sizeof(line), "simultaneous q = %.6f (marginal z = %.6f)\n",
                report.q_simultaneous, report.z_marginal);
  out << line;
  for (const auto& row : report.rows) {
    if (row.name == "ATE" || !row.se_defined) continue;
    if (row.lower < 0.0) {
      std::snprintf(line, sizeof(line), "%s lower bound clamped at 0 (raw %.6f)\n",
                    row.name.c_str(), row.lower);
      out << line;
    }
  }
  return out.str();
}

}  // namespace blipvar

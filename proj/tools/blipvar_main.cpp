// blipvar: TMLE / CV-TMLE estimation of the average treatment effect and the
// variance of the stratum-specific treatment effect, with a logistic
// plug-in baseline and a simulation harness.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "blipvar/discrete.hpp"
#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/pipeline.hpp"
#include "blipvar/rng.hpp"
#include "blipvar/simlab.hpp"

namespace {

using namespace blipvar;

constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BLIPVAR_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ValidationError("BLIPVAR_SEED is not an integer");
    }
  }
  return 1;
}

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write to " + out_path);
  out << text;
}

std::vector<LearnerSpec> parse_library_flag(const std::vector<std::string>& entries) {
  std::vector<LearnerSpec> library;
  for (const auto& entry : entries) {
    std::stringstream ss(entry);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) library.push_back(LearnerSpec::parse(item));
    }
  }
  return library;
}

PropensityFn parse_known_g(const std::string& text, int p) {
  try {
    std::size_t pos = 0;
    const double value = std::stod(text, &pos);
    if (pos == text.size()) {
      if (!(value > 0.0 && value < 1.0)) {
        throw ValidationError("--known-g constant must be in (0,1)");
      }
      return [value](const MatrixXd& w) {
        return VectorXd::Constant(w.rows(), value);
      };
    }
  } catch (const std::invalid_argument&) {
    // fall through to the named propensities
  }
  const DgpKind kind = dgp_kind_from_string(text);
  if (p != 4) {
    throw ValidationError("--known-g " + text + " expects exactly 4 covariates");
  }
  Dgp dgp{DgpSpec{kind}};
  return [dgp](const MatrixXd& w) { return dgp.g1(w); };
}

struct CommonFlags {
  std::uint64_t seed = 0;
  bool seed_given = false;
  double alpha = 0.05;
  std::string out;
  std::string format = "json";
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "RNG seed (fallback: BLIPVAR_SEED, then 1)")
      ->each([&flags](const std::string&) { flags.seed_given = true; });
  cmd->add_option("--alpha", flags.alpha, "significance level")
      ->check(CLI::Range(1e-6, 0.999999));
  cmd->add_option("--out", flags.out, "write output to this file instead of stdout");
  cmd->add_option("--format", flags.format, "output format")
      ->check(CLI::IsMember({"json", "table"}));
}

std::uint64_t resolve_seed(const CommonFlags& flags) {
  return flags.seed_given ? flags.seed : default_seed();
}

// ---------------------------------------------------------------------------

int cmd_estimate(const std::string& csv, const std::string& y_col,
                 const std::string& a_col, const std::string& w_cols,
                 const std::string& estimator, const std::string& known_g,
                 double g_trunc, int folds, bool sqrt_vte, double d_eps, int max_iter,
                 long sim_draws, double y_min, double y_max, bool have_bounds,
                 const std::vector<std::string>& q_library,
                 const std::vector<std::string>& g_library,
                 const CommonFlags& flags) {
  CsvColumns columns;
  columns.y = y_col;
  columns.a = a_col;
  std::stringstream ss(w_cols);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) columns.w.push_back(item);
  }
  if (columns.w.empty()) throw ValidationError("--w needs at least one column name");

  std::optional<std::pair<double, double>> bounds;
  if (have_bounds) bounds = std::make_pair(y_min, y_max);
  const ObservedDataset data = load_csv(csv, columns, bounds);

  EstimatorOptions options;
  options.kind = estimator_kind_from_string(estimator);
  options.folds = folds;
  options.targeting.d_eps = d_eps;
  options.targeting.max_iter = max_iter;
  options.seed = resolve_seed(flags);
  options.nuisance.g_trunc = g_trunc;
  options.nuisance.q_library =
      q_library.empty() ? std::vector<LearnerSpec>{LearnerSpec::parse("mean"),
                                                   LearnerSpec::parse("logistic-main"),
                                                   LearnerSpec::parse(
                                                       "logistic-main-interactions")}
                        : parse_library_flag(q_library);
  options.nuisance.g_library =
      g_library.empty()
          ? std::vector<LearnerSpec>{LearnerSpec::parse("mean"),
                                     LearnerSpec::parse("logistic-main")}
          : parse_library_flag(g_library);
  if (!known_g.empty()) {
    options.nuisance.known_g = parse_known_g(known_g, data.p());
  }

  ReportOptions report_options;
  report_options.alpha = flags.alpha;
  report_options.include_sqrt = sqrt_vte;
  report_options.sim_draws = sim_draws;
  report_options.seed = options.seed;

  const EstimateReport report = estimate_with_report(data, options, report_options);
  if (flags.format == "table") {
    write_output(report_to_table(report), flags.out);
  } else {
    write_output(report_to_json(report).dump(2) + "\n", flags.out);
  }
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_prefix,
                 int parallelism_override, const CommonFlags& flags) {
  std::ifstream in(config_path);
  if (!in) throw MissingFileError("cannot open config: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  CampaignConfig config = parse_campaign_config(j);
  if (flags.seed_given) config.seed = flags.seed;
  if (parallelism_override > 0) config.parallelism = parallelism_override;

  const CampaignResult result = run_campaign(config);

  const std::string prefix = out_prefix.empty() ? "campaign" : out_prefix;
  {
    std::ofstream metrics(prefix + "_metrics.csv", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + prefix + "_metrics.csv");
    metrics << metrics_to_csv(result.metrics);
  }
  for (const auto& [n, raw] : result.raw_by_n) {
    const std::string path = prefix + "_raw_n" + std::to_string(n) + ".csv";
    std::ofstream rawfile(path, std::ios::binary);
    if (!rawfile) throw IoError("cannot write " + path);
    rawfile << raw_to_csv(raw);
  }

  // Summary to stdout.
  std::ostringstream out;
  for (const auto& [n, truth] : result.truths) {
    char line[160];
    std::snprintf(line, sizeof(line), "n=%d truth: ATE=%.6f VTE=%.6f (mc se %.2g)\n", n,
                  truth.ate0, truth.vte0, truth.mc_se_vte);
    out << line;
  }
  char header[160];
  std::snprintf(header, sizeof(header), "%-24s %6s %10s %10s %10s %9s %9s %8s\n",
                "estimator", "n", "var", "bias", "mse", "coverage", "skewness", "ok");
  out << header;
  for (const auto& row : result.metrics) {
    char line[200];
    std::snprintf(line, sizeof(line),
                  "%-24s %6d %10.6f %10.6f %10.6f %9.4f %9.4f %8d\n",
                  row.estimator.c_str(), row.n, row.var, row.bias, row.mse,
                  row.coverage, row.skewness, row.reps_ok);
    out << line;
  }
  out << "wrote " << prefix << "_metrics.csv and per-n raw CSVs\n";
  std::cout << out.str();
  return 0;
}

int cmd_quantile(double rho, const std::string& corr_file, long draws,
                 const CommonFlags& flags) {
  MatrixXd corr;
  if (!corr_file.empty()) {
    std::ifstream in(corr_file);
    if (!in) throw MissingFileError("cannot open " + corr_file);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      rows.push_back(row);
    }
    if (rows.empty()) throw ValidationError("empty correlation file");
    corr.resize(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) {
        throw ValidationError("correlation file is not square");
      }
      for (std::size_t j = 0; j < rows.size(); ++j) corr(i, j) = rows[i][j];
    }
  } else {
    corr = MatrixXd::Identity(2, 2);
    corr(0, 1) = corr(1, 0) = rho;
  }
  const std::uint64_t seed = resolve_seed(flags);
  const double q = simultaneous_quantile(corr, flags.alpha, draws, seed);
  if (flags.format == "table") {
    char line[120];
    std::snprintf(line, sizeof(line), "q = %.6f (alpha = %g, draws = %ld)\n", q,
                  flags.alpha, draws);
    write_output(line, flags.out);
  } else {
    nlohmann::json j{{"q", q}, {"alpha", flags.alpha}, {"draws", draws}, {"seed", seed}};
    write_output(j.dump(2) + "\n", flags.out);
  }
  return 0;
}

int cmd_check_eic(int cases, bool flip_d2_sign, const CommonFlags& flags) {
  const std::uint64_t seed = resolve_seed(flags);
  const double eps = 1e-5;
  const double tol = 1e-6;
  int failures = 0;
  std::ostringstream out;
  for (int c = 0; c < cases; ++c) {
    auto engine = make_engine(seed, static_cast<std::uint64_t>(c));
    const auto dist = random_distribution(4, engine);
    const VectorXd score = random_score(dist, engine);
    auto check = pathwise_derivative_oracle(dist, score, eps);
    if (flip_d2_sign) check.inner_vte = -check.inner_vte;
    const double gap_ate = std::abs(check.deriv_ate - check.inner_ate);
    const double gap_vte = std::abs(check.deriv_vte - check.inner_vte);
    const bool pass = gap_ate <= tol && gap_vte <= tol;
    if (!pass) {
      ++failures;
      char line[200];
      std::snprintf(line, sizeof(line),
                    "case %d FAIL: |d1|=%.3g |d2|=%.3g (strata=%d, atoms=%zu)\n", c,
                    gap_ate, gap_vte, dist.n_strata, dist.atoms.size());
      out << line;
    }
  }
  char line[120];
  std::snprintf(line, sizeof(line), "riesz check: %d/%d cases passed (eps=%g tol=%g)\n",
                cases - failures, cases, eps, tol);
  out << line;
  write_output(out.str(), flags.out);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TMLE and CV-TMLE estimation of the mean and variance of the "
               "stratum-specific treatment effect"};
  app.require_subcommand(1);

  // estimate
  auto* estimate = app.add_subcommand("estimate", "estimate ATE and VTE from a CSV");
  std::string csv, y_col, a_col, w_cols;
  std::string estimator = "cv-tmle";
  std::string known_g;
  double g_trunc = 0.01;
  int folds = 10;
  bool sqrt_vte = false;
  double d_eps = 1e-4;
  int max_iter = 20000;
  long sim_draws = 5'000'000;
  double y_min = 0.0, y_max = 1.0;
  std::vector<std::string> q_library, g_library;
  CommonFlags est_flags;
  estimate->add_option("csv", csv, "input CSV file")->required();
  estimate->add_option("--y", y_col, "outcome column")->required();
  estimate->add_option("--a", a_col, "binary treatment column")->required();
  estimate->add_option("--w", w_cols, "comma-separated covariate columns")->required();
  estimate->add_option("--estimator", estimator, "tmle | cv-tmle | lr-plugin")
      ->check(CLI::IsMember({"tmle", "cv-tmle", "lr-plugin"}));
  estimate->add_option("--known-g", known_g,
                       "known propensity: a constant in (0,1) or a dgp name");
  estimate->add_option("--g-trunc", g_trunc, "propensity truncation bound")
      ->check(CLI::Range(1e-6, 0.49));
  estimate->add_option("--folds", folds, "cross-fitting folds")->check(CLI::Range(2, 1000));
  estimate->add_flag("--sqrt-vte", sqrt_vte, "also report sqrt(VTE) via the delta method");
  estimate->add_option("--d-eps", d_eps, "targeting step size");
  estimate->add_option("--max-iter", max_iter, "targeting iteration cap");
  estimate->add_option("--sim-draws", sim_draws, "simultaneous-quantile draws");
  auto* ymin_opt = estimate->add_option("--y-min", y_min, "known outcome lower bound");
  auto* ymax_opt = estimate->add_option("--y-max", y_max, "known outcome upper bound");
  estimate->add_option("--q-library", q_library,
                       "outcome-model learners (comma-separated kinds)");
  estimate->add_option("--g-library", g_library, "propensity learners");
  add_common(estimate, est_flags);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a replicate campaign from JSON");
  std::string config_path, out_prefix;
  int parallelism_override = 0;
  CommonFlags sim_flags;
  simulate->add_option("config", config_path, "campaign config JSON")->required();
  simulate->add_option("--out-prefix", out_prefix, "output file prefix");
  simulate->add_option("--parallelism", parallelism_override, "worker threads");
  add_common(simulate, sim_flags);

  // quantile
  auto* quantile = app.add_subcommand("quantile", "simultaneous max-|Z| quantile");
  double rho = 0.0;
  std::string corr_file;
  long draws = 5'000'000;
  CommonFlags q_flags;
  quantile->add_option("--rho", rho, "off-diagonal correlation for the 2x2 case")
      ->check(CLI::Range(-1.0, 1.0));
  quantile->add_option("--corr-file", corr_file, "CSV with a full correlation matrix");
  quantile->add_option("--draws", draws, "Monte-Carlo draws")->check(CLI::PositiveNumber);
  add_common(quantile, q_flags);

  // check-eic
  auto* check = app.add_subcommand("check-eic",
                                   "pathwise-derivative oracle over random "
                                   "finite-support distributions");
  int cases = 20;
  bool flip_d2 = false;
  CommonFlags c_flags;
  check->add_option("--cases", cases, "number of random cases")
      ->check(CLI::PositiveNumber);
  check->add_flag("--flip-d2-sign", flip_d2, "inject a sign error (self-test)")
      ->group("");  // hidden
  add_common(check, c_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*estimate) {
      const bool have_bounds = ymin_opt->count() > 0 || ymax_opt->count() > 0;
      if (have_bounds && (ymin_opt->count() == 0 || ymax_opt->count() == 0)) {
        throw ValidationError("--y-min and --y-max must be given together");
      }
      return cmd_estimate(csv, y_col, a_col, w_cols, estimator, known_g, g_trunc,
                          folds, sqrt_vte, d_eps, max_iter, sim_draws, y_min, y_max,
                          have_bounds, q_library, g_library, est_flags);
    }
    if (*simulate) {
      return cmd_simulate(config_path, out_prefix, parallelism_override, sim_flags);
    }
    if (*quantile) {
      if (!corr_file.empty() && quantile->count("--rho") > 0) {
        throw ValidationError("give either --rho or --corr-file, not both");
      }
      return cmd_quantile(rho, corr_file, draws, q_flags);
    }
    if (*check) {
      return cmd_check_eic(cases, flip_d2, c_flags);
    }
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

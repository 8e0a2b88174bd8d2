#include "blipvar/simlab.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "blipvar/errors.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/rng.hpp"

namespace blipvar {

std::string to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::controlled_noise: return "controlled-noise";
    case DgpKind::wellspec: return "wellspec";
    case DgpKind::case1: return "case1";
    case DgpKind::case2: return "case2";
    case DgpKind::case3: return "case3";
  }
  return "?";
}

DgpKind dgp_kind_from_string(const std::string& text) {
  if (text == "controlled-noise") return DgpKind::controlled_noise;
  if (text == "wellspec") return DgpKind::wellspec;
  if (text == "case1") return DgpKind::case1;
  if (text == "case2") return DgpKind::case2;
  if (text == "case3") return DgpKind::case3;
  throw ValidationError("unknown dgp kind: " + text);
}

MatrixXd Dgp::draw_w(int n, std::mt19937_64& engine) const {
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  MatrixXd w(n, 4);
  const bool binary_w2 = spec.kind == DgpKind::controlled_noise;
  for (int i = 0; i < n; ++i) {
    w(i, 0) = unif(engine);
    w(i, 1) = binary_w2 ? (coin(engine) ? 1.0 : 0.0) : normal(engine);
    w(i, 2) = normal(engine);
    w(i, 3) = normal(engine);
  }
  return w;
}

VectorXd Dgp::g1(const MatrixXd& w) const {
  VectorXd out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double w1 = w(i, 0), w2 = w(i, 1), w3 = w(i, 2), w4 = w(i, 3);
    double eta = 0.0;
    switch (spec.kind) {
      case DgpKind::controlled_noise:
        eta = 0.5 * (-0.8 * w1 + 0.39 * w2 + 0.08 * w3 - 0.12 * w4 - 0.15);
        break;
      case DgpKind::wellspec:
      case DgpKind::case1:
        eta = -0.4 * w1 + 0.195 * w2 + 0.04 * w3 - 0.06 * w4 - 0.075;
        break;
      case DgpKind::case2:
      case DgpKind::case3:
        eta = 0.4 * (-0.4 * w1 * w2 + 0.63 * w2 * w2 - 0.66 * std::cos(w1) - 0.25);
        break;
    }
    out[i] = expit(eta);
  }
  return out;
}

VectorXd Dgp::qbar(double arm, const MatrixXd& w) const {
  VectorXd out(w.rows());
  const double a = arm;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double w1 = w(i, 0), w2 = w(i, 1), w3 = w(i, 2), w4 = w(i, 3);
    double eta = 0.0;
    switch (spec.kind) {
      case DgpKind::controlled_noise:
        eta = 0.2 * (0.1 * a + 2.0 * a * w1 - 10.0 * a * w2 + 3.0 * a * w3 + w1 + w2 +
                     0.4 * w3 + 0.3 * w4);
        break;
      case DgpKind::wellspec:
        eta = 0.14 * (2.0 * a + w1 + spec.wellspec_a * a * w1 -
                      spec.wellspec_b * a * w2 + w2 - w3 + w4);
        break;
      case DgpKind::case1:
        eta = 0.14 * (2.0 * a + 20.0 * std::cos(w1) * a + std::cos(w1) -
                      4.0 * a * w2 * w2 + 3.0 * std::cos(w4) * a + a * w1 * w1);
        break;
      case DgpKind::case2:
        eta = 0.1 * w1 * w2 + 1.5 * a * std::cos(w1) + 0.15 * w1 -
              0.4 * w2 * (std::abs(w2) > 1.0 ? 1.0 : 0.0) -
              1.0 * w2 * (std::abs(w2) <= 1.0 ? 1.0 : 0.0);
        break;
      case DgpKind::case3:
        eta = 0.2 * w1 * w2 + 0.1 * w2 * w2 -
              0.8 * a * (std::cos(w1) + 0.5 * a * w1 * w2 * w2) - 0.35;
        break;
    }
    out[i] = expit(eta);
  }
  return out;
}

std::pair<ObservedDataset, Dgp> draw_dataset(const DgpSpec& spec,
                                             std::mt19937_64& engine) {
  if (spec.n < 1) throw ValidationError("draw_dataset: n must be >= 1");
  Dgp dgp{spec};
  ObservedDataset data;
  data.w = dgp.draw_w(spec.n, engine);
  data.w_names = {"W1", "W2", "W3", "W4"};
  data.y_name = "Y";
  data.a_name = "A";

  const VectorXd g = dgp.g1(data.w);
  data.a.resize(spec.n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < spec.n; ++i) data.a[i] = unif(engine) < g[i] ? 1.0 : 0.0;

  const VectorXd q1 = dgp.qbar(1.0, data.w);
  const VectorXd q0 = dgp.qbar(0.0, data.w);
  data.y.resize(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    const double q = data.a[i] == 1.0 ? q1[i] : q0[i];
    data.y[i] = unif(engine) < q ? 1.0 : 0.0;
  }
  return {std::move(data), std::move(dgp)};
}

std::pair<VectorXd, VectorXd> perturb_controlled_noise(const Dgp& dgp,
                                                       const MatrixXd& w, int n,
                                                       double rate,
                                                       std::mt19937_64& engine) {
  if (rate >= 0.0) throw ValidationError("perturb_controlled_noise: rate must be < 0");
  const double n_rate = std::isinf(rate) ? 0.0 : std::pow(static_cast<double>(n), rate);

  auto bias = [&](double a, double w1, double w2, double w3, double w4) {
    return 1.5 * n_rate * (-0.2 + 1.5 * a + 0.2 * w1 + w2 - a * w3 + w4);
  };
  auto sigma = [&](double a, double w1, double w2, double w3, double w4) {
    (void)a;
    return 0.8 * n_rate * std::abs(3.5 + 0.5 * w1 + 0.15 * w2 + 0.33 * w3 * w4 - w4);
  };

  const VectorXd q1 = dgp.qbar(1.0, w);
  const VectorXd q0 = dgp.qbar(0.0, w);
  std::normal_distribution<double> normal(0.0, 1.0);

  VectorXd qbar1(w.rows()), qbar0(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double w1 = w(i, 0), w2 = w(i, 1), w3 = w(i, 2), w4 = w(i, 3);
    const double z = normal(engine);
    const double x = normal(engine);
    const double b1 = bias(1.0, w1, w2, w3, w4) + z * sigma(1.0, w1, w2, w3, w4);
    const double b0 = bias(0.0, w1, w2, w3, w4) + x * sigma(0.0, w1, w2, w3, w4);
    qbar1[i] = expit(logit(clip_prob(q1[i])) + b1);
    qbar0[i] = expit(logit(clip_prob(q0[i])) + 0.5 * b1 + std::sqrt(0.75) * b0);
  }
  return {std::move(qbar1), std::move(qbar0)};
}

TrueParams true_params(const DgpSpec& spec, long mc_draws, std::uint64_t seed) {
  if (mc_draws < 2) throw ValidationError("true_params: mc_draws must be >= 2");
  Dgp dgp{spec};
  TrueParams out;
  out.mc_draws = mc_draws;

  // Accumulate the blip moments in chunks to bound memory.
  const long chunk = 1 << 18;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  auto engine = make_engine(seed);
  long remaining = mc_draws;
  while (remaining > 0) {
    const int m = static_cast<int>(std::min(chunk, remaining));
    const MatrixXd w = dgp.draw_w(m, engine);
    const VectorXd b = dgp.blip(w);
    for (int i = 0; i < m; ++i) {
      const double v = b[i];
      s1 += v;
      s2 += v * v;
      s3 += v * v * v;
      s4 += v * v * v * v;
    }
    remaining -= m;
  }
  const double nd = static_cast<double>(mc_draws);
  const double mean = s1 / nd;
  const double m2 = s2 / nd - mean * mean;
  out.ate0 = mean;
  out.vte0 = m2;
  out.mc_se_ate = std::sqrt(m2 / nd);
  // SE of the variance estimate via the fourth central moment.
  const double ex4 = s4 / nd - 4.0 * mean * s3 / nd + 6.0 * mean * mean * s2 / nd -
                     3.0 * mean * mean * mean * mean;
  out.mc_se_vte = std::sqrt(std::max(0.0, ex4 - m2 * m2) / nd);
  return out;
}

namespace {

PropensityFn dgp_propensity(const Dgp& dgp) {
  return [dgp](const MatrixXd& w) { return dgp.g1(w); };
}

ReplicateRecord one_replicate(const DgpSpec& spec, const Dgp& dgp,
                              const ObservedDataset& data, const SimEstimator& est,
                              double z, const TrueParams& truth,
                              std::uint64_t est_seed) {
  ReplicateRecord rec;
  rec.estimator = est.name;

  double est_vte_se = 0.0;
  if (est.kind == SimEstimatorKind::oracle) {
    rec.est_ate = truth.ate0;
    rec.est_vte = truth.vte0;
    rec.ci_lo = truth.vte0 - 1.0;
    rec.ci_hi = truth.vte0 + 1.0;
    rec.covered = rec.ci_lo <= truth.vte0 && truth.vte0 <= rec.ci_hi;
    return rec;
  }

  EstimationResult result;
  if (est.kind == SimEstimatorKind::lr_plugin) {
    EstimatorOptions options;
    options.kind = EstimatorKind::lr_plugin;
    options.seed = est_seed;
    result = run_estimator(data, options);
  } else if (est.noise_initial) {
    if (spec.kind != DgpKind::controlled_noise) {
      throw ValidationError("noise_initial requires the controlled-noise dgp");
    }
    auto engine = make_engine(est_seed, 77);
    auto [qbar1, qbar0] =
        perturb_controlled_noise(dgp, data.w, data.n(), spec.rate, engine);
    NuisancePredictions nuisance;
    nuisance.qbar1 = std::move(qbar1);
    nuisance.qbar0 = std::move(qbar0);
    nuisance.g1 = dgp.g1(data.w);
    nuisance.g_known = true;
    nuisance.mode = NuisanceMode::full_sample;
    result = run_targeted_estimator(data, nuisance,
                                    est.kind == SimEstimatorKind::cv_tmle
                                        ? EstimatorKind::cv_tmle
                                        : EstimatorKind::tmle,
                                    est.targeting);
  } else {
    EstimatorOptions options;
    options.kind = est.kind == SimEstimatorKind::cv_tmle ? EstimatorKind::cv_tmle
                                                         : EstimatorKind::tmle;
    options.nuisance.q_library = est.q_library;
    options.nuisance.g_library = est.g_library;
    options.nuisance.g_trunc = est.g_trunc;
    if (est.use_true_g) options.nuisance.known_g = dgp_propensity(dgp);
    options.folds = est.folds;
    options.targeting = est.targeting;
    options.seed = est_seed;
    result = run_estimator(data, options);
  }

  const auto estimates = result.estimates();
  rec.est_ate = estimates.ate;
  rec.est_vte = estimates.vte;
  est_vte_se = estimates.se_vte;
  rec.ci_lo = rec.est_vte - z * est_vte_se;
  rec.ci_hi = rec.est_vte + z * est_vte_se;
  rec.covered = rec.ci_lo <= truth.vte0 && truth.vte0 <= rec.ci_hi;
  return rec;
}

}  // namespace

ReplicateResult run_replicates(const DgpSpec& spec,
                               const std::vector<SimEstimator>& estimators, int reps,
                               double alpha, int parallelism, std::uint64_t seed,
                               const TrueParams& truth) {
  if (reps < 1) throw ValidationError("run_replicates: reps must be >= 1");
  if (estimators.empty()) throw ValidationError("run_replicates: no estimators");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const int n_est = static_cast<int>(estimators.size());

  std::vector<ReplicateRecord> records(static_cast<std::size_t>(reps) * n_est);

  auto run_one = [&](int rep) {
    auto engine = make_engine(substream(seed, static_cast<std::uint64_t>(rep)), 0);
    DgpSpec rep_spec = spec;
    rep_spec.seed = substream(seed, static_cast<std::uint64_t>(rep));
    const auto [data, dgp] = draw_dataset(rep_spec, engine);
    for (int e = 0; e < n_est; ++e) {
      const std::uint64_t est_seed =
          substream(rep_spec.seed, static_cast<std::uint64_t>(e) + 1);
      ReplicateRecord rec;
      try {
        rec = one_replicate(spec, dgp, data, estimators[e], z, truth, est_seed);
      } catch (const std::exception& ex) {
        rec.estimator = estimators[e].name;
        rec.ok = false;
        rec.error = ex.what();
      }
      rec.replicate = rep;
      records[static_cast<std::size_t>(rep) * n_est + e] = std::move(rec);
    }
  };

  const int workers = std::max(1, parallelism);
  if (workers == 1) {
    for (int rep = 0; rep < reps; ++rep) run_one(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        while (true) {
          const int rep = next.fetch_add(1);
          if (rep >= reps) return;
          run_one(rep);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  ReplicateResult result;
  result.raw = std::move(records);
  result.truth = truth;
  for (int e = 0; e < n_est; ++e) {
    std::vector<double> estimates;
    estimates.reserve(reps);
    int covered = 0, ok = 0;
    for (int rep = 0; rep < reps; ++rep) {
      const auto& rec = result.raw[static_cast<std::size_t>(rep) * n_est + e];
      if (!rec.ok) continue;
      ++ok;
      estimates.push_back(rec.est_vte);
      if (rec.covered) ++covered;
    }
    MetricsRow row;
    row.estimator = estimators[e].name;
    row.n = spec.n;
    row.reps_ok = ok;
    if (ok > 0) {
      const Eigen::Map<VectorXd> v(estimates.data(),
                                   static_cast<Eigen::Index>(estimates.size()));
      const double mean = v.mean();
      row.bias = mean - truth.vte0;
      row.var = (v.array() - mean).square().mean();  // population variance
      row.mse = row.var + row.bias * row.bias;
      row.coverage = static_cast<double>(covered) / ok;
      row.skewness = sample_skewness(v);
    }
    result.metrics.push_back(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Campaign configuration.

namespace {

template <typename T>
T require_field(const nlohmann::json& j, const std::string& field) {
  if (!j.contains(field)) {
    throw ValidationError("config: missing field '" + field + "'");
  }
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config: field '" + field + "' has the wrong type");
  }
}

std::vector<LearnerSpec> parse_library(const nlohmann::json& j,
                                       const std::string& field) {
  std::vector<LearnerSpec> library;
  for (const auto& entry : j) {
    LearnerSpec spec;
    if (entry.is_string()) {
      spec = LearnerSpec::parse(entry.get<std::string>());
    } else if (entry.is_object()) {
      spec = LearnerSpec::parse(require_field<std::string>(entry, "kind"));
      if (entry.contains("k")) spec.k = entry.at("k").get<int>();
      if (entry.contains("degree")) spec.degree = entry.at("degree").get<int>();
      if (entry.contains("lambda")) spec.lambda = entry.at("lambda").get<double>();
      validate(spec);
    } else {
      throw ValidationError("config: entries of '" + field +
                            "' must be strings or objects");
    }
    library.push_back(spec);
  }
  return library;
}

}  // namespace

SimEstimator parse_sim_estimator(const nlohmann::json& j) {
  SimEstimator est;
  const std::string kind = require_field<std::string>(j, "kind");
  if (kind == "tmle") est.kind = SimEstimatorKind::tmle;
  else if (kind == "cv-tmle") est.kind = SimEstimatorKind::cv_tmle;
  else if (kind == "lr-plugin") est.kind = SimEstimatorKind::lr_plugin;
  else if (kind == "oracle") est.kind = SimEstimatorKind::oracle;
  else throw ValidationError("config: unknown estimator kind '" + kind + "'");

  est.name = j.value("name", kind);
  if (j.contains("g")) {
    const std::string g = j.at("g").get<std::string>();
    if (g == "known") est.use_true_g = true;
    else if (g == "fit") est.use_true_g = false;
    else throw ValidationError("config: estimator field 'g' must be known|fit");
  }
  est.noise_initial = j.value("noise_initial", false);
  if (j.contains("q_library")) est.q_library = parse_library(j.at("q_library"), "q_library");
  if (j.contains("g_library")) est.g_library = parse_library(j.at("g_library"), "g_library");
  est.folds = j.value("folds", 10);
  est.g_trunc = j.value("g_trunc", 0.01);
  est.targeting.d_eps = j.value("d_eps", 1e-4);
  est.targeting.max_iter = j.value("max_iter", 20000);

  const bool needs_q = est.kind == SimEstimatorKind::tmle ||
                       est.kind == SimEstimatorKind::cv_tmle;
  if (needs_q && !est.noise_initial && est.q_library.empty()) {
    throw ValidationError("config: estimator '" + est.name +
                          "' needs field 'q_library'");
  }
  if (needs_q && !est.noise_initial && !est.use_true_g && est.g_library.empty()) {
    throw ValidationError("config: estimator '" + est.name +
                          "' needs field 'g_library' (or g: known)");
  }
  return est;
}

CampaignConfig parse_campaign_config(const nlohmann::json& j) {
  CampaignConfig config;
  const auto spec_json = require_field<nlohmann::json>(j, "spec");
  config.spec.kind = dgp_kind_from_string(require_field<std::string>(spec_json, "kind"));
  config.spec.rate = spec_json.value("rate", -1.0 / 3.0);
  config.spec.wellspec_a = spec_json.value("wellspec_a", 3.0);
  config.spec.wellspec_b = spec_json.value("wellspec_b", 1.0);

  const auto estimators = require_field<nlohmann::json>(j, "estimators");
  if (!estimators.is_array() || estimators.empty()) {
    throw ValidationError("config: field 'estimators' must be a non-empty array");
  }
  for (const auto& e : estimators) config.estimators.push_back(parse_sim_estimator(e));

  config.reps = require_field<int>(j, "reps");
  if (config.reps < 1) throw ValidationError("config: field 'reps' must be >= 1");
  config.n_grid = require_field<std::vector<int>>(j, "n_grid");
  if (config.n_grid.empty()) {
    throw ValidationError("config: field 'n_grid' must be non-empty");
  }
  config.alpha = j.value("alpha", 0.05);
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw ValidationError("config: field 'alpha' must be in (0,1)");
  }
  config.seed = require_field<std::uint64_t>(j, "seed");
  config.parallelism = j.value("parallelism", 1);
  config.mc_truth_draws = j.value("mc_truth_draws", 4'000'000L);
  return config;
}

CampaignResult run_campaign(const CampaignConfig& config) {
  CampaignResult result;
  for (std::size_t k = 0; k < config.n_grid.size(); ++k) {
    DgpSpec spec = config.spec;
    spec.n = config.n_grid[k];
    const TrueParams truth =
        true_params(spec, config.mc_truth_draws, substream(config.seed, 1000));
    auto rep = run_replicates(spec, config.estimators, config.reps, config.alpha,
                              config.parallelism,
                              substream(config.seed, 2000 + k), truth);
    for (auto& row : rep.metrics) result.metrics.push_back(row);
    result.raw_by_n.emplace_back(spec.n, std::move(rep.raw));
    result.truths.emplace_back(spec.n, truth);
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV output.

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "estimator,n,var,bias,mse,coverage,skewness,reps_ok\n";
  for (const auto& row : rows) {
    out += row.estimator + "," + std::to_string(row.n) + "," + format_double(row.var) +
           "," + format_double(row.bias) + "," + format_double(row.mse) + "," +
           format_double(row.coverage) + "," + format_double(row.skewness) + "," +
           std::to_string(row.reps_ok) + "\n";
  }
  return out;
}

std::string raw_to_csv(const std::vector<ReplicateRecord>& rows) {
  std::string out = "replicate,estimator,est_ate,est_vte,ci_lo,ci_hi,covered\n";
  for (const auto& row : rows) {
    if (!row.ok) continue;
    out += std::to_string(row.replicate) + "," + row.estimator + "," +
           format_double(row.est_ate) + "," + format_double(row.est_vte) + "," +
           format_double(row.ci_lo) + "," + format_double(row.ci_hi) + "," +
           (row.covered ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace blipvar

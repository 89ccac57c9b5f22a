#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "crtbayes/error.hpp"
#include "crtbayes/estimands.hpp"
#include "crtbayes/rng.hpp"
#include "crtbayes/trial_data.hpp"

namespace crtbayes {

/// Simulation scenarios. S1 is linear (the working model is correct), S2 and
/// S3 are nonlinear with informative cluster size, NoIcs has cluster size
/// independent of covariates and outcomes.
enum class Scenario { s1, s2, s3, no_ics };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::s1: return "s1";
    case Scenario::s2: return "s2";
    case Scenario::s3: return "s3";
    case Scenario::no_ics: return "noics";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view name) {
  if (name == "s1" || name == "i") return Scenario::s1;
  if (name == "s2" || name == "ii") return Scenario::s2;
  if (name == "s3" || name == "iii") return Scenario::s3;
  if (name == "noics" || name == "no_ics") return Scenario::no_ics;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected s1|s2|s3|noics)");
}

struct ScenarioConfig {
  Scenario scenario = Scenario::s1;
  std::size_t clusters = 60;
  double pi = 0.5;
  double sigma_phi2 = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (clusters < 2) throw ConfigError("scenario needs at least 2 clusters");
    if (!(sigma_phi2 > 0.0)) throw ConfigError("sigma_phi2 must be positive");
    if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("pi must lie in (0,1)");
  }
};

inline const std::vector<std::string>& scenario_covariate_names() {
  static const std::vector<std::string> names{"C1", "C2", "X1", "X2"};
  return names;
}

/// Covariates of one individual as the outcome formulas see them.
struct IndividualCovariates {
  double n;   // cluster size N_i
  double c1;  // cluster-level, continuous
  double c2;  // cluster-level, binary
  double x1;  // individual-level, binary
  double x2;  // individual-level, continuous
};

/// Fixed-effect part eta_ij(a) of the outcome-generating model.
inline double scenario_eta(Scenario s, int a, const IndividualCovariates& v) {
  const double A = a;
  switch (s) {
    case Scenario::s1:
      return 0.3 * A + v.n / 200.0 + v.c1 / 3.0 + (2.0 * v.c2 - 1.0) / 5.0 + A * v.c2 / 10.0 +
             0.25 * (v.x1 + v.x2) + A * v.n / 200.0 + A * v.x1 / 10.0;
    case Scenario::s2:
      return -0.1 - 0.3 / (1.0 + std::exp(-6.0 * (v.n + v.c1 + v.c2 + v.x1 + v.x2))) +
             0.2 * v.x1 * v.x2 + 0.3 * (v.n / 100.0 + v.c1 + v.c2) * A -
             A / (1.0 + std::exp(-4.0 * (v.x1 + v.x2)));
    case Scenario::s3:
      return v.n * A / 60.0 + 0.5 * v.n * std::sin(v.c1) * (2.0 * v.c2 - 1.0) +
             0.5 * std::exp(v.x1) * std::abs(v.x2) + 0.25 * A * v.x2 * std::log(std::abs(v.c1));
    case Scenario::no_ics:
      return -0.1 - 0.3 / (1.0 + std::exp(-6.0 * (30.0 + v.x1 + v.x2))) + 0.2 * v.x1 * v.x2 +
             0.3 * (3.0 + v.x1) * A - A / (1.0 + std::exp(-4.0 * (v.x1 + v.x2)));
  }
  return 0.0;
}

/// One simulated cluster with both potential-outcome vectors.
struct SimulatedCluster {
  ClusterRecord record;  // outcomes hold the observed Y = A Y(1) + (1-A) Y(0)
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
};

/// Generate cluster `index` from the scenario. Each role (size, covariates,
/// random effect, outcome noise, assignment) draws from its own substream
/// keyed by (seed, role, index), so potential outcomes do not depend on the
/// assignment stream and clusters can be generated in any order.
///
/// Normal(m, s) below takes a standard deviation. Covariate draws use SD 4
/// for C1 and SD 9 for X2; the random intercept has variance sigma_phi2.
inline SimulatedCluster simulate_cluster(Scenario scenario, double sigma_phi2, double pi,
                                         std::uint64_t seed, std::size_t index) {
  Rng size_rng(derive_seed(seed, StreamTag::cluster_size, {index}));
  Rng cov_rng(derive_seed(seed, StreamTag::covariates, {index}));
  Rng re_rng(derive_seed(seed, StreamTag::random_effect, {index}));
  Rng noise_rng(derive_seed(seed, StreamTag::outcome_noise, {index}));
  Rng arm_rng(derive_seed(seed, StreamTag::assignment, {index}));

  const auto n = static_cast<Eigen::Index>(size_rng.uniform_int(10, 50));
  const double nd = static_cast<double>(n);

  double c1 = 0.0, c2 = 0.0;
  Eigen::VectorXd x1(n), x2(n);
  if (scenario == Scenario::no_ics) {
    c1 = cov_rng.normal(3.0, 4.0);
    c2 = cov_rng.bernoulli(expit(std::log(3.0) * c1)) ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) x1(j) = cov_rng.bernoulli(0.6) ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) x2(j) = cov_rng.normal(x1(j) * (2.0 * c2 - 1.0), 9.0);
  } else {
    c1 = cov_rng.normal(nd / 10.0, 4.0);
    c2 = cov_rng.bernoulli(expit(std::log(nd / 10.0) * c1)) ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) x1(j) = cov_rng.bernoulli(nd / 50.0) ? 1.0 : 0.0;
    const double x2_mean = x1.sum() * (2.0 * c2 - 1.0) / nd;
    for (Eigen::Index j = 0; j < n; ++j) x2(j) = cov_rng.normal(x2_mean, 9.0);
  }

  const double phi = re_rng.normal(0.0, std::sqrt(sigma_phi2));

  SimulatedCluster out;
  out.y0.resize(n);
  out.y1.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const IndividualCovariates v{nd, c1, c2, x1(j), x2(j)};
    out.y0(j) = scenario_eta(scenario, 0, v) + phi + noise_rng.normal();
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const IndividualCovariates v{nd, c1, c2, x1(j), x2(j)};
    out.y1(j) = scenario_eta(scenario, 1, v) + phi + noise_rng.normal();
  }

  auto& rec = out.record;
  rec.id = "c" + std::to_string(index + 1);
  rec.treatment = arm_rng.bernoulli(pi) ? 1 : 0;
  rec.covariates.resize(n, 4);
  rec.covariates.col(0).setConstant(c1);
  rec.covariates.col(1).setConstant(c2);
  rec.covariates.col(2) = x1;
  rec.covariates.col(3) = x2;
  rec.outcomes = rec.treatment == 1 ? out.y1 : out.y0;
  return out;
}

struct GeneratedTrial {
  TrialDataset data;
  std::vector<Eigen::VectorXd> y1;
  std::vector<Eigen::VectorXd> y0;
};

/// Simulate a trial. A draw with all clusters in one arm is a valid draw from
/// the design but unusable by the two-arm estimators; it is rejected with an
/// ArmMissingError and callers decide whether to redraw.
inline GeneratedTrial generate_trial(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<ClusterRecord> clusters;
  GeneratedTrial out;
  clusters.reserve(cfg.clusters);
  for (std::size_t i = 0; i < cfg.clusters; ++i) {
    auto c = simulate_cluster(cfg.scenario, cfg.sigma_phi2, cfg.pi, cfg.seed, i);
    out.y1.push_back(std::move(c.y1));
    out.y0.push_back(std::move(c.y0));
    clusters.push_back(std::move(c.record));
  }
  out.data = TrialDataset(std::move(clusters), cfg.pi, scenario_covariate_names());
  return out;
}

struct TruthEstimate {
  Scenario scenario = Scenario::s1;
  EffectScale scale = EffectScale::difference;
  std::size_t n_clusters = 0;
  double mu_c[2] = {0.0, 0.0};
  double mu_i[2] = {0.0, 0.0};
  double delta_c = 0.0;
  double delta_i = 0.0;
  // Monte-Carlo standard errors on the difference scale.
  double se_delta_c = 0.0;
  double se_delta_i = 0.0;
  double se_gap = 0.0;  // SE of delta_c - delta_i
};

/// Ground-truth estimands from potential outcomes of n_truth fresh clusters:
/// cluster-ATE averages cluster means equally, individual-ATE pools individuals.
inline TruthEstimate true_estimands(const ScenarioConfig& cfg, std::size_t n_truth,
                                    EffectScale scale = EffectScale::difference) {
  cfg.validate();
  if (n_truth < 10000) throw ConfigError("truth computation needs n_truth >= 10000");
  std::vector<double> dbar(n_truth), dsum(n_truth), size(n_truth);
  double sum_bar[2] = {0, 0}, sum_tot[2] = {0, 0}, total_n = 0.0;
  for (std::size_t i = 0; i < n_truth; ++i) {
    const auto c = simulate_cluster(cfg.scenario, cfg.sigma_phi2, cfg.pi, cfg.seed, i);
    const double n = static_cast<double>(c.y1.size());
    const double s1 = c.y1.sum(), s0 = c.y0.sum();
    sum_bar[1] += s1 / n;
    sum_bar[0] += s0 / n;
    sum_tot[1] += s1;
    sum_tot[0] += s0;
    total_n += n;
    dbar[i] = (s1 - s0) / n;
    dsum[i] = s1 - s0;
    size[i] = n;
  }
  const double nt = static_cast<double>(n_truth);
  TruthEstimate t;
  t.scenario = cfg.scenario;
  t.scale = scale;
  t.n_clusters = n_truth;
  for (int a = 0; a < 2; ++a) {
    t.mu_c[a] = sum_bar[a] / nt;
    t.mu_i[a] = sum_tot[a] / total_n;
  }
  t.delta_c = apply_scale(scale, t.mu_c[1], t.mu_c[0]);
  t.delta_i = apply_scale(scale, t.mu_i[1], t.mu_i[0]);

  // Influence-function standard errors for the difference-scale quantities.
  const double dc = t.mu_c[1] - t.mu_c[0];
  const double di = t.mu_i[1] - t.mu_i[0];
  const double nbar = total_n / nt;
  double vc = 0.0, vi = 0.0, vg = 0.0;
  for (std::size_t k = 0; k < n_truth; ++k) {
    const double ic = dbar[k] - dc;
    const double ii = (dsum[k] - di * size[k]) / nbar;
    vc += ic * ic;
    vi += ii * ii;
    vg += (ic - ii) * (ic - ii);
  }
  t.se_delta_c = std::sqrt(vc / (nt - 1.0) / nt);
  t.se_delta_i = std::sqrt(vi / (nt - 1.0) / nt);
  t.se_gap = std::sqrt(vg / (nt - 1.0) / nt);
  return t;
}

}  // namespace crtbayes

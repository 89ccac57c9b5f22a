#pragma once

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crtbayes/error.hpp"
#include "crtbayes/estimands.hpp"
#include "crtbayes/lmm_gibbs.hpp"
#include "crtbayes/parallel.hpp"
#include "crtbayes/rng.hpp"
#include "crtbayes/stats.hpp"
#include "crtbayes/trial_data.hpp"

namespace crtbayes {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
  // Draw-invariant estimators give bounds that agree up to rounding in the
  // cancelling sums, so coincidence is judged relative to the bound scale.
  bool zero_width(double tol = 1e-10) const {
    return width() <= tol * std::max({1.0, std::abs(lo), std::abs(hi)});
  }
};

/// Equal-tailed posterior quantile interval (type-7 quantiles).
inline Interval uncalibrated_interval(std::span<const double> per_draw, double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("interval level must lie in (0,1)");
  if (static_cast<double>(per_draw.size()) * (1.0 - level) < 1.0)
    throw ConfigError(fmt::format("{} draws are too few for a {:g} interval", per_draw.size(), level));
  const double tail = 0.5 * (1.0 - level);
  return {stats::quantile(per_draw, tail), stats::quantile(per_draw, 1.0 - tail)};
}

// ---------------------------------------------------------------------------
// Cluster bootstrap

enum class ResampleMode {
  cluster,   // M clusters i.i.d. with replacement
  identity,  // every replicate equals the original data (test hook)
};

struct BootstrapPlan {
  std::size_t replicates = 100;  // K
  std::uint64_t seed = 0;
  std::size_t max_retries = 100;
  ResampleMode mode = ResampleMode::cluster;

  void validate() const {
    if (replicates < 2) throw ConfigError("bootstrap needs K >= 2 replicates");
  }
};

/// Cluster indices of the k-th replicate. Attempt > 0 gives the redraws used
/// when an attempt lacks one arm; each (k, attempt) has its own stream.
inline std::vector<std::size_t> resample_indices(std::size_t m, const BootstrapPlan& plan,
                                                 std::size_t k, std::size_t attempt = 0) {
  std::vector<std::size_t> idx(m);
  if (plan.mode == ResampleMode::identity) {
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    return idx;
  }
  Rng rng(derive_seed(plan.seed, {k, attempt}));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(m) - 1));
  return idx;
}

/// Raw resampled datasets (first attempt for each k). A replicate may hold a
/// single arm; estimators that need both arms reject it.
inline std::vector<TrialDataset> bootstrap_datasets(const TrialDataset& d, const BootstrapPlan& plan) {
  plan.validate();
  std::vector<TrialDataset> out;
  out.reserve(plan.replicates);
  for (std::size_t k = 0; k < plan.replicates; ++k) {
    std::vector<ClusterRecord> clusters;
    clusters.reserve(d.num_clusters());
    for (auto i : resample_indices(d.num_clusters(), plan, k)) clusters.push_back(d.cluster(i));
    out.emplace_back(std::move(clusters), d.assignment_probability(), d.covariate_names(),
                     ArmRequirement::any);
  }
  return out;
}

struct BootstrapSet {
  std::vector<AnalysisData> datasets;
  std::size_t redraws = 0;
};

/// Resampled analysis datasets, redrawing any replicate that lacks an arm
/// (up to plan.max_retries times per replicate) so exactly K remain.
inline BootstrapSet bootstrap_analysis_sets(const AnalysisData& d, const BootstrapPlan& plan) {
  plan.validate();
  BootstrapSet out;
  out.datasets.reserve(plan.replicates);
  const auto src = d.clusters();
  for (std::size_t k = 0; k < plan.replicates; ++k) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > plan.max_retries)
        throw CalibrationError(fmt::format(
            "bootstrap replicate {} lacked an arm after {} redraws", k, plan.max_retries));
      std::vector<ClusterSummary> clusters;
      clusters.reserve(src.size());
      for (auto i : resample_indices(src.size(), plan, k, attempt)) clusters.push_back(src[i]);
      AnalysisData candidate(std::move(clusters), d.pi());
      if (candidate.has_both_arms()) {
        out.datasets.push_back(std::move(candidate));
        break;
      }
      ++out.redraws;
    }
  }
  if (out.redraws > 0)
    std::clog << "info: " << out.redraws << " single-arm bootstrap replicate(s) redrawn\n";
  return out;
}

// ---------------------------------------------------------------------------
// Calibrated variance

/// K x B matrix of Delta(D^(k), beta^(b)).
struct GMatrix {
  Eigen::MatrixXd values;
};

inline GMatrix g_matrix(const BootstrapSet& boot, std::span<const LmmConditionalMeans> models,
                        const EstimandSpec& spec) {
  spec.validate();
  GMatrix g;
  g.values.resize(static_cast<Eigen::Index>(boot.datasets.size()),
                  static_cast<Eigen::Index>(models.size()));
  for (std::size_t k = 0; k < boot.datasets.size(); ++k)
    for (std::size_t b = 0; b < models.size(); ++b)
      g.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b)) =
          evaluate(boot.datasets[k], models[b], spec).delta;
  return g;
}

struct EstimateReport {
  EstimandSpec spec;
  double level = 0.95;
  std::size_t draws = 0;
  std::size_t bootstrap_replicates = 0;
  std::size_t bootstrap_redraws = 0;

  double point = 0.0;
  double posterior_sd = 0.0;
  Interval uncalibrated;
  double data_var = 0.0;
  double param_var = 0.0;
  double total_var = 0.0;
  Interval calibrated;
  std::optional<double> geweke_z;

  double calibrated_sd() const { return std::sqrt(total_var); }
  bool zero_width_uncalibrated() const { return uncalibrated.zero_width(); }
};

struct EstimandTarget {
  EstimandUnit unit;
  EffectScale scale;
};

namespace detail {

inline double delta_of(const ArmMeans& m, const EstimandTarget& t) {
  return m.effect(t.unit, t.scale).delta;
}

}  // namespace detail

/// Reports for every target of one (estimator, adjustment) method, sharing
/// the per-draw predictions across targets.
///
/// data_var  = sample variance over k of the row means (1/B) sum_b Delta(D^(k), beta^(b))
/// param_var = sample variance over b of Delta(D, beta^(b))
/// The beta draws come from the original-data posterior and are held fixed
/// across replicates. Row means are streamed; G is never materialized.
inline std::vector<EstimateReport> calibrate_method(const AnalysisData& d,
                                                    std::span<const LmmConditionalMeans> models,
                                                    EstimatorKind estimator, bool adjusted,
                                                    std::span<const EstimandTarget> targets,
                                                    const BootstrapSet& boot, double level = 0.95,
                                                    std::size_t threads = 1) {
  if (models.empty()) throw ConfigError("posterior draws are empty");
  if (boot.datasets.size() < 2) throw ConfigError("bootstrap needs K >= 2 replicates");
  const std::size_t B = models.size();
  const std::size_t K = boot.datasets.size();
  const std::size_t T = targets.size();

  // Nonparametric values ignore beta, so each row is a single evaluation.
  const bool beta_free = estimator == EstimatorKind::nonparametric;

  std::vector<std::vector<double>> per_draw(T, std::vector<double>(B));
  if (beta_free) {
    const auto m = nonparametric_means(d);
    for (std::size_t t = 0; t < T; ++t) std::fill(per_draw[t].begin(), per_draw[t].end(), detail::delta_of(m, targets[t]));
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      const auto m = arm_means(d, models[b], estimator);
      for (std::size_t t = 0; t < T; ++t) per_draw[t][b] = detail::delta_of(m, targets[t]);
    }
  }

  std::vector<std::vector<double>> row_means(T, std::vector<double>(K));
  parallel_for(K, threads, [&](std::size_t k) {
    const auto& dk = boot.datasets[k];
    if (beta_free) {
      const auto m = nonparametric_means(dk);
      for (std::size_t t = 0; t < T; ++t) row_means[t][k] = detail::delta_of(m, targets[t]);
      return;
    }
    std::vector<double> acc(T, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto m = arm_means(dk, models[b], estimator);
      for (std::size_t t = 0; t < T; ++t) acc[t] += detail::delta_of(m, targets[t]);
    }
    for (std::size_t t = 0; t < T; ++t) row_means[t][k] = acc[t] / static_cast<double>(B);
  });

  const double z = stats::normal_quantile(0.5 + 0.5 * level);
  std::vector<EstimateReport> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    EstimateReport r;
    r.spec = {targets[t].unit, targets[t].scale, estimator, adjusted};
    r.level = level;
    r.draws = B;
    r.bootstrap_replicates = K;
    r.bootstrap_redraws = boot.redraws;
    r.point = stats::mean(per_draw[t]);
    r.param_var = stats::variance(per_draw[t]);
    r.posterior_sd = std::sqrt(r.param_var);
    r.uncalibrated = uncalibrated_interval(per_draw[t], level);
    r.data_var = stats::variance(row_means[t]);
    r.total_var = r.data_var + r.param_var;
    const double half = z * std::sqrt(r.total_var);
    r.calibrated = {r.point - half, r.point + half};
    if (B >= 100) r.geweke_z = stats::geweke_z(per_draw[t]);
    out.push_back(r);
  }
  return out;
}

inline EstimateReport calibrated_variance(const AnalysisData& d,
                                          std::span<const LmmConditionalMeans> models,
                                          const EstimandSpec& spec, const BootstrapSet& boot,
                                          double level = 0.95, std::size_t threads = 1) {
  spec.validate();
  const EstimandTarget target{spec.unit, spec.scale};
  return calibrate_method(d, models, spec.estimator, spec.adjusted, {&target, 1}, boot, level,
                          threads)
      .front();
}

inline EstimateReport calibrated_variance(const TrialDataset& d, const PosteriorDraws& draws,
                                          const EstimandSpec& spec, const BootstrapPlan& plan,
                                          double level = 0.95) {
  spec.validate();
  const AnalysisData data(d);
  const auto boot = bootstrap_analysis_sets(data, plan);
  if (spec.estimator == EstimatorKind::nonparametric) {
    // Placeholder models only fix B; nonparametric values never read them.
    const std::vector<LmmConditionalMeans> models(draws.size(),
                                                  LmmConditionalMeans(Eigen::VectorXd::Zero(2), false));
    return calibrated_variance(data, models, spec, boot, level);
  }
  const auto models = draw_models(draws, spec.adjusted);
  return calibrated_variance(data, models, spec, boot, level);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const EstimateReport& r) {
  nlohmann::ordered_json j;
  j["estimator"] = to_string(r.spec.estimator);
  j["adjusted"] = r.spec.adjusted;
  j["estimand"] = to_string(r.spec.unit);
  j["scale"] = to_string(r.spec.scale);
  j["level"] = r.level;
  j["draws"] = r.draws;
  j["bootstrap_replicates"] = r.bootstrap_replicates;
  j["bootstrap_redraws"] = r.bootstrap_redraws;
  j["point"] = r.point;
  j["posterior_sd"] = r.posterior_sd;
  j["uncalibrated"] = {{"ci_low", r.uncalibrated.lo},
                       {"ci_high", r.uncalibrated.hi},
                       {"zero_width", r.zero_width_uncalibrated()}};
  j["calibrated"] = {{"ci_low", r.calibrated.lo}, {"ci_high", r.calibrated.hi}};
  j["data_var"] = r.data_var;
  j["param_var"] = r.param_var;
  j["total_var"] = r.total_var;
  if (r.geweke_z && std::isfinite(*r.geweke_z))
    j["geweke_z"] = *r.geweke_z;
  else
    j["geweke_z"] = nullptr;
  return j;
}

/// Aligned text table, one row per (report, interval type).
inline std::string format_reports(std::span<const EstimateReport> reports) {
  std::string s = fmt::format("{:<15} {:<10} {:<15} {:<13} {:>9} {:>22} {:>10} {:>10}  {}\n",
                              "Estimator", "Covariate", "Estimand", "Inference", "Estimate",
                              "95% interval", "data_var", "param_var", "flags");
  for (const auto& r : reports) {
    const std::string cov = r.spec.estimator == EstimatorKind::nonparametric
                                ? "-"
                                : (r.spec.adjusted ? "adjusted" : "unadjusted");
    for (int cal = 0; cal < 2; ++cal) {
      const Interval& iv = cal ? r.calibrated : r.uncalibrated;
      std::string flags;
      if (!cal && r.zero_width_uncalibrated()) flags = "zero-width";
      s += fmt::format("{:<15} {:<10} {:<15} {:<13} {:>9.3f} {:>22} {:>10.4g} {:>10.4g}  {}\n",
                       to_string(r.spec.estimator), cov, to_string(r.spec.unit),
                       cal ? "calibrated" : "uncalibrated", r.point,
                       fmt::format("({:.3f}, {:.3f})", iv.lo, iv.hi), r.data_var, r.param_var,
                       flags);
    }
  }
  return s;
}

}  // namespace crtbayes

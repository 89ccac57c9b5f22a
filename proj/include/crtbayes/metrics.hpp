#pragma once

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crtbayes/calibration.hpp"
#include "crtbayes/error.hpp"
#include "crtbayes/stats.hpp"

namespace crtbayes {

struct ValueWithSe {
  double value = 0.0;
  double se = 0.0;
};

/// (mean - truth) / truth, with SE (MCSD / sqrt(R)) / |truth|.
inline ValueWithSe relative_bias(std::span<const double> estimates, double truth) {
  if (truth == 0.0)
    throw MetricError("relative bias is undefined for a zero truth; use absolute bias");
  if (estimates.empty()) throw MetricError("relative bias needs at least one replicate");
  ValueWithSe out;
  out.value = (stats::mean(estimates) - truth) / truth;
  if (estimates.size() > 1)
    out.se = stats::sd(estimates) / std::sqrt(static_cast<double>(estimates.size())) /
             std::abs(truth);
  return out;
}

inline double mcsd(std::span<const double> estimates) {
  if (estimates.size() < 2) throw MetricError("MCSD needs at least two replicates");
  return stats::sd(estimates);
}

/// Standard deviation of one replicate's posterior draws.
inline double posterior_sd(std::span<const double> per_draw) {
  if (per_draw.size() < 2) throw MetricError("posterior SD needs at least two draws");
  return stats::sd(per_draw);
}

inline double aese(std::span<const double> standard_errors) {
  if (standard_errors.empty()) throw MetricError("AESE needs at least one replicate");
  return stats::mean(standard_errors);
}

/// Empirical coverage with its Monte-Carlo half-width 1.96 sqrt(p(1-p)/R).
inline ValueWithSe coverage(std::span<const Interval> intervals, double truth) {
  if (intervals.empty()) throw MetricError("coverage needs at least one replicate");
  std::size_t hits = 0;
  for (const auto& iv : intervals) hits += iv.contains(truth) ? 1 : 0;
  const double r = static_cast<double>(intervals.size());
  const double p = static_cast<double>(hits) / r;
  return {p, 1.96 * std::sqrt(p * (1.0 - p) / r)};
}

/// Var(unadjusted nonparametric) / Var(adjusted), over the same replicates.
inline double relative_efficiency(std::span<const double> adjusted,
                                  std::span<const double> unadjusted_np) {
  if (adjusted.size() != unadjusted_np.size())
    throw MetricError("relative efficiency needs the same replicates for both estimators");
  if (adjusted.size() < 2) throw MetricError("relative efficiency needs at least two replicates");
  const double va = stats::variance(adjusted);
  if (!(va > 0.0)) throw MetricError("relative efficiency undefined: adjusted variance is zero");
  return stats::variance(unadjusted_np) / va;
}

// ---------------------------------------------------------------------------
// Table

/// Per-replicate summary of one (method, estimand).
struct ReplicateEstimate {
  double point = 0.0;
  double posterior_sd = 0.0;
  double calibrated_sd = 0.0;
  Interval uncalibrated;
  Interval calibrated;
};

enum class Inference { uncalibrated, calibrated };

inline std::string to_string(Inference i) {
  return i == Inference::calibrated ? "calibrated" : "uncalibrated";
}

struct MetricRow {
  std::string estimator;  // e.g. "g-computation (adj)"
  Inference inference = Inference::uncalibrated;
  std::size_t clusters = 0;
  std::string estimand;
  std::size_t replicates = 0;
  double truth = 0.0;
  ValueWithSe rel_bias;
  ValueWithSe coverage;
  double mcsd = 0.0;
  // AESE for this row's interval: mean posterior SD when uncalibrated,
  // mean calibrated SD when calibrated. The ratio below uses this value.
  double aese = 0.0;
  double aese_posterior = 0.0;
  double aese_calibrated = 0.0;
  double aese_mcsd_ratio = 0.0;
  double re = 0.0;
};

struct MetricTable {
  std::vector<MetricRow> rows;
  std::size_t failed_replicates = 0;

  const MetricRow* find(std::string_view estimator, std::string_view estimand,
                        Inference inference) const {
    for (const auto& r : rows)
      if (r.estimator == estimator && r.estimand == estimand && r.inference == inference) return &r;
    return nullptr;
  }
};

/// Two rows (uncalibrated, calibrated) for one (method, estimand).
inline std::vector<MetricRow> metric_rows(const std::string& estimator, const std::string& estimand,
                                          std::size_t clusters,
                                          std::span<const ReplicateEstimate> reps, double truth,
                                          std::span<const double> np_points) {
  std::vector<double> points, psd, csd;
  std::vector<Interval> unc, cal;
  for (const auto& r : reps) {
    points.push_back(r.point);
    psd.push_back(r.posterior_sd);
    csd.push_back(r.calibrated_sd);
    unc.push_back(r.uncalibrated);
    cal.push_back(r.calibrated);
  }
  MetricRow base;
  base.estimator = estimator;
  base.estimand = estimand;
  base.clusters = clusters;
  base.replicates = reps.size();
  base.truth = truth;
  base.rel_bias = relative_bias(points, truth);
  base.mcsd = mcsd(points);
  base.aese_posterior = aese(psd);
  base.aese_calibrated = aese(csd);
  // A nonparametric or unadjusted estimator with zero variance across
  // replicates is degenerate; report RE as NaN rather than abort.
  base.re = stats::variance(points) > 0.0 ? relative_efficiency(points, np_points)
                                          : std::nan("");

  std::vector<MetricRow> out;
  for (Inference inf : {Inference::uncalibrated, Inference::calibrated}) {
    MetricRow row = base;
    row.inference = inf;
    row.coverage = coverage(inf == Inference::calibrated ? cal : unc, truth);
    row.aese = inf == Inference::calibrated ? row.aese_calibrated : row.aese_posterior;
    row.aese_mcsd_ratio = row.mcsd > 0.0 ? row.aese / row.mcsd : std::nan("");
    out.push_back(row);
  }
  return out;
}

inline std::string format_table_text(const MetricTable& t) {
  std::string s = fmt::format("{:<26} {:<19} {:>4} {:<15} {:>20} {:>9} {:>8} {:>8} {:>8} {:>9}\n",
                              "Estimator", "Posterior Inference", "M", "Estimand",
                              "Relative Bias (SE)", "Coverage", "MCSD", "AESE", "AESE/MCSD", "RE");
  for (const auto& r : t.rows) {
    s += fmt::format("{:<26} {:<19} {:>4} {:<15} {:>20} {:>8.1f}% {:>8.3f} {:>8.3f} {:>8.3f} {:>9.3f}\n",
                     r.estimator, to_string(r.inference), r.clusters, r.estimand,
                     fmt::format("{:.1f}% ({:.1f}%)", 100.0 * r.rel_bias.value, 100.0 * r.rel_bias.se),
                     100.0 * r.coverage.value, r.mcsd, r.aese, r.aese_mcsd_ratio, r.re);
  }
  if (t.failed_replicates > 0)
    s += fmt::format("excluded failed replicates: {}\n", t.failed_replicates);
  return s;
}

inline std::string format_table_csv(const MetricTable& t) {
  std::string s =
      "estimator,inference,M,estimand,replicates,truth,rel_bias,rel_bias_se,coverage,"
      "coverage_mc_halfwidth,mcsd,aese,aese_posterior,aese_calibrated,aese_mcsd_ratio,re\n";
  for (const auto& r : t.rows) {
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.estimator,
                     to_string(r.inference), r.clusters, r.estimand, r.replicates,
                     detail::format_number(r.truth), detail::format_number(r.rel_bias.value),
                     detail::format_number(r.rel_bias.se), detail::format_number(r.coverage.value),
                     detail::format_number(r.coverage.se), detail::format_number(r.mcsd),
                     detail::format_number(r.aese), detail::format_number(r.aese_posterior),
                     detail::format_number(r.aese_calibrated),
                     detail::format_number(r.aese_mcsd_ratio), detail::format_number(r.re));
  }
  return s;
}

}  // namespace crtbayes

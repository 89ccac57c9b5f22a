#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crtbayes/error.hpp"
#include "crtbayes/lmm_gibbs.hpp"
#include "crtbayes/trial_data.hpp"

namespace crtbayes {

enum class EffectScale { difference, risk_ratio, odds_ratio };
enum class EstimandUnit { cluster, individual };
enum class EstimatorKind { g_computation, model_robust, nonparametric };

inline std::string to_string(EffectScale s) {
  switch (s) {
    case EffectScale::difference: return "difference";
    case EffectScale::risk_ratio: return "risk_ratio";
    case EffectScale::odds_ratio: return "odds_ratio";
  }
  return "?";
}

inline std::string to_string(EstimandUnit u) {
  return u == EstimandUnit::cluster ? "cluster-ATE" : "individual-ATE";
}

inline std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::g_computation: return "g-computation";
    case EstimatorKind::model_robust: return "model-robust";
    case EstimatorKind::nonparametric: return "nonparametric";
  }
  return "?";
}

struct EstimandSpec {
  EstimandUnit unit = EstimandUnit::cluster;
  EffectScale scale = EffectScale::difference;
  EstimatorKind estimator = EstimatorKind::g_computation;
  bool adjusted = true;

  void validate() const {
    if (estimator == EstimatorKind::nonparametric && adjusted)
      throw ConfigError("the nonparametric estimator is unadjusted by definition");
  }

  std::string label() const {
    std::string s = to_string(estimator);
    if (estimator != EstimatorKind::nonparametric) s += adjusted ? "/adjusted" : "/unadjusted";
    return s + "/" + to_string(unit) + "/" + to_string(scale);
  }
};

/// f(mu1, mu0) for the chosen effect scale, with domain checks.
inline double apply_scale(EffectScale scale, double mu1, double mu0) {
  switch (scale) {
    case EffectScale::difference:
      return mu1 - mu0;
    case EffectScale::risk_ratio:
      if (!(mu0 > 0.0))
        throw ScaleDomainError("risk ratio requires mu(0) > 0, got " + std::to_string(mu0));
      return mu1 / mu0;
    case EffectScale::odds_ratio:
      if (!(mu0 > 0.0 && mu0 < 1.0 && mu1 > 0.0 && mu1 < 1.0))
        throw ScaleDomainError("odds ratio requires both arm means inside (0,1), got mu(1)=" +
                               std::to_string(mu1) + ", mu(0)=" + std::to_string(mu0));
      return mu1 * (1.0 - mu0) / (mu0 * (1.0 - mu1));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Conditional mean providers

/// Working-model predictions of E(Ybar_i | A_i = a, X_i, N_i) and
/// E(Y_{i+} | A_i = a, X_i, N_i) for one cluster.
class ConditionalMeanModel {
 public:
  virtual ~ConditionalMeanModel() = default;
  virtual double mean_bar(int a, const ClusterSummary& c) const = 0;
  virtual double mean_sum(int a, const ClusterSummary& c) const = 0;

  /// Set when mean_bar(a, .) does not depend on the cluster, in which case
  /// the empirical average over clusters is that constant for both estimands.
  virtual std::optional<double> constant_mean_bar(int /*a*/) const { return std::nullopt; }
};

/// Conditional means induced by one draw of the random-intercept model's
/// fixed effects. Linear in beta: the cluster mean of the row predictor is
/// beta' [1, a, xbar, N, a xbar, a N], and the sum is N times that.
class LmmConditionalMeans final : public ConditionalMeanModel {
 public:
  LmmConditionalMeans(Eigen::VectorXd beta, bool adjusted) : beta_(std::move(beta)), adjusted_(adjusted) {
    const auto p = static_cast<std::size_t>(beta_.size());
    if (!adjusted_) {
      if (p != 2) throw ConfigError("unadjusted model expects 2 coefficients, got " + std::to_string(p));
      q_ = 0;
    } else {
      if (p < 6 || (p - 4) % 2 != 0)
        throw ConfigError("adjusted model expects 2q+4 coefficients, got " + std::to_string(p));
      q_ = (p - 4) / 2;
    }
  }

  double mean_bar(int a, const ClusterSummary& c) const override {
    double m = beta_(0) + beta_(1) * a;
    if (!adjusted_) return m;
    check_width(c);
    const auto q = static_cast<Eigen::Index>(q_);
    const double n = static_cast<double>(c.size);
    m += beta_.segment(2, q).dot(c.covariate_mean) + beta_(2 + q) * n;
    if (a == 1) m += beta_.segment(3 + q, q).dot(c.covariate_mean) + beta_(3 + 2 * q) * n;
    return m;
  }

  double mean_sum(int a, const ClusterSummary& c) const override {
    return static_cast<double>(c.size) * mean_bar(a, c);
  }

  std::optional<double> constant_mean_bar(int a) const override {
    if (adjusted_) return std::nullopt;
    return beta_(0) + beta_(1) * a;
  }

  const Eigen::VectorXd& beta() const { return beta_; }
  bool adjusted() const { return adjusted_; }

 private:
  void check_width(const ClusterSummary& c) const {
    if (static_cast<std::size_t>(c.covariate_mean.size()) != q_)
      throw ConfigError("coefficient layout expects " + std::to_string(q_) +
                        " covariates, cluster has " + std::to_string(c.covariate_mean.size()));
  }

  Eigen::VectorXd beta_;
  bool adjusted_;
  std::size_t q_ = 0;
};

inline LmmConditionalMeans lmm_conditional_means(const Eigen::VectorXd& beta, bool adjusted) {
  return LmmConditionalMeans(beta, adjusted);
}

/// Predicts zero everywhere; turns the model-robust formula into the
/// nonparametric weighted two-sample mean.
class ZeroConditionalMeans final : public ConditionalMeanModel {
 public:
  double mean_bar(int, const ClusterSummary&) const override { return 0.0; }
  double mean_sum(int, const ClusterSummary&) const override { return 0.0; }
};

/// Wraps arbitrary callables; used for fixtures and for plugging in other
/// outcome regressions.
class FunctionConditionalMeans final : public ConditionalMeanModel {
 public:
  using Fn = std::function<double(int, const ClusterSummary&)>;
  FunctionConditionalMeans(Fn bar, Fn sum) : bar_(std::move(bar)), sum_(std::move(sum)) {}
  double mean_bar(int a, const ClusterSummary& c) const override { return bar_(a, c); }
  double mean_sum(int a, const ClusterSummary& c) const override { return sum_(a, c); }

 private:
  Fn bar_;
  Fn sum_;
};

// ---------------------------------------------------------------------------
// Prepared data

/// Cluster summaries plus the known randomization probability: everything
/// the standardization formulas read. Bootstrap replicates are built as
/// resampled summary vectors without copying individual rows.
class AnalysisData {
 public:
  AnalysisData(std::vector<ClusterSummary> clusters, double pi)
      : clusters_(std::move(clusters)), pi_(pi) {
    if (clusters_.empty()) throw DataError("no clusters");
    for (const auto& c : clusters_) {
      total_size_ += static_cast<double>(c.size);
      (c.treatment == 1 ? treated_ : control_) += 1;
    }
  }

  explicit AnalysisData(const TrialDataset& d)
      : AnalysisData(cluster_summaries(d), d.assignment_probability()) {}

  std::span<const ClusterSummary> clusters() const { return clusters_; }
  std::size_t num_clusters() const { return clusters_.size(); }
  double pi() const { return pi_; }
  double total_size() const { return total_size_; }
  std::size_t arm_count(int a) const { return a == 1 ? treated_ : control_; }
  bool has_both_arms() const { return treated_ > 0 && control_ > 0; }

 private:
  std::vector<ClusterSummary> clusters_;
  double pi_;
  double total_size_ = 0.0;
  std::size_t treated_ = 0;
  std::size_t control_ = 0;
};

struct EffectEstimate {
  double mu1 = 0.0;
  double mu0 = 0.0;
  double delta = 0.0;
};

/// Arm means for both estimands at once; both share the same predictions.
struct ArmMeans {
  double cluster[2] = {0.0, 0.0};
  double individual[2] = {0.0, 0.0};

  EffectEstimate effect(EstimandUnit unit, EffectScale scale) const {
    const double* mu = unit == EstimandUnit::cluster ? cluster : individual;
    return {mu[1], mu[0], apply_scale(scale, mu[1], mu[0])};
  }
};

namespace detail {

inline double arm_weight(double pi, int a) { return a == 1 ? pi : 1.0 - pi; }

inline void require_both_arms(const AnalysisData& d, const char* who) {
  if (!d.has_both_arms())
    throw ArmMissingError(std::string(who) + " requires clusters in both arms");
}

}  // namespace detail

/// Plug-in standardization over the empirical distribution of (X_i, N_i):
///   mu_C(a) = M^{-1} sum_i mbar(a, i),  mu_I(a) = (sum N_i)^{-1} sum_i msum(a, i).
inline ArmMeans g_computation_means(const AnalysisData& d, const ConditionalMeanModel& m) {
  ArmMeans out;
  const double inv_m = 1.0 / static_cast<double>(d.num_clusters());
  const double inv_n = 1.0 / d.total_size();
  for (int a = 0; a < 2; ++a) {
    if (const auto k = m.constant_mean_bar(a)) {
      out.cluster[a] = out.individual[a] = *k;
      continue;
    }
    double sc = 0.0, si = 0.0;
    for (const auto& c : d.clusters()) {
      sc += m.mean_bar(a, c);
      si += m.mean_sum(a, c);
    }
    out.cluster[a] = sc * inv_m;
    out.individual[a] = si * inv_n;
  }
  return out;
}

/// Augmented (model-robust) standardization:
///   mu_C(a) = M^{-1} sum_i { mbar + 1(A_i=a)(Ybar_i - mbar) / pi_a }
///   mu_I(a) = (sum N_i)^{-1} sum_i { msum + 1(A_i=a)(Y_{i+} - msum) / pi_a }
/// with pi_1 = pi, pi_0 = 1 - pi. E(N_i) is the sample mean of this data's sizes.
inline ArmMeans model_robust_means(const AnalysisData& d, const ConditionalMeanModel& m) {
  detail::require_both_arms(d, "model-robust standardization");
  ArmMeans out;
  const double inv_m = 1.0 / static_cast<double>(d.num_clusters());
  const double inv_n = 1.0 / d.total_size();
  for (int a = 0; a < 2; ++a) {
    const double w = 1.0 / detail::arm_weight(d.pi(), a);
    double sc = 0.0, si = 0.0;
    for (const auto& c : d.clusters()) {
      const double mb = m.mean_bar(a, c);
      const double ms = m.mean_sum(a, c);
      sc += mb;
      si += ms;
      if (c.treatment == a) {
        sc += w * (c.mean_outcome - mb);
        si += w * (c.sum_outcome - ms);
      }
    }
    out.cluster[a] = sc * inv_m;
    out.individual[a] = si * inv_n;
  }
  return out;
}

/// Inverse-probability-weighted arm means without a working model:
///   mu_C(a) = M^{-1} sum_i 1(A_i=a) Ybar_i / pi_a
///   mu_I(a) = (sum N_i)^{-1} sum_i N_i 1(A_i=a) Ybar_i / pi_a
inline ArmMeans nonparametric_means(const AnalysisData& d) {
  detail::require_both_arms(d, "the nonparametric estimator");
  ArmMeans out;
  const double inv_m = 1.0 / static_cast<double>(d.num_clusters());
  const double inv_n = 1.0 / d.total_size();
  for (int a = 0; a < 2; ++a) {
    const double w = 1.0 / detail::arm_weight(d.pi(), a);
    double sc = 0.0, si = 0.0;
    for (const auto& c : d.clusters()) {
      if (c.treatment != a) continue;
      sc += w * c.mean_outcome;
      si += w * static_cast<double>(c.size) * c.mean_outcome;
    }
    out.cluster[a] = sc * inv_m;
    out.individual[a] = si * inv_n;
  }
  return out;
}

inline ArmMeans arm_means(const AnalysisData& d, const ConditionalMeanModel& m, EstimatorKind e) {
  switch (e) {
    case EstimatorKind::g_computation: return g_computation_means(d, m);
    case EstimatorKind::model_robust: return model_robust_means(d, m);
    case EstimatorKind::nonparametric: return nonparametric_means(d);
  }
  return {};
}

inline EffectEstimate g_computation(const AnalysisData& d, const ConditionalMeanModel& m,
                                    const EstimandSpec& spec) {
  return g_computation_means(d, m).effect(spec.unit, spec.scale);
}

inline EffectEstimate model_robust(const AnalysisData& d, const ConditionalMeanModel& m,
                                   const EstimandSpec& spec) {
  return model_robust_means(d, m).effect(spec.unit, spec.scale);
}

inline EffectEstimate nonparametric(const AnalysisData& d, const EstimandSpec& spec) {
  return nonparametric_means(d).effect(spec.unit, spec.scale);
}

inline EffectEstimate evaluate(const AnalysisData& d, const ConditionalMeanModel& m,
                               const EstimandSpec& spec) {
  spec.validate();
  return arm_means(d, m, spec.estimator).effect(spec.unit, spec.scale);
}

inline EffectEstimate g_computation(const TrialDataset& d, const ConditionalMeanModel& m,
                                    const EstimandSpec& spec) {
  return g_computation(AnalysisData(d), m, spec);
}
inline EffectEstimate model_robust(const TrialDataset& d, const ConditionalMeanModel& m,
                                   const EstimandSpec& spec) {
  return model_robust(AnalysisData(d), m, spec);
}
inline EffectEstimate nonparametric(const TrialDataset& d, const EstimandSpec& spec) {
  return nonparametric(AnalysisData(d), spec);
}

/// One conditional-mean model per stored posterior draw.
inline std::vector<LmmConditionalMeans> draw_models(const PosteriorDraws& draws, bool adjusted) {
  std::vector<LmmConditionalMeans> out;
  out.reserve(draws.size());
  for (Eigen::Index b = 0; b < draws.beta.rows(); ++b)
    out.emplace_back(draws.beta.row(b).transpose(), adjusted);
  return out;
}

struct PosteriorPoint {
  double point = 0.0;
  std::vector<double> per_draw;
};

/// Per-draw estimand values Delta(D, beta^(b)) and their average. Ratio scales
/// are applied per draw before averaging.
inline PosteriorPoint posterior_point(const AnalysisData& d,
                                      std::span<const LmmConditionalMeans> models,
                                      const EstimandSpec& spec) {
  spec.validate();
  if (models.empty()) throw ConfigError("posterior draws are empty");
  PosteriorPoint out;
  out.per_draw.reserve(models.size());
  for (const auto& m : models)
    out.per_draw.push_back(arm_means(d, m, spec.estimator).effect(spec.unit, spec.scale).delta);
  out.point = stats::mean(out.per_draw);
  return out;
}

inline PosteriorPoint posterior_point(const AnalysisData& d, const PosteriorDraws& draws,
                                      const EstimandSpec& spec) {
  if (spec.estimator == EstimatorKind::nonparametric) {
    spec.validate();
    if (draws.size() == 0) throw ConfigError("posterior draws are empty");
    const double v = nonparametric(d, spec).delta;
    return {v, std::vector<double>(draws.size(), v)};
  }
  const auto models = draw_models(draws, spec.adjusted);
  return posterior_point(d, models, spec);
}

inline PosteriorPoint posterior_point(const TrialDataset& d, const PosteriorDraws& draws,
                                      const EstimandSpec& spec) {
  return posterior_point(AnalysisData(d), draws, spec);
}

}  // namespace crtbayes

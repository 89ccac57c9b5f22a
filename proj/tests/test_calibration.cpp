#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "crtbayes/calibration.hpp"
#include "crtbayes/lmm_gibbs.hpp"
#include "crtbayes/stats.hpp"
#include "fixtures.hpp"

using namespace crtbayes;

namespace {

// Independent type-7 quantile on an already-sorted vector.
double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p + 1.0;  // 1-based
  const double fl = std::floor(h);
  const double lo = v[static_cast<std::size_t>(fl) - 1];
  const double hi = v[std::min(static_cast<std::size_t>(fl), v.size() - 1)];
  return lo + (h - fl) * (hi - lo);
}

double naive_variance(const std::vector<double>& x) {
  long double s = 0, ss = 0;
  for (double v : x) s += v;
  const long double m = s / x.size();
  for (double v : x) ss += (v - m) * (v - m);
  return static_cast<double>(ss / (x.size() - 1));
}

TrialDataset three_clusters_one_treated() {
  auto c = [](const char* id, int a, double y) {
    Eigen::VectorXd v(2);
    v << y, y + 1;
    return fixtures::make_cluster(id, a, Eigen::MatrixXd::Zero(2, 0), v);
  };
  return TrialDataset({c("a", 1, 1.0), c("b", 0, 2.0), c("c", 0, 3.0)}, 0.5, {});
}

EstimandSpec spec(EstimatorKind e, EstimandUnit u, bool adj) {
  return {u, EffectScale::difference, e, adj};
}

}  // namespace

TEST(Quantiles, TypeSevenOnOneToHundred) {
  std::vector<double> x(100);
  for (int i = 0; i < 100; ++i) x[i] = i + 1;
  const auto iv = uncalibrated_interval(x, 0.95);
  EXPECT_NEAR(iv.lo, 3.475, 1e-12);
  EXPECT_NEAR(iv.hi, 97.525, 1e-12);
  EXPECT_NEAR(iv.lo, type7(x, 0.025), 1e-12);
  std::mt19937 gen(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> r(37);
  for (auto& v : r) v = u(gen);
  for (double p : {0.0, 0.1, 0.333, 0.5, 0.9, 1.0}) EXPECT_NEAR(stats::quantile(r, p), type7(r, p), 1e-15);
}

TEST(Quantiles, ConstantAndNormalSequences) {
  const std::vector<double> c(50, 2.5);
  const auto iv = uncalibrated_interval(c);
  EXPECT_EQ(iv.lo, 2.5);
  EXPECT_EQ(iv.hi, 2.5);
  EXPECT_TRUE(iv.zero_width());

  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  std::vector<double> x(10000);
  for (auto& v : x) v = z(gen);
  const auto n = uncalibrated_interval(x);
  EXPECT_NEAR(n.lo, -1.96, 0.05);
  EXPECT_NEAR(n.hi, 1.96, 0.05);
  EXPECT_FALSE(n.zero_width());
}

TEST(Quantiles, TooFewDrawsForLevel) {
  EXPECT_THROW(uncalibrated_interval(std::vector<double>(19, 1.0), 0.95), ConfigError);
  EXPECT_NO_THROW(uncalibrated_interval(std::vector<double>(20, 1.0), 0.95));
}

TEST(Geweke, NullTrendAndAr1) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> z;
  std::vector<double> iid(10000);
  for (auto& v : iid) v = z(gen);
  EXPECT_LT(std::abs(stats::geweke_z(iid)), 4.0);

  std::vector<double> trend(1000);
  for (int i = 0; i < 1000; ++i) trend[i] = i + 1;
  EXPECT_GT(std::abs(stats::geweke_z(trend)), 10.0);

  int rejections = 0;
  for (int s = 0; s < 200; ++s) {
    std::vector<double> ar(2000);
    double prev = z(gen) / std::sqrt(1 - 0.25);
    for (auto& v : ar) v = prev = 0.5 * prev + z(gen);
    rejections += std::abs(stats::geweke_z(ar)) > 1.96;
  }
  const double frac = rejections / 200.0;
  EXPECT_GE(frac, 0.01);
  EXPECT_LE(frac, 0.10);
}

TEST(Geweke, WindowValidation) {
  const std::vector<double> x(1000, 1.0);
  EXPECT_THROW(stats::geweke_z(x, 0.6, 0.5), ConfigError);
  EXPECT_THROW(stats::geweke_z(std::vector<double>(50, 1.0)), ConfigError);
  EXPECT_EQ(stats::geweke_z(x), 0.0);
}

TEST(Bootstrap, SingleClusterResamplesAreCopies) {
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  const TrialDataset d({fixtures::make_cluster("only", 1, Eigen::MatrixXd::Zero(3, 0), y)}, 0.5, {},
                       ArmRequirement::any);
  BootstrapPlan plan;
  plan.replicates = 5;
  for (const auto& b : bootstrap_datasets(d, plan)) {
    ASSERT_EQ(b.num_clusters(), 1u);
    EXPECT_EQ(b.cluster(0).id, "only");
    EXPECT_TRUE(b.cluster(0).outcomes == y);
  }
}

TEST(Bootstrap, MeanMultiplicityIsOne) {
  const auto d = fixtures::random_dataset(3, 10, 1);
  BootstrapPlan plan;
  plan.replicates = 10000;
  plan.seed = 99;
  std::vector<double> count(10, 0.0);
  for (std::size_t k = 0; k < plan.replicates; ++k)
    for (auto i : resample_indices(10, plan, k)) count[i] += 1.0;
  for (double c : count) EXPECT_NEAR(c / 10000.0, 1.0, 0.05);
}

TEST(Bootstrap, DeterministicGivenSeed) {
  const auto d = fixtures::random_dataset(3, 10, 1);
  BootstrapPlan plan;
  plan.replicates = 4;
  plan.seed = 5;
  const auto a = bootstrap_datasets(d, plan), b = bootstrap_datasets(d, plan);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a[k].cluster(i).id, b[k].cluster(i).id);
}

TEST(Bootstrap, SingleArmReplicateRaisesDownstreamAndIsRedrawn) {
  const auto d = three_clusters_one_treated();
  BootstrapPlan plan;
  plan.replicates = 60;
  plan.seed = 1;
  bool saw_single_arm = false;
  for (const auto& b : bootstrap_datasets(d, plan)) {
    if (b.has_both_arms()) continue;
    saw_single_arm = true;
    EXPECT_THROW(nonparametric(b, spec(EstimatorKind::nonparametric, EstimandUnit::cluster, false)),
                 ArmMissingError);
  }
  EXPECT_TRUE(saw_single_arm);

  const auto set = bootstrap_analysis_sets(AnalysisData(d), plan);
  EXPECT_EQ(set.datasets.size(), 60u);
  EXPECT_GT(set.redraws, 0u);
  for (const auto& b : set.datasets) EXPECT_TRUE(b.has_both_arms());

  plan.max_retries = 0;
  EXPECT_THROW(bootstrap_analysis_sets(AnalysisData(d), plan), CalibrationError);
}

TEST(Calibration, IdentityResamplesGiveParamVarOnly) {
  const auto d = fixtures::random_dataset(8, 14, 2, 2, 8);
  const auto draws = fit_lmm(d, true, PriorConfig{}, {700, 200, 8});
  BootstrapPlan plan;
  plan.replicates = 5;
  plan.mode = ResampleMode::identity;
  const auto r = calibrated_variance(d, draws, spec(EstimatorKind::g_computation, EstimandUnit::cluster, true), plan);
  EXPECT_EQ(r.data_var, 0.0);
  EXPECT_EQ(r.total_var, r.param_var);
}

TEST(Calibration, ParamVarEqualsPosteriorVarianceExactly) {
  const auto d = fixtures::random_dataset(9, 16, 2, 2, 8);
  const auto draws = fit_lmm(d, true, PriorConfig{}, {700, 200, 9});
  BootstrapPlan plan;
  plan.replicates = 10;
  plan.seed = 3;
  for (auto e : {EstimatorKind::g_computation, EstimatorKind::model_robust})
    for (auto u : {EstimandUnit::cluster, EstimandUnit::individual}) {
      const auto sp = spec(e, u, true);
      const auto r = calibrated_variance(d, draws, sp, plan);
      const auto pp = posterior_point(d, draws, sp);
      EXPECT_EQ(r.param_var, stats::variance(pp.per_draw));
      EXPECT_NEAR(r.param_var, naive_variance(pp.per_draw), 1e-15 + 1e-12 * r.param_var);
      EXPECT_EQ(r.point, pp.point);
      EXPECT_EQ(r.total_var, r.data_var + r.param_var);
      EXPECT_GE(r.total_var, r.data_var);
      EXPECT_GE(r.total_var, r.param_var);
      EXPECT_NEAR(0.5 * (r.calibrated.lo + r.calibrated.hi), r.point, 1e-12);
      EXPECT_LE(r.calibrated.lo, r.calibrated.hi);
      EXPECT_NEAR(r.calibrated.hi - r.point, 1.959963984540054 * std::sqrt(r.total_var), 1e-12);
    }
}

TEST(Calibration, ConstantEstimandHasZeroVariance) {
  const auto d = fixtures::random_dataset(10, 12, 1);
  Eigen::VectorXd b(2);
  b << 0.3, 0.8;
  const std::vector<LmmConditionalMeans> models(50, LmmConditionalMeans(b, false));
  BootstrapPlan plan;
  plan.replicates = 8;
  const AnalysisData ad(d);
  const auto boot = bootstrap_analysis_sets(ad, plan);
  const auto r = calibrated_variance(ad, models, spec(EstimatorKind::g_computation, EstimandUnit::cluster, false), boot);
  EXPECT_NEAR(r.total_var, 0.0, 1e-24);
  EXPECT_TRUE(r.calibrated.zero_width());
  EXPECT_DOUBLE_EQ(r.point, 0.8);
}

TEST(Calibration, GMatrixRowMeansMatchStreamedDataVar) {
  const auto d = fixtures::random_dataset(11, 15, 1, 2, 8);
  const auto draws = fit_lmm(d, true, PriorConfig{}, {300, 100, 11});
  const auto models = draw_models(draws, true);
  BootstrapPlan plan;
  plan.replicates = 12;
  plan.seed = 2;
  const AnalysisData ad(d);
  const auto boot = bootstrap_analysis_sets(ad, plan);
  const auto sp = spec(EstimatorKind::model_robust, EstimandUnit::individual, true);
  const auto g = g_matrix(boot, models, sp);
  ASSERT_EQ(g.values.rows(), 12);
  ASSERT_EQ(g.values.cols(), 200);
  const Eigen::VectorXd rows = g.values.rowwise().mean();
  std::vector<double> rv(rows.data(), rows.data() + rows.size());
  const auto r = calibrated_variance(ad, models, sp, boot);
  EXPECT_NEAR(r.data_var, naive_variance(rv), 1e-12 * std::max(1.0, r.data_var));
}

TEST(Calibration, DataVarStableWhenKDoubles) {
  const auto d = fixtures::random_dataset(12, 30, 1, 2, 10);
  const AnalysisData ad(d);
  const std::vector<LmmConditionalMeans> models(20, LmmConditionalMeans(Eigen::VectorXd::Zero(2), false));
  const auto sp = spec(EstimatorKind::nonparametric, EstimandUnit::cluster, false);
  double sum100 = 0.0, sum200 = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    BootstrapPlan plan;
    plan.seed = 1000 + s;
    plan.replicates = 100;
    sum100 += calibrated_variance(ad, models, sp, bootstrap_analysis_sets(ad, plan)).data_var;
    plan.seed = 2000 + s;
    plan.replicates = 200;
    sum200 += calibrated_variance(ad, models, sp, bootstrap_analysis_sets(ad, plan)).data_var;
  }
  EXPECT_NEAR(sum200 / sum100, 1.0, 0.2);
}

TEST(Calibration, ThreadCountDoesNotChangeResult) {
  const auto d = fixtures::random_dataset(13, 15, 1, 2, 8);
  const auto draws = fit_lmm(d, true, PriorConfig{}, {300, 100, 13});
  const auto models = draw_models(draws, true);
  BootstrapPlan plan;
  plan.replicates = 16;
  plan.seed = 4;
  const AnalysisData ad(d);
  const auto boot = bootstrap_analysis_sets(ad, plan);
  const auto sp = spec(EstimatorKind::model_robust, EstimandUnit::cluster, true);
  const auto a = calibrated_variance(ad, models, sp, boot, 0.95, 1);
  const auto b = calibrated_variance(ad, models, sp, boot, 0.95, 4);
  EXPECT_EQ(a.data_var, b.data_var);
  EXPECT_EQ(a.calibrated.lo, b.calibrated.lo);
}

TEST(Calibration, ReportSerialization) {
  const auto d = fixtures::random_dataset(14, 12, 1);
  const auto draws = fit_lmm(d, false, PriorConfig{}, {300, 100, 14});
  BootstrapPlan plan;
  plan.replicates = 5;
  const auto r = calibrated_variance(d, draws, spec(EstimatorKind::g_computation, EstimandUnit::cluster, false), plan);
  const auto j = to_json(r);
  for (const char* key : {"point", "data_var", "param_var", "total_var", "geweke_z"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["uncalibrated"].contains("ci_low"));
  EXPECT_TRUE(j["calibrated"].contains("ci_high"));
  const std::vector<EstimateReport> rs{r};
  EXPECT_NE(format_reports(rs).find("g-computation"), std::string::npos);
}

TEST(Calibration, KMustBeAtLeastTwo) {
  BootstrapPlan plan;
  plan.replicates = 1;
  EXPECT_THROW(plan.validate(), ConfigError);
}

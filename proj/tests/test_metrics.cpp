#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "crtbayes/metrics.hpp"

using namespace crtbayes;

namespace {

double oracle_sd(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += v;
  const long double m = s / x.size();
  long double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(static_cast<double>(ss / (x.size() - 1)));
}

}  // namespace

TEST(Metrics, RelativeBiasArithmetic) {
  const std::vector<double> x(10, 0.6);
  const auto rb = relative_bias(x, 0.59);
  EXPECT_NEAR(rb.value, 0.016949, 1e-6);
  EXPECT_NEAR(rb.se, 0.0, 1e-15);
  EXPECT_EQ(relative_bias(std::vector<double>(5, 0.59), 0.59).value, 0.0);
  EXPECT_THROW(relative_bias(x, 0.0), MetricError);
}

TEST(Metrics, RelativeBiasNullSimulation) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z(0.59, 0.1);
  std::vector<double> x(500);
  for (auto& v : x) v = z(gen);
  const auto rb = relative_bias(x, 0.59);
  EXPECT_LT(std::abs(rb.value), 3.0 * rb.se);
  EXPECT_NEAR(rb.se, oracle_sd(x) / std::sqrt(500.0) / 0.59, 1e-12);
}

TEST(Metrics, Mcsd) {
  EXPECT_EQ(mcsd(std::vector<double>(4, 1.3)), 0.0);
  EXPECT_NEAR(mcsd(std::vector<double>{1.0, 4.0}), 3.0 / std::sqrt(2.0), 1e-15);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  std::vector<double> x(321);
  for (auto& v : x) v = z(gen);
  EXPECT_NEAR(mcsd(x), oracle_sd(x), 1e-12);
  EXPECT_THROW(mcsd(std::vector<double>{1.0}), MetricError);
}

TEST(Metrics, Aese) {
  EXPECT_DOUBLE_EQ(aese(std::vector<double>(7, 0.14)), 0.14);
  EXPECT_THROW(posterior_sd(std::vector<double>{1.0}), MetricError);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z;
  std::vector<double> sds;
  double sum = 0.0;
  for (int r = 0; r < 20; ++r) {
    std::vector<double> draws(100);
    for (auto& v : draws) v = z(gen);
    sds.push_back(posterior_sd(draws));
    sum += oracle_sd(draws);
  }
  EXPECT_NEAR(aese(sds), sum / 20.0, 1e-12);
}

TEST(Metrics, Coverage) {
  const double truth = 0.5;
  EXPECT_EQ(coverage(std::vector<Interval>(10, {truth - 1, truth + 1}), truth).value, 1.0);
  EXPECT_EQ(coverage(std::vector<Interval>(10, {truth + 1, truth + 2}), truth).value, 0.0);

  std::mt19937_64 gen(4);
  std::normal_distribution<double> z;
  std::vector<Interval> iv;
  for (int r = 0; r < 2000; ++r) {
    const double est = truth + z(gen);
    iv.push_back({est - 1.959963984540054, est + 1.959963984540054});
  }
  const auto c = coverage(iv, truth);
  EXPECT_NEAR(c.value, 0.95, 3.0 * std::sqrt(0.95 * 0.05 / 2000));
  EXPECT_NEAR(c.se, 1.96 * std::sqrt(c.value * (1 - c.value) / 2000), 1e-15);
}

TEST(Metrics, RelativeEfficiency) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  std::vector<double> np(50), half(50);
  for (int r = 0; r < 50; ++r) {
    np[r] = z(gen);
    half[r] = np[r] / 2.0;
  }
  EXPECT_DOUBLE_EQ(relative_efficiency(np, np), 1.0);
  EXPECT_NEAR(relative_efficiency(half, np), 4.0, 1e-12);
  EXPECT_THROW(relative_efficiency(std::vector<double>(3, 1.0), std::vector<double>(4, 1.0)), MetricError);
}

TEST(Metrics, PermutationInvariance) {
  std::vector<ReplicateEstimate> reps;
  std::vector<double> np;
  std::mt19937_64 gen(6);
  std::normal_distribution<double> z;
  for (int r = 0; r < 30; ++r) {
    const double p = 0.6 + 0.1 * z(gen);
    reps.push_back({p, 0.1, 0.12, {p - 0.2, p + 0.2}, {p - 0.25, p + 0.25}});
    np.push_back(0.6 + 0.3 * z(gen));
  }
  const auto a = metric_rows("m", "cluster-ATE", 60, reps, 0.6, np);
  std::vector<std::size_t> idx(30);
  for (std::size_t i = 0; i < 30; ++i) idx[i] = (i * 7) % 30;
  std::vector<ReplicateEstimate> reps2;
  std::vector<double> np2;
  for (auto i : idx) {
    reps2.push_back(reps[i]);
    np2.push_back(np[i]);
  }
  const auto b = metric_rows("m", "cluster-ATE", 60, reps2, 0.6, np2);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(a[k].rel_bias.value, b[k].rel_bias.value, 1e-12);
    EXPECT_NEAR(a[k].mcsd, b[k].mcsd, 1e-12);
    EXPECT_NEAR(a[k].aese, b[k].aese, 1e-12);
    EXPECT_EQ(a[k].coverage.value, b[k].coverage.value);
    EXPECT_NEAR(a[k].re, b[k].re, 1e-10);
  }
  EXPECT_NEAR(a[0].aese, 0.1, 1e-14);
  EXPECT_NEAR(a[1].aese, 0.12, 1e-14);
  EXPECT_EQ(a[0].inference, Inference::uncalibrated);

  MetricTable t;
  t.rows = a;
  const auto csv = format_table_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find(',')), "estimator");
  EXPECT_NE(format_table_text(t).find("Relative Bias (SE)"), std::string::npos);
}

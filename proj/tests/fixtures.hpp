#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

#include "crtbayes/trial_data.hpp"

namespace fixtures {

inline crtbayes::ClusterRecord make_cluster(std::string id, int a, Eigen::MatrixXd x,
                                            Eigen::VectorXd y) {
  crtbayes::ClusterRecord c;
  c.id = std::move(id);
  c.treatment = a;
  c.covariates = std::move(x);
  c.outcomes = std::move(y);
  return c;
}

/// Random dataset with both arms, q covariates and sizes in [lo, hi].
inline crtbayes::TrialDataset random_dataset(unsigned seed, int m, int q, int lo = 1,
                                             int hi = 8, double pi = 0.5) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> size(lo, hi);
  std::vector<crtbayes::ClusterRecord> cs;
  for (int i = 0; i < m; ++i) {
    const int n = size(gen);
    const int a = i < 2 ? i : static_cast<int>(gen() % 2);
    Eigen::MatrixXd x(n, q);
    Eigen::VectorXd y(n);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < q; ++k) x(j, k) = z(gen);
      y(j) = 1.0 + 0.5 * a + (q > 0 ? x(j, 0) : 0.0) + z(gen);
    }
    cs.push_back(make_cluster("k" + std::to_string(i), a, x, y));
  }
  std::vector<std::string> names;
  for (int k = 0; k < q; ++k) names.push_back("x" + std::to_string(k + 1));
  return crtbayes::TrialDataset(std::move(cs), pi, names);
}

}  // namespace fixtures

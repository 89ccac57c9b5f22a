#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "crtbayes/error.hpp"
#include "crtbayes/rng.hpp"
#include "crtbayes/stats.hpp"
#include "crtbayes/trial_data.hpp"

namespace crtbayes {

/// Fixed-effect design of the random-intercept working model.
///
/// Adjusted column layout (p = 2q + 4):
///   [1, A, X_1..X_q, N, A*X_1..A*X_q, A*N]
/// Unadjusted layout (p = 2): [1, A].
/// Rows run cluster by cluster in dataset order.
struct LmmDesign {
  Eigen::MatrixXd design;                 // N x p
  std::vector<std::size_t> membership;    // row -> cluster index
  std::vector<std::size_t> cluster_sizes;
  bool adjusted = false;
  std::size_t num_covariates = 0;         // q

  std::size_t num_clusters() const { return cluster_sizes.size(); }
  std::size_t num_rows() const { return static_cast<std::size_t>(design.rows()); }
  std::size_t num_fixed() const { return static_cast<std::size_t>(design.cols()); }
};

inline std::size_t fixed_effect_dim(bool adjusted, std::size_t q) {
  return adjusted ? 2 * q + 4 : 2;
}

inline LmmDesign build_design(const TrialDataset& d, bool adjusted) {
  const std::size_t q = d.num_covariates();
  if (adjusted && q == 0)
    throw ConfigError("adjusted design requested but the dataset has no covariates");
  const std::size_t p = fixed_effect_dim(adjusted, q);
  LmmDesign out;
  out.adjusted = adjusted;
  out.num_covariates = adjusted ? q : 0;
  out.design.resize(static_cast<Eigen::Index>(d.num_individuals()), static_cast<Eigen::Index>(p));
  out.membership.reserve(d.num_individuals());
  Eigen::Index row = 0;
  const auto qi = static_cast<Eigen::Index>(q);
  for (std::size_t i = 0; i < d.num_clusters(); ++i) {
    const auto& c = d.cluster(i);
    const double a = c.treatment;
    const double n = static_cast<double>(c.size());
    out.cluster_sizes.push_back(c.size());
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(c.size()); ++j, ++row) {
      auto h = out.design.row(row);
      h(0) = 1.0;
      h(1) = a;
      if (adjusted) {
        h.segment(2, qi) = c.covariates.row(j);
        h(2 + qi) = n;
        h.segment(3 + qi, qi) = a * c.covariates.row(j);
        h(3 + 2 * qi) = a * n;
      }
      out.membership.push_back(i);
    }
  }
  return out;
}

inline Eigen::VectorXd stacked_outcomes(const TrialDataset& d) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(d.num_individuals()));
  Eigen::Index row = 0;
  for (const auto& c : d.clusters()) {
    y.segment(row, c.outcomes.size()) = c.outcomes;
    row += c.outcomes.size();
  }
  return y;
}

/// beta ~ N(0, beta_variance * I), sigma_eps2 ~ IG(a, b), sigma_phi2 ~ IG(alpha, c).
struct PriorConfig {
  double beta_variance = 100.0;
  double sigma_eps_shape = 0.001;
  double sigma_eps_rate = 0.001;
  double sigma_phi_shape = 0.001;
  double sigma_phi_rate = 0.001;

  void validate() const {
    if (!(beta_variance > 0 && sigma_eps_shape > 0 && sigma_eps_rate > 0 &&
          sigma_phi_shape > 0 && sigma_phi_rate > 0))
      throw ConfigError("all prior hyperparameters must be positive");
  }
};

struct ChainConfig {
  std::size_t total_iterations = 2000;
  std::size_t burn_in = 1000;
  std::uint64_t seed = 0;
};

struct GibbsState {
  Eigen::VectorXd beta;
  Eigen::VectorXd phi;
  double sigma_phi2 = 1.0;
  double sigma_eps2 = 1.0;
};

struct PosteriorDraws {
  Eigen::MatrixXd beta;        // B x p
  Eigen::VectorXd sigma_phi2;  // B
  Eigen::VectorXd sigma_eps2;  // B
  Eigen::MatrixXd phi;         // B x M
  std::size_t burn_in = 0;
  std::size_t floored_variance_draws = 0;

  std::size_t size() const { return static_cast<std::size_t>(beta.rows()); }
};

struct NormalConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct ScalarNormal {
  double mean;
  double variance;
};

struct InverseGammaParams {
  double shape;
  double rate;
};

inline constexpr double kVarianceFloor = 1e-12;

/// Four-block Gibbs sampler, swept in the order beta, phi, sigma_phi2, sigma_eps2.
class GibbsSampler {
 public:
  GibbsSampler(LmmDesign design, Eigen::VectorXd y, PriorConfig priors)
      : design_(std::move(design)), y_(std::move(y)), priors_(priors) {
    priors_.validate();
    if (static_cast<std::size_t>(y_.size()) != design_.num_rows())
      throw ConfigError("outcome length does not match design rows");
    if (design_.num_clusters() == 0) throw ConfigError("design has no clusters");
    const auto p = design_.design.cols();
    const auto m = static_cast<Eigen::Index>(design_.num_clusters());
    gram_ = design_.design.transpose() * design_.design;
    hty_ = design_.design.transpose() * y_;
    cluster_design_sum_ = Eigen::MatrixXd::Zero(p, m);
    cluster_y_sum_ = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < design_.design.rows(); ++k) {
      const auto i = static_cast<Eigen::Index>(design_.membership[static_cast<std::size_t>(k)]);
      cluster_design_sum_.col(i) += design_.design.row(k).transpose();
      cluster_y_sum_(i) += y_(k);
    }
  }

  const LmmDesign& design() const { return design_; }
  const PriorConfig& priors() const { return priors_; }

  GibbsState initial_state() const {
    GibbsState s;
    s.beta = Eigen::VectorXd::Zero(design_.design.cols());
    s.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design_.num_clusters()));
    s.sigma_phi2 = 1.0;
    s.sigma_eps2 = 1.0;
    return s;
  }

  // --- full conditionals -------------------------------------------------

  /// beta | rest: precision H'H / s2e + I / v0, mean = precision^{-1} H'(Y - Z phi) / s2e.
  NormalConditional beta_conditional(const GibbsState& s, std::size_t sweep = 0) const {
    const auto llt = beta_precision_factor(s, sweep);
    NormalConditional out;
    out.mean = llt.solve(beta_rhs(s));
    const auto p = design_.design.cols();
    out.covariance = llt.solve(Eigen::MatrixXd::Identity(p, p));
    return out;
  }

  /// phi_i | rest ~ N(s2p * r_i / (s2e + s2p N_i), s2p s2e / (s2e + s2p N_i)),
  /// r_i = sum over the cluster of (Y_k - H_k' beta).
  ScalarNormal phi_conditional(const GibbsState& s, std::size_t i) const {
    const auto ii = static_cast<Eigen::Index>(i);
    const double r = cluster_y_sum_(ii) - cluster_design_sum_.col(ii).dot(s.beta);
    const double n = static_cast<double>(design_.cluster_sizes[i]);
    const double denom = s.sigma_eps2 + s.sigma_phi2 * n;
    return {s.sigma_phi2 * r / denom, s.sigma_phi2 * s.sigma_eps2 / denom};
  }

  InverseGammaParams sigma_phi2_conditional(const GibbsState& s) const {
    const double m = static_cast<double>(design_.num_clusters());
    return {priors_.sigma_phi_shape + 0.5 * m, priors_.sigma_phi_rate + 0.5 * s.phi.squaredNorm()};
  }

  InverseGammaParams sigma_eps2_conditional(const GibbsState& s) const {
    const double n = static_cast<double>(design_.num_rows());
    return {priors_.sigma_eps_shape + 0.5 * n,
            priors_.sigma_eps_rate + 0.5 * residual_sum_of_squares(s)};
  }

  double residual_sum_of_squares(const GibbsState& s) const {
    Eigen::VectorXd e = y_ - design_.design * s.beta;
    for (Eigen::Index k = 0; k < e.size(); ++k)
      e(k) -= s.phi(static_cast<Eigen::Index>(design_.membership[static_cast<std::size_t>(k)]));
    return e.squaredNorm();
  }

  // --- single-block updates ---------------------------------------------

  void update_beta(GibbsState& s, Rng& rng, std::size_t sweep = 0) const {
    const auto llt = beta_precision_factor(s, sweep);
    const Eigen::VectorXd mean = llt.solve(beta_rhs(s));
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
    // precision = L L', so L'^{-1} z has covariance precision^{-1}.
    s.beta = mean + llt.matrixU().solve(z);
  }

  void update_phi(GibbsState& s, Rng& rng) const {
    for (std::size_t i = 0; i < design_.num_clusters(); ++i) {
      const auto c = phi_conditional(s, i);
      s.phi(static_cast<Eigen::Index>(i)) = rng.normal(c.mean, std::sqrt(c.variance));
    }
  }

  void update_sigma_phi2(GibbsState& s, Rng& rng, std::size_t* floored = nullptr) const {
    const auto c = sigma_phi2_conditional(s);
    s.sigma_phi2 = floor_variance(rng.inverse_gamma(c.shape, c.rate), "sigma_phi2", floored);
  }

  void update_sigma_eps2(GibbsState& s, Rng& rng, std::size_t* floored = nullptr) const {
    const auto c = sigma_eps2_conditional(s);
    s.sigma_eps2 = floor_variance(rng.inverse_gamma(c.shape, c.rate), "sigma_eps2", floored);
  }

  void sweep(GibbsState& s, Rng& rng, std::size_t index, std::size_t* floored = nullptr) const {
    update_beta(s, rng, index);
    update_phi(s, rng);
    update_sigma_phi2(s, rng, floored);
    update_sigma_eps2(s, rng, floored);
  }

  PosteriorDraws run(const ChainConfig& chain) const {
    if (chain.total_iterations <= chain.burn_in)
      throw ConfigError("total iterations must exceed burn-in");
    const auto kept = static_cast<Eigen::Index>(chain.total_iterations - chain.burn_in);
    PosteriorDraws out;
    out.burn_in = chain.burn_in;
    out.beta.resize(kept, design_.design.cols());
    out.sigma_phi2.resize(kept);
    out.sigma_eps2.resize(kept);
    out.phi.resize(kept, static_cast<Eigen::Index>(design_.num_clusters()));

    Rng rng(chain.seed);
    GibbsState s = initial_state();
    for (std::size_t t = 0; t < chain.total_iterations; ++t) {
      sweep(s, rng, t, &out.floored_variance_draws);
      if (t >= chain.burn_in) {
        const auto b = static_cast<Eigen::Index>(t - chain.burn_in);
        out.beta.row(b) = s.beta.transpose();
        out.phi.row(b) = s.phi.transpose();
        out.sigma_phi2(b) = s.sigma_phi2;
        out.sigma_eps2(b) = s.sigma_eps2;
      }
    }
    return out;
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> beta_precision_factor(const GibbsState& s, std::size_t sweep) const {
    const auto p = design_.design.cols();
    Eigen::MatrixXd precision = gram_ / s.sigma_eps2;
    precision.diagonal().array() += 1.0 / priors_.beta_variance;
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success || !precision.allFinite())
      throw LinalgError("beta full-conditional precision (" + std::to_string(p) + "x" +
                        std::to_string(p) + ") is not positive definite at sweep " +
                        std::to_string(sweep));
    return llt;
  }

  Eigen::VectorXd beta_rhs(const GibbsState& s) const {
    return (hty_ - cluster_design_sum_ * s.phi) / s.sigma_eps2;
  }

  static double floor_variance(double v, const char* name, std::size_t* floored) {
    if (v >= kVarianceFloor && std::isfinite(v)) return v;
    if (floored) ++*floored;
    std::clog << "warning: " << name << " draw " << v << " floored to " << kVarianceFloor << '\n';
    return std::isfinite(v) ? kVarianceFloor : v;
  }

  LmmDesign design_;
  Eigen::VectorXd y_;
  PriorConfig priors_;
  Eigen::MatrixXd gram_;                // H'H
  Eigen::VectorXd hty_;                 // H'Y
  Eigen::MatrixXd cluster_design_sum_;  // H'Z, p x M
  Eigen::VectorXd cluster_y_sum_;       // Z'Y
};

inline PosteriorDraws gibbs_run(const LmmDesign& design, const Eigen::VectorXd& y,
                                const PriorConfig& priors, const ChainConfig& chain) {
  return GibbsSampler(design, y, priors).run(chain);
}

/// Fit the working model to a dataset in one call.
inline PosteriorDraws fit_lmm(const TrialDataset& d, bool adjusted, const PriorConfig& priors,
                              const ChainConfig& chain) {
  return gibbs_run(build_design(d, adjusted), stacked_outcomes(d), priors, chain);
}

struct IccSummary {
  std::vector<double> draws;
  double mean = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
};

/// One row per stored iteration: beta_1..beta_p, sigma_phi2, sigma_eps2.
inline void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const auto p = draws.beta.cols();
  for (Eigen::Index j = 0; j < p; ++j) out << "beta_" << (j + 1) << ',';
  out << "sigma_phi2,sigma_eps2\n";
  for (Eigen::Index b = 0; b < draws.beta.rows(); ++b) {
    for (Eigen::Index j = 0; j < p; ++j) out << detail::format_number(draws.beta(b, j)) << ',';
    out << detail::format_number(draws.sigma_phi2(b)) << ','
        << detail::format_number(draws.sigma_eps2(b)) << '\n';
  }
}

inline IccSummary icc_summary(const PosteriorDraws& draws) {
  IccSummary out;
  out.draws.reserve(draws.size());
  for (Eigen::Index b = 0; b < draws.sigma_phi2.size(); ++b)
    out.draws.push_back(draws.sigma_phi2(b) / (draws.sigma_phi2(b) + draws.sigma_eps2(b)));
  out.mean = stats::mean(out.draws);
  out.q025 = stats::quantile(out.draws, 0.025);
  out.median = stats::quantile(out.draws, 0.5);
  out.q975 = stats::quantile(out.draws, 0.975);
  return out;
}

}  // namespace crtbayes

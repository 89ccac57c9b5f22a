#pragma once

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crtbayes/calibration.hpp"
#include "crtbayes/dgp.hpp"
#include "crtbayes/error.hpp"
#include "crtbayes/estimands.hpp"
#include "crtbayes/lmm_gibbs.hpp"
#include "crtbayes/metrics.hpp"
#include "crtbayes/parallel.hpp"
#include "crtbayes/rng.hpp"
#include "crtbayes/trial_data.hpp"

namespace crtbayes {

/// An estimator together with the working model it uses.
struct Method {
  EstimatorKind estimator = EstimatorKind::g_computation;
  bool adjusted = true;

  bool operator==(const Method&) const = default;
};

inline std::string method_key(const Method& m) {
  switch (m.estimator) {
    case EstimatorKind::g_computation: return m.adjusted ? "gcomp-adj" : "gcomp-unadj";
    case EstimatorKind::model_robust: return m.adjusted ? "mr-adj" : "mr-unadj";
    case EstimatorKind::nonparametric: return "np";
  }
  return "?";
}

inline std::string method_label(const Method& m) {
  if (m.estimator == EstimatorKind::nonparametric) return "nonparametric";
  return fmt::format("{} ({})", to_string(m.estimator), m.adjusted ? "adj" : "unadj");
}

inline Method parse_method(std::string_view key) {
  if (key == "gcomp-adj") return {EstimatorKind::g_computation, true};
  if (key == "gcomp-unadj") return {EstimatorKind::g_computation, false};
  if (key == "mr-adj") return {EstimatorKind::model_robust, true};
  if (key == "mr-unadj") return {EstimatorKind::model_robust, false};
  if (key == "np") return {EstimatorKind::nonparametric, false};
  throw ConfigError(fmt::format(
      "unknown method '{}' (expected gcomp-adj|gcomp-unadj|mr-adj|mr-unadj|np)", key));
}

inline std::vector<Method> lmm_methods() {
  return {{EstimatorKind::g_computation, true},
          {EstimatorKind::g_computation, false},
          {EstimatorKind::model_robust, true},
          {EstimatorKind::model_robust, false}};
}

inline std::vector<Method> all_methods() {
  auto m = lmm_methods();
  m.push_back({EstimatorKind::nonparametric, false});
  return m;
}

inline EffectScale parse_scale(std::string_view s) {
  if (s == "difference" || s == "rd") return EffectScale::difference;
  if (s == "risk-ratio" || s == "rr") return EffectScale::risk_ratio;
  if (s == "odds-ratio" || s == "or") return EffectScale::odds_ratio;
  throw ConfigError(fmt::format("unknown scale '{}' (expected difference|risk-ratio|odds-ratio)", s));
}

namespace detail {

inline Error with_context(const Error& e, const std::string& context) {
  return Error(e.category(), context + ": " + e.what());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

/// Fit the chains a method list needs and run calibration for each method,
/// returning reports in (method, unit) order.
struct MethodReports {
  Method method;
  std::vector<EstimateReport> reports;  // one per target
};

inline std::vector<MethodReports> analyze_methods(const TrialDataset& data,
                                                  std::span<const Method> methods,
                                                  std::span<const EstimandTarget> targets,
                                                  const PriorConfig& priors, ChainConfig chain,
                                                  std::uint64_t chain_seed_parent,
                                                  const BootstrapPlan& plan, double level,
                                                  std::size_t threads,
                                                  std::optional<PosteriorDraws>* keep_adj = nullptr,
                                                  std::optional<PosteriorDraws>* keep_unadj = nullptr) {
  bool need_adj = false, need_unadj = false;
  for (const auto& m : methods) {
    if (m.estimator == EstimatorKind::nonparametric) continue;
    (m.adjusted ? need_adj : need_unadj) = true;
  }
  const std::size_t B = chain.total_iterations > chain.burn_in ? chain.total_iterations - chain.burn_in : 0;

  std::vector<LmmConditionalMeans> models_adj, models_unadj;
  if (need_adj) {
    chain.seed = derive_seed(chain_seed_parent, StreamTag::chain, {1});
    auto draws = fit_lmm(data, true, priors, chain);
    models_adj = draw_models(draws, true);
    if (keep_adj) *keep_adj = std::move(draws);
  }
  if (need_unadj) {
    chain.seed = derive_seed(chain_seed_parent, StreamTag::chain, {0});
    auto draws = fit_lmm(data, false, priors, chain);
    models_unadj = draw_models(draws, false);
    if (keep_unadj) *keep_unadj = std::move(draws);
  }

  const AnalysisData ad(data);
  const auto boot = bootstrap_analysis_sets(ad, plan);

  std::vector<MethodReports> out;
  for (const auto& m : methods) {
    try {
      if (m.estimator == EstimatorKind::nonparametric) {
        // Nonparametric values never read beta; the placeholders fix B only.
        const std::vector<LmmConditionalMeans> placeholder(
            B, LmmConditionalMeans(Eigen::VectorXd::Zero(2), false));
        out.push_back({m, calibrate_method(ad, placeholder, m.estimator, false, targets, boot,
                                           level, threads)});
      } else {
        const auto& models = m.adjusted ? models_adj : models_unadj;
        out.push_back({m, calibrate_method(ad, models, m.estimator, m.adjusted, targets, boot,
                                           level, threads)});
      }
    } catch (const Error& e) {
      throw with_context(e, method_key(m));
    }
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

struct SimulationConfig {
  ScenarioConfig scenario;  // scenario.seed is ignored; seeds derive from `seed`
  std::size_t replicates = 200;
  ChainConfig chain;        // chain.seed is ignored
  PriorConfig priors;
  std::size_t bootstrap = 100;
  std::size_t n_truth = 100000;
  EffectScale scale = EffectScale::difference;
  std::vector<Method> methods = all_methods();
  std::size_t threads = 1;
  bool permissive = false;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::size_t max_trial_redraws = 100;

  void validate() const {
    scenario.validate();
    priors.validate();
    if (replicates < 2) throw ConfigError("simulation needs at least 2 replicates");
    if (chain.total_iterations <= chain.burn_in)
      throw ConfigError("total iterations must exceed burn-in");
    if (bootstrap < 2) throw ConfigError("bootstrap needs K >= 2 replicates");
    if (methods.empty()) throw ConfigError("no methods requested");
  }
};

struct ReplicateOutcome {
  bool ok = false;
  ErrorCategory error_category = ErrorCategory::config;
  std::string error;
  std::size_t trial_redraws = 0;
  std::vector<detail::MethodReports> methods;  // every configured method plus np
};

struct SimulationResult {
  SimulationConfig config;
  TruthEstimate truth;
  std::vector<ReplicateOutcome> replicates;
  MetricTable table;
};

/// One replicate. Seeds: trial derive(seed, trial, {r, attempt}); chains
/// derive(derive(seed, {r}), chain, {adjusted}); bootstrap derive(seed, bootstrap, {r}).
inline ReplicateOutcome run_replicate(const SimulationConfig& cfg, std::size_t r,
                                      std::span<const Method> methods, std::size_t threads) {
  ReplicateOutcome out;
  ScenarioConfig sc = cfg.scenario;
  std::optional<GeneratedTrial> trial;
  for (std::size_t attempt = 0; !trial; ++attempt) {
    if (attempt > cfg.max_trial_redraws)
      throw ArmMissingError(fmt::format("trial lacked an arm after {} redraws", cfg.max_trial_redraws));
    sc.seed = derive_seed(cfg.seed, StreamTag::trial, {r, attempt});
    try {
      trial = generate_trial(sc);
    } catch (const ArmMissingError&) {
      ++out.trial_redraws;
    }
  }
  BootstrapPlan plan;
  plan.replicates = cfg.bootstrap;
  plan.seed = derive_seed(cfg.seed, StreamTag::bootstrap, {r});
  const std::vector<EstimandTarget> targets{{EstimandUnit::cluster, cfg.scale},
                                            {EstimandUnit::individual, cfg.scale}};
  out.methods = detail::analyze_methods(trial->data, methods, targets, cfg.priors, cfg.chain,
                                        derive_seed(cfg.seed, {r}), plan, cfg.level, threads);
  out.ok = true;
  return out;
}

inline MetricTable build_metric_table(const SimulationConfig& cfg, const TruthEstimate& truth,
                                      std::span<const ReplicateOutcome> reps) {
  MetricTable table;
  std::vector<const ReplicateOutcome*> ok;
  for (const auto& r : reps) {
    if (r.ok)
      ok.push_back(&r);
    else
      ++table.failed_replicates;
  }
  if (ok.size() < 2) throw MetricError("fewer than two successful replicates");
  const std::size_t n_methods = ok.front()->methods.size();
  std::size_t np_index = n_methods;
  for (std::size_t j = 0; j < n_methods; ++j)
    if (ok.front()->methods[j].method.estimator == EstimatorKind::nonparametric) np_index = j;

  for (std::size_t j = 0; j < n_methods; ++j) {
    const Method m = ok.front()->methods[j].method;
    if (std::find(cfg.methods.begin(), cfg.methods.end(), m) == cfg.methods.end()) continue;
    for (std::size_t t = 0; t < 2; ++t) {
      std::vector<ReplicateEstimate> est;
      std::vector<double> np_points;
      for (const auto* r : ok) {
        const auto& rep = r->methods[j].reports[t];
        est.push_back({rep.point, rep.posterior_sd, rep.calibrated_sd(), rep.uncalibrated,
                       rep.calibrated});
        np_points.push_back(r->methods[np_index].reports[t].point);
      }
      const auto unit = t == 0 ? EstimandUnit::cluster : EstimandUnit::individual;
      const double tv = unit == EstimandUnit::cluster ? truth.delta_c : truth.delta_i;
      for (auto& row : metric_rows(method_label(m), to_string(unit), cfg.scenario.clusters, est,
                                   tv, np_points)) {
        // Nonparametric draws are constant, so its posterior interval is degenerate.
        if (m.estimator == EstimatorKind::nonparametric && row.inference == Inference::uncalibrated)
          continue;
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

inline SimulationResult run_simulation(const SimulationConfig& cfg, bool progress = true) {
  cfg.validate();
  SimulationResult res;
  res.config = cfg;

  ScenarioConfig truth_cfg = cfg.scenario;
  truth_cfg.seed = derive_seed(cfg.seed, StreamTag::truth);
  res.truth = true_estimands(truth_cfg, cfg.n_truth, cfg.scale);
  if (progress)
    std::clog << fmt::format("truth: delta_c={:.4f} delta_i={:.4f} ({} clusters)\n",
                             res.truth.delta_c, res.truth.delta_i, cfg.n_truth);

  // The nonparametric estimator is always computed since RE is relative to it.
  std::vector<Method> methods = cfg.methods;
  const Method np{EstimatorKind::nonparametric, false};
  if (std::find(methods.begin(), methods.end(), np) == methods.end()) methods.push_back(np);

  const std::size_t R = cfg.replicates;
  const std::size_t threads = std::max<std::size_t>(1, cfg.threads);
  const std::size_t inner = R < threads ? threads / R : 1;
  res.replicates.resize(R);
  std::mutex mu;
  std::size_t done = 0;
  parallel_for(R, threads, [&](std::size_t r) {
    try {
      res.replicates[r] = run_replicate(cfg, r, methods, inner);
    } catch (const Error& e) {
      if (!cfg.permissive) throw detail::with_context(e, fmt::format("replicate {}", r));
      res.replicates[r].ok = false;
      res.replicates[r].error_category = e.category();
      res.replicates[r].error = e.what();
    }
    if (progress) {
      std::lock_guard lock(mu);
      ++done;
      if (done == R || done % std::max<std::size_t>(1, R / 20) == 0)
        std::clog << fmt::format("replicates: {}/{}\n", done, R);
    }
  });
  res.table = build_metric_table(cfg, res.truth, res.replicates);
  return res;
}

inline nlohmann::ordered_json to_json(const TruthEstimate& t) {
  nlohmann::ordered_json j;
  j["scenario"] = to_string(t.scenario);
  j["scale"] = to_string(t.scale);
  j["n_clusters"] = t.n_clusters;
  j["delta_c"] = t.delta_c;
  j["delta_i"] = t.delta_i;
  j["mu_c"] = {t.mu_c[0], t.mu_c[1]};
  j["mu_i"] = {t.mu_i[0], t.mu_i[1]};
  j["se_delta_c"] = t.se_delta_c;
  j["se_delta_i"] = t.se_delta_i;
  j["se_gap"] = t.se_gap;
  return j;
}

inline std::string format_replicates_csv(const SimulationResult& res) {
  std::string s =
      "replicate,method,estimand,point,posterior_sd,uncal_lo,uncal_hi,data_var,param_var,"
      "total_var,cal_lo,cal_hi,geweke_z,trial_redraws,bootstrap_redraws,error\n";
  using detail::format_number;
  for (std::size_t r = 0; r < res.replicates.size(); ++r) {
    const auto& rep = res.replicates[r];
    if (!rep.ok) {
      s += fmt::format("{},,,,,,,,,,,,,{},,\"{}:{}\"\n", r, rep.trial_redraws,
                       category_name(rep.error_category), rep.error);
      continue;
    }
    for (const auto& m : rep.methods)
      for (const auto& e : m.reports)
        s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\n", r, method_key(m.method),
                         to_string(e.spec.unit), format_number(e.point),
                         format_number(e.posterior_sd), format_number(e.uncalibrated.lo),
                         format_number(e.uncalibrated.hi), format_number(e.data_var),
                         format_number(e.param_var), format_number(e.total_var),
                         format_number(e.calibrated.lo), format_number(e.calibrated.hi),
                         detail::optional_number(e.geweke_z), rep.trial_redraws,
                         e.bootstrap_redraws);
  }
  return s;
}

/// metrics.csv, metrics.txt, truth.json and replicates.csv under `dir`.
inline void write_simulation_outputs(const SimulationResult& res, const std::filesystem::path& dir) {
  detail::ensure_directory(dir);
  const auto& c = res.config;
  std::string header = fmt::format(
      "scenario={} M={} R={} draws={} burn-in={} K={} scale={} seed={}\n"
      "truth: delta_c={:.4f} delta_i={:.4f}\n\n",
      to_string(c.scenario.scenario), c.scenario.clusters, c.replicates,
      c.chain.total_iterations - c.chain.burn_in, c.chain.burn_in, c.bootstrap, to_string(c.scale),
      c.seed, res.truth.delta_c, res.truth.delta_i);
  detail::write_text(dir / "metrics.txt", header + format_table_text(res.table));
  detail::write_text(dir / "metrics.csv", format_table_csv(res.table));
  detail::write_text(dir / "truth.json", to_json(res.truth).dump(2) + "\n");
  detail::write_text(dir / "replicates.csv", format_replicates_csv(res));
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeConfig {
  std::filesystem::path data;
  CsvSchema schema;
  double pi = 0.5;
  std::vector<Method> methods = all_methods();
  std::vector<EstimandUnit> units{EstimandUnit::cluster, EstimandUnit::individual};
  EffectScale scale = EffectScale::difference;
  ChainConfig chain;
  PriorConfig priors;
  std::size_t bootstrap = 100;
  double level = 0.95;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> dump_draws;  // directory for posterior draw CSVs
};

struct AnalyzeResult {
  std::size_t clusters = 0;
  std::size_t individuals = 0;
  std::size_t arm_counts[2] = {0, 0};
  std::vector<EstimateReport> reports;
  std::optional<IccSummary> icc_adjusted;
  std::optional<IccSummary> icc_unadjusted;
};

/// Seeds: chains derive(seed, chain, {adjusted}); bootstrap derive(seed, bootstrap).
inline AnalyzeResult run_analyze(const AnalyzeConfig& cfg) {
  cfg.priors.validate();
  if (cfg.methods.empty()) throw ConfigError("no methods requested");
  if (cfg.units.empty()) throw ConfigError("no estimands requested");
  if (!(cfg.pi > 0.0 && cfg.pi < 1.0)) throw ConfigError("pi must lie in (0,1)");
  const TrialDataset data = load_csv(cfg.data, cfg.schema, cfg.pi);

  AnalyzeResult res;
  res.clusters = data.num_clusters();
  res.individuals = data.num_individuals();
  res.arm_counts[0] = data.arm_count(0);
  res.arm_counts[1] = data.arm_count(1);

  std::vector<EstimandTarget> targets;
  for (auto u : cfg.units) targets.push_back({u, cfg.scale});
  BootstrapPlan plan;
  plan.replicates = cfg.bootstrap;
  plan.seed = derive_seed(cfg.seed, StreamTag::bootstrap);

  std::optional<PosteriorDraws> adj, unadj;
  const auto by_method = detail::analyze_methods(data, cfg.methods, targets, cfg.priors, cfg.chain,
                                                 cfg.seed, plan, cfg.level, cfg.threads, &adj,
                                                 &unadj);
  for (const auto& m : by_method)
    for (const auto& r : m.reports) res.reports.push_back(r);
  if (adj) res.icc_adjusted = icc_summary(*adj);
  if (unadj) res.icc_unadjusted = icc_summary(*unadj);
  if (cfg.dump_draws) {
    detail::ensure_directory(*cfg.dump_draws);
    if (adj) write_draws_csv(*adj, *cfg.dump_draws / "draws_adjusted.csv");
    if (unadj) write_draws_csv(*unadj, *cfg.dump_draws / "draws_unadjusted.csv");
  }
  return res;
}

inline nlohmann::ordered_json to_json(const AnalyzeResult& res) {
  nlohmann::ordered_json j;
  j["clusters"] = res.clusters;
  j["individuals"] = res.individuals;
  j["arm_counts"] = {res.arm_counts[0], res.arm_counts[1]};
  auto icc = [](const std::optional<IccSummary>& s) -> nlohmann::ordered_json {
    if (!s) return nullptr;
    return {{"mean", s->mean}, {"q025", s->q025}, {"median", s->median}, {"q975", s->q975}};
  };
  j["icc_adjusted"] = icc(res.icc_adjusted);
  j["icc_unadjusted"] = icc(res.icc_unadjusted);
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : res.reports) j["reports"].push_back(to_json(r));
  return j;
}

inline void write_analyze_outputs(const AnalyzeResult& res, const std::filesystem::path& dir) {
  detail::ensure_directory(dir);
  detail::write_text(dir / "reports.json", to_json(res).dump(2) + "\n");
  std::string text = fmt::format("clusters={} individuals={} arms={}/{}\n", res.clusters,
                                 res.individuals, res.arm_counts[0], res.arm_counts[1]);
  if (res.icc_adjusted)
    text += fmt::format("ICC (adjusted model): {:.3f} ({:.3f}, {:.3f})\n", res.icc_adjusted->mean,
                        res.icc_adjusted->q025, res.icc_adjusted->q975);
  text += "\n" + format_reports(res.reports);
  detail::write_text(dir / "reports.txt", text);
}

}  // namespace crtbayes

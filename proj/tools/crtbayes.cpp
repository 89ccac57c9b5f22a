// crtbayes command-line entry point: simulate, analyze, truth.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "crtbayes/crtbayes.hpp"

namespace {

using namespace crtbayes;

std::vector<Method> parse_methods(const std::vector<std::string>& keys) {
  std::vector<Method> out;
  for (const auto& k : keys) {
    if (k == "all") {
      for (auto m : all_methods()) out.push_back(m);
    } else if (k == "lmm") {
      for (auto m : lmm_methods()) out.push_back(m);
    } else {
      out.push_back(parse_method(k));
    }
  }
  return out;
}

std::vector<EstimandUnit> parse_units(const std::vector<std::string>& keys) {
  std::vector<EstimandUnit> out;
  for (const auto& k : keys) {
    if (k == "cluster" || k == "cluster-ATE")
      out.push_back(EstimandUnit::cluster);
    else if (k == "individual" || k == "individual-ATE")
      out.push_back(EstimandUnit::individual);
    else
      throw ConfigError("unknown estimand '" + k + "' (expected cluster|individual)");
  }
  return out;
}

ChainConfig chain_config(std::size_t draws, std::size_t burnin) {
  if (draws < 2) throw ConfigError("--draws must be at least 2");
  ChainConfig c;
  c.burn_in = burnin;
  c.total_iterations = burnin + draws;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian estimators for cluster-randomized trials"};
  app.set_config("--config", "", "flat key = value config file; flags override file values");
  app.require_subcommand(1);

  // simulate
  std::string scenario = "s1";
  std::size_t clusters = 60, reps = 200, draws = 1000, burnin = 1000, boot = 100;
  std::size_t threads = 1, n_truth = 100000;
  std::uint64_t seed = 0;
  std::string out_dir, scale = "difference";
  std::vector<std::string> specs{"all"};
  bool permissive = false;
  double sigma_phi2 = 0.25;

  auto* sim = app.add_subcommand("simulate", "replicate a scenario and write a metric table");
  sim->add_option("--scenario", scenario, "s1|s2|s3|noics")->required();
  sim->add_option("--clusters", clusters, "clusters per trial (M)")->capture_default_str();
  sim->add_option("--reps", reps, "replicates (R)")->capture_default_str();
  sim->add_option("--draws", draws, "posterior draws kept (B)")->capture_default_str();
  sim->add_option("--burnin", burnin, "burn-in iterations")->capture_default_str();
  sim->add_option("--boot", boot, "bootstrap replicates (K)")->capture_default_str();
  sim->add_option("--seed", seed, "master seed")->required();
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--threads", threads, "worker threads")->capture_default_str();
  sim->add_option("--specs", specs, "methods: gcomp-adj,gcomp-unadj,mr-adj,mr-unadj,np,lmm,all")
      ->delimiter(',')
      ->capture_default_str();
  sim->add_option("--scale", scale, "difference|risk-ratio|odds-ratio")->capture_default_str();
  sim->add_option("--n-truth", n_truth, "clusters for the truth computation")->capture_default_str();
  sim->add_option("--sigma-phi2", sigma_phi2, "random-intercept variance")->capture_default_str();
  sim->add_flag("--permissive", permissive, "exclude and count failed replicates");

  // analyze
  std::string data_path, cluster_col, treat_col, outcome_col, dump_draws;
  std::vector<std::string> covars, estimands{"cluster", "individual"};
  double pi = 0.5, level = 0.95;
  auto* ana = app.add_subcommand("analyze", "fit a CSV dataset and write estimate reports");
  ana->add_option("--data", data_path, "long-format CSV, one row per individual")
      ->required()
      ->check(CLI::ExistingFile);
  ana->add_option("--cluster-col", cluster_col)->required();
  ana->add_option("--treat-col", treat_col)->required();
  ana->add_option("--outcome-col", outcome_col)->required();
  ana->add_option("--covars", covars, "covariate columns")->delimiter(',');
  ana->add_option("--pi", pi, "assignment probability")->capture_default_str();
  ana->add_option("--spec", specs, "methods: gcomp-adj,gcomp-unadj,mr-adj,mr-unadj,np,lmm,all")
      ->delimiter(',')
      ->capture_default_str();
  ana->add_option("--estimand", estimands, "cluster,individual")->delimiter(',')->capture_default_str();
  ana->add_option("--scale", scale)->capture_default_str();
  ana->add_option("--draws", draws)->capture_default_str();
  ana->add_option("--burnin", burnin)->capture_default_str();
  ana->add_option("--boot", boot)->capture_default_str();
  ana->add_option("--level", level)->capture_default_str();
  ana->add_option("--threads", threads)->capture_default_str();
  ana->add_option("--seed", seed, "master seed")->required();
  ana->add_option("--out", out_dir, "output directory")->required();
  ana->add_option("--dump-draws", dump_draws, "directory for posterior draw CSVs");

  // truth
  std::string truth_out;
  auto* tru = app.add_subcommand("truth", "compute ground-truth estimands for a scenario");
  tru->add_option("--scenario", scenario)->required();
  tru->add_option("--n-truth", n_truth)->capture_default_str();
  tru->add_option("--seed", seed)->required();
  tru->add_option("--scale", scale)->capture_default_str();
  tru->add_option("--sigma-phi2", sigma_phi2)->capture_default_str();
  tru->add_option("--out", truth_out, "JSON file (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error [" << category_name(ErrorCategory::config) << "]: " << e.what() << "\n";
    return exit_code(ErrorCategory::config);
  }

  try {
    if (sim->parsed()) {
      SimulationConfig cfg;
      cfg.scenario.scenario = parse_scenario(scenario);
      cfg.scenario.clusters = clusters;
      cfg.scenario.sigma_phi2 = sigma_phi2;
      cfg.replicates = reps;
      cfg.chain = chain_config(draws, burnin);
      cfg.bootstrap = boot;
      cfg.n_truth = n_truth;
      cfg.scale = parse_scale(scale);
      cfg.methods = parse_methods(specs);
      cfg.threads = threads;
      cfg.permissive = permissive;
      cfg.seed = seed;
      const auto res = run_simulation(cfg);
      write_simulation_outputs(res, out_dir);
      std::cout << format_table_text(res.table);
    } else if (ana->parsed()) {
      AnalyzeConfig cfg;
      cfg.data = data_path;
      cfg.schema.cluster_column = cluster_col;
      cfg.schema.treatment_column = treat_col;
      cfg.schema.outcome_column = outcome_col;
      cfg.schema.covariate_columns = covars;
      cfg.pi = pi;
      cfg.methods = parse_methods(specs);
      cfg.units = parse_units(estimands);
      cfg.scale = parse_scale(scale);
      cfg.chain = chain_config(draws, burnin);
      cfg.bootstrap = boot;
      cfg.level = level;
      cfg.threads = threads;
      cfg.seed = seed;
      if (!dump_draws.empty()) cfg.dump_draws = dump_draws;
      const auto res = run_analyze(cfg);
      write_analyze_outputs(res, out_dir);
      std::cout << format_reports(res.reports);
    } else if (tru->parsed()) {
      ScenarioConfig cfg;
      cfg.scenario = parse_scenario(scenario);
      cfg.sigma_phi2 = sigma_phi2;
      cfg.seed = derive_seed(seed, StreamTag::truth);
      const auto t = true_estimands(cfg, n_truth, parse_scale(scale));
      const std::string text = to_json(t).dump(2) + "\n";
      if (truth_out.empty())
        std::cout << text;
      else
        detail::write_text(truth_out, text);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

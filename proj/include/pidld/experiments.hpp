#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pidld/config.hpp"

namespace pidld {

struct ExperimentContext {
  std::string out_dir = ".";
  int threads = 0;  // 0 = library default
  bool svg = true;
};

struct ExperimentResult {
  std::vector<std::string> files;  // paths of the artifacts written
};

// Toy-target experiments. Each is a pure function of (base config, seeds):
// every parameter setting within an experiment reuses the per-seed master
// seed, so all settings share initial ensembles and noise streams (paired
// design), and reruns are byte-identical.
//
// Common CSV artifacts:
//   *_metrics.csv: experiment_id, seed, k_p, k_i, k_d, gamma, metric_name,
//                  cluster_id, value   (cluster_id 0 = whole-ensemble metric)
//   *_curves.csv:  experiment_id, seed, k_p, k_i, k_d, gamma, snapshot, step, kl
//                  (snapshot is 1-based)
//   *_floors.csv:  per-seed KL self-consistency floor at the run's sample count
ExperimentResult run_kl_ablation(const LoadedConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ExperimentContext& ctx);
ExperimentResult run_ki_sweep(const LoadedConfig& base,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentContext& ctx);
ExperimentResult run_decay(const LoadedConfig& base,
                           const std::vector<std::uint64_t>& seeds,
                           const ExperimentContext& ctx);
ExperimentResult run_kd_sweep(const LoadedConfig& base,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentContext& ctx);
ExperimentResult run_bias(const LoadedConfig& base,
                          const std::vector<std::uint64_t>& seeds,
                          const ExperimentContext& ctx);
ExperimentResult run_oscillation(const LoadedConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ExperimentContext& ctx);
ExperimentResult run_decay_grid(const LoadedConfig& base,
                                const std::vector<std::uint64_t>& seeds,
                                const ExperimentContext& ctx);

struct StabilityGridSpec {
  double eps_min = 0.044;
  double eps_max = 2.2;
  int eps_count = 50;
  double kd_min = 0.0;
  double kd_max = 3.0;
  int kd_count = 50;
  double m = 1.0;
  long sim_max_steps = 2000000;
  bool empirical = false;  // Monte-Carlo covariance cross-check (slow)
  long empirical_burn_in = 10000;
  long empirical_samples = 1000000;
  std::uint64_t empirical_seed = 0;
};

// Linear-stability atlas over (eps, k_d) at fixed m: spectral radii, Jury
// verdicts, both step-size bounds, stationary covariances, and a
// deterministic-simulation cross-check; optional Monte-Carlo covariance.
ExperimentResult run_stability_grid(const StabilityGridSpec& spec,
                                    const ExperimentContext& ctx);

using ExperimentFn = std::function<ExperimentResult(
    const LoadedConfig&, const std::vector<std::uint64_t>&,
    const ExperimentContext&)>;

// Name -> runner for the toy experiments (stability_grid is separate: it
// needs no run config).
const std::map<std::string, ExperimentFn>& experiment_registry();

// 1..10 for the KL-curve experiments and the decay grid, 1..100 for the
// 100-run bias/oscillation studies.
std::vector<std::uint64_t> default_seeds(const std::string& experiment);

// Shared analysis helpers (also used by the acceptance suite).
double mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace pidld

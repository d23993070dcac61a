#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pidld/rng.hpp"
#include "pidld/score_model.hpp"

namespace pidld {

// Per-level step-size rule. `constant` uses base_step at every level;
// `ncsn_quadratic` scales it as base_step * sigma_i^2 / sigma_last^2 so the
// signal-to-noise ratio of one update stays level-independent.
enum class StepRule { constant, ncsn_quadratic };

struct PidGains {
  double kp = 1.0;
  double ki = 0.0;
  double kd = 0.0;
  double gamma = 1.0;  // per-step multiplicative decay applied to ki

  void validate() const {
    if (!(gamma > 0.0) || gamma > 1.0) {
      throw std::invalid_argument("gains.gamma must lie in (0, 1]");
    }
  }
};

struct NoiseSchedule {
  std::vector<double> sigmas;  // strictly decreasing, all positive
  long steps_per_level = 0;
  double base_step = 0.0;
  StepRule rule = StepRule::ncsn_quadratic;

  // Geometric ladder: sigmas[i] = sigma_first * (sigma_last/sigma_first)^(i/(L-1)).
  static NoiseSchedule geometric(double sigma_first, double sigma_last,
                                 int levels, long steps_per_level,
                                 double base_step,
                                 StepRule rule = StepRule::ncsn_quadratic);

  double eps_for_level(int level) const;
  int levels() const { return static_cast<int>(sigmas.size()); }
  long total_steps() const { return steps_per_level * levels(); }
  void validate() const;
};

// Flat row-major particle storage plus the RNG bookkeeping needed to make a
// run reproducible independent of thread count: particle i always draws from
// its own counter-based stream with id i, whose counter persists across the
// whole run (initialisation included).
struct Ensemble {
  int n = 0;
  int d = 0;
  std::vector<double> positions;  // n * d
  std::uint64_t master_seed = 0;
  std::vector<RngStream> streams;  // one per particle

  static Ensemble create(int n, int d, std::uint64_t master_seed);

  double* particle(int i) { return positions.data() + static_cast<std::size_t>(i) * d; }
  const double* particle(int i) const {
    return positions.data() + static_cast<std::size_t>(i) * d;
  }
};

// Controller state. The integral is a running mean of all scores seen so far
// (per particle, per coordinate); prev_score holds the previous step's score
// for the difference term. current_ki starts at gains.ki and is multiplied by
// gamma after every step, so step t (0-based) uses ki * gamma^t. The state
// persists across noise levels.
struct PidState {
  std::vector<double> integral;    // n * d, starts at 0
  std::vector<double> prev_score;  // n * d, seeded with the score at the start point
  long step_count = 0;
  double current_ki = 0.0;

  static PidState initial(const Ensemble& ens, const ScoreModel& model,
                          double sigma, const PidGains& gains);
};

struct RunConfig {
  PidGains gains;
  NoiseSchedule schedule;
  int ensemble_size = 0;
  double box_low = -8.0;
  double box_high = 8.0;
  std::uint64_t master_seed = 0;
  long record_every = 5;  // snapshot cadence in steps; 0 disables recording
  bool final_denoise = true;

  void validate() const;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long step, int particle)
      : std::runtime_error("non-finite state at step " + std::to_string(step) +
                           ", particle " + std::to_string(particle)),
        step(step),
        particle(particle) {}
  long step;
  int particle;
};

// Fills positions with i.i.d. uniforms over [low, high]^d, one stream per
// particle, d draws each.
void init_uniform(Ensemble& ens, double low, double high);

// One PID-Langevin update of the whole ensemble at noise scale sigma and step
// size eps. noise_scale multiplies the sqrt(2*eps) diffusion amplitude; 0
// gives the deterministic drift (noise draws are still consumed so the RNG
// counters stay aligned). Mutates state: updates the running-mean integral,
// stores the current score into prev_score, increments step_count, and decays
// current_ki by gains.gamma. Throws DivergenceError if any particle's score
// or position becomes non-finite.
void pid_step(Ensemble& ens, PidState& state, const ScoreModel& model,
              double sigma, double eps, const PidGains& gains,
              int threads = 0, double noise_scale = 1.0);

// Runs the full annealed schedule: uniform init, one score evaluation to seed
// prev_score, then steps_per_level updates at each level with PID state
// carried across levels, and (optionally) a final deterministic denoising
// move x += sigma_last^2 * s(x, sigma_last). on_snapshot, if set, is invoked
// after every step whose 1-based index is a multiple of record_every.
struct RunResult {
  Ensemble ensemble;
  PidState state;
  long snapshots = 0;
  long score_evals = 0;  // per-particle score evaluations over the run
};

RunResult run_annealed(
    const RunConfig& config, const ScoreModel& model, int threads = 0,
    const std::function<void(long step, const Ensemble&)>& on_snapshot = {});

}  // namespace pidld

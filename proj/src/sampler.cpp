#include "pidld/sampler.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pidld {

namespace {

int resolve_threads(int threads) {
#ifdef _OPENMP
  return threads > 0 ? threads : omp_get_max_threads();
#else
  (void)threads;
  return 1;
#endif
}

bool all_finite(const double* p, int d) {
  for (int j = 0; j < d; ++j) {
    if (!std::isfinite(p[j])) return false;
  }
  return true;
}

}  // namespace

NoiseSchedule NoiseSchedule::geometric(double sigma_first, double sigma_last,
                                       int levels, long steps_per_level,
                                       double base_step, StepRule rule) {
  if (levels < 1) throw std::invalid_argument("schedule needs levels >= 1");
  if (!(sigma_first > 0.0) || !(sigma_last > 0.0)) {
    throw std::invalid_argument("schedule sigmas must be positive");
  }
  if (levels > 1 && !(sigma_first > sigma_last)) {
    throw std::invalid_argument("schedule needs sigma_first > sigma_last");
  }
  NoiseSchedule s;
  s.sigmas.resize(levels);
  if (levels == 1) {
    s.sigmas[0] = sigma_first;
  } else {
    const double ratio = sigma_last / sigma_first;
    for (int i = 0; i < levels; ++i) {
      s.sigmas[i] = sigma_first *
                    std::pow(ratio, static_cast<double>(i) / (levels - 1));
    }
  }
  s.steps_per_level = steps_per_level;
  s.base_step = base_step;
  s.rule = rule;
  s.validate();
  return s;
}

double NoiseSchedule::eps_for_level(int level) const {
  if (level < 0 || level >= levels()) {
    throw std::out_of_range("schedule level out of range");
  }
  if (rule == StepRule::constant) return base_step;
  const double s = sigmas[static_cast<std::size_t>(level)];
  const double s_last = sigmas.back();
  return base_step * (s * s) / (s_last * s_last);
}

void NoiseSchedule::validate() const {
  if (sigmas.empty()) throw std::invalid_argument("schedule has no levels");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) {
      throw std::invalid_argument("schedule sigmas must be positive");
    }
    if (i > 0 && !(sigmas[i] < sigmas[i - 1])) {
      throw std::invalid_argument("schedule sigmas must be strictly decreasing");
    }
  }
  if (steps_per_level < 1) {
    throw std::invalid_argument("schedule needs steps_per_level >= 1");
  }
  if (!(base_step > 0.0)) {
    throw std::invalid_argument("schedule needs base_step > 0");
  }
}

Ensemble Ensemble::create(int n, int d, std::uint64_t master_seed) {
  if (n < 1) throw std::invalid_argument("ensemble size must be >= 1");
  if (d < 1) throw std::invalid_argument("ensemble dimension must be >= 1");
  Ensemble ens;
  ens.n = n;
  ens.d = d;
  ens.master_seed = master_seed;
  ens.positions.assign(static_cast<std::size_t>(n) * d, 0.0);
  ens.streams.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ens.streams.emplace_back(master_seed, static_cast<std::uint64_t>(i));
  }
  return ens;
}

void init_uniform(Ensemble& ens, double low, double high) {
  if (!(high > low)) throw std::invalid_argument("init box needs high > low");
  for (int i = 0; i < ens.n; ++i) {
    double* x = ens.particle(i);
    for (int j = 0; j < ens.d; ++j) {
      x[j] = ens.streams[static_cast<std::size_t>(i)].uniform(low, high);
    }
  }
}

PidState PidState::initial(const Ensemble& ens, const ScoreModel& model,
                           double sigma, const PidGains& gains) {
  gains.validate();
  PidState st;
  const std::size_t total = static_cast<std::size_t>(ens.n) * ens.d;
  st.integral.assign(total, 0.0);
  st.prev_score.assign(total, 0.0);
  st.step_count = 0;
  st.current_ki = gains.ki;
  for (int i = 0; i < ens.n; ++i) {
    std::span<const double> x(ens.particle(i), static_cast<std::size_t>(ens.d));
    std::span<double> s(st.prev_score.data() + static_cast<std::size_t>(i) * ens.d,
                        static_cast<std::size_t>(ens.d));
    model.score(x, sigma, s);
  }
  return st;
}

void pid_step(Ensemble& ens, PidState& state, const ScoreModel& model,
              double sigma, double eps, const PidGains& gains, int threads,
              double noise_scale) {
  if (!(eps > 0.0)) throw std::invalid_argument("step size must be positive");
  const int n = ens.n;
  const int d = ens.d;
  const double amp = std::sqrt(2.0 * eps) * noise_scale;
  const double t = static_cast<double>(state.step_count);
  const double inv_t1 = 1.0 / (t + 1.0);
  const double ki_cur = state.current_ki;
  const int nthreads = resolve_threads(threads);
  int bad_particle = -1;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#else
  (void)nthreads;
#endif
  for (int i = 0; i < n; ++i) {
    double* x = ens.particle(i);
    double* integral = state.integral.data() + static_cast<std::size_t>(i) * d;
    double* prev = state.prev_score.data() + static_cast<std::size_t>(i) * d;
    double s[2];
    std::vector<double> s_big;
    double* sc = s;
    if (d > 2) {
      s_big.resize(static_cast<std::size_t>(d));
      sc = s_big.data();
    }
    model.score(std::span<const double>(x, static_cast<std::size_t>(d)), sigma,
                std::span<double>(sc, static_cast<std::size_t>(d)));
    bool bad = !all_finite(sc, d);
    if (!bad) {
      for (int j = 0; j < d; ++j) {
        integral[j] = (integral[j] * t + sc[j]) * inv_t1;
      }
      RngStream& rng = ens.streams[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; j += 2) {
        double z0, z1;
        rng.normal_pair(z0, z1);
        const double u0 = gains.kp * sc[j] + ki_cur * integral[j] +
                          gains.kd * (sc[j] - prev[j]);
        x[j] += eps * u0 + amp * z0;
        if (j + 1 < d) {
          const double u1 = gains.kp * sc[j + 1] + ki_cur * integral[j + 1] +
                            gains.kd * (sc[j + 1] - prev[j + 1]);
          x[j + 1] += eps * u1 + amp * z1;
        }
      }
      for (int j = 0; j < d; ++j) prev[j] = sc[j];
      bad = !all_finite(x, d);
    }
    if (bad) {
#ifdef _OPENMP
#pragma omp critical(pidld_divergence)
#endif
      {
        if (bad_particle < 0 || i < bad_particle) bad_particle = i;
      }
    }
  }
  if (bad_particle >= 0) {
    throw DivergenceError(state.step_count, bad_particle);
  }
  ++state.step_count;
  state.current_ki *= gains.gamma;
}

void RunConfig::validate() const {
  gains.validate();
  schedule.validate();
  if (ensemble_size < 1) throw std::invalid_argument("ensemble size must be >= 1");
  if (!(box_high > box_low)) throw std::invalid_argument("init box needs high > low");
  if (record_every < 0) throw std::invalid_argument("record_every must be >= 0");
}

RunResult run_annealed(const RunConfig& config, const ScoreModel& model,
                       int threads,
                       const std::function<void(long, const Ensemble&)>& on_snapshot) {
  config.validate();
  RunResult result;
  result.ensemble = Ensemble::create(config.ensemble_size, model.dim(),
                                     config.master_seed);
  Ensemble& ens = result.ensemble;
  init_uniform(ens, config.box_low, config.box_high);
  result.state = PidState::initial(ens, model, config.schedule.sigmas.front(),
                                   config.gains);
  result.score_evals = 1;
  for (int level = 0; level < config.schedule.levels(); ++level) {
    const double sigma = config.schedule.sigmas[static_cast<std::size_t>(level)];
    const double eps = config.schedule.eps_for_level(level);
    for (long k = 0; k < config.schedule.steps_per_level; ++k) {
      pid_step(ens, result.state, model, sigma, eps, config.gains, threads);
      ++result.score_evals;
      if (config.record_every > 0 &&
          result.state.step_count % config.record_every == 0) {
        ++result.snapshots;
        if (on_snapshot) on_snapshot(result.state.step_count, ens);
      }
    }
  }
  if (config.final_denoise) {
    const double sigma_last = config.schedule.sigmas.back();
    const double v = sigma_last * sigma_last;
    const int d = ens.d;
    int bad_particle = -1;
    const int nthreads = resolve_threads(threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#else
    (void)nthreads;
#endif
    for (int i = 0; i < ens.n; ++i) {
      double* x = ens.particle(i);
      double s[2];
      std::vector<double> s_big;
      double* sc = s;
      if (d > 2) {
        s_big.resize(static_cast<std::size_t>(d));
        sc = s_big.data();
      }
      model.score(std::span<const double>(x, static_cast<std::size_t>(d)),
                  sigma_last, std::span<double>(sc, static_cast<std::size_t>(d)));
      for (int j = 0; j < d; ++j) x[j] += v * sc[j];
      if (!all_finite(x, d)) {
#ifdef _OPENMP
#pragma omp critical(pidld_divergence)
#endif
        {
          if (bad_particle < 0 || i < bad_particle) bad_particle = i;
        }
      }
    }
    if (bad_particle >= 0) {
      throw DivergenceError(result.state.step_count, bad_particle);
    }
    ++result.score_evals;
  }
  return result;
}

}  // namespace pidld

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pidld/reference_ald.hpp"
#include "pidld/sampler.hpp"
#include "pidld/score_model.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

}  // namespace

int main() {
  using namespace pidld;
  const GaussianMixture model(
      {{0.2, {-5.0, -5.0}}, {0.8, {5.0, 5.0}}}, 1.0);

  RunConfig cfg;
  cfg.gains = {1.0, 0.1, 6.0, 1.0};
  cfg.schedule = NoiseSchedule::geometric(20.0, 0.01, 8, 50, 8e-6);
  cfg.ensemble_size = 1280;
  cfg.master_seed = 1;
  cfg.record_every = 0;
  cfg.final_denoise = true;

  reference::AldConfig ald;
  ald.schedule = cfg.schedule;
  ald.ensemble_size = cfg.ensemble_size;
  ald.master_seed = cfg.master_seed;

  const double particle_steps =
      static_cast<double>(cfg.ensemble_size) * cfg.schedule.total_steps();
  constexpr int kRepeats = 5;

  int max_threads = 1;
#ifdef _OPENMP
  max_threads = omp_get_max_threads();
#endif
  std::printf("workload: %d particles x %ld steps, best of %d\n",
              cfg.ensemble_size, cfg.schedule.total_steps(), kRepeats);

  const double serial_ms = best_of(
      kRepeats, [&] { reference::run(ald, model); });
  std::printf("%-28s %10.2f ms  %12.3g particle-steps/s\n",
              "reference serial ALD", serial_ms,
              particle_steps / (serial_ms / 1e3));

  const double one_ms =
      best_of(kRepeats, [&] { run_annealed(cfg, model, 1); });
  std::printf("%-28s %10.2f ms  %12.3g particle-steps/s\n",
              "pid sampler, 1 thread", one_ms, particle_steps / (one_ms / 1e3));

  const double omp_ms =
      best_of(kRepeats, [&] { run_annealed(cfg, model, 0); });
  std::printf("%-28s %10.2f ms  %12.3g particle-steps/s  (%d threads)\n",
              "pid sampler, all threads", omp_ms,
              particle_steps / (omp_ms / 1e3), max_threads);
  std::printf("speedup over 1 thread: %.2fx\n", one_ms / omp_ms);
  return 0;
}

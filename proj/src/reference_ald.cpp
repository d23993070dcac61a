#include "pidld/reference_ald.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace pidld::reference {

AldResult run(const AldConfig& config, const ScoreModel& model,
              const std::function<void(long, const Ensemble&)>& on_snapshot) {
  config.schedule.validate();
  if (config.ensemble_size < 1) {
    throw std::invalid_argument("ensemble size must be >= 1");
  }
  const int d = model.dim();
  AldResult result;
  result.ensemble = Ensemble::create(config.ensemble_size, d, config.master_seed);
  Ensemble& ens = result.ensemble;
  init_uniform(ens, config.box_low, config.box_high);

  std::vector<double> s(static_cast<std::size_t>(d));
  for (int level = 0; level < config.schedule.levels(); ++level) {
    const double sigma = config.schedule.sigmas[static_cast<std::size_t>(level)];
    const double eps = config.schedule.eps_for_level(level);
    const double amp = std::sqrt(2.0 * eps);
    for (long k = 0; k < config.schedule.steps_per_level; ++k) {
      for (int i = 0; i < ens.n; ++i) {
        double* x = ens.particle(i);
        model.score(std::span<const double>(x, static_cast<std::size_t>(d)),
                    sigma, std::span<double>(s.data(), s.size()));
        for (int j = 0; j < d; ++j) {
          if (!std::isfinite(s[j])) throw DivergenceError(result.steps, i);
        }
        RngStream& rng = ens.streams[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; j += 2) {
          double z0, z1;
          rng.normal_pair(z0, z1);
          const double u0 = config.drift_scale * s[j];
          x[j] += eps * u0 + amp * z0;
          if (j + 1 < d) {
            const double u1 = config.drift_scale * s[j + 1];
            x[j + 1] += eps * u1 + amp * z1;
          }
        }
        for (int j = 0; j < d; ++j) {
          if (!std::isfinite(x[j])) throw DivergenceError(result.steps, i);
        }
      }
      ++result.steps;
      if (on_snapshot && config.record_every > 0 &&
          result.steps % config.record_every == 0) {
        on_snapshot(result.steps, ens);
      }
    }
  }
  if (config.final_denoise) {
    const double sigma_last = config.schedule.sigmas.back();
    const double v = sigma_last * sigma_last;
    for (int i = 0; i < ens.n; ++i) {
      double* x = ens.particle(i);
      model.score(std::span<const double>(x, static_cast<std::size_t>(d)),
                  sigma_last, std::span<double>(s.data(), s.size()));
      for (int j = 0; j < d; ++j) x[j] += v * s[j];
    }
  }
  return result;
}

}  // namespace pidld::reference

#pragma once

#include <cstdint>
#include <functional>

#include "pidld/sampler.hpp"
#include "pidld/score_model.hpp"

namespace pidld::reference {

// Plain annealed Langevin dynamics, written as its own straight-line serial
// loop with no controller state. Kept deliberately independent of pid_step so
// it can serve as a cross-check: with gains (kp, 0, 0) the PID sampler must
// reproduce this baseline bit for bit, because both consume the same
// counter-based streams in the same order.
struct AldConfig {
  double drift_scale = 1.0;  // multiplies the score in the drift term
  NoiseSchedule schedule;
  int ensemble_size = 0;
  double box_low = -8.0;
  double box_high = 8.0;
  std::uint64_t master_seed = 0;
  int record_every = 0;  // 0 disables snapshots
  bool final_denoise = true;
};

struct AldResult {
  Ensemble ensemble;
  long steps = 0;
};

AldResult run(const AldConfig& config, const ScoreModel& model,
              const std::function<void(long, const Ensemble&)>& on_snapshot = {});

}  // namespace pidld::reference

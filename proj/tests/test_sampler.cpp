#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include <doctest.h>

#include "pidld/reference_ald.hpp"
#include "pidld/sampler.hpp"
#include "pidld/score_model.hpp"

using namespace pidld;

namespace {

GaussianMixture toy_mixture() {
  return GaussianMixture({{0.2, {-5.0, -5.0}}, {0.8, {5.0, 5.0}}}, 1.0);
}

NoiseSchedule short_schedule() {
  return NoiseSchedule::geometric(20.0, 0.01, 3, 10, 8e-6);
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("geometric schedule hits both endpoints with a constant ratio") {
  const NoiseSchedule s = NoiseSchedule::geometric(20.0, 0.01, 8, 150, 8e-6);
  REQUIRE(s.levels() == 8);
  CHECK(s.sigmas.front() == 20.0);
  CHECK(s.sigmas.back() == doctest::Approx(0.01).epsilon(1e-12));
  const double r = s.sigmas[1] / s.sigmas[0];
  for (int i = 1; i < 8; ++i) {
    CHECK(s.sigmas[i] / s.sigmas[i - 1] == doctest::Approx(r).epsilon(1e-12));
    CHECK(s.sigmas[i] < s.sigmas[i - 1]);
  }
  CHECK(s.total_steps() == 1200);
}

TEST_CASE("step size rules") {
  NoiseSchedule s = NoiseSchedule::geometric(20.0, 0.01, 8, 150, 8e-6);
  const double last = s.sigmas.back();
  for (int i = 0; i < 8; ++i) {
    const double expected = 8e-6 * s.sigmas[i] * s.sigmas[i] / (last * last);
    CHECK(s.eps_for_level(i) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(s.eps_for_level(7) == doctest::Approx(8e-6).epsilon(1e-12));
  s.rule = StepRule::constant;
  for (int i = 0; i < 8; ++i) CHECK(s.eps_for_level(i) == 8e-6);
}

TEST_CASE("schedule validation") {
  NoiseSchedule s = short_schedule();
  s.sigmas[1] = 30.0;  // not decreasing
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = short_schedule();
  s.base_step = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = short_schedule();
  s.steps_per_level = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::geometric(0.01, 20.0, 8, 150, 8e-6),
                  std::invalid_argument);  // increasing ladder
}

TEST_CASE("uniform init is inside the box and seed-deterministic") {
  Ensemble a = Ensemble::create(100, 2, 5);
  Ensemble b = Ensemble::create(100, 2, 5);
  Ensemble c = Ensemble::create(100, 2, 6);
  init_uniform(a, -8.0, 8.0);
  init_uniform(b, -8.0, 8.0);
  init_uniform(c, -8.0, 8.0);
  for (double v : a.positions) {
    REQUIRE(v >= -8.0);
    REQUIRE(v < 8.0);
  }
  CHECK(same_bits(a.positions, b.positions));
  CHECK_FALSE(same_bits(a.positions, c.positions));
}

TEST_CASE("initial controller state seeds prev_score and zeroes the integral") {
  const GaussianMixture gm = toy_mixture();
  Ensemble ens = Ensemble::create(16, 2, 3);
  init_uniform(ens, -8.0, 8.0);
  const PidGains gains{1.0, 0.25, 0.0, 1.0};
  const PidState st = PidState::initial(ens, gm, 20.0, gains);
  CHECK(st.step_count == 0);
  CHECK(st.current_ki == 0.25);
  std::vector<double> s(2);
  for (int i = 0; i < ens.n; ++i) {
    for (double v : st.integral) CHECK(v == 0.0);
    gm.score(std::span<const double>(ens.particle(i), 2), 20.0, s);
    CHECK(st.prev_score[2 * i] == s[0]);
    CHECK(st.prev_score[2 * i + 1] == s[1]);
  }
}

TEST_CASE("controller recursion matches a hand-tracked scalar chain") {
  // Quadratic potential, independent coordinates, noise off: every term of
  // the recursion can be tracked by hand.
  const QuadraticPotential q(1.0, {0.0, 0.0});
  Ensemble ens = Ensemble::create(1, 2, 0);
  ens.positions = {2.0, -1.5};
  const PidGains gains{0.8, 0.3, 4.0, 0.9};
  PidState st = PidState::initial(ens, q, 1.0, gains);
  const double eps = 0.01;

  double x[2] = {2.0, -1.5};
  double integral[2] = {0.0, 0.0};
  double prev[2] = {-2.0, 1.5};  // score at the start point, -m*x
  double ki = 0.3;
  for (long t = 0; t < 25; ++t) {
    pid_step(ens, st, q, 1.0, eps, gains, 1, /*noise_scale=*/0.0);
    for (int j = 0; j < 2; ++j) {
      const double s = -x[j];
      integral[j] = (integral[j] * static_cast<double>(t) + s) /
                    static_cast<double>(t + 1);
      const double u = gains.kp * s + ki * integral[j] + gains.kd * (s - prev[j]);
      x[j] += eps * u;
      prev[j] = s;
    }
    ki *= gains.gamma;
    CHECK(ens.positions[0] == doctest::Approx(x[0]).epsilon(1e-14));
    CHECK(ens.positions[1] == doctest::Approx(x[1]).epsilon(1e-14));
    CHECK(st.current_ki == doctest::Approx(ki).epsilon(1e-14));
    CHECK(st.integral[0] == doctest::Approx(integral[0]).epsilon(1e-14));
    CHECK(st.prev_score[0] == doctest::Approx(prev[0]).epsilon(1e-14));
  }
  CHECK(st.step_count == 25);
}

TEST_CASE("noise draws are consumed even when the noise scale is zero") {
  const QuadraticPotential q(1.0, {0.0, 0.0});
  Ensemble ens = Ensemble::create(4, 2, 9);
  init_uniform(ens, -1.0, 1.0);
  PidState st = PidState::initial(ens, q, 1.0, PidGains{});
  const std::uint64_t before = ens.streams[0].counter();
  pid_step(ens, st, q, 1.0, 1e-3, PidGains{}, 1, 0.0);
  CHECK(ens.streams[0].counter() == before + 2);  // one Box-Muller pair
}

TEST_CASE("degenerate gains reproduce the reference sampler bit for bit") {
  const GaussianMixture gm = toy_mixture();
  RunConfig cfg;
  cfg.gains = PidGains{1.0, 0.0, 0.0, 1.0};
  cfg.schedule = short_schedule();
  cfg.ensemble_size = 32;
  cfg.master_seed = 7;
  cfg.record_every = 0;
  const RunResult pid = run_annealed(cfg, gm);

  reference::AldConfig ald;
  ald.schedule = cfg.schedule;
  ald.ensemble_size = cfg.ensemble_size;
  ald.master_seed = cfg.master_seed;
  const reference::AldResult ref = reference::run(ald, gm);
  CHECK(same_bits(pid.ensemble.positions, ref.ensemble.positions));
}

TEST_CASE("run_annealed snapshots use a global step counter across levels") {
  const GaussianMixture gm = toy_mixture();
  RunConfig cfg;
  cfg.schedule = short_schedule();  // 3 levels x 10 steps
  cfg.ensemble_size = 8;
  cfg.master_seed = 1;
  cfg.record_every = 4;
  std::vector<long> steps;
  const RunResult res = run_annealed(cfg, gm, 0, [&](long step, const Ensemble&) {
    steps.push_back(step);
  });
  CHECK(steps == std::vector<long>{4, 8, 12, 16, 20, 24, 28});
  CHECK(res.snapshots == 7);
  CHECK(res.state.step_count == 30);
  // One eval to seed prev_score, one per step, one for the final denoise.
  CHECK(res.score_evals == 32);
}

TEST_CASE("controller state persists across level boundaries") {
  // Replaying the same sigma/eps sequence through bare pid_step calls must
  // reproduce run_annealed exactly; any per-level reset would break this.
  const GaussianMixture gm = toy_mixture();
  RunConfig cfg;
  cfg.gains = PidGains{1.0, 0.2, 3.0, 0.95};
  cfg.schedule = short_schedule();
  cfg.ensemble_size = 16;
  cfg.master_seed = 4;
  cfg.record_every = 0;
  cfg.final_denoise = false;
  const RunResult whole = run_annealed(cfg, gm);

  Ensemble ens = Ensemble::create(16, 2, 4);
  init_uniform(ens, cfg.box_low, cfg.box_high);
  PidState st = PidState::initial(ens, gm, cfg.schedule.sigmas.front(), cfg.gains);
  for (int level = 0; level < cfg.schedule.levels(); ++level) {
    for (long k = 0; k < cfg.schedule.steps_per_level; ++k) {
      pid_step(ens, st, gm, cfg.schedule.sigmas[level],
               cfg.schedule.eps_for_level(level), cfg.gains);
    }
  }
  CHECK(same_bits(whole.ensemble.positions, ens.positions));
  CHECK(same_bits(whole.state.integral, st.integral));
  CHECK(whole.state.current_ki == st.current_ki);
}

TEST_CASE("final denoise applies one deterministic score move") {
  const GaussianMixture gm = toy_mixture();
  RunConfig cfg;
  cfg.schedule = short_schedule();
  cfg.ensemble_size = 8;
  cfg.master_seed = 2;
  cfg.record_every = 0;
  cfg.final_denoise = false;
  const RunResult raw = run_annealed(cfg, gm);
  cfg.final_denoise = true;
  const RunResult denoised = run_annealed(cfg, gm);

  const double sigma_last = cfg.schedule.sigmas.back();
  std::vector<double> expected = raw.ensemble.positions;
  std::vector<double> s(2);
  for (int i = 0; i < 8; ++i) {
    gm.score(std::span<const double>(&expected[2 * i], 2), sigma_last, s);
    expected[2 * i] += sigma_last * sigma_last * s[0];
    expected[2 * i + 1] += sigma_last * sigma_last * s[1];
  }
  CHECK(same_bits(denoised.ensemble.positions, expected));
  // The denoise step draws no randomness.
  CHECK(raw.ensemble.streams[0].counter() ==
        denoised.ensemble.streams[0].counter());
}

TEST_CASE("results are invariant to the requested thread count") {
  const GaussianMixture gm = toy_mixture();
  RunConfig cfg;
  cfg.gains = PidGains{1.0, 0.1, 6.0, 1.0};
  cfg.schedule = short_schedule();
  cfg.ensemble_size = 64;
  cfg.master_seed = 12;
  cfg.record_every = 0;
  const RunResult t1 = run_annealed(cfg, gm, 1);
  const RunResult t4 = run_annealed(cfg, gm, 4);
  const RunResult t0 = run_annealed(cfg, gm, 0);
  CHECK(same_bits(t1.ensemble.positions, t4.ensemble.positions));
  CHECK(same_bits(t1.ensemble.positions, t0.ensemble.positions));
}

TEST_CASE("divergence raises once the state overflows") {
  const QuadraticPotential q(1.0, {0.0, 0.0});
  RunConfig cfg;
  cfg.schedule = NoiseSchedule::geometric(2.0, 1.0, 2, 800, 3.0);
  cfg.schedule.rule = StepRule::constant;  // eps = 3 > 2/m: unstable
  cfg.ensemble_size = 4;
  cfg.master_seed = 0;
  cfg.record_every = 0;
  CHECK_THROWS_AS(run_annealed(cfg, q), DivergenceError);
}

TEST_CASE("run config validation rejects bad boxes and sizes") {
  RunConfig cfg;
  cfg.schedule = short_schedule();
  cfg.ensemble_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.ensemble_size = 8;
  cfg.box_low = 8.0;
  cfg.box_high = -8.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.box_high = 9.0;
  cfg.record_every = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  PidGains g;
  g.gamma = 0.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.gamma = 1.5;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

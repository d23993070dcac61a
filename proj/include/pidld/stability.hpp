#pragma once

#include <array>
#include <optional>
#include <vector>

#include "pidld/rng.hpp"

namespace pidld {

using Mat2 = std::array<std::array<double, 2>, 2>;

// One scalar dimension of the linearized PD update around a quadratic
// minimum with curvature m. The state is (x_t - x*, x_{t-1} - x*), so one
// step multiplies by J and injects noise with covariance Q in the first
// coordinate only.
struct LinearizedSystem {
  double eps = 0.0;
  double k_d = 0.0;
  double m = 0.0;
  Mat2 J{};
  Mat2 Q{};
};

// J = [[1 - eps*(1+k_d)*m, eps*k_d*m], [1, 0]], Q = [[2*eps, 0], [0, 0]].
// Negative k_d is accepted for analysis even though samplers only use
// k_d >= 0; eps and m must be positive.
LinearizedSystem build_system(double eps, double k_d, double m);

// Largest root modulus of det(lambda*I - J) = lambda^2 - a*lambda - b with
// a = 1 - eps*(1+k_d)*m and b = eps*k_d*m. For k_d >= 0 the discriminant
// a^2 + 4b is nonnegative and both roots are real; the complex branch
// (radius sqrt(|b|), the conjugate pair's common modulus by Vieta) is only
// reachable for negative k_d.
double spectral_radius(const LinearizedSystem& sys);

struct StabilityReport {
  double spectral_radius = 0.0;
  // (1) |eps*k_d*m| < 1, (2) eps*m > 0, (3) 2 - eps*(1+2*k_d)*m > 0.
  std::array<bool, 3> jury_conditions{};
  bool jury_pass = false;
  // Any condition within 1e-9 of its threshold: too close to the boundary
  // for a pass/fail call to be meaningful.
  bool marginal = false;
  double eps_bound_statement = 0.0;  // 1/((1+2*k_d)*m)
  double eps_bound_proof = 0.0;      // 2/((1+2*k_d)*m)
  std::optional<Mat2> stationary_cov;
};

// Evaluates the three second-order Jury conditions and both step-size bounds.
// Does not fill stationary_cov.
StabilityReport jury_check(const LinearizedSystem& sys);

// Fixed point of Sigma = J Sigma J^T + Q, iterated from Sigma = Q until the
// max-abs entry change drops below tol. Throws std::domain_error when the
// spectral radius is >= 1 (no stationary covariance exists) or when the
// iteration fails to reach tol within max_iter sweeps.
Mat2 stationary_covariance(const LinearizedSystem& sys, double tol = 1e-12,
                           long max_iter = 20000000);

// Truncated series sum_{k=0}^{terms} J^k Q (J^k)^T; oracle for the fixed
// point. The residual tail is bounded by a geometric series in the squared
// spectral radius.
Mat2 covariance_series(const LinearizedSystem& sys, long terms);

struct DeterministicSim {
  bool converged = false;   // final |x - x*| < 1e-8
  bool diverged = false;    // |x| exceeded 1e12 before max_steps
  long steps_run = 0;
  double final_err = 0.0;
  std::vector<double> trajectory;  // x_t for t = 0..steps_run (x* = 0)
};

// Iterates x_{t+1} = x_t + eps*(-m*x_t + k_d*(-m)*(x_t - x_{t-1})) on the
// centred quadratic (minimizer at 0) and reports convergence; exits early
// once the state drops below 1e-8 or grows past 1e12 in magnitude.
DeterministicSim simulate_deterministic(double eps, double k_d, double m,
                                        double x0, double x_prev0,
                                        long max_steps,
                                        bool record_trajectory = false);

// Monte-Carlo stationary covariance of the pair (x_t, x_{t-1}) from a single
// stochastic chain with per-step noise sqrt(2*eps)*xi: discards burn_in
// steps, then accumulates over `samples` consecutive steps. Throws
// std::domain_error if the chain exceeds 1e12 in magnitude.
Mat2 empirical_stationary_covariance(double eps, double k_d, double m,
                                     long burn_in, long samples,
                                     RngStream& rng);

}  // namespace pidld

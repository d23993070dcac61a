#include "pidld/stability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pidld {

namespace {

constexpr double kBoundaryBand = 1e-9;
constexpr double kConvergedErr = 1e-8;
constexpr double kDivergedErr = 1e12;

Mat2 sandwich(const Mat2& j, const Mat2& s) {
  // j * s * j^T for 2x2 matrices.
  Mat2 js{};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      js[r][c] = j[r][0] * s[0][c] + j[r][1] * s[1][c];
    }
  }
  Mat2 out{};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      out[r][c] = js[r][0] * j[c][0] + js[r][1] * j[c][1];
    }
  }
  return out;
}

}  // namespace

LinearizedSystem build_system(double eps, double k_d, double m) {
  if (!(eps > 0.0) || !(m > 0.0)) {
    throw std::invalid_argument("build_system needs eps > 0 and m > 0");
  }
  LinearizedSystem sys;
  sys.eps = eps;
  sys.k_d = k_d;
  sys.m = m;
  sys.J = {{{1.0 - eps * (1.0 + k_d) * m, eps * k_d * m}, {1.0, 0.0}}};
  sys.Q = {{{2.0 * eps, 0.0}, {0.0, 0.0}}};
  return sys;
}

double spectral_radius(const LinearizedSystem& sys) {
  const double a = 1.0 - sys.eps * (1.0 + sys.k_d) * sys.m;
  const double b = sys.eps * sys.k_d * sys.m;
  const double disc = a * a + 4.0 * b;
  if (disc < 0.0) {
    return std::sqrt(-b);  // conjugate pair, common modulus from the root product
  }
  const double root = std::sqrt(disc);
  return std::max(std::abs((a + root) / 2.0), std::abs((a - root) / 2.0));
}

StabilityReport jury_check(const LinearizedSystem& sys) {
  StabilityReport rep;
  rep.spectral_radius = spectral_radius(sys);
  const double b = sys.eps * sys.k_d * sys.m;
  const double c1 = 1.0 - std::abs(b);
  const double c2 = sys.eps * sys.m;
  const double c3 = 2.0 - sys.eps * (1.0 + 2.0 * sys.k_d) * sys.m;
  rep.jury_conditions = {c1 > 0.0, c2 > 0.0, c3 > 0.0};
  rep.jury_pass =
      rep.jury_conditions[0] && rep.jury_conditions[1] && rep.jury_conditions[2];
  rep.marginal = std::abs(c1) <= kBoundaryBand || std::abs(c2) <= kBoundaryBand ||
                 std::abs(c3) <= kBoundaryBand;
  const double denom = (1.0 + 2.0 * sys.k_d) * sys.m;
  rep.eps_bound_statement = 1.0 / denom;
  rep.eps_bound_proof = 2.0 / denom;
  return rep;
}

Mat2 stationary_covariance(const LinearizedSystem& sys, double tol,
                           long max_iter) {
  if (!(spectral_radius(sys) < 1.0)) {
    throw std::domain_error("no stationary covariance: spectral radius >= 1");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  Mat2 sigma = sys.Q;
  for (long it = 0; it < max_iter; ++it) {
    Mat2 next = sandwich(sys.J, sigma);
    double change = 0.0;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        next[r][c] += sys.Q[r][c];
        change = std::max(change, std::abs(next[r][c] - sigma[r][c]));
      }
    }
    sigma = next;
    if (change < tol) return sigma;
  }
  throw std::domain_error("stationary covariance iteration did not reach tol");
}

Mat2 covariance_series(const LinearizedSystem& sys, long terms) {
  Mat2 total = sys.Q;
  Mat2 term = sys.Q;
  for (long k = 1; k <= terms; ++k) {
    term = sandwich(sys.J, term);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) total[r][c] += term[r][c];
    }
  }
  return total;
}

DeterministicSim simulate_deterministic(double eps, double k_d, double m,
                                        double x0, double x_prev0,
                                        long max_steps,
                                        bool record_trajectory) {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  DeterministicSim sim;
  double x = x0;
  double prev = x_prev0;
  if (record_trajectory) sim.trajectory.push_back(x);
  for (long t = 0; t < max_steps; ++t) {
    const double next = x + eps * (-m * x + k_d * (-m) * (x - prev));
    prev = x;
    x = next;
    ++sim.steps_run;
    if (record_trajectory) sim.trajectory.push_back(x);
    const double err = std::max(std::abs(x), std::abs(prev));
    if (err > kDivergedErr || !std::isfinite(err)) {
      sim.diverged = true;
      sim.final_err = err;
      return sim;
    }
    if (err < kConvergedErr) {
      sim.converged = true;
      sim.final_err = err;
      return sim;
    }
  }
  sim.final_err = std::abs(x);
  sim.converged = sim.final_err < kConvergedErr;
  return sim;
}

Mat2 empirical_stationary_covariance(double eps, double k_d, double m,
                                     long burn_in, long samples,
                                     RngStream& rng) {
  if (samples < 2) throw std::invalid_argument("need at least 2 samples");
  const double amp = std::sqrt(2.0 * eps);
  double x = 0.0;
  double prev = 0.0;
  auto step = [&] {
    const double next = x + eps * (-m * x + k_d * (-m) * (x - prev)) +
                        amp * rng.normal();
    prev = x;
    x = next;
    if (std::abs(x) > kDivergedErr || !std::isfinite(x)) {
      throw std::domain_error("stochastic chain diverged");
    }
  };
  for (long t = 0; t < burn_in; ++t) step();
  double mean0 = 0.0, mean1 = 0.0;
  double m00 = 0.0, m01 = 0.0, m11 = 0.0;
  for (long t = 0; t < samples; ++t) {
    step();
    mean0 += x;
    mean1 += prev;
    m00 += x * x;
    m01 += x * prev;
    m11 += prev * prev;
  }
  const double n = static_cast<double>(samples);
  mean0 /= n;
  mean1 /= n;
  Mat2 cov;
  cov[0][0] = m00 / n - mean0 * mean0;
  cov[0][1] = m01 / n - mean0 * mean1;
  cov[1][0] = cov[0][1];
  cov[1][1] = m11 / n - mean1 * mean1;
  return cov;
}

}  // namespace pidld

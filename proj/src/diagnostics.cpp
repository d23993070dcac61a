#include "pidld/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pidld {

namespace {

double sq_dist2(const double* a, const double* b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

// Numerically safe logistic: exp is only ever applied to nonpositive values.
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

KlGrid::KlGrid(double box_low, double box_high, int bins_per_axis,
               double pseudo_count, const GaussianMixture& truth)
    : lo_(box_low),
      hi_(box_high),
      bins_(bins_per_axis),
      pseudo_count_(pseudo_count) {
  if (!(hi_ > lo_)) throw std::invalid_argument("KL box needs high > low");
  if (bins_ < 1) throw std::invalid_argument("bins_per_axis must be >= 1");
  if (!(pseudo_count_ > 0.0)) {
    throw std::invalid_argument("pseudo_count must be positive");
  }
  if (truth.dim() != 2) {
    throw std::invalid_argument("KL grid expects a 2-D truth model");
  }
  cell_width_ = (hi_ - lo_) / bins_;
  const double area = cell_width_ * cell_width_;
  p_.resize(static_cast<std::size_t>(bins_) * bins_);
  double total = 0.0;
  for (int ix = 0; ix < bins_; ++ix) {
    const double cx = lo_ + (ix + 0.5) * cell_width_;
    for (int iy = 0; iy < bins_; ++iy) {
      const double cy = lo_ + (iy + 0.5) * cell_width_;
      const double pt[2] = {cx, cy};
      const double mass = truth.density(std::span<const double>(pt, 2), 0.0) * area;
      p_[static_cast<std::size_t>(ix) * bins_ + iy] = mass;
      total += mass;
    }
  }
  for (double& v : p_) v /= total;
}

double KlGrid::kl(std::span<const double> samples_xy) const {
  if (samples_xy.empty() || samples_xy.size() % 2 != 0) {
    throw std::invalid_argument("samples must be a nonempty flat list of 2-D points");
  }
  const std::size_t cells = p_.size();
  std::vector<double> count(cells, 0.0);
  std::size_t n_in = 0;
  for (std::size_t i = 0; i < samples_xy.size(); i += 2) {
    const double x = samples_xy[i];
    const double y = samples_xy[i + 1];
    if (!(x >= lo_) || !(x < hi_) || !(y >= lo_) || !(y < hi_)) continue;
    const int ix = static_cast<int>((x - lo_) / cell_width_);
    const int iy = static_cast<int>((y - lo_) / cell_width_);
    if (ix < 0 || ix >= bins_ || iy < 0 || iy >= bins_) continue;
    count[static_cast<std::size_t>(ix) * bins_ + iy] += 1.0;
    ++n_in;
  }
  if (n_in == 0) {
    throw std::domain_error("all samples fall outside the histogram box");
  }
  const double denom = static_cast<double>(n_in) +
                       pseudo_count_ * static_cast<double>(cells);
  double kl = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    const double q = (count[c] + pseudo_count_) / denom;
    kl += q * std::log(q / p_[c]);
  }
  return kl;
}

double self_kl_floor(const GaussianMixture& model, const KlGrid& grid, int n,
                     RngStream& rng) {
  std::vector<double> samples;
  model.sample(n, rng, samples);
  return grid.kl(samples);
}

FitResult fit_centers(std::span<const double> samples_xy,
                      const std::array<std::array<double, 2>, 2>& init_means,
                      double variance) {
  if (samples_xy.size() < 4 || samples_xy.size() % 2 != 0) {
    throw std::invalid_argument("fit_centers needs at least two 2-D samples");
  }
  if (!(variance > 0.0)) throw std::invalid_argument("variance must be positive");
  if (init_means[0] == init_means[1]) {
    throw std::invalid_argument("initial means must be distinct");
  }
  const std::size_t n = samples_xy.size() / 2;
  FitResult res;
  res.means = init_means;
  res.weights = {0.5, 0.5};
  std::vector<double> r1(n, 0.0);  // responsibility of cluster 1 per sample
  const double inv2v = 1.0 / (2.0 * variance);
  for (int iter = 0; iter < 200; ++iter) {
    const double lw1 = std::log(res.weights[0]);
    const double lw2 = std::log(res.weights[1]);
    double max_change = 0.0;
    double s1 = 0.0, s2 = 0.0;
    double m1x = 0.0, m1y = 0.0, m2x = 0.0, m2y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* pt = samples_xy.data() + 2 * i;
      const double a1 = lw1 - sq_dist2(pt, res.means[0].data()) * inv2v;
      const double a2 = lw2 - sq_dist2(pt, res.means[1].data()) * inv2v;
      const double r = sigmoid(a1 - a2);
      max_change = std::max(max_change, std::abs(r - r1[i]));
      r1[i] = r;
      s1 += r;
      s2 += 1.0 - r;
      m1x += r * pt[0];
      m1y += r * pt[1];
      m2x += (1.0 - r) * pt[0];
      m2y += (1.0 - r) * pt[1];
    }
    if (s1 < 1e-6 || s2 < 1e-6) {
      throw DegenerateClusterError("a cluster's total responsibility collapsed below 1e-6");
    }
    res.means[0] = {m1x / s1, m1y / s1};
    res.means[1] = {m2x / s2, m2y / s2};
    res.weights = {s1 / static_cast<double>(n), s2 / static_cast<double>(n)};
    res.iterations = iter + 1;
    if (max_change < 1e-8) {
      res.converged = true;
      break;
    }
  }
  return res;
}

OscillationReport oscillation_metrics(const CenterTrajectory& traj,
                                      std::size_t window_start_index,
                                      double settle_radius) {
  const std::size_t steps = traj.recorded_steps.size();
  if (steps == 0 || traj.c1.size() != 2 * steps || traj.c2.size() != 2 * steps) {
    throw std::invalid_argument("trajectory arrays disagree on recorded length");
  }
  if (window_start_index >= steps) {
    throw std::invalid_argument("analysis window starts past the end of the trajectory");
  }
  OscillationReport rep;
  const std::vector<double>* tracks[2] = {&traj.c1, &traj.c2};
  for (int c = 0; c < 2; ++c) {
    const std::vector<double>& pts = *tracks[c];
    const double* fin = pts.data() + 2 * (steps - 1);
    double d_sum = 0.0;
    double d_max = 0.0;
    for (std::size_t i = window_start_index; i < steps; ++i) {
      const double dist = std::sqrt(sq_dist2(pts.data() + 2 * i, fin));
      d_sum += dist;
      d_max = std::max(d_max, dist);
    }
    // Settling index: walk backward while the center stays strictly inside
    // the radius; the streak's first index is the earliest time from which
    // the center never leaves again.
    long settle = -1;
    for (std::size_t i = steps; i-- > window_start_index;) {
      if (std::sqrt(sq_dist2(pts.data() + 2 * i, fin)) < settle_radius) {
        settle = static_cast<long>(i);
      } else {
        break;
      }
    }
    rep.d_sum[c] = d_sum;
    rep.d_max[c] = d_max;
    rep.settling_index[c] = settle;
  }
  return rep;
}

BiasReport bias_metrics(std::span<const double> samples_xy,
                        const GaussianMixture& truth) {
  const auto& comps = truth.components();
  if (comps.size() != 2 || truth.dim() != 2) {
    throw std::invalid_argument("bias metrics expect a two-component 2-D truth");
  }
  // Cluster 1 is the dominant component (ties keep declaration order).
  const std::size_t dom = comps[0].weight >= comps[1].weight ? 0 : 1;
  const std::size_t other = 1 - dom;
  const std::array<std::array<double, 2>, 2> init = {
      std::array<double, 2>{comps[dom].mean[0], comps[dom].mean[1]},
      std::array<double, 2>{comps[other].mean[0], comps[other].mean[1]}};
  const FitResult fit = fit_centers(samples_xy, init, truth.base_variance());
  BiasReport rep;
  rep.d1 = std::sqrt(sq_dist2(fit.means[0].data(), init[0].data()));
  rep.d2 = std::sqrt(sq_dist2(fit.means[1].data(), init[1].data()));
  return rep;
}

ReboundReport detect_rebound(std::span<const double> kl_curve, double floor) {
  if (kl_curve.empty()) throw std::invalid_argument("empty KL curve");
  ReboundReport rep;
  rep.min_kl = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kl_curve.size(); ++i) {
    if (kl_curve[i] < rep.min_kl) {
      rep.min_kl = kl_curve[i];
      rep.min_index = i;
    }
  }
  rep.terminal_kl = kl_curve.back();
  rep.flagged = (rep.terminal_kl - rep.min_kl) > floor;
  return rep;
}

}  // namespace pidld

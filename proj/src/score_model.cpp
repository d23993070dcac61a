#include "pidld/score_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pidld {

namespace {

void check_dim(std::span<const double> x, std::span<double> out, int d) {
  if (static_cast<int>(x.size()) != d || static_cast<int>(out.size()) != d) {
    throw std::invalid_argument("score query dimension mismatch: expected " +
                                std::to_string(d));
  }
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<Component> components,
                                 double base_variance)
    : components_(std::move(components)), base_variance_(base_variance) {
  if (components_.empty()) {
    throw std::invalid_argument("mixture needs at least one component");
  }
  if (!(base_variance_ > 0.0)) {
    throw std::invalid_argument("base_variance must be positive");
  }
  dim_ = static_cast<int>(components_.front().mean.size());
  if (dim_ < 1) throw std::invalid_argument("component means need dimension >= 1");
  double wsum = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0)) {
      throw std::invalid_argument("mixture weights must be strictly positive");
    }
    if (static_cast<int>(c.mean.size()) != dim_) {
      throw std::invalid_argument("mixture component means disagree on dimension");
    }
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12) {
    throw std::invalid_argument("mixture weights must sum to 1 (got " +
                                std::to_string(wsum) + ")");
  }
}

void GaussianMixture::score(std::span<const double> x, double sigma,
                            std::span<double> out) const {
  check_dim(x, out, dim_);
  const double v = base_variance_ + sigma * sigma;
  // Posterior responsibilities in log space; the shared normalisation
  // constant of the component densities cancels.
  double max_a = -std::numeric_limits<double>::infinity();
  // Small fixed-capacity scratch would be nicer, but mixtures are tiny and
  // score() must stay allocation-free on the hot path: recompute instead.
  const std::size_t k = components_.size();
  double denom = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& c = components_[i];
    double sq = 0.0;
    for (int j = 0; j < dim_; ++j) {
      const double dxy = x[j] - c.mean[j];
      sq += dxy * dxy;
    }
    const double a = std::log(c.weight) - sq / (2.0 * v);
    if (a > max_a) max_a = a;
  }
  for (int j = 0; j < dim_; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& c = components_[i];
    double sq = 0.0;
    for (int j = 0; j < dim_; ++j) {
      const double dxy = x[j] - c.mean[j];
      sq += dxy * dxy;
    }
    const double r = std::exp(std::log(c.weight) - sq / (2.0 * v) - max_a);
    denom += r;
    for (int j = 0; j < dim_; ++j) out[j] += r * (c.mean[j] - x[j]);
  }
  const double scale = 1.0 / (denom * v);
  for (int j = 0; j < dim_; ++j) out[j] *= scale;
}

double GaussianMixture::log_density(std::span<const double> x,
                                    double sigma) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw std::invalid_argument("density query dimension mismatch");
  }
  const double v = base_variance_ + sigma * sigma;
  const double log_norm =
      -0.5 * dim_ * std::log(2.0 * std::numbers::pi * v);
  double max_a = -std::numeric_limits<double>::infinity();
  std::vector<double> a(components_.size());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    double sq = 0.0;
    for (int j = 0; j < dim_; ++j) {
      const double dxy = x[j] - c.mean[j];
      sq += dxy * dxy;
    }
    a[i] = std::log(c.weight) - sq / (2.0 * v);
    max_a = std::max(max_a, a[i]);
  }
  double s = 0.0;
  for (double ai : a) s += std::exp(ai - max_a);
  return log_norm + max_a + std::log(s);
}

double GaussianMixture::density(std::span<const double> x, double sigma) const {
  return std::exp(log_density(x, sigma));
}

void GaussianMixture::sample(int n, RngStream& rng,
                             std::vector<double>& out) const {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  const double sd = std::sqrt(base_variance_);
  out.reserve(out.size() + static_cast<std::size_t>(n) * dim_);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    double acc = 0.0;
    const Component* chosen = &components_.back();
    for (const auto& c : components_) {
      acc += c.weight;
      if (u < acc) {
        chosen = &c;
        break;
      }
    }
    for (int j = 0; j < dim_; j += 2) {
      double z0, z1;
      rng.normal_pair(z0, z1);
      out.push_back(chosen->mean[j] + sd * z0);
      if (j + 1 < dim_) out.push_back(chosen->mean[j + 1] + sd * z1);
    }
  }
}

QuadraticPotential::QuadraticPotential(double m, std::vector<double> minimizer)
    : m_(m), minimizer_(std::move(minimizer)) {
  if (!(m_ > 0.0)) throw std::invalid_argument("strong-convexity constant m must be positive");
  if (minimizer_.empty()) throw std::invalid_argument("minimizer needs dimension >= 1");
}

void QuadraticPotential::score(std::span<const double> x, double /*sigma*/,
                               std::span<double> out) const {
  check_dim(x, out, dim());
  for (std::size_t j = 0; j < minimizer_.size(); ++j) {
    out[j] = -m_ * (x[j] - minimizer_[j]);
  }
}

BiasedScore::BiasedScore(std::shared_ptr<const ScoreModel> inner,
                         std::vector<double> direction, double scale_fraction)
    : inner_(std::move(inner)),
      direction_(std::move(direction)),
      scale_fraction_(scale_fraction) {
  if (!inner_) throw std::invalid_argument("biased score needs an inner model");
  if (static_cast<int>(direction_.size()) != inner_->dim()) {
    throw std::invalid_argument("bias direction dimension mismatch");
  }
  if (scale_fraction_ < 0.0) {
    throw std::invalid_argument("scale_fraction must be nonnegative");
  }
  double sq = 0.0;
  for (double dj : direction_) sq += dj * dj;
  if (std::abs(std::sqrt(sq) - 1.0) > 1e-12) {
    throw std::invalid_argument("bias direction must have unit norm");
  }
}

void BiasedScore::score(std::span<const double> x, double sigma,
                        std::span<double> out) const {
  inner_->score(x, sigma, out);
  if (scale_fraction_ == 0.0) return;
  double sq = 0.0;
  for (double sj : out) sq += sj * sj;
  const double mag = scale_fraction_ * std::sqrt(sq);
  for (std::size_t j = 0; j < direction_.size(); ++j) {
    out[j] += direction_[j] * mag;
  }
}

}  // namespace pidld

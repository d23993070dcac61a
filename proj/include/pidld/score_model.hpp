#pragma once

#include <memory>
#include <span>
#include <vector>

#include "pidld/rng.hpp"

namespace pidld {

// A differentiable target, exposed through its noise-smoothed score
// s(x, sigma) = grad_x log p_sigma(x). Implementations are immutable after
// construction and safe to evaluate concurrently from any number of workers.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual int dim() const = 0;

  // Writes the score of the sigma-smoothed density at x into out.
  // Requires x.size() == out.size() == dim(); sigma >= 0 (0 = no smoothing).
  virtual void score(std::span<const double> x, double sigma,
                     std::span<double> out) const = 0;
};

// Mixture of isotropic Gaussians sharing one base variance. Smoothing with
// N(0, sigma^2 I) noise is exact for this family: each component variance
// becomes base_variance + sigma^2.
class GaussianMixture final : public ScoreModel {
 public:
  struct Component {
    double weight;
    std::vector<double> mean;
  };

  // Throws std::invalid_argument unless weights are strictly positive and sum
  // to 1 within 1e-12, all means share one dimension >= 1, base_variance > 0.
  GaussianMixture(std::vector<Component> components, double base_variance);

  int dim() const override { return dim_; }
  void score(std::span<const double> x, double sigma,
             std::span<double> out) const override;

  // log sum_k w_k N(x; mu_k, (base_variance + sigma^2) I), via log-sum-exp.
  double log_density(std::span<const double> x, double sigma) const;
  double density(std::span<const double> x, double sigma) const;

  // Appends n i.i.d. draws (n * dim doubles) to out: categorical component
  // choice, then a Gaussian around its mean with the base variance.
  void sample(int n, RngStream& rng, std::vector<double>& out) const;

  const std::vector<Component>& components() const { return components_; }
  double base_variance() const { return base_variance_; }

 private:
  std::vector<Component> components_;
  double base_variance_;
  int dim_;
};

// Score with minimizer-centred linear pull -m (x - minimizer). Gaussian
// smoothing leaves a linear score linear; any variance rescaling is treated
// as absorbed into m, so sigma is ignored.
class QuadraticPotential final : public ScoreModel {
 public:
  // Throws std::invalid_argument unless m > 0 and minimizer is nonempty.
  QuadraticPotential(double m, std::vector<double> minimizer);

  int dim() const override { return static_cast<int>(minimizer_.size()); }
  void score(std::span<const double> x, double sigma,
             std::span<double> out) const override;

  double m() const { return m_; }
  const std::vector<double>& minimizer() const { return minimizer_; }

 private:
  double m_;
  std::vector<double> minimizer_;
};

// Deterministic corruption of an inner score: adds a fixed-direction push
// whose magnitude is a fraction of each sample's own score norm,
//   out(x) = s(x) + direction * (scale_fraction * ||s(x)||_2).
// With scale_fraction = 0 the output equals the inner score bit-for-bit.
class BiasedScore final : public ScoreModel {
 public:
  // Throws std::invalid_argument unless direction has unit norm within 1e-12
  // and matches inner->dim(), and scale_fraction >= 0.
  BiasedScore(std::shared_ptr<const ScoreModel> inner,
              std::vector<double> direction, double scale_fraction);

  int dim() const override { return inner_->dim(); }
  void score(std::span<const double> x, double sigma,
             std::span<double> out) const override;

  double scale_fraction() const { return scale_fraction_; }
  const std::vector<double>& direction() const { return direction_; }

 private:
  std::shared_ptr<const ScoreModel> inner_;
  std::vector<double> direction_;
  double scale_fraction_;
};

}  // namespace pidld

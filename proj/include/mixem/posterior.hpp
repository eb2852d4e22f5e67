#pragma once

#include "mixem/error.hpp"
#include "mixem/forward_model.hpp"
#include "mixem/prior.hpp"
#include "mixem/rng.hpp"
#include "mixem/sampler.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace mixem {

/// Posterior mass reaches the edge of the grid; the range must be widened.
class GridBoundaryError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

/// Uniform grid along one latent coordinate.
struct GridAxis {
  double lo = -8.0;
  double hi = 8.0;
  Eigen::Index resolution = 2001;

  double spacing() const { return (hi - lo) / static_cast<double>(resolution - 1); }
};

/// Default grid layout: each axis spans the prior mean ± `half_width` prior
/// standard deviations. Dense 2-D grids use `resolution_2d` nodes per axis.
struct GridSpec {
  Eigen::Index resolution = 2001;
  Eigen::Index resolution_2d = 201;
  double half_width = 8.0;
  /// Largest tolerated posterior weight on the outermost grid nodes.
  double boundary_weight = 1e-9;
  /// Number of times the range is doubled before giving up.
  int max_widenings = 3;

  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

/// Normalized weights over a dense grid on a subset of latent coordinates.
struct GridBlock {
  std::vector<Eigen::Index> coords;  ///< latent coordinates covered (one or two)
  std::vector<GridAxis> axes;        ///< one axis per covered coordinate
  Eigen::MatrixXd nodes;             ///< coords.size() x G; first axis varies fastest
  Eigen::VectorXd weights;           ///< G entries, non-negative, summing to one
  double log_normalizer = 0.0;       ///< log of the Riemann sum of the unnormalized density

  double boundary_weight() const;
};

/// Quadrature approximation of p_{X | Y_θ = y}. Either one dense block over
/// all coordinates (m <= 2), or one 1-D block per coordinate when the forward
/// model is separable and the prior factorizes.
class GridPosterior {
 public:
  GridPosterior(std::vector<GridBlock> blocks, Eigen::Index dim);

  Eigen::Index dim() const { return dim_; }
  const std::vector<GridBlock>& blocks() const { return blocks_; }
  bool factorized() const { return blocks_.size() > 1 || blocks_[0].coords.size() < static_cast<std::size_t>(dim_); }

  /// log p_{Y_θ}(y) by quadrature.
  double log_marginal_likelihood() const;
  Eigen::VectorXd mean() const;
  /// Block-diagonal for factorized posteriors.
  Eigen::MatrixXd covariance() const;
  /// Sum over nodes of w_j g(x_j). Requires a single dense block. Throws
  /// ContractViolation if g is non-finite at any node.
  Eigen::VectorXd expectation(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g) const;
  /// i.i.d. draws as rows (count x m).
  Eigen::MatrixXd resample(long count, Rng& rng) const;
  /// Excess kurtosis of the marginal of coordinate `coord`.
  double excess_kurtosis(Eigen::Index coord) const;
  /// Marginal CDF of coordinate `coord` at the block's nodes (1-D blocks only).
  Eigen::VectorXd marginal_cdf(Eigen::Index coord) const;
  const GridBlock& block_for(Eigen::Index coord) const;

 private:
  std::vector<GridBlock> blocks_;
  Eigen::Index dim_;
};

/// True when posteriors can be built one coordinate at a time.
bool grid_factorizes(const ForwardModel& forward, const Prior& prior);

/// Default axes for `prior` under `spec` (one axis per latent coordinate).
std::vector<GridAxis> default_axes(const Prior& prior, const GridSpec& spec, int widening = 0);

/// Grid posterior on explicit axes. Throws ContractViolation when the
/// boundary weight exceeds `boundary_weight` (the range must be widened) or
/// when the model is neither low-dimensional nor factorizing.
GridPosterior grid_posterior(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                             const Eigen::VectorXd& y, const std::vector<GridAxis>& axes,
                             double boundary_weight = 1e-9, std::size_t threads = 1);

/// Grid posterior on the default axes, doubling the range on boundary failure.
GridPosterior grid_posterior(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                             const Eigen::VectorXd& y, const GridSpec& spec = {},
                             std::size_t threads = 1);

/// Normalizes log-weights in place to probabilities; returns log Σ exp(lw).
double normalize_log_weights(Eigen::Ref<Eigen::VectorXd> lw);

/// Closed-form Gaussian posterior of a linear model with b² = 0.
class ConjugateGaussianPosterior {
 public:
  ConjugateGaussianPosterior(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  Eigen::Index dim() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  Eigen::MatrixXd sample(long count, Rng& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_lower_;
};

/// Σ_post = (AᵀA/a² + Σ₀⁻¹)⁻¹, mean = Σ_post (Aᵀy/a² + Σ₀⁻¹μ₀).
/// Throws ContractViolation for a singular prior covariance.
ConjugateGaussianPosterior exact_linear_gaussian_posterior(const Eigen::MatrixXd& a,
                                                           const Eigen::VectorXd& prior_mean,
                                                           const Eigen::MatrixXd& prior_cov,
                                                           double a2, const Eigen::VectorXd& y);

/// Same, reading A from the forward model and the moments from a Gaussian prior.
/// Requires a linear forward, a GaussianPrior and b² = 0.
ConjugateGaussianPosterior exact_linear_gaussian_posterior(const Theta& theta,
                                                           const ForwardModel& forward,
                                                           const Prior& prior,
                                                           const Eigen::VectorXd& y);

/// Random-walk Metropolis settings. The proposal standard deviation of
/// coordinate i is `proposal_scale` times the prior standard deviation of x_i.
struct MetropolisConfig {
  double proposal_scale = 0.5;
  long burn_in = 2000;
  long thin = 5;

  void validate() const;
  bool operator==(const MetropolisConfig&) const = default;
};

struct MetropolisStats {
  double burn_in_acceptance = 0.0;
  double acceptance = 0.0;
};

/// Random-walk Metropolis targeting joint_log_density(θ, ·, y), started at the
/// prior mean. Throws NumericFailure if no proposal is accepted during burn-in.
Eigen::MatrixXd metropolis_sample(const Theta& theta, const ForwardModel& forward,
                                  const Prior& prior, const Eigen::VectorXd& y, long count,
                                  Rng& rng, const MetropolisConfig& config = {},
                                  MetropolisStats* stats = nullptr);

/// Grid posterior resampling at a fixed θ.
class GridSampler final : public PosteriorSampler {
 public:
  GridSampler(Theta theta, ForwardPtr forward, PriorPtr prior, GridSpec spec = {});
  Eigen::Index latent_dim() const override { return prior_->dim(); }
  std::string name() const override { return "grid"; }
  Eigen::MatrixXd sample(const Eigen::VectorXd& y, long count, Rng& rng) const override;

 private:
  Theta theta_;
  ForwardPtr forward_;
  PriorPtr prior_;
  GridSpec spec_;
};

/// Exact conjugate draws at a fixed θ with b² = 0.
class ConjugateSampler final : public PosteriorSampler {
 public:
  ConjugateSampler(Theta theta, ForwardPtr forward, PriorPtr prior);
  Eigen::Index latent_dim() const override { return prior_->dim(); }
  std::string name() const override { return "conjugate"; }
  Eigen::MatrixXd sample(const Eigen::VectorXd& y, long count, Rng& rng) const override;

 private:
  Theta theta_;
  ForwardPtr forward_;
  PriorPtr prior_;
};

/// One Metropolis chain per call at a fixed θ.
class MetropolisSampler final : public PosteriorSampler {
 public:
  MetropolisSampler(Theta theta, ForwardPtr forward, PriorPtr prior, MetropolisConfig config = {});
  Eigen::Index latent_dim() const override { return prior_->dim(); }
  std::string name() const override { return "metropolis"; }
  Eigen::MatrixXd sample(const Eigen::VectorXd& y, long count, Rng& rng) const override;
  const MetropolisConfig& config() const { return config_; }

 private:
  Theta theta_;
  ForwardPtr forward_;
  PriorPtr prior_;
  MetropolisConfig config_;
};

}  // namespace mixem

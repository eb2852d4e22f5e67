#pragma once

#include "mixem/rng.hpp"

#include <Eigen/Dense>

#include <memory>

namespace mixem {

/// Prior density p_X on the latent space.
class Prior {
 public:
  virtual ~Prior() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd sample(Rng& rng) const = 0;

  /// True when p_X(x) = prod_i p_i(x_i).
  virtual bool factorizes() const = 0;
  /// log p_i(x_i); only meaningful when factorizes().
  virtual double component_log_density(Eigen::Index i, double xi) const = 0;
  /// Maps a uniform u in (0,1) to the i-th marginal quantile (factorizing priors).
  virtual double component_quantile(Eigen::Index i, double u) const = 0;

  virtual Eigen::VectorXd mean() const = 0;
  /// Marginal standard deviations.
  virtual Eigen::VectorXd stddev() const = 0;
};

using PriorPtr = std::shared_ptr<const Prior>;

/// Multivariate normal prior N(mean, covariance).
class GaussianPrior final : public Prior {
 public:
  GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  static std::shared_ptr<GaussianPrior> standard(Eigen::Index m);
  static std::shared_ptr<GaussianPrior> diagonal(Eigen::VectorXd mean, Eigen::VectorXd stddev);

  Eigen::Index dim() const override { return mean_.size(); }
  double log_density(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd sample(Rng& rng) const override;
  bool factorizes() const override { return diagonal_; }
  double component_log_density(Eigen::Index i, double xi) const override;
  double component_quantile(Eigen::Index i, double u) const override;
  Eigen::VectorXd mean() const override { return mean_; }
  Eigen::VectorXd stddev() const override;

  const Eigen::MatrixXd& covariance() const { return covariance_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_lower_;
  double log_det_ = 0.0;
  bool diagonal_ = false;
};

}  // namespace mixem

#pragma once

#include "mixem/rng.hpp"

#include <Eigen/Dense>

#include <string>

namespace mixem {

/// Source of draws from P_{X | Y = y} at a fixed noise parameter.
class PosteriorSampler {
 public:
  virtual ~PosteriorSampler() = default;

  virtual Eigen::Index latent_dim() const = 0;
  virtual std::string name() const = 0;
  /// Returns `count` draws as rows (count x m).
  virtual Eigen::MatrixXd sample(const Eigen::VectorXd& y, long count, Rng& rng) const = 0;
};

}  // namespace mixem

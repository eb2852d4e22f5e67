#pragma once

#include "mixem/forward_model.hpp"
#include "mixem/posterior.hpp"
#include "mixem/prior.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

#include <string>

namespace mixem {

/// Fisher information I(θ) = ½ [[A, B], [B, C]] with
///   A = Σ_i E[1/σ_i²],  B = Σ_i E[f_i²/σ_i²],  C = Σ_i E[f_i⁴/σ_i²],
/// expectations over the prior.
struct FisherInfo {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  Eigen::Matrix2d matrix = Eigen::Matrix2d::Zero();
  Eigen::Vector2d eigenvalues = Eigen::Vector2d::Zero();  ///< ascending
  /// Leading principal minors A and AC - B² are positive (relative to scale).
  bool positive_definite = false;
  std::string quadrature;  ///< description of the rule
  long nodes = 0;

  double determinant_minor() const { return a * c - b * b; }
};

/// Prior expectations on the grid described by `spec` (dense for m <= 2,
/// per coordinate for separable models under a factorizing prior). Throws
/// GridBoundaryError when the prior puts weight on the outermost nodes.
FisherInfo fisher_information(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                              const GridSpec& spec = {});

}  // namespace mixem

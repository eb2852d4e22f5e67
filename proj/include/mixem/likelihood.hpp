#pragma once

#include "mixem/forward_model.hpp"
#include "mixem/prior.hpp"
#include "mixem/rng.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

namespace mixem {

/// Per-component variance sigma_i = a² + b² f_i².
Eigen::VectorXd sigma(const Theta& theta, const Eigen::VectorXd& fx);

/// Gaussian log-likelihood log N(y | F(x), diag(sigma)), including the 2π term.
double log_likelihood(const Theta& theta, const Eigen::VectorXd& fx, const Eigen::VectorXd& y);

/// (d/da², d/db²) of log_likelihood.
Eigen::Vector2d grad_theta_log_likelihood(const Theta& theta, const Eigen::VectorXd& fx,
                                          const Eigen::VectorXd& y);

Eigen::Matrix2d hessian_theta_log_likelihood(const Theta& theta, const Eigen::VectorXd& fx,
                                             const Eigen::VectorXd& y);

/// log p_{X,Y_θ}(x, y) = log p(y | x, θ) + log p_X(x).
double joint_log_density(const Theta& theta, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const ForwardModel& forward, const Prior& prior);

/// y_i = f_i(x) + sqrt(sigma_i(x)) ξ_i with ξ drawn from `rng`.
Eigen::VectorXd sample_observation(const Theta& theta, const Eigen::VectorXd& x,
                                   const ForwardModel& forward, Rng& rng);

/// Scalar building blocks shared by the aggregated Q-function code. For one
/// component with f² = `f2` and squared residual `r2`:
///   g  = 1/σ - r²/σ²          (gradient kernel)
///   h  = 1/σ² - 2 r²/σ³       (Hessian kernel)
namespace kernel {
inline double log_term(double sig, double r2) { return std::log(sig) + r2 / sig; }
inline double grad_term(double sig, double r2) { return 1.0 / sig - r2 / (sig * sig); }
inline double hess_term(double sig, double r2) {
  return 1.0 / (sig * sig) - 2.0 * r2 / (sig * sig * sig);
}
}  // namespace kernel

}  // namespace mixem

#include "mixem/likelihood.hpp"

#include "mixem/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mixem {
namespace {

void check_dims(const Eigen::VectorXd& fx, const Eigen::VectorXd& y) {
  if (fx.size() != y.size()) {
    throw ContractViolation("likelihood: F(x) has dimension " + std::to_string(fx.size()) +
                            " but y has dimension " + std::to_string(y.size()));
  }
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

Eigen::VectorXd sigma(const Theta& theta, const Eigen::VectorXd& fx) {
  require(fx.allFinite(), "sigma: F(x) must be finite");
  return (theta.a2() + theta.b2() * fx.array().square()).matrix();
}

double log_likelihood(const Theta& theta, const Eigen::VectorXd& fx, const Eigen::VectorXd& y) {
  check_dims(fx, y);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < fx.size(); ++i) {
    const double s = theta.a2() + theta.b2() * fx[i] * fx[i];
    const double r = y[i] - fx[i];
    acc += kLog2Pi + kernel::log_term(s, r * r);
  }
  return -0.5 * acc;
}

Eigen::Vector2d grad_theta_log_likelihood(const Theta& theta, const Eigen::VectorXd& fx,
                                          const Eigen::VectorXd& y) {
  check_dims(fx, y);
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < fx.size(); ++i) {
    const double f2 = fx[i] * fx[i];
    const double s = theta.a2() + theta.b2() * f2;
    const double r = y[i] - fx[i];
    const double k = kernel::grad_term(s, r * r);
    g[0] += k;
    g[1] += f2 * k;
  }
  return -0.5 * g;
}

Eigen::Matrix2d hessian_theta_log_likelihood(const Theta& theta, const Eigen::VectorXd& fx,
                                             const Eigen::VectorXd& y) {
  check_dims(fx, y);
  double haa = 0.0, hab = 0.0, hbb = 0.0;
  for (Eigen::Index i = 0; i < fx.size(); ++i) {
    const double f2 = fx[i] * fx[i];
    const double s = theta.a2() + theta.b2() * f2;
    const double r = y[i] - fx[i];
    const double k = kernel::hess_term(s, r * r);
    haa += k;
    hab += f2 * k;
    hbb += f2 * f2 * k;
  }
  Eigen::Matrix2d h;
  h << haa, hab, hab, hbb;
  return 0.5 * h;
}

double joint_log_density(const Theta& theta, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const ForwardModel& forward, const Prior& prior) {
  require(x.size() == forward.input_dim() && x.size() == prior.dim(),
          "joint_log_density: latent dimension mismatch");
  require(y.size() == forward.output_dim(), "joint_log_density: observation dimension mismatch");
  return log_likelihood(theta, forward.evaluate(x), y) + prior.log_density(x);
}

Eigen::VectorXd sample_observation(const Theta& theta, const Eigen::VectorXd& x,
                                   const ForwardModel& forward, Rng& rng) {
  const Eigen::VectorXd fx = forward.evaluate(x);
  const Eigen::VectorXd s = sigma(theta, fx);
  Eigen::VectorXd y(fx.size());
  for (Eigen::Index i = 0; i < fx.size(); ++i) y[i] = fx[i] + std::sqrt(s[i]) * rng.normal();
  return y;
}

}  // namespace mixem

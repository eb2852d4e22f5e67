#include "mixem/prior.hpp"

#include "mixem/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>

namespace mixem {

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  require(mean_.size() >= 1, "GaussianPrior: empty mean");
  require(covariance_.rows() == mean_.size() && covariance_.cols() == mean_.size(),
          "GaussianPrior: covariance shape mismatch");
  require(mean_.allFinite() && covariance_.allFinite(), "GaussianPrior: non-finite parameters");
  require((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() <=
              1e-12 * std::max(1.0, covariance_.cwiseAbs().maxCoeff()),
          "GaussianPrior: covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("GaussianPrior: covariance must be positive definite");
  }
  chol_lower_ = llt.matrixL();
  log_det_ = 2.0 * chol_lower_.diagonal().array().log().sum();
  const Eigen::MatrixXd off = covariance_ - Eigen::MatrixXd(covariance_.diagonal().asDiagonal());
  diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
}

std::shared_ptr<GaussianPrior> GaussianPrior::standard(Eigen::Index m) {
  return std::make_shared<GaussianPrior>(Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Identity(m, m));
}

std::shared_ptr<GaussianPrior> GaussianPrior::diagonal(Eigen::VectorXd mean,
                                                       Eigen::VectorXd stddev) {
  require(mean.size() == stddev.size(), "GaussianPrior::diagonal: size mismatch");
  require((stddev.array() > 0.0).all(), "GaussianPrior::diagonal: stddev must be positive");
  Eigen::MatrixXd cov = stddev.array().square().matrix().asDiagonal();
  return std::make_shared<GaussianPrior>(std::move(mean), std::move(cov));
}

double GaussianPrior::log_density(const Eigen::VectorXd& x) const {
  require(x.size() == dim(), "GaussianPrior: dimension mismatch");
  const Eigen::VectorXd z = chol_lower_.triangularView<Eigen::Lower>().solve(x - mean_);
  return -0.5 * (static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) + log_det_ +
                 z.squaredNorm());
}

Eigen::VectorXd GaussianPrior::sample(Rng& rng) const {
  return mean_ + chol_lower_ * rng.normal_vector(dim());
}

double GaussianPrior::component_log_density(Eigen::Index i, double xi) const {
  require(diagonal_, "GaussianPrior: component density requires a diagonal covariance");
  const double var = covariance_(i, i);
  const double d = xi - mean_[i];
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double GaussianPrior::component_quantile(Eigen::Index i, double u) const {
  require(u > 0.0 && u < 1.0, "GaussianPrior: quantile level must lie in (0,1)");
  return mean_[i] + std::sqrt(covariance_(i, i)) * std::numbers::sqrt2 *
                        boost::math::erf_inv(2.0 * u - 1.0);
}

Eigen::VectorXd GaussianPrior::stddev() const { return covariance_.diagonal().cwiseSqrt(); }

}  // namespace mixem

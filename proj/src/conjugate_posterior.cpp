#include "mixem/error.hpp"
#include "mixem/posterior.hpp"

#include <cmath>

namespace mixem {

ConjugateGaussianPosterior::ConjugateGaussianPosterior(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  require(covariance_.rows() == mean_.size() && covariance_.cols() == mean_.size(),
          "ConjugateGaussianPosterior: covariance shape does not match the mean");
  require(covariance_.isApprox(covariance_.transpose(), 1e-10),
          "ConjugateGaussianPosterior: covariance must be symmetric");
  covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  require(llt.info() == Eigen::Success, "ConjugateGaussianPosterior: covariance must be positive definite");
  chol_lower_ = llt.matrixL();
}

Eigen::MatrixXd ConjugateGaussianPosterior::sample(long count, Rng& rng) const {
  require(count >= 1, "ConjugateGaussianPosterior::sample: count must be at least 1");
  Eigen::MatrixXd out(count, mean_.size());
  for (long s = 0; s < count; ++s) {
    out.row(s) = (mean_ + chol_lower_ * rng.normal_vector(mean_.size())).transpose();
  }
  return out;
}

ConjugateGaussianPosterior exact_linear_gaussian_posterior(const Eigen::MatrixXd& a,
                                                           const Eigen::VectorXd& prior_mean,
                                                           const Eigen::MatrixXd& prior_cov,
                                                           double a2, const Eigen::VectorXd& y) {
  const Eigen::Index m = prior_mean.size();
  require(a.cols() == m && a.rows() == y.size(), "exact_linear_gaussian_posterior: dimension mismatch");
  require(prior_cov.rows() == m && prior_cov.cols() == m,
          "exact_linear_gaussian_posterior: prior covariance shape mismatch");
  require(a2 > 0.0 && std::isfinite(a2), "exact_linear_gaussian_posterior: a2 must be positive");
  Eigen::LDLT<Eigen::MatrixXd> prior_ldlt(prior_cov);
  const Eigen::VectorXd d = prior_ldlt.vectorD();
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  if (prior_ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-14 * scale) {
    throw ContractViolation("exact_linear_gaussian_posterior: prior covariance is singular");
  }
  const Eigen::MatrixXd prior_prec = prior_ldlt.solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd post_prec = a.transpose() * a / a2 + prior_prec;
  Eigen::LLT<Eigen::MatrixXd> llt(post_prec);
  require(llt.info() == Eigen::Success, "exact_linear_gaussian_posterior: posterior precision not SPD");
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::VectorXd mean = cov * (a.transpose() * y / a2 + prior_prec * prior_mean);
  return ConjugateGaussianPosterior(mean, 0.5 * (cov + cov.transpose()));
}

ConjugateGaussianPosterior exact_linear_gaussian_posterior(const Theta& theta,
                                                           const ForwardModel& forward,
                                                           const Prior& prior,
                                                           const Eigen::VectorXd& y) {
  require(theta.b2() == 0.0, "conjugate posterior requires b2 = 0");
  const auto a = forward.linear_matrix();
  require(a.has_value(), "conjugate posterior requires a linear forward model");
  const auto* gaussian = dynamic_cast<const GaussianPrior*>(&prior);
  require(gaussian != nullptr, "conjugate posterior requires a Gaussian prior");
  return exact_linear_gaussian_posterior(*a, gaussian->mean(), gaussian->covariance(), theta.a2(), y);
}

ConjugateSampler::ConjugateSampler(Theta theta, ForwardPtr forward, PriorPtr prior)
    : theta_(theta), forward_(std::move(forward)), prior_(std::move(prior)) {
  require(forward_ && prior_, "ConjugateSampler: null model");
  require(theta_.b2() == 0.0, "conjugate backend requires b2 = 0");
  require(forward_->linear_matrix().has_value(), "conjugate backend requires a linear forward model");
  require(dynamic_cast<const GaussianPrior*>(prior_.get()) != nullptr,
          "conjugate backend requires a Gaussian prior");
}

Eigen::MatrixXd ConjugateSampler::sample(const Eigen::VectorXd& y, long count, Rng& rng) const {
  return exact_linear_gaussian_posterior(theta_, *forward_, *prior_, y).sample(count, rng);
}

}  // namespace mixem

#include "mixem/error.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/log.hpp"
#include "mixem/posterior.hpp"

#include <cmath>

namespace mixem {

void MetropolisConfig::validate() const {
  require(proposal_scale > 0.0 && std::isfinite(proposal_scale),
          "MetropolisConfig: proposal_scale must be positive");
  require(burn_in >= 0, "MetropolisConfig: burn_in must be non-negative");
  require(thin >= 1, "MetropolisConfig: thin must be at least 1");
}

Eigen::MatrixXd metropolis_sample(const Theta& theta, const ForwardModel& forward,
                                  const Prior& prior, const Eigen::VectorXd& y, long count,
                                  Rng& rng, const MetropolisConfig& config, MetropolisStats* stats) {
  require(count >= 1, "metropolis_sample: count must be at least 1");
  require(forward.input_dim() == prior.dim(), "metropolis_sample: forward and prior dimensions differ");
  require(y.size() == forward.output_dim(), "metropolis_sample: observation has the wrong length");
  config.validate();

  const Eigen::Index m = prior.dim();
  const Eigen::VectorXd step = config.proposal_scale * prior.stddev();
  Eigen::VectorXd x = prior.mean();
  double lp = joint_log_density(theta, x, y, forward, prior);
  require(std::isfinite(lp), "metropolis_sample: target is not finite at the prior mean");

  auto advance = [&]() {
    const Eigen::VectorXd proposal = x + step.cwiseProduct(rng.normal_vector(m));
    const double lq = joint_log_density(theta, proposal, y, forward, prior);
    const double u = rng.uniform_open();
    if (std::isfinite(lq) && std::log(u) < lq - lp) {
      x = proposal;
      lp = lq;
      return true;
    }
    return false;
  };

  long burn_accepted = 0;
  for (long s = 0; s < config.burn_in; ++s) burn_accepted += advance() ? 1 : 0;
  if (config.burn_in > 0 && burn_accepted == 0) {
    throw NumericFailure("metropolis_sample: no proposal accepted during burn-in; "
                         "use a smaller proposal scale");
  }

  Eigen::MatrixXd out(count, m);
  long accepted = 0;
  for (long s = 0; s < count; ++s) {
    for (long k = 0; k < config.thin; ++k) accepted += advance() ? 1 : 0;
    out.row(s) = x.transpose();
  }
  MetropolisStats result;
  result.burn_in_acceptance =
      config.burn_in > 0 ? static_cast<double>(burn_accepted) / static_cast<double>(config.burn_in) : 0.0;
  result.acceptance = static_cast<double>(accepted) / static_cast<double>(count * config.thin);
  log::info("metropolis acceptance " + std::to_string(result.acceptance) + " (burn-in " +
            std::to_string(result.burn_in_acceptance) + ")");
  if (stats != nullptr) *stats = result;
  return out;
}

MetropolisSampler::MetropolisSampler(Theta theta, ForwardPtr forward, PriorPtr prior,
                                     MetropolisConfig config)
    : theta_(theta), forward_(std::move(forward)), prior_(std::move(prior)), config_(config) {
  require(forward_ && prior_, "MetropolisSampler: null model");
  config_.validate();
}

Eigen::MatrixXd MetropolisSampler::sample(const Eigen::VectorXd& y, long count, Rng& rng) const {
  return metropolis_sample(theta_, *forward_, *prior_, y, count, rng, config_);
}

}  // namespace mixem

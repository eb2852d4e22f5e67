#pragma once

#include "mixem/forward_model.hpp"
#include "mixem/prior.hpp"
#include "mixem/rng.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

#include <string>

namespace mixem {

/// A finite set of observations standing in for the outer expectation over
/// y ~ p_{θ*}. Columns of `y` are observations; `weights` sum to one.
struct ObservationSet {
  Eigen::MatrixXd y;
  Eigen::VectorXd weights;
  /// Latent draws behind simulated observations (m x N); empty otherwise.
  Eigen::MatrixXd x;

  Eigen::Index size() const { return y.cols(); }
  Eigen::Index obs_dim() const { return y.rows(); }
  Eigen::VectorXd at(Eigen::Index k) const { return y.col(k); }

  /// Equal weights 1/N.
  static ObservationSet uniform(Eigen::MatrixXd y);
  void validate() const;
};

enum class ObservationDesign { simulated, stratified, quadrature };

std::string to_string(ObservationDesign d);
ObservationDesign observation_design_from_string(const std::string& name);

/// x_k ~ prior, y_k ~ sample_observation(θ, x_k), equal weights.
ObservationSet simulate_observations(const Theta& theta, const ForwardModel& forward,
                                     const Prior& prior, long count, Rng& rng);

/// Latin-hypercube version of simulate_observations: every latent coordinate
/// and every noise coordinate is drawn once from each of `count` equiprobable
/// strata, with strata matched across coordinates by independent random
/// permutations. Requires a factorizing prior.
ObservationSet stratified_observations(const Theta& theta, const ForwardModel& forward,
                                       const Prior& prior, long count, Rng& rng);

/// Tensor Gauss–Hermite rule over (x, noise) for a 1-D Gaussian prior and a
/// 1-D forward model; `nodes` per axis, nodes² weighted observations.
ObservationSet quadrature_observations(const Theta& theta, const ForwardModel& forward,
                                       const Prior& prior, int nodes);

ObservationSet make_observations(ObservationDesign design, const Theta& theta,
                                 const ForwardModel& forward, const Prior& prior, long count,
                                 Rng& rng, int quadrature_nodes = 64);

}  // namespace mixem

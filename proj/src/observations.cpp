#include "mixem/observations.hpp"

#include "mixem/error.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/model.hpp"
#include "mixem/quadrature.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace mixem {

void ModelBundle::validate() const {
  require(forward != nullptr && prior != nullptr, "model: forward and prior are required");
  require(forward->input_dim() == prior->dim(), "model: forward input and prior dimensions differ");
  box.validate();
  grid.validate();
}

ObservationSet ObservationSet::uniform(Eigen::MatrixXd y) {
  require(y.cols() >= 1, "ObservationSet: need at least one observation");
  ObservationSet set;
  const auto n = static_cast<double>(y.cols());
  set.weights = Eigen::VectorXd::Constant(y.cols(), 1.0 / n);
  set.y = std::move(y);
  return set;
}

void ObservationSet::validate() const {
  require(y.cols() >= 1, "ObservationSet: need at least one observation");
  require(weights.size() == y.cols(), "ObservationSet: one weight per observation required");
  require(y.allFinite(), "ObservationSet: observations must be finite");
  require((weights.array() >= 0.0).all(), "ObservationSet: weights must be non-negative");
  require(std::abs(weights.sum() - 1.0) <= 1e-12, "ObservationSet: weights must sum to one");
}

std::string to_string(ObservationDesign d) {
  switch (d) {
    case ObservationDesign::simulated: return "simulated";
    case ObservationDesign::stratified: return "stratified";
    case ObservationDesign::quadrature: return "quadrature";
  }
  return "simulated";
}

ObservationDesign observation_design_from_string(const std::string& name) {
  if (name == "simulated") return ObservationDesign::simulated;
  if (name == "stratified") return ObservationDesign::stratified;
  if (name == "quadrature") return ObservationDesign::quadrature;
  throw ContractViolation("unknown observation design '" + name + "'");
}

ObservationSet simulate_observations(const Theta& theta, const ForwardModel& forward,
                                     const Prior& prior, long count, Rng& rng) {
  require(count >= 1, "simulate_observations: count must be at least 1");
  require(forward.input_dim() == prior.dim(), "simulate_observations: dimension mismatch");
  Eigen::MatrixXd x(prior.dim(), count);
  Eigen::MatrixXd y(forward.output_dim(), count);
  for (long k = 0; k < count; ++k) {
    x.col(k) = prior.sample(rng);
    y.col(k) = sample_observation(theta, x.col(k), forward, rng);
  }
  ObservationSet set = ObservationSet::uniform(std::move(y));
  set.x = std::move(x);
  return set;
}

namespace {

std::vector<long> permutation(long count, Rng& rng) {
  std::vector<long> p(static_cast<std::size_t>(count));
  std::iota(p.begin(), p.end(), 0L);
  for (long i = count - 1; i > 0; --i) {
    const auto j = static_cast<long>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

Eigen::VectorXd stratified_uniforms(long count, Rng& rng) {
  const std::vector<long> p = permutation(count, rng);
  Eigen::VectorXd u(count);
  for (long k = 0; k < count; ++k) {
    u[k] = (static_cast<double>(p[static_cast<std::size_t>(k)]) + rng.uniform_open()) /
           static_cast<double>(count);
    u[k] = std::min(u[k], 1.0 - 1e-16);
  }
  return u;
}

}  // namespace

ObservationSet stratified_observations(const Theta& theta, const ForwardModel& forward,
                                       const Prior& prior, long count, Rng& rng) {
  require(count >= 1, "stratified_observations: count must be at least 1");
  require(prior.factorizes(), "stratified_observations: prior must factorize");
  require(forward.input_dim() == prior.dim(), "stratified_observations: dimension mismatch");
  const Eigen::Index m = prior.dim();
  const Eigen::Index n = forward.output_dim();
  Eigen::MatrixXd x(m, count);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd u = stratified_uniforms(count, rng);
    for (long k = 0; k < count; ++k) x(i, k) = prior.component_quantile(i, u[k]);
  }
  Eigen::MatrixXd xi(n, count);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd u = stratified_uniforms(count, rng);
    for (long k = 0; k < count; ++k) xi(i, k) = normal_quantile(u[k]);
  }
  Eigen::MatrixXd y(n, count);
  for (long k = 0; k < count; ++k) {
    const Eigen::VectorXd fx = forward.evaluate(x.col(k));
    y.col(k) = fx + sigma(theta, fx).cwiseSqrt().cwiseProduct(xi.col(k));
  }
  ObservationSet set = ObservationSet::uniform(std::move(y));
  set.x = std::move(x);
  return set;
}

ObservationSet quadrature_observations(const Theta& theta, const ForwardModel& forward,
                                       const Prior& prior, int nodes) {
  require(nodes >= 2, "quadrature_observations: need at least two nodes");
  require(prior.dim() == 1 && forward.output_dim() == 1,
          "quadrature_observations: only 1-D latent and observation spaces are supported");
  const auto* gaussian = dynamic_cast<const GaussianPrior*>(&prior);
  require(gaussian != nullptr, "quadrature_observations: prior must be Gaussian");
  const QuadratureRule rule = gauss_hermite(nodes);
  const double mu = gaussian->mean()[0];
  const double sd = gaussian->stddev()[0];
  const long total = static_cast<long>(nodes) * nodes;
  ObservationSet set;
  set.y.resize(1, total);
  set.x.resize(1, total);
  set.weights.resize(total);
  long k = 0;
  for (int a = 0; a < nodes; ++a) {
    Eigen::VectorXd x(1);
    x[0] = mu + sd * rule.nodes[a];
    const double fx = forward.evaluate(x)[0];
    const double s = std::sqrt(theta.a2() + theta.b2() * fx * fx);
    for (int b = 0; b < nodes; ++b, ++k) {
      set.x(0, k) = x[0];
      set.y(0, k) = fx + s * rule.nodes[b];
      set.weights[k] = rule.weights[a] * rule.weights[b];
    }
  }
  set.weights /= set.weights.sum();
  return set;
}

ObservationSet make_observations(ObservationDesign design, const Theta& theta,
                                 const ForwardModel& forward, const Prior& prior, long count,
                                 Rng& rng, int quadrature_nodes) {
  switch (design) {
    case ObservationDesign::simulated: return simulate_observations(theta, forward, prior, count, rng);
    case ObservationDesign::stratified: return stratified_observations(theta, forward, prior, count, rng);
    case ObservationDesign::quadrature: return quadrature_observations(theta, forward, prior, quadrature_nodes);
  }
  throw ContractViolation("make_observations: unknown design");
}

}  // namespace mixem

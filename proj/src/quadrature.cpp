#include "mixem/quadrature.hpp"

#include "mixem/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <vector>
#include <algorithm>
#include <numeric>

namespace mixem {

QuadratureRule gauss_hermite(int n) {
  require(n >= 1, "gauss_hermite: need at least one node");
  // Jacobi matrix of the monic probabilists' Hermite recurrence: off-diagonal sqrt(k).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  QuadratureRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = eig.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  // Symmetrize to remove eigen-solver round-off.
  for (int k = 0; k < n / 2; ++k) {
    const double x = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[n - 1 - k] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[n - 1 - k] = x;
    rule.weights[k] = rule.weights[n - 1 - k] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

Eigen::VectorXd uniform_nodes(double lo, double hi, Eigen::Index resolution) {
  require(resolution >= 2, "uniform_nodes: resolution must be at least 2");
  require(hi > lo, "uniform_nodes: empty range");
  Eigen::VectorXd nodes(resolution);
  const double step = (hi - lo) / static_cast<double>(resolution - 1);
  for (Eigen::Index j = 0; j < resolution; ++j) nodes[j] = lo + step * static_cast<double>(j);
  nodes[resolution - 1] = hi;
  return nodes;
}

double normal_quantile(double u) {
  require(u > 0.0 && u < 1.0, "normal_quantile: u must lie in (0, 1)");
  return std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0);
}

}  // namespace mixem

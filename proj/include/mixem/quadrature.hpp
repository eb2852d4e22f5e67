#pragma once

#include <Eigen/Dense>

namespace mixem {

/// Nodes and weights of a 1-D quadrature rule. Weights sum to one for rules
/// that integrate against a probability measure.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss–Hermite rule for E[g(Z)], Z ~ N(0, 1) (probabilists' weight), computed
/// by Golub–Welsch. Exact for polynomials of degree up to 2n-1.
QuadratureRule gauss_hermite(int n);

/// Standard normal quantile Φ⁻¹(u) for u in (0, 1).
double normal_quantile(double u);

/// `resolution` equally spaced nodes on [lo, hi] (inclusive).
Eigen::VectorXd uniform_nodes(double lo, double hi, Eigen::Index resolution);

}  // namespace mixem

#pragma once

#include <Eigen/Dense>

#include <string>

namespace mixem {

/// Box constraints on the noise variances: a2 in [a_min, a_max], b2 in [b_min, b_max].
struct ThetaBox {
  double a_min = 1e-3;
  double a_max = 1.0;
  double b_min = 1e-3;
  double b_max = 1.0;

  /// Throws ContractViolation unless 0 < a_min <= a_max and 0 <= b_min <= b_max.
  void validate() const;
  bool contains(double a2, double b2) const;
  bool contains(const Eigen::Vector2d& v) const { return contains(v[0], v[1]); }
  Eigen::Vector2d project(const Eigen::Vector2d& v) const;
  Eigen::Vector2d midpoint() const;
  bool operator==(const ThetaBox&) const = default;
};

/// Noise parameters (a², b²) of the mixed additive/multiplicative model.
/// Variances are stored directly, never their square roots.
class Theta {
 public:
  Theta(double a2, double b2);
  /// Checks the values against `box` as well as finiteness.
  Theta(double a2, double b2, const ThetaBox& box);
  static Theta from_vector(const Eigen::Vector2d& v) { return Theta(v[0], v[1]); }

  double a2() const { return a2_; }
  double b2() const { return b2_; }
  Eigen::Vector2d vector() const { return {a2_, b2_}; }

  bool operator==(const Theta&) const = default;

 private:
  double a2_;
  double b2_;
};

std::string to_string(const Theta& theta);

}  // namespace mixem

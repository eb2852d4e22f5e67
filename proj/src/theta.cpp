#include "mixem/theta.hpp"

#include "mixem/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mixem {

void ThetaBox::validate() const {
  require(std::isfinite(a_min) && std::isfinite(a_max) && std::isfinite(b_min) &&
              std::isfinite(b_max),
          "ThetaBox: bounds must be finite");
  require(a_min > 0.0 && a_min <= a_max, "ThetaBox: need 0 < a_min <= a_max");
  require(b_min >= 0.0 && b_min <= b_max, "ThetaBox: need 0 <= b_min <= b_max");
}

bool ThetaBox::contains(double a2, double b2) const {
  return a2 >= a_min && a2 <= a_max && b2 >= b_min && b2 <= b_max;
}

Eigen::Vector2d ThetaBox::project(const Eigen::Vector2d& v) const {
  return {std::clamp(v[0], a_min, a_max), std::clamp(v[1], b_min, b_max)};
}

Eigen::Vector2d ThetaBox::midpoint() const {
  return {0.5 * (a_min + a_max), 0.5 * (b_min + b_max)};
}

Theta::Theta(double a2, double b2) : a2_(a2), b2_(b2) {
  require(std::isfinite(a2) && std::isfinite(b2), "Theta: values must be finite");
  require(a2 > 0.0, "Theta: a2 must be positive");
  require(b2 >= 0.0, "Theta: b2 must be non-negative");
}

Theta::Theta(double a2, double b2, const ThetaBox& box) : Theta(a2, b2) {
  box.validate();
  if (!box.contains(a2, b2)) {
    throw ContractViolation("Theta " + to_string(*this) + " lies outside its box");
  }
}

std::string to_string(const Theta& theta) {
  std::ostringstream os;
  os.precision(17);
  os << "(a2=" << theta.a2() << ", b2=" << theta.b2() << ")";
  return os.str();
}

}  // namespace mixem

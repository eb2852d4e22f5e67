#include "mixem/forward_model.hpp"

#include "mixem/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace mixem {

double ForwardModel::component(Eigen::Index i, const Eigen::VectorXd& x) const {
  require(i >= 0 && i < output_dim(), "component index out of range");
  return evaluate(x)[i];
}

Eigen::MatrixXd ForwardModel::jacobian(const Eigen::VectorXd&) const {
  throw ContractViolation(name() + ": no Jacobian available");
}

double ForwardModel::separable_component(Eigen::Index, double) const {
  throw ContractViolation(name() + ": forward model is not separable");
}

namespace {

void check_input(const ForwardModel& f, const Eigen::VectorXd& x) {
  if (x.size() != f.input_dim()) {
    throw ContractViolation(f.name() + ": expected input of dimension " +
                            std::to_string(f.input_dim()) + ", got " +
                            std::to_string(x.size()));
  }
}

class LinearForward : public ForwardModel {
 public:
  explicit LinearForward(Eigen::MatrixXd a, std::string label = "linear")
      : a_(std::move(a)), label_(std::move(label)) {
    require(a_.rows() >= 1 && a_.cols() >= 1, "linear forward: empty matrix");
    require(a_.allFinite(), "linear forward: matrix entries must be finite");
  }

  Eigen::Index input_dim() const override { return a_.cols(); }
  Eigen::Index output_dim() const override { return a_.rows(); }
  std::string name() const override { return label_; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    return a_ * x;
  }
  double component(Eigen::Index i, const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    require(i >= 0 && i < a_.rows(), "component index out of range");
    return a_.row(i).dot(x);
  }
  bool has_jacobian() const override { return true; }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    return a_;
  }
  std::optional<Eigen::MatrixXd> linear_matrix() const override { return a_; }
  std::optional<double> gradient_bound() const override {
    return a_.rowwise().norm().maxCoeff();
  }

 protected:
  Eigen::MatrixXd a_;
  std::string label_;
};

class IdentityForward final : public LinearForward {
 public:
  explicit IdentityForward(Eigen::Index m)
      : LinearForward(Eigen::MatrixXd::Identity(m, m), "identity") {}

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    return x;
  }
  double component(Eigen::Index i, const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    require(i >= 0 && i < x.size(), "component index out of range");
    return x[i];
  }
  bool separable() const override { return true; }
  double separable_component(Eigen::Index, double xi) const override { return xi; }
};

class ScalarNonlinearForward final : public ForwardModel {
 public:
  ScalarNonlinearForward(ScalarNonlinearity kind, Eigen::Index m) : kind_(kind), m_(m) {}

  Eigen::Index input_dim() const override { return m_; }
  Eigen::Index output_dim() const override { return m_; }
  std::string name() const override {
    switch (kind_) {
      case ScalarNonlinearity::tanh: return "tanh";
      case ScalarNonlinearity::sin: return "sin";
      case ScalarNonlinearity::logistic: return "logistic";
    }
    return "?";
  }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    Eigen::VectorXd out(m_);
    for (Eigen::Index i = 0; i < m_; ++i) out[i] = apply(x[i]);
    return out;
  }
  double component(Eigen::Index i, const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    require(i >= 0 && i < m_, "component index out of range");
    return apply(x[i]);
  }
  bool has_jacobian() const override { return true; }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    Eigen::VectorXd d(m_);
    for (Eigen::Index i = 0; i < m_; ++i) d[i] = derivative(x[i]);
    return d.asDiagonal();
  }
  bool separable() const override { return true; }
  double separable_component(Eigen::Index, double xi) const override { return apply(xi); }
  std::optional<double> gradient_bound() const override {
    return kind_ == ScalarNonlinearity::logistic ? 0.25 : 1.0;
  }

 private:
  double apply(double v) const {
    switch (kind_) {
      case ScalarNonlinearity::tanh: return std::tanh(v);
      case ScalarNonlinearity::sin: return std::sin(v);
      case ScalarNonlinearity::logistic: return 1.0 / (1.0 + std::exp(-v));
    }
    return 0.0;
  }
  double derivative(double v) const {
    switch (kind_) {
      case ScalarNonlinearity::tanh: {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      }
      case ScalarNonlinearity::sin: return std::cos(v);
      case ScalarNonlinearity::logistic: {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      }
    }
    return 0.0;
  }

  ScalarNonlinearity kind_;
  Eigen::Index m_;
};

class ConstantForward final : public ForwardModel {
 public:
  ConstantForward(Eigen::Index m, Eigen::VectorXd values) : m_(m), values_(std::move(values)) {
    require(values_.allFinite(), "constant forward: values must be finite");
  }
  Eigen::Index input_dim() const override { return m_; }
  Eigen::Index output_dim() const override { return values_.size(); }
  std::string name() const override { return "constant"; }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    return values_;
  }
  bool has_jacobian() const override { return true; }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    check_input(*this, x);
    return Eigen::MatrixXd::Zero(values_.size(), m_);
  }
  bool separable() const override { return values_.size() == m_; }
  double separable_component(Eigen::Index i, double) const override {
    require(separable(), "constant forward: not separable when n != m");
    return values_[i];
  }
  std::optional<double> gradient_bound() const override { return 0.0; }

 private:
  Eigen::Index m_;
  Eigen::VectorXd values_;
};

Eigen::MatrixXd blur_matrix(Eigen::Index m, double width) {
  const auto radius = static_cast<Eigen::Index>(std::ceil(3.0 * width));
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - radius);
         j <= std::min<Eigen::Index>(m - 1, i + radius); ++j) {
      const double d = static_cast<double>(i - j) / width;
      k(i, j) = std::exp(-0.5 * d * d);
    }
    k.row(i) /= k.row(i).sum();
  }
  return k;
}

}  // namespace

ForwardPtr make_identity(Eigen::Index m) {
  require(m >= 1, "make_identity: dimension must be at least 1");
  return std::make_shared<IdentityForward>(m);
}

ForwardPtr make_linear(Eigen::MatrixXd a) { return std::make_shared<LinearForward>(std::move(a)); }

ForwardPtr make_scalar_nonlinear(const std::string& name, Eigen::Index m) {
  require(m >= 1, "make_scalar_nonlinear: dimension must be at least 1");
  if (name == "tanh") return std::make_shared<ScalarNonlinearForward>(ScalarNonlinearity::tanh, m);
  if (name == "sin") return std::make_shared<ScalarNonlinearForward>(ScalarNonlinearity::sin, m);
  if (name == "logistic") {
    return std::make_shared<ScalarNonlinearForward>(ScalarNonlinearity::logistic, m);
  }
  throw ContractViolation("make_scalar_nonlinear: unknown nonlinearity '" + name + "'");
}

ForwardPtr make_blur(Eigen::Index m, double width) {
  require(m >= 1, "make_blur: dimension must be at least 1");
  require(width > 0.0 && std::isfinite(width), "make_blur: width must be positive");
  return std::make_shared<LinearForward>(blur_matrix(m, width), "blur");
}

ForwardPtr make_constant(Eigen::Index m, Eigen::VectorXd values) {
  require(m >= 1 && values.size() >= 1, "make_constant: dimensions must be at least 1");
  return std::make_shared<ConstantForward>(m, std::move(values));
}

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("cannot open matrix file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ContractViolation("matrix file '" + path + "': bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ContractViolation("matrix file '" + path + "': ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ContractViolation("matrix file '" + path + "' is empty");
  Eigen::MatrixXd a(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) a(i, j) = rows[i][j];
  }
  return a;
}

double jacobian_fd_error(const ForwardModel& forward, const Eigen::VectorXd& x, double h) {
  const Eigen::MatrixXd analytic = forward.jacobian(x);
  Eigen::MatrixXd numeric(forward.output_dim(), forward.input_dim());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    numeric.col(j) = (forward.evaluate(xp) - forward.evaluate(xm)) / (2.0 * h);
  }
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace mixem

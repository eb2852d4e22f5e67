#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>

namespace mixem {

/// Known forward operator F: R^m -> R^n mapping the latent to the noiseless observation.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual std::string name() const = 0;

  virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const = 0;
  /// f_i(x). The default evaluates the full map.
  virtual double component(Eigen::Index i, const Eigen::VectorXd& x) const;

  virtual bool has_jacobian() const { return false; }
  /// n x m Jacobian. Throws ContractViolation when not provided.
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

  /// True when n == m and f_i depends on x_i alone. Posteriors of separable
  /// models under factorizing priors factorize per component.
  virtual bool separable() const { return false; }
  /// g_i(x_i) for separable models.
  virtual double separable_component(Eigen::Index i, double xi) const;

  /// Matrix A when F(x) = A x, used by the conjugate oracle.
  virtual std::optional<Eigen::MatrixXd> linear_matrix() const { return std::nullopt; }

  /// Upper bound on ||grad f_i|| over R^m, when known.
  virtual std::optional<double> gradient_bound() const { return std::nullopt; }
};

using ForwardPtr = std::shared_ptr<const ForwardModel>;

enum class ScalarNonlinearity { tanh, sin, logistic };

ForwardPtr make_identity(Eigen::Index m);
ForwardPtr make_linear(Eigen::MatrixXd a);
/// Componentwise tanh, sin or logistic; `name` is one of "tanh", "sin", "logistic".
ForwardPtr make_scalar_nonlinear(const std::string& name, Eigen::Index m);
/// 1-D convolution with a truncated Gaussian kernel of standard deviation `width`
/// (in samples); each row is renormalized to sum to one.
ForwardPtr make_blur(Eigen::Index m, double width);
/// F(x) = values for every x.
ForwardPtr make_constant(Eigen::Index m, Eigen::VectorXd values);

/// Reads a header-free, row-major, comma-separated matrix.
Eigen::MatrixXd load_matrix_csv(const std::string& path);

/// Largest relative deviation between `forward.jacobian(x)` and central
/// differences of `forward.evaluate` with step h.
double jacobian_fd_error(const ForwardModel& forward, const Eigen::VectorXd& x, double h = 1e-6);

}  // namespace mixem

#pragma once

#include "mixem/fisher.hpp"
#include "mixem/model.hpp"
#include "mixem/observations.hpp"
#include "mixem/q_function.hpp"
#include "mixem/theta.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mixem {

/// Deterministic sample of the ball B_ε(θ*): `directions` equally spaced
/// angles times `radii` radii ε k / radii, k = 1..radii.
struct BallGrid {
  int directions = 16;
  int radii = 4;
};

std::vector<Eigen::Vector2d> ball_points(const Eigen::Vector2d& center, double epsilon,
                                         const BallGrid& grid, bool include_center);

/// One ball-grid evaluation.
struct BallRow {
  Eigen::Vector2d theta;
  double min_eig = 0.0;  ///< of -∇₁²Q(θ, θ*)
  double max_eig = 0.0;
  double gamma_ratio = 0.0;  ///< ‖∇₁Q(θ,θ) - ∇₁Q(θ,θ*)‖ / ‖θ - θ*‖ (0 at the center)
};

struct LambdaMu {
  double lambda_hat = 0.0;
  double mu_hat = 0.0;
  /// False when -∇₁²Q fails to be positive definite somewhere on the ball.
  bool concave = true;
  std::vector<BallRow> rows;
};

/// Extremal eigenvalues of -∇₁²Q(θ, θ*) over the ball grid including θ*.
/// Throws ContractViolation unless the ball lies inside the box.
LambdaMu estimate_lambda_mu(const Theta& theta_star, double epsilon, const ModelBundle& model,
                            const ObservationSet& obs, const BallGrid& grid = {},
                            std::size_t threads = 0);

struct GammaEstimate {
  double gamma_hat = 0.0;
  std::vector<BallRow> rows;
};

/// sup over the ball grid (θ* excluded) of ‖∇₁Q(θ,θ) - ∇₁Q(θ,θ*)‖ / ‖θ - θ*‖.
GammaEstimate estimate_gamma(const Theta& theta_star, double epsilon, const ModelBundle& model,
                             const ObservationSet& obs, const BallGrid& grid = {},
                             std::size_t threads = 0);

/// First-order-stability constant: sup over the ball grid of
/// ‖∇₁Q(M(θ), θ*) - ∇₁Q(M(θ), θ)‖ / ‖θ - θ*‖. Needs one M evaluation per point.
double estimate_fos_gamma(const Theta& theta_star, double epsilon, const ModelBundle& model,
                          const ObservationSet& obs, const BallGrid& grid = {},
                          std::size_t threads = 0);

/// θ with ∇₁Q(θ, θ) = 0 for the observation set (a stationary point of its log
/// marginal likelihood, hence a fixed point of the EM operator), found by damped
/// Newton steps on θ ↦ ∇₁Q(θ, θ) with a central-difference Jacobian.
Theta empirical_fixed_point(const ModelBundle& model, const ObservationSet& obs, const Theta& start,
                            double tol = 1e-9, long max_iterations = 50, std::size_t threads = 0);

/// Feasible step sizes for gradient EM, c = 2μλ/(μ+λ).
struct StepInterval {
  double c = 0.0;
  bool empty = true;
  double lo = 0.0;
  double hi = 0.0;
};

StepInterval step_size_interval(double lambda, double mu, double gamma);

/// √(1 - τc) + τγ, the per-step rate bound of gradient EM with step τ.
double gradient_rate_bound(double tau, double c, double gamma);

enum class ContractionMode { em_operator, gradient };
std::string to_string(ContractionMode m);

inline constexpr double kRatioFloor = 1e-8;

struct ContractionRun {
  ContractionMode mode = ContractionMode::gradient;
  double tau = 0.0;
  std::vector<Eigen::Vector2d> iterates;
  /// ‖θ^{k+1} - θ*‖ / ‖θ^k - θ*‖; NaN once ‖θ^k - θ*‖ falls below
  /// kRatioFloor, where the fixed point's own precision dominates the ratio.
  std::vector<double> ratios;
  double predicted_rate = 0.0;
  double max_ratio = 0.0;
  bool diverged = false;
};

/// Iterates θ ← M(θ) or θ ← Π(θ + τ ∇₁Q(θ, θ)) from `theta0` and records the
/// contraction ratios towards `theta_star`. The prediction is γ/λ for the EM
/// operator and √(1 - τc) + τγ for gradient EM. Divergence (five consecutive
/// ratios above one) stops the run and is reported in the result.
ContractionRun contraction_diagnostics(const Theta& theta_star, const Theta& theta0,
                                       const ModelBundle& model, const ObservationSet& obs,
                                       ContractionMode mode, double tau, long rounds,
                                       double lambda_hat, double mu_hat, double gamma_hat,
                                       std::size_t threads = 0);

/// Largest W1(p_{X|Y=y}^{θ₁}, p_{X|Y=y}^{θ₂}) / ‖θ₁ - θ₂‖ over the pairs, with
/// W1 from the grid CDFs of a 1-D model.
double posterior_lipschitz_probe(const Eigen::VectorXd& y,
                                 const std::vector<std::pair<Theta, Theta>>& pairs,
                                 const ModelBundle& model);

/// Bundle of theory diagnostics for one model instance.
struct TheoryReport {
  std::optional<FisherInfo> fisher;
  double epsilon = 0.0;
  double lambda_hat = 0.0;
  double mu_hat = 0.0;
  double gamma_hat = 0.0;
  bool concavity_violated = false;
  double c = 0.0;
  StepInterval tau_interval;
  std::optional<double> fos_gamma_hat;
  double contraction_rate_pred = 0.0;
  double contraction_rate_observed = 0.0;
  std::vector<ContractionRun> runs;
  std::vector<BallRow> ball;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const FisherInfo& f);
nlohmann::json to_json(const TheoryReport& r);

}  // namespace mixem

#pragma once

#include "mixem/model.hpp"
#include "mixem/observations.hpp"
#include "mixem/sampler.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mixem {

/// Posterior-weighted residual statistics of one or more observations.
///
/// Each entry stands for a component value f = f_i(x) with total posterior
/// weight W and weighted squared residual S = Σ w (y_i - f)². Because the
/// log-likelihood depends on x only through (f_i², r_i²), the θ-dependent
/// part of Q(θ, θ̂) is
///   -½ Σ_entries [W (log 2π + log σ(f²)) + S / σ(f²)],   σ = a² + b² f²,
/// and `constant` carries the θ-independent term E[log p_X(x)].
class ResidualStats {
 public:
  void add(double f, double residual, double weight);
  /// Appends every entry of `other` scaled by `scale`.
  void merge(const ResidualStats& other, double scale = 1.0);
  /// Merges entries with bit-identical f² values.
  ResidualStats compacted() const;

  std::size_t size() const { return f2_.size(); }
  double total_weight() const;

  /// Full Q value including `constant`.
  double value(const Theta& theta) const;
  /// -(value - constant): the M-step loss L̃(θ).
  double loss(const Theta& theta) const { return -(value(theta) - constant); }
  Eigen::Vector2d grad(const Theta& theta) const;
  Eigen::Matrix2d hessian(const Theta& theta) const;

  double constant = 0.0;

  const std::vector<double>& f2() const { return f2_; }
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& squares() const { return s_; }
  void add_entry(double f2, double weight, double square);

 private:
  std::vector<double> f2_;
  std::vector<double> w_;
  std::vector<double> s_;
};

/// Oracle E-step over a whole observation set: grid posteriors at θ̂, reduced
/// to aggregated residual statistics.
struct EStepSummary {
  ResidualStats stats;
  /// Σ_k ω_k log p_{Y_θ̂}(y_k) by quadrature.
  double log_marginal = 0.0;
};

/// Grid posteriors at θ̂ for every observation. Observations sharing the
/// default grid are accumulated node by node, so the result has one entry per
/// distinct f² value. The result does not depend on `threads`.
EStepSummary oracle_estep(const ModelBundle& model, const Theta& theta_hat,
                          const ObservationSet& obs, std::size_t threads = 0);

/// Statistics from posterior draws: `samples[k]` holds draws (rows) for
/// observation k, each draw weighted ω_k / count.
ResidualStats sample_stats(const ForwardModel& forward, const Prior& prior,
                           const ObservationSet& obs, const std::vector<Eigen::MatrixXd>& samples);

/// Log marginal likelihood Σ ω_k log p_{Y_θ}(y_k) by grid quadrature.
double log_marginal_likelihood(const ModelBundle& model, const Theta& theta,
                               const ObservationSet& obs, std::size_t threads = 0);

enum class QSource { quadrature, monte_carlo };

/// Q(θ, θ̂) with its θ-gradient and Hessian. Standard errors describe the
/// spread across observations (the outer expectation); for the Monte-Carlo
/// source they also absorb the inner sampling noise.
struct QEstimate {
  double value = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
  QSource source = QSource::quadrature;
  long sample_count = 0;  ///< posterior draws per observation (Monte-Carlo only)
  double value_se = 0.0;
  Eigen::Vector2d grad_se = Eigen::Vector2d::Zero();
};

struct QOptions {
  /// Sampler at θ̂ for the Monte-Carlo source; null selects grid quadrature.
  const PosteriorSampler* sampler = nullptr;
  long samples_per_observation = 256;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

QEstimate q_function(const Theta& theta, const Theta& theta_hat, const ModelBundle& model,
                     const ObservationSet& obs, const QOptions& options = {});

/// Outcome of maximizing a fixed Q(·, θ̂) over the box.
struct QMaximum {
  Theta theta{1.0, 1.0};
  double value = 0.0;
  double grad_norm = 0.0;       ///< norm of the projected gradient at `theta`
  long iterations = 0;
  bool boundary_active = false;
  bool converged = false;
  std::vector<Eigen::Vector2d> history;
};

/// Raised when the line search cannot increase Q from a point that is not
/// first-order optimal; carries the iterates visited so far.
class OptimizationFailure : public NumericFailure {
 public:
  OptimizationFailure(const std::string& what, std::vector<Eigen::Vector2d> history)
      : NumericFailure(what, static_cast<long>(history.size())), history_(std::move(history)) {}
  const std::vector<Eigen::Vector2d>& history() const { return history_; }

 private:
  std::vector<Eigen::Vector2d> history_;
};

struct AscentOptions {
  double grad_tol = 1e-8;
  long max_iterations = 20000;
  double armijo = 1e-4;
};

/// Projected gradient ascent with Barzilai–Borwein trial steps and Armijo
/// backtracking along the projection arc.
QMaximum maximize_q(const ResidualStats& stats, const ThetaBox& box, const Theta& start,
                    const AscentOptions& options = {});

/// Component-wise projected gradient: zero where a bound is active and the
/// gradient points outwards.
Eigen::Vector2d projected_gradient(const Eigen::Vector2d& theta, const Eigen::Vector2d& grad,
                                   const ThetaBox& box);

}  // namespace mixem

#pragma once

#include "mixem/error.hpp"
#include "mixem/flow_matching.hpp"
#include "mixem/model.hpp"
#include "mixem/observations.hpp"
#include "mixem/posterior.hpp"
#include "mixem/q_function.hpp"
#include "mixem/rng.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace mixem {

/// M(θ̂) = argmax_θ Q(θ, θ̂) over the box, with grid posteriors at θ̂.
/// Throws OptimizationFailure when the ascent stalls away from optimality.
QMaximum population_em_operator(const Theta& theta_hat, const ModelBundle& model,
                                const ObservationSet& obs, std::size_t threads = 0,
                                const AscentOptions& options = {});

struct MStepResult {
  Theta theta{1.0, 1.0};
  double loss = 0.0;       ///< L̃ at the returned θ
  double grad_norm = 0.0;  ///< ‖∇L̃‖ at the returned θ
  double eta = 0.0;        ///< step size in effect at the end (after any halving)
  long halvings = 0;
};

/// `inner_iters` steps of θ ← Π(θ - η ∇L̃(θ)) on fixed statistics. A step that
/// would increase L̃ halves η for the rest of the call.
MStepResult m_step_gradient(const Theta& theta, const ResidualStats& stats, const ThetaBox& box,
                            double eta, long inner_iters);

/// Same, building the statistics from posterior draws (`samples[k]` rows are
/// draws for observation k).
MStepResult m_step_gradient(const Theta& theta, const std::vector<Eigen::MatrixXd>& samples,
                            const ObservationSet& obs, const ModelBundle& model, double eta,
                            long inner_iters);

enum class EStepBackend { flow, grid, conjugate, metropolis };
std::string to_string(EStepBackend b);
EStepBackend estep_backend_from_string(const std::string& name);

enum class MStepSolver { gradient, exact };
std::string to_string(MStepSolver s);
MStepSolver mstep_solver_from_string(const std::string& name);

struct EMConfig {
  double eta = 1e-4;
  long inner_iters = 100;
  MStepSolver solver = MStepSolver::gradient;
  long rounds = 50;
  double tolerance = 1e-6;
  EStepBackend backend = EStepBackend::grid;
  /// Posterior draws per observation for the sampling backends.
  long samples_per_observation = 32;
  FlowConfig flow{};
  /// Warm-start training steps in every round after the first.
  long flow_refresh_steps = 1000;
  MetropolisConfig metropolis{};
  std::size_t threads = 0;

  void validate() const;
  bool operator==(const EMConfig&) const = default;
};

struct EMRound {
  long round = 0;
  Theta theta{1.0, 1.0};  ///< θ after this round's M-step
  double mstep_loss = 0.0;
  double grad_norm = 0.0;
  /// Flow backend: final running training loss. Grid backend: negative mean
  /// log marginal likelihood at the round's starting θ. Otherwise 0.
  double estep_loss = 0.0;
  double wall_ms = 0.0;
};

struct EMTrace {
  Theta theta0{1.0, 1.0};
  std::vector<EMRound> rounds;
  bool converged = false;

  const Theta& final_theta() const { return rounds.empty() ? theta0 : rounds.back().theta; }
};

/// E-step failure; carries the rounds completed before the failure.
class EMAborted : public NumericFailure {
 public:
  EMAborted(const std::string& what, long round, EMTrace trace)
      : NumericFailure(what, round), trace_(std::move(trace)) {}
  const EMTrace& trace() const { return trace_; }

 private:
  EMTrace trace_;
};

/// Rng stream used for the posterior draws of observation `k` in round `r`.
Rng estep_stream(const Rng& base, long round, Eigen::Index k);

/// Alternates E-steps at θ_r and M-steps. Stops after `rounds` rounds or when
/// ‖θ_{r+1} - θ_r‖ <= tolerance.
EMTrace run_em(const EMConfig& config, const ModelBundle& model, const ObservationSet& obs,
               const Theta& theta0, const Rng& rng);

/// CSV with header round,a2,b2,mstep_loss,grad_norm,estep_loss,wall_ms. Floats
/// use 17 significant digits; wall_ms is written as 0 unless `timing` is set.
void write_trace_csv(std::ostream& out, const EMTrace& trace, bool timing = false);

/// "%.17g" formatting shared by every CSV writer.
std::string format_double(double v);

}  // namespace mixem

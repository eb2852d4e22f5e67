#include "mixem/em.hpp"

#include "mixem/log.hpp"
#include "mixem/parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>

namespace mixem {

QMaximum population_em_operator(const Theta& theta_hat, const ModelBundle& model,
                                const ObservationSet& obs, std::size_t threads,
                                const AscentOptions& options) {
  const EStepSummary summary = oracle_estep(model, theta_hat, obs, threads);
  return maximize_q(summary.stats, model.box, theta_hat, options);
}

MStepResult m_step_gradient(const Theta& theta, const ResidualStats& stats, const ThetaBox& box,
                            double eta, long inner_iters) {
  box.validate();
  require(stats.size() > 0, "m_step_gradient: no posterior samples");
  require(eta >= 0.0 && std::isfinite(eta), "m_step_gradient: eta must be non-negative");
  require(inner_iters >= 0, "m_step_gradient: inner_iters must be non-negative");
  require(box.contains(theta.a2(), theta.b2()), "m_step_gradient: theta must lie in the box");

  Eigen::Vector2d x = theta.vector();
  double loss = stats.loss(theta);
  Eigen::Vector2d g = -stats.grad(theta);
  if (!g.allFinite()) throw NumericFailure("m_step_gradient: non-finite gradient", 0);

  MStepResult out;
  out.eta = eta;
  for (long it = 0; it < inner_iters && out.eta > 0.0; ++it) {
    bool accepted = false;
    Eigen::Vector2d xn = x;
    double ln = loss;
    for (int h = 0; h < 60; ++h) {
      xn = box.project(x - out.eta * g);
      ln = stats.loss(Theta::from_vector(xn));
      if (std::isfinite(ln) && ln <= loss + 1e-12 * (1.0 + std::abs(loss))) {
        accepted = true;
        break;
      }
      out.eta *= 0.5;
      ++out.halvings;
    }
    if (!accepted) break;
    x = xn;
    loss = ln;
    g = -stats.grad(Theta::from_vector(x));
    if (!g.allFinite()) throw NumericFailure("m_step_gradient: non-finite gradient", it + 1);
  }
  out.theta = Theta::from_vector(x);
  out.loss = loss;
  out.grad_norm = g.norm();
  return out;
}

MStepResult m_step_gradient(const Theta& theta, const std::vector<Eigen::MatrixXd>& samples,
                            const ObservationSet& obs, const ModelBundle& model, double eta,
                            long inner_iters) {
  model.validate();
  require(!samples.empty(), "m_step_gradient: no posterior samples");
  const ResidualStats stats = sample_stats(*model.forward, *model.prior, obs, samples);
  return m_step_gradient(theta, stats, model.box, eta, inner_iters);
}

std::string to_string(EStepBackend b) {
  switch (b) {
    case EStepBackend::flow: return "flow";
    case EStepBackend::grid: return "grid";
    case EStepBackend::conjugate: return "conjugate";
    case EStepBackend::metropolis: return "metropolis";
  }
  return "grid";
}

EStepBackend estep_backend_from_string(const std::string& name) {
  if (name == "flow") return EStepBackend::flow;
  if (name == "grid") return EStepBackend::grid;
  if (name == "conjugate") return EStepBackend::conjugate;
  if (name == "metropolis") return EStepBackend::metropolis;
  throw ContractViolation("unknown E-step backend '" + name + "'");
}

std::string to_string(MStepSolver s) { return s == MStepSolver::exact ? "exact" : "gradient"; }

MStepSolver mstep_solver_from_string(const std::string& name) {
  if (name == "gradient") return MStepSolver::gradient;
  if (name == "exact") return MStepSolver::exact;
  throw ContractViolation("unknown M-step solver '" + name + "'");
}

void EMConfig::validate() const {
  require(eta > 0.0 && std::isfinite(eta), "EMConfig: eta must be positive");
  require(inner_iters >= 1, "EMConfig: inner_iters must be at least 1");
  require(rounds >= 1, "EMConfig: rounds must be at least 1");
  require(tolerance >= 0.0, "EMConfig: tolerance must be non-negative");
  require(samples_per_observation >= 1, "EMConfig: samples_per_observation must be at least 1");
  require(flow_refresh_steps >= 0, "EMConfig: flow_refresh_steps must be non-negative");
  flow.validate();
  metropolis.validate();
}

Rng estep_stream(const Rng& base, long round, Eigen::Index k) {
  return base.split(0xE5).split(static_cast<std::uint64_t>(round)).split(static_cast<std::uint64_t>(k));
}

namespace {

std::vector<Eigen::MatrixXd> draw_samples(const PosteriorSampler& sampler, const ObservationSet& obs,
                                          long count, const Rng& rng, long round,
                                          std::size_t threads) {
  std::vector<Eigen::MatrixXd> samples(static_cast<std::size_t>(obs.size()));
  parallel_for(samples.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      Rng stream = estep_stream(rng, round, kk);
      samples[k] = sampler.sample(obs.y.col(kk), count, stream);
    }
  });
  return samples;
}

}  // namespace

EMTrace run_em(const EMConfig& config, const ModelBundle& model, const ObservationSet& obs,
               const Theta& theta0, const Rng& rng) {
  config.validate();
  model.validate();
  obs.validate();
  require(obs.obs_dim() == model.obs_dim(), "run_em: observation length mismatch");
  require(model.box.contains(theta0.a2(), theta0.b2()), "run_em: theta0 must lie in the box");

  EMTrace trace;
  trace.theta0 = theta0;
  Theta theta = theta0;
  std::optional<FlowTrainer> trainer;
  Rng init_rng = rng.split(0xF1);
  Rng flow_rng = rng.split(0xF2);

  for (long r = 0; r < config.rounds; ++r) {
    const auto start = std::chrono::steady_clock::now();
    ResidualStats stats;
    double estep_loss = 0.0;
    try {
      std::unique_ptr<PosteriorSampler> sampler;
      switch (config.backend) {
        case EStepBackend::grid: {
          EStepSummary summary = oracle_estep(model, theta, obs, config.threads);
          stats = std::move(summary.stats);
          estep_loss = -summary.log_marginal;
          break;
        }
        case EStepBackend::flow: {
          long steps = config.flow_refresh_steps;
          if (!trainer) {
            trainer = make_flow_trainer(model.latent_dim(), model.obs_dim(), config.flow, init_rng);
            steps = config.flow.training_steps;
          }
          const TrainingReport report = train_steps(*trainer, *model.prior, *model.forward, theta, steps,
                                                    config.flow.batch_size, flow_rng);
          estep_loss = report.final_running_loss;
          sampler = std::make_unique<FlowSampler>(
              NetVelocity(trainer->net, model.latent_dim(), model.obs_dim()), config.flow);
          break;
        }
        case EStepBackend::conjugate:
          sampler = std::make_unique<ConjugateSampler>(theta, model.forward, model.prior);
          break;
        case EStepBackend::metropolis:
          sampler = std::make_unique<MetropolisSampler>(theta, model.forward, model.prior, config.metropolis);
          break;
      }
      if (sampler) {
        const auto samples =
            draw_samples(*sampler, obs, config.samples_per_observation, rng, r, config.threads);
        stats = sample_stats(*model.forward, *model.prior, obs, samples);
      }
    } catch (const std::exception& e) {
      throw EMAborted("E-step failed in round " + std::to_string(r) + ": " + e.what(), r, trace);
    }

    EMRound rec;
    rec.round = r;
    rec.estep_loss = estep_loss;
    if (config.solver == MStepSolver::exact) {
      const QMaximum q = maximize_q(stats, model.box, theta);
      rec.theta = q.theta;
      rec.mstep_loss = stats.loss(q.theta);
      rec.grad_norm = q.grad_norm;
    } else {
      const MStepResult m = m_step_gradient(theta, stats, model.box, config.eta, config.inner_iters);
      rec.theta = m.theta;
      rec.mstep_loss = m.loss;
      rec.grad_norm = m.grad_norm;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const double delta = (rec.theta.vector() - theta.vector()).norm();
    log::info("round " + std::to_string(r) + " theta " + to_string(rec.theta) + " mstep_loss " +
              format_double(rec.mstep_loss));
    theta = rec.theta;
    trace.rounds.push_back(rec);
    if (delta <= config.tolerance) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& out, const EMTrace& trace, bool timing) {
  out << "round,a2,b2,mstep_loss,grad_norm,estep_loss,wall_ms\n";
  for (const auto& r : trace.rounds) {
    out << r.round << ',' << format_double(r.theta.a2()) << ',' << format_double(r.theta.b2()) << ','
        << format_double(r.mstep_loss) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.estep_loss) << ',' << (timing ? format_double(r.wall_ms) : std::string("0"))
        << '\n';
  }
}

}  // namespace mixem

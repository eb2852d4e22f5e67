#include "mixem/commands.hpp"

#include "mixem/config.hpp"
#include "mixem/error.hpp"
#include "mixem/log.hpp"
#include "mixem/metrics.hpp"
#include "mixem/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace mixem {

namespace {

namespace fs = std::filesystem;

struct Loaded {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  fs::path out;
};

Loaded load(const CommandOptions& options) {
  Loaded l;
  l.config = load_config(options.config_path, options.overrides);
  l.seed = options.seed.value_or(l.config.data.seed);
  l.out = options.out_dir.value_or(l.config.run.output_dir);
  std::error_code ec;
  fs::create_directories(l.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + l.out.string() + "': " + ec.message());
  return l;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

int guarded(const char* name, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log::error(std::string(name) + ": " + e.what());
    return kExitConfig;
  } catch (const ContractViolation& e) {
    log::error(std::string(name) + ": " + e.what());
    return kExitConfig;
  } catch (const NumericFailure& e) {
    log::error(std::string(name) + ": numeric failure: " + e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    log::error(std::string(name) + ": " + e.what());
    return kExitNumeric;
  }
}

ObservationSet observations_for(const Loaded& l, const ModelBundle& model) {
  Rng rng(l.seed, 0);
  return make_observations(l.config.data.design, theta_star(l.config), *model.forward, *model.prior,
                           l.config.data.observations, rng, l.config.data.quadrature_nodes);
}

nlohmann::json trace_json(const EMTrace& trace, bool timing) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : trace.rounds) {
    rounds.push_back({{"round", r.round},
                      {"a2", r.theta.a2()},
                      {"b2", r.theta.b2()},
                      {"mstep_loss", r.mstep_loss},
                      {"grad_norm", r.grad_norm},
                      {"estep_loss", r.estep_loss},
                      {"wall_ms", timing ? r.wall_ms : 0.0}});
  }
  return {{"theta0", {trace.theta0.a2(), trace.theta0.b2()}},
          {"final_theta", {trace.final_theta().a2(), trace.final_theta().b2()}},
          {"converged", trace.converged},
          {"rounds", rounds}};
}

std::string ball_csv(const std::vector<BallRow>& rows) {
  std::ostringstream o;
  o << "a2,b2,min_eig,max_eig,gamma_ratio\n";
  for (const auto& r : rows) {
    o << format_double(r.theta[0]) << ',' << format_double(r.theta[1]) << ',' << format_double(r.min_eig) << ','
      << format_double(r.max_eig) << ',' << format_double(r.gamma_ratio) << '\n';
  }
  return o.str();
}

std::string fisher_csv(const FisherInfo& f) {
  std::ostringstream o;
  o << "A,B,C,eig_min,eig_max,positive_definite\n";
  o << format_double(f.a) << ',' << format_double(f.b) << ',' << format_double(f.c) << ','
    << format_double(f.eigenvalues[0]) << ',' << format_double(f.eigenvalues[1]) << ','
    << (f.positive_definite ? 1 : 0) << '\n';
  return o.str();
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd column_std(const Eigen::MatrixXd& s) {
  const Eigen::RowVectorXd mu = s.colwise().mean();
  const Eigen::MatrixXd c = s.rowwise() - mu;
  const double denom = std::max<double>(1.0, static_cast<double>(s.rows() - 1));
  return (c.array().square().colwise().sum() / denom).sqrt().transpose();
}

bool ball_inside(const ThetaBox& box, const Theta& c, double eps) {
  return c.a2() - eps >= box.a_min && c.a2() + eps <= box.a_max && c.b2() - eps >= box.b_min &&
         c.b2() + eps <= box.b_max;
}

}  // namespace

int cmd_run_em(const CommandOptions& options) {
  return guarded("run-em", [&] {
    const Loaded l = load(options);
    const ModelBundle model = build_model(l.config);
    const ObservationSet obs = observations_for(l, model);
    const EMConfig em = build_em_config(l.config, options.threads);
    const Theta theta0 = theta_initial(l.config);

    nlohmann::json record;
    record["version"] = kVersion;
    record["seed"] = l.seed;
    record["config"] = serialize_config(l.config);
    record["observations"] = obs.size();

    auto write_outputs = [&](const EMTrace& trace) {
      std::ostringstream csv;
      write_trace_csv(csv, trace, false);
      write_text(l.out / "trace.csv", csv.str());
      if (options.timing) {
        std::ostringstream timed;
        write_trace_csv(timed, trace, true);
        write_text(l.out / "trace_timing.csv", timed.str());
      }
      record["trace"] = trace_json(trace, false);
      write_text(l.out / "run.json", record.dump(2) + "\n");
    };

    try {
      const EMTrace trace = run_em(em, model, obs, theta0, Rng(l.seed, 1));
      record["status"] = "completed";
      write_outputs(trace);
      log::info("run-em: final theta " + to_string(trace.final_theta()));
      return kExitOk;
    } catch (const EMAborted& e) {
      record["status"] = "aborted";
      record["error"] = e.what();
      write_outputs(e.trace());
      throw;
    }
  });
}

int cmd_fisher(const CommandOptions& options) {
  return guarded("fisher", [&] {
    const Loaded l = load(options);
    const ModelBundle model = build_model(l.config);
    const FisherInfo f = fisher_information(theta_star(l.config), *model.forward, *model.prior, model.grid);
    nlohmann::json j;
    j["version"] = kVersion;
    j["seed"] = l.seed;
    j["theta"] = {theta_star(l.config).a2(), theta_star(l.config).b2()};
    j["fisher"] = to_json(f);
    write_text(l.out / "fisher.json", j.dump(2) + "\n");
    write_text(l.out / "fisher.csv", fisher_csv(f));
    if (!f.positive_definite) log::info("fisher: information matrix is singular at theta*");
    return kExitOk;
  });
}

int cmd_theory(const CommandOptions& options) {
  return guarded("theory", [&] {
    const Loaded l = load(options);
    const ExperimentConfig& cfg = l.config;
    const ModelBundle model = build_model(cfg);
    const ObservationSet obs = observations_for(l, model);
    const std::size_t threads = options.threads;
    const Theta star = theta_star(cfg);

    TheoryReport report;
    report.epsilon = cfg.theory.epsilon;
    report.fisher = fisher_information(star, *model.forward, *model.prior, model.grid);
    if (!report.fisher->positive_definite) {
      report.notes.push_back("Fisher information is singular at theta*: the noise parameters are not identifiable");
    }

    Theta center = star;
    if (cfg.theory.center == "fixed_point") {
      const Theta fixed = empirical_fixed_point(model, obs, star, 1e-9, 50, threads);
      if (ball_inside(model.box, fixed, cfg.theory.epsilon)) {
        center = fixed;
        report.notes.push_back("diagnostics centred at the observation set's EM fixed point " + to_string(center));
      } else {
        report.notes.push_back("EM fixed point " + to_string(fixed) +
                               " is too close to the box boundary for the ball; centred at theta* instead");
      }
    }
    if (!ball_inside(model.box, center, cfg.theory.epsilon)) {
      throw ConfigError("the ball of radius theory.epsilon around " + to_string(center) +
                        " leaves the parameter box");
    }

    const BallGrid grid{cfg.theory.directions, cfg.theory.radii};
    const LambdaMu lm = estimate_lambda_mu(center, cfg.theory.epsilon, model, obs, grid, threads);
    const GammaEstimate gm = estimate_gamma(center, cfg.theory.epsilon, model, obs, grid, threads);
    report.ball = lm.rows;
    report.ball.insert(report.ball.end(), gm.rows.begin(), gm.rows.end());
    report.lambda_hat = cfg.theory.lambda.value_or(lm.lambda_hat);
    report.mu_hat = cfg.theory.mu.value_or(lm.mu_hat);
    report.gamma_hat = cfg.theory.gamma.value_or(gm.gamma_hat);
    if (cfg.theory.lambda || cfg.theory.mu || cfg.theory.gamma) {
      report.notes.push_back("lambda/mu/gamma overridden from the configuration where given");
    }
    report.concavity_violated = !(report.lambda_hat > 0.0);
    if (report.concavity_violated) {
      report.notes.push_back("concavity violated on ball: -Hessian of Q is not positive definite everywhere");
    } else {
      report.tau_interval = step_size_interval(report.lambda_hat, report.mu_hat, report.gamma_hat);
      report.c = report.tau_interval.c;
    }
    if (cfg.theory.fos) {
      report.fos_gamma_hat = estimate_fos_gamma(center, cfg.theory.epsilon, model, obs, grid, threads);
    }

    if (!report.concavity_violated) {
      const double r = 0.9 * cfg.theory.epsilon / std::sqrt(2.0);
      const Theta start = Theta::from_vector(model.box.project(center.vector() + Eigen::Vector2d(r, r)));
      const double tau = cfg.theory.tau > 0.0 ? cfg.theory.tau : 2.0 / (report.mu_hat + report.lambda_hat);
      try {
        ContractionRun g = contraction_diagnostics(center, start, model, obs, ContractionMode::gradient, tau,
                                                   cfg.theory.contraction_rounds, report.lambda_hat,
                                                   report.mu_hat, report.gamma_hat, threads);
        report.contraction_rate_pred = g.predicted_rate;
        report.contraction_rate_observed = g.max_ratio;
        report.runs.push_back(std::move(g));
        report.runs.push_back(contraction_diagnostics(center, start, model, obs, ContractionMode::em_operator, 0.0,
                                                      cfg.theory.contraction_rounds, report.lambda_hat,
                                                      report.mu_hat, report.gamma_hat, threads));
      } catch (const NumericFailure& e) {
        report.notes.push_back(std::string("contraction run stopped: ") + e.what());
      }
    }

    nlohmann::json j = to_json(report);
    j["version"] = kVersion;
    j["seed"] = l.seed;
    j["config"] = serialize_config(cfg);
    j["theta_star"] = {star.a2(), star.b2()};
    j["center"] = {center.a2(), center.b2()};
    write_text(l.out / "theory.json", j.dump(2) + "\n");
    write_text(l.out / "ball.csv", ball_csv(report.ball));
    write_text(l.out / "fisher.csv", fisher_csv(*report.fisher));
    return kExitOk;
  });
}

int cmd_sample(const CommandOptions& options) {
  return guarded("sample", [&] {
    if (options.count < 1) throw ConfigError("--count must be at least 1");
    CommandOptions opts = options;
    if (options.backend) opts.overrides.push_back("estep.backend=" + *options.backend);
    const Loaded l = load(opts);
    const ExperimentConfig& cfg = l.config;
    const ModelBundle model = build_model(cfg);
    const ObservationSet obs = observations_for(l, model);
    if (options.observation < 0 || options.observation >= obs.size()) {
      throw ConfigError("--observation must be in [0, " + std::to_string(obs.size()) + ")");
    }
    const Eigen::VectorXd y = obs.y.col(options.observation);
    const Theta theta = theta_star(cfg);

    std::unique_ptr<PosteriorSampler> sampler;
    switch (cfg.estep.backend) {
      case EStepBackend::conjugate:
        sampler = std::make_unique<ConjugateSampler>(theta, model.forward, model.prior);
        break;
      case EStepBackend::grid:
        sampler = std::make_unique<GridSampler>(theta, model.forward, model.prior, model.grid);
        break;
      case EStepBackend::metropolis:
        sampler = std::make_unique<MetropolisSampler>(theta, model.forward, model.prior, cfg.estep.metropolis);
        break;
      case EStepBackend::flow:
        if (!cfg.estep.checkpoint.empty()) {
          FlowSampler loaded = load_sampler(cfg.estep.checkpoint);
          if (loaded.field().latent_dim() != model.latent_dim() || loaded.field().obs_dim() != model.obs_dim()) {
            throw ConfigError("checkpoint dimensions do not match the model");
          }
          sampler = std::make_unique<FlowSampler>(std::move(loaded));
        } else {
          log::warn("sample: flow backend has no checkpoint; the untrained field is zero, so transport is "
                     "the identity and the samples are latent draws");
          Rng init(l.seed, 5);
          FlowTrainer t = make_flow_trainer(model.latent_dim(), model.obs_dim(), cfg.estep.flow, init);
          sampler = std::make_unique<FlowSampler>(NetVelocity(std::move(t.net), model.latent_dim(), model.obs_dim()),
                                                  cfg.estep.flow);
        }
        break;
    }
    Rng rng(l.seed, 2);
    const Eigen::MatrixXd samples = sampler->sample(y, options.count, rng);

    std::ostringstream csv;
    for (Eigen::Index k = 0; k < samples.cols(); ++k) csv << (k ? "," : "") << "x" << k;
    csv << '\n';
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
      for (Eigen::Index k = 0; k < samples.cols(); ++k) csv << (k ? "," : "") << format_double(samples(r, k));
      csv << '\n';
    }
    write_text(l.out / "samples.csv", csv.str());

    const Eigen::VectorXd mean = samples.colwise().mean().transpose();
    const Eigen::VectorXd sd = column_std(samples);
    nlohmann::json j;
    j["version"] = kVersion;
    j["seed"] = l.seed;
    j["backend"] = sampler->name();
    j["observation"] = options.observation;
    j["y"] = vector_json(y);
    j["count"] = options.count;
    j["mean"] = vector_json(mean);
    j["std"] = vector_json(sd);
    j["mean_se"] = vector_json(sd / std::sqrt(static_cast<double>(options.count)));

    std::unique_ptr<PosteriorSampler> oracle;
    if (theta.b2() == 0.0 && model.forward->linear_matrix()) {
      oracle = std::make_unique<ConjugateSampler>(theta, model.forward, model.prior);
    } else if (model.latent_dim() <= 2 || grid_factorizes(*model.forward, *model.prior)) {
      oracle = std::make_unique<GridSampler>(theta, model.forward, model.prior, model.grid);
    }
    if (oracle) {
      Rng orng(l.seed, 3);
      const Eigen::MatrixXd ref = oracle->sample(y, options.count, orng);
      j["oracle"] = {{"name", oracle->name()},
                     {"mean", vector_json(ref.colwise().mean().transpose())},
                     {"std", vector_json(column_std(ref))},
                     {"w1", w1_sliced(samples, ref)}};
      if (oracle->name() == "conjugate") {
        j["oracle"]["exact_mean"] = vector_json(exact_linear_gaussian_posterior(theta, *model.forward, *model.prior, y).mean());
      }
    } else {
      j["oracle"] = nullptr;
    }
    write_text(l.out / "summary.json", j.dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_train_flow(const CommandOptions& options) {
  return guarded("train-flow", [&] {
    const Loaded l = load(options);
    const ModelBundle model = build_model(l.config);
    Rng rng(l.seed, 4);
    TrainingReport report;
    const FlowSampler sampler =
        train_flow(*model.prior, *model.forward, theta_star(l.config), l.config.estep.flow, rng, &report);
    save_sampler((l.out / "flow.ckpt").string(), sampler);
    nlohmann::json j = {{"version", kVersion},
                        {"seed", l.seed},
                        {"steps", report.steps},
                        {"final_running_loss", report.final_running_loss},
                        {"heldout_before", report.heldout_before},
                        {"heldout_after", report.heldout_after}};
    write_text(l.out / "flow_training.json", j.dump(2) + "\n");
    return kExitOk;
  });
}

}  // namespace mixem

#include "mixem/theory.hpp"

#include "mixem/em.hpp"
#include "mixem/error.hpp"
#include "mixem/metrics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mixem {

namespace {

void require_ball_in_box(const Theta& center, double epsilon, const ThetaBox& box) {
  require(epsilon > 0.0 && std::isfinite(epsilon), "ball grid: epsilon must be positive");
  const Eigen::Vector2d c = center.vector();
  for (int k = 0; k < 2; ++k) {
    Eigen::Vector2d lo = c;
    Eigen::Vector2d hi = c;
    lo[k] -= epsilon;
    hi[k] += epsilon;
    require(box.contains(lo) && box.contains(hi), "ball grid: B_eps(theta*) must lie inside the box");
  }
}

}  // namespace

std::vector<Eigen::Vector2d> ball_points(const Eigen::Vector2d& center, double epsilon,
                                         const BallGrid& grid, bool include_center) {
  require(grid.directions >= 1 && grid.radii >= 1, "ball grid: need at least one direction and radius");
  std::vector<Eigen::Vector2d> pts;
  if (include_center) pts.push_back(center);
  for (int r = 1; r <= grid.radii; ++r) {
    const double rad = epsilon * static_cast<double>(r) / static_cast<double>(grid.radii);
    for (int d = 0; d < grid.directions; ++d) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(d) / static_cast<double>(grid.directions);
      pts.push_back(center + rad * Eigen::Vector2d(std::cos(ang), std::sin(ang)));
    }
  }
  return pts;
}

LambdaMu estimate_lambda_mu(const Theta& theta_star, double epsilon, const ModelBundle& model,
                            const ObservationSet& obs, const BallGrid& grid, std::size_t threads) {
  require_ball_in_box(theta_star, epsilon, model.box);
  const ResidualStats stats = oracle_estep(model, theta_star, obs, threads).stats;
  LambdaMu out;
  out.lambda_hat = std::numeric_limits<double>::infinity();
  out.mu_hat = -std::numeric_limits<double>::infinity();
  for (const Eigen::Vector2d& p : ball_points(theta_star.vector(), epsilon, grid, true)) {
    const Eigen::Matrix2d neg = -stats.hessian(Theta::from_vector(p));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(neg);
    BallRow row;
    row.theta = p;
    row.min_eig = eig.eigenvalues()[0];
    row.max_eig = eig.eigenvalues()[1];
    out.lambda_hat = std::min(out.lambda_hat, row.min_eig);
    out.mu_hat = std::max(out.mu_hat, row.max_eig);
    out.rows.push_back(row);
  }
  out.concave = out.lambda_hat > 0.0;
  return out;
}

GammaEstimate estimate_gamma(const Theta& theta_star, double epsilon, const ModelBundle& model,
                             const ObservationSet& obs, const BallGrid& grid, std::size_t threads) {
  require_ball_in_box(theta_star, epsilon, model.box);
  const ResidualStats star = oracle_estep(model, theta_star, obs, threads).stats;
  GammaEstimate out;
  for (const Eigen::Vector2d& p : ball_points(theta_star.vector(), epsilon, grid, false)) {
    const Theta th = Theta::from_vector(p);
    const ResidualStats here = oracle_estep(model, th, obs, threads).stats;
    BallRow row;
    row.theta = p;
    row.gamma_ratio = (here.grad(th) - star.grad(th)).norm() / (p - theta_star.vector()).norm();
    out.gamma_hat = std::max(out.gamma_hat, row.gamma_ratio);
    out.rows.push_back(row);
  }
  return out;
}

double estimate_fos_gamma(const Theta& theta_star, double epsilon, const ModelBundle& model,
                          const ObservationSet& obs, const BallGrid& grid, std::size_t threads) {
  require_ball_in_box(theta_star, epsilon, model.box);
  const ResidualStats star = oracle_estep(model, theta_star, obs, threads).stats;
  double best = 0.0;
  for (const Eigen::Vector2d& p : ball_points(theta_star.vector(), epsilon, grid, false)) {
    const Theta th = Theta::from_vector(p);
    const ResidualStats here = oracle_estep(model, th, obs, threads).stats;
    const Theta mth = maximize_q(here, model.box, th).theta;
    best = std::max(best, (star.grad(mth) - here.grad(mth)).norm() / (p - theta_star.vector()).norm());
  }
  return best;
}

Theta empirical_fixed_point(const ModelBundle& model, const ObservationSet& obs, const Theta& start,
                            double tol, long max_iterations, std::size_t threads) {
  require(model.box.contains(start.a2(), start.b2()), "empirical_fixed_point: start must lie in the box");
  auto score = [&](const Eigen::Vector2d& v) {
    const Theta th = Theta::from_vector(v);
    return oracle_estep(model, th, obs, threads).stats.grad(th);
  };
  Eigen::Vector2d x = start.vector();
  Eigen::Vector2d g = score(x);
  for (long it = 0; it < max_iterations && g.norm() > tol; ++it) {
    Eigen::Matrix2d jac;
    for (int k = 0; k < 2; ++k) {
      const double h = 1e-6 * std::max(x[k], 1e-3);
      Eigen::Vector2d up = x;
      Eigen::Vector2d dn = x;
      up[k] += h;
      dn[k] -= h;
      jac.col(k) = (score(model.box.project(up)) - score(model.box.project(dn))) /
                   (model.box.project(up)[k] - model.box.project(dn)[k]);
    }
    const Eigen::Vector2d step = -jac.fullPivLu().solve(g);
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      const Eigen::Vector2d xn = model.box.project(x + t * step);
      const Eigen::Vector2d gn = score(xn);
      if (gn.norm() < g.norm()) {
        x = xn;
        g = gn;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return Theta::from_vector(x);
}

StepInterval step_size_interval(double lambda, double mu, double gamma) {
  require(lambda > 0.0 && std::isfinite(lambda), "step_size_interval: lambda must be positive");
  require(mu > 0.0 && std::isfinite(mu), "step_size_interval: mu must be positive");
  require(gamma >= 0.0 && std::isfinite(gamma), "step_size_interval: gamma must be non-negative");
  StepInterval out;
  out.c = 2.0 * mu * lambda / (mu + lambda);
  if (gamma >= out.c) return out;
  out.empty = false;
  if (gamma == 0.0) {
    out.lo = 0.0;
    out.hi = 1.0 / out.c;
    return out;
  }
  out.lo = std::max(0.0, (2.0 * gamma - out.c) / (gamma * gamma));
  out.hi = std::min(1.0 / out.c, 1.0 / gamma);
  return out;
}

double gradient_rate_bound(double tau, double c, double gamma) {
  return std::sqrt(std::max(0.0, 1.0 - tau * c)) + tau * gamma;
}

std::string to_string(ContractionMode m) {
  return m == ContractionMode::em_operator ? "em_operator" : "gradient";
}

ContractionRun contraction_diagnostics(const Theta& theta_star, const Theta& theta0,
                                       const ModelBundle& model, const ObservationSet& obs,
                                       ContractionMode mode, double tau, long rounds,
                                       double lambda_hat, double mu_hat, double gamma_hat,
                                       std::size_t threads) {
  require(model.box.contains(theta0.a2(), theta0.b2()), "contraction_diagnostics: theta0 must lie in the box");
  require(rounds >= 1, "contraction_diagnostics: rounds must be at least 1");
  require(mode == ContractionMode::em_operator || tau > 0.0, "contraction_diagnostics: tau must be positive");
  ContractionRun run;
  run.mode = mode;
  run.tau = tau;
  if (mode == ContractionMode::em_operator) {
    run.predicted_rate = lambda_hat > 0.0 ? gamma_hat / lambda_hat : std::numeric_limits<double>::infinity();
  } else {
    const double c = 2.0 * mu_hat * lambda_hat / (mu_hat + lambda_hat);
    run.predicted_rate = gradient_rate_bound(tau, c, gamma_hat);
  }
  const Eigen::Vector2d star = theta_star.vector();
  Eigen::Vector2d x = theta0.vector();
  run.iterates.push_back(x);
  int above = 0;
  for (long k = 0; k < rounds; ++k) {
    Eigen::Vector2d xn;
    if (mode == ContractionMode::em_operator) {
      xn = population_em_operator(Theta::from_vector(x), model, obs, threads).theta.vector();
    } else {
      const ResidualStats stats = oracle_estep(model, Theta::from_vector(x), obs, threads).stats;
      xn = model.box.project(x + tau * stats.grad(Theta::from_vector(x)));
    }
    const double d0 = (x - star).norm();
    const double ratio = d0 < kRatioFloor ? std::numeric_limits<double>::quiet_NaN() : (xn - star).norm() / d0;
    run.ratios.push_back(ratio);
    run.iterates.push_back(xn);
    if (std::isfinite(ratio)) run.max_ratio = std::max(run.max_ratio, ratio);
    above = (std::isfinite(ratio) && ratio > 1.0) ? above + 1 : 0;
    x = xn;
    if (above >= 5) {
      run.diverged = true;
      break;
    }
  }
  return run;
}

double posterior_lipschitz_probe(const Eigen::VectorXd& y,
                                 const std::vector<std::pair<Theta, Theta>>& pairs,
                                 const ModelBundle& model) {
  model.validate();
  require(model.latent_dim() == 1, "posterior_lipschitz_probe: 1-D latent models only");
  require(!pairs.empty(), "posterior_lipschitz_probe: need at least one pair");
  double best = 0.0;
  for (const auto& [t1, t2] : pairs) {
    const double dist = (t1.vector() - t2.vector()).norm();
    require(dist > 0.0, "posterior_lipschitz_probe: the two parameters of a pair must differ");
    for (int w = 0;; ++w) {
      const std::vector<GridAxis> axes = default_axes(*model.prior, model.grid, w);
      try {
        const GridPosterior p1 = grid_posterior(t1, *model.forward, *model.prior, y, axes, model.grid.boundary_weight);
        const GridPosterior p2 = grid_posterior(t2, *model.forward, *model.prior, y, axes, model.grid.boundary_weight);
        const double w1 = w1_grid(p1.blocks()[0].weights, p2.blocks()[0].weights, axes[0].spacing());
        best = std::max(best, w1 / dist);
        break;
      } catch (const GridBoundaryError&) {
        if (w >= model.grid.max_widenings) throw;
      }
    }
  }
  return best;
}

nlohmann::json to_json(const FisherInfo& f) {
  return {
      {"A", f.a},
      {"B", f.b},
      {"C", f.c},
      {"matrix", {{f.matrix(0, 0), f.matrix(0, 1)}, {f.matrix(1, 0), f.matrix(1, 1)}}},
      {"eigenvalues", {f.eigenvalues[0], f.eigenvalues[1]}},
      {"ac_minus_b2", f.determinant_minor()},
      {"positive_definite", f.positive_definite},
      {"singular", !f.positive_definite},
      {"quadrature", f.quadrature},
      {"nodes", f.nodes},
  };
}

nlohmann::json to_json(const TheoryReport& r) {
  nlohmann::json j;
  j["fisher"] = r.fisher ? to_json(*r.fisher) : nlohmann::json(nullptr);
  j["epsilon"] = r.epsilon;
  j["lambda_hat"] = r.lambda_hat;
  j["mu_hat"] = r.mu_hat;
  j["gamma_hat"] = r.gamma_hat;
  j["estimates_are_grid_based"] = true;
  j["concavity_violated"] = r.concavity_violated;
  j["c"] = r.c;
  j["tau_interval"] = r.tau_interval.empty ? nlohmann::json(nullptr)
                                           : nlohmann::json{r.tau_interval.lo, r.tau_interval.hi};
  j["fos_gamma_hat"] = r.fos_gamma_hat ? nlohmann::json(*r.fos_gamma_hat) : nlohmann::json(nullptr);
  j["contraction_rate_pred"] = r.contraction_rate_pred;
  j["contraction_rate_observed"] = r.contraction_rate_observed;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json it = nlohmann::json::array();
    for (const auto& v : run.iterates) it.push_back({v[0], v[1]});
    nlohmann::json ratios = nlohmann::json::array();
    for (double v : run.ratios) ratios.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    runs.push_back({{"mode", to_string(run.mode)},
                    {"tau", run.tau},
                    {"iterates", it},
                    {"ratios", ratios},
                    {"predicted_rate", run.predicted_rate},
                    {"max_ratio", run.max_ratio},
                    {"diverged", run.diverged}});
  }
  j["contraction_runs"] = runs;
  j["notes"] = r.notes;
  return j;
}

}  // namespace mixem

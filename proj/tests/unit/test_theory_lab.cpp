#include "mixem/error.hpp"
#include "mixem/fisher.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/metrics.hpp"
#include "mixem/observations.hpp"
#include "mixem/prior.hpp"
#include "mixem/q_function.hpp"
#include "mixem/quadrature.hpp"
#include "mixem/theory.hpp"

#include <doctest.h>

#include <cmath>

using namespace mixem;

namespace {

ModelBundle identity_model() {
  return ModelBundle{make_identity(1), GaussianPrior::standard(1), ThetaBox{1e-3, 1.0, 1e-3, 1.0}, GridSpec{}};
}

ObservationSet stratified(const ModelBundle& model, const Theta& theta, long n, std::uint64_t seed) {
  Rng rng(seed);
  return stratified_observations(theta, *model.forward, *model.prior, n, rng);
}

Eigen::Vector3d monte_carlo_abc(const Theta& th, long draws, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (long k = 0; k < draws; ++k) {
    const double x = rng.normal();
    const double f2 = x * x;
    const double inv = 1.0 / std::pow(th.a2() + th.b2() * f2, 2);
    s += Eigen::Vector3d(inv, f2 * inv, f2 * f2 * inv);
  }
  return s / static_cast<double>(draws);
}

}  // namespace

TEST_CASE("constant forward gives a rank-one Fisher matrix") {
  const auto f = make_constant(1, Eigen::VectorXd::Constant(1, 1.7));
  const FisherInfo fi = fisher_information(Theta(0.2, 0.3), *f, *GaussianPrior::standard(1));
  CHECK(std::abs(fi.b * fi.b - fi.a * fi.c) <= 1e-12 * fi.a * fi.c);
  CHECK(std::abs(fi.eigenvalues[0]) <= 1e-10);
  CHECK_FALSE(fi.positive_definite);
}

TEST_CASE("Fisher integrals agree with Monte-Carlo") {
  const Theta th(1.0, 1.0);
  const FisherInfo fi = fisher_information(th, *make_identity(1), *GaussianPrior::standard(1));
  const Eigen::Vector3d mc = monte_carlo_abc(th, 1000000, 99);
  CHECK(std::abs(fi.a / mc[0] - 1.0) <= 0.01);
  CHECK(std::abs(fi.b / mc[1] - 1.0) <= 0.01);
  CHECK(std::abs(fi.c / mc[2] - 1.0) <= 0.01);
  CHECK(fi.positive_definite);
  CHECK(fi.eigenvalues[0] > 0.0);
  CHECK(fi.matrix(0, 1) == fi.matrix(1, 0));
  CHECK(fi.matrix(0, 0) == doctest::Approx(0.5 * fi.a).epsilon(1e-15));
}

TEST_CASE("Fisher equals the negative posterior-expected Hessian") {
  const ModelBundle model = identity_model();
  const Theta th(0.05, 0.2);
  const FisherInfo fi = fisher_information(th, *model.forward, *model.prior);
  const ObservationSet obs = stratified(model, th, 8000, 17);
  Eigen::Matrix2d neg = Eigen::Matrix2d::Zero();
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    const Eigen::VectorXd y = obs.at(k);
    const GridPosterior g = grid_posterior(th, *model.forward, *model.prior, y);
    const Eigen::VectorXd h = g.expectation([&](const Eigen::VectorXd& x) {
      const Eigen::Matrix2d m = hessian_theta_log_likelihood(th, x, y);
      return Eigen::Vector3d(m(0, 0), m(0, 1), m(1, 1)).eval();
    });
    neg(0, 0) -= obs.weights[k] * h[0];
    neg(0, 1) -= obs.weights[k] * h[1];
    neg(1, 1) -= obs.weights[k] * h[2];
  }
  neg(1, 0) = neg(0, 1);
  CHECK((neg - fi.matrix).norm() <= 0.01 * fi.matrix.norm());
}

TEST_CASE("Fisher Cauchy-Schwarz over built-in models") {
  const auto prior = GaussianPrior::standard(1);
  const std::vector<ForwardPtr> models = {make_identity(1), make_scalar_nonlinear("tanh", 1),
                                          make_scalar_nonlinear("sin", 1), make_scalar_nonlinear("logistic", 1),
                                          make_blur(1, 1.0)};
  for (const auto& f : models) {
    for (double a2 : {0.01, 0.1, 1.0}) {
      for (double b2 : {0.01, 0.3, 1.0}) {
        const FisherInfo fi = fisher_information(Theta(a2, b2), *f, *prior);
        CHECK(fi.determinant_minor() >= -1e-10);
        CHECK(fi.a > 0.0);
      }
    }
  }
  CHECK(fisher_information(Theta(0.1, 0.1), *make_identity(1), *prior).eigenvalues[0] >= 1e-8);
  const auto shifted = GaussianPrior::diagonal(Eigen::VectorXd::Constant(1, 50.0), Eigen::VectorXd::Ones(1));
  GridSpec narrow;
  narrow.half_width = 0.5;
  CHECK_THROWS_AS(fisher_information(Theta(0.1, 0.1), *make_identity(1), *shifted, narrow), GridBoundaryError);
}

TEST_CASE("lambda and mu bracket the Fisher eigenvalues") {
  const ModelBundle model = identity_model();
  const Theta star(0.05, 0.1);
  const ObservationSet obs = stratified(model, star, 8192, 3);
  const FisherInfo fi = fisher_information(star, *model.forward, *model.prior);
  const LambdaMu lm = estimate_lambda_mu(star, 0.005, model, obs);
  CHECK(lm.concave);
  CHECK(lm.lambda_hat <= lm.mu_hat);
  CHECK(lm.lambda_hat <= fi.eigenvalues[0] * 1.01);
  CHECK(lm.mu_hat >= fi.eigenvalues[1] * 0.99);
  CHECK(lm.rows.size() == 16 * 4 + 1);

  const ObservationSet dense = quadrature_observations(star, *model.forward, *model.prior, 48);
  const LambdaMu small = estimate_lambda_mu(star, 1e-5, model, dense);
  CHECK(std::abs(small.lambda_hat / fi.eigenvalues[0] - 1.0) <= 0.02);
  CHECK_THROWS_AS(estimate_lambda_mu(star, 0.2, model, obs), ContractViolation);
}

TEST_CASE("gamma vanishes when the posterior ignores theta") {
  const ModelBundle model{make_constant(1, Eigen::VectorXd::Constant(1, 0.8)), GaussianPrior::standard(1),
                          ThetaBox{1e-3, 1.0, 1e-3, 1.0}, GridSpec{}};
  const Theta star(0.3, 0.3);
  const ObservationSet obs = stratified(model, star, 64, 4);
  CHECK(estimate_gamma(star, 0.05, model, obs).gamma_hat <= 1e-10);
}

TEST_CASE("gamma is non-increasing over nested balls") {
  const ModelBundle model = identity_model();
  const Theta star(0.3, 0.3);
  const ObservationSet obs = stratified(model, star, 512, 5);
  const double g10 = estimate_gamma(star, 0.1, model, obs).gamma_hat;
  const double g05 = estimate_gamma(star, 0.05, model, obs).gamma_hat;
  const double g01 = estimate_gamma(star, 0.01, model, obs).gamma_hat;
  CHECK(g05 <= 1.05 * g10);
  CHECK(g01 <= 1.05 * g05);
}

TEST_CASE("denoising toy measurement") {
  const ModelBundle model = identity_model();
  const Theta star(0.01, 0.09);
  const ObservationSet obs = stratified(model, star, 1024, 6);
  const LambdaMu lm = estimate_lambda_mu(star, 0.005, model, obs);
  const GammaEstimate g = estimate_gamma(star, 0.005, model, obs);
  const StepInterval iv = step_size_interval(lm.lambda_hat, lm.mu_hat, g.gamma_hat);
  MESSAGE("lambda_hat " << lm.lambda_hat << " mu_hat " << lm.mu_hat << " gamma_hat " << g.gamma_hat << " c " << iv.c);
  CHECK(std::isfinite(g.gamma_hat));
  CHECK(g.gamma_hat >= 0.0);
  CHECK(iv.empty == (g.gamma_hat >= iv.c));
}

TEST_CASE("step size interval examples") {
  const StepInterval a = step_size_interval(0.2, 1.0, 0.0);
  CHECK(a.c == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(a.empty);
  CHECK(a.lo == 0.0);
  CHECK(a.hi == doctest::Approx(3.0).epsilon(1e-15));

  const StepInterval b = step_size_interval(0.2, 1.0, 0.1);
  CHECK_FALSE(b.empty);
  CHECK(b.lo == 0.0);
  CHECK(b.hi == doctest::Approx(3.0).epsilon(1e-15));
  for (int k = 0; k < 10000; ++k) {
    const double tau = b.lo + (b.hi - b.lo) * (k + 0.5) / 10000.0;
    CHECK(gradient_rate_bound(tau, b.c, 0.1) < 1.0);
  }
  CHECK(gradient_rate_bound(-1e-3, b.c, 0.1) >= 1.0);

  // gamma close to c makes the lower end bind.
  const StepInterval d = step_size_interval(0.2, 1.0, 0.3);
  CHECK(d.lo > 0.0);
  CHECK(gradient_rate_bound(d.lo * (1 - 1e-6), d.c, 0.3) >= 1.0);
  CHECK(gradient_rate_bound(0.5 * (d.lo + d.hi), d.c, 0.3) < 1.0);

  CHECK(step_size_interval(0.2, 1.0, 0.4).empty);
  CHECK_THROWS_AS(step_size_interval(0.0, 1.0, 0.1), ContractViolation);
  CHECK_THROWS_AS(step_size_interval(0.2, -1.0, 0.1), ContractViolation);
  CHECK_THROWS_AS(step_size_interval(0.2, 1.0, -0.1), ContractViolation);
}

TEST_CASE("step size interval holds on random constants") {
  Rng rng(7);
  for (int k = 0; k < 1000; ++k) {
    const double lambda = 0.01 + rng.uniform();
    const double mu = lambda * (1.0 + 10.0 * rng.uniform());
    const double c = 2 * mu * lambda / (mu + lambda);
    CHECK(c >= lambda);
    const double gamma = c * rng.uniform();
    const StepInterval iv = step_size_interval(lambda, mu, gamma);
    REQUIRE_FALSE(iv.empty);
    for (int j = 0; j < 100; ++j) {
      const double tau = iv.lo + (iv.hi - iv.lo) * (j + 0.5) / 100.0;
      CHECK(gradient_rate_bound(tau, iv.c, gamma) < 1.0);
    }
    CHECK(step_size_interval(lambda, mu, c * (1.0 + rng.uniform())).empty);
  }
  CHECK(step_size_interval(0.5, 0.5, 0.0).c == 0.5);
}

TEST_CASE("repeated measurements sit between lambda_hat and c") {
  const ModelBundle model{make_linear(Eigen::MatrixXd::Ones(16, 1)), GaussianPrior::standard(1),
                          ThetaBox{1e-3, 1.0, 1e-3, 1.0}, GridSpec{}};
  Rng rng(11, 0);
  const ObservationSet obs = stratified_observations(Theta(0.2, 0.2), *model.forward, *model.prior, 512, rng);
  const Theta center = empirical_fixed_point(model, obs, Theta(0.2, 0.2));
  const LambdaMu lm = estimate_lambda_mu(center, 0.02, model, obs);
  const GammaEstimate g = estimate_gamma(center, 0.02, model, obs);
  const StepInterval iv = step_size_interval(lm.lambda_hat, lm.mu_hat, g.gamma_hat);
  MESSAGE("lambda_hat " << lm.lambda_hat << " mu_hat " << lm.mu_hat << " gamma_hat " << g.gamma_hat << " c " << iv.c);
  CHECK(lm.lambda_hat <= g.gamma_hat);
  CHECK(g.gamma_hat < iv.c);
  REQUIRE_FALSE(iv.empty);

  // The whole relaxed interval lies beyond 2 / (mu + lambda).
  const double classic = 2.0 / (lm.mu_hat + lm.lambda_hat);
  CHECK(iv.lo > classic);

  const Theta start = Theta::from_vector(center.vector() + Eigen::Vector2d(0.009, 0.009));
  const ContractionRun inside = contraction_diagnostics(center, start, model, obs, ContractionMode::gradient,
                                                        0.5 * (iv.lo + iv.hi), 20, lm.lambda_hat, lm.mu_hat,
                                                        g.gamma_hat);
  CHECK(inside.predicted_rate < 1.0);
  CHECK(inside.max_ratio > 1.0);
  const ContractionRun classic_run = contraction_diagnostics(center, start, model, obs, ContractionMode::gradient,
                                                             classic, 20, lm.lambda_hat, lm.mu_hat, g.gamma_hat);
  CHECK(classic_run.predicted_rate >= 1.0);
  CHECK(classic_run.max_ratio < 1.0);
  const ContractionRun em = contraction_diagnostics(center, start, model, obs, ContractionMode::em_operator, 0.0, 20,
                                                    lm.lambda_hat, lm.mu_hat, g.gamma_hat);
  CHECK(em.max_ratio < 0.5);
}

TEST_CASE("gamma at or above lambda admits no bound below one up to 2 / (mu + lambda)") {
  Rng rng(12);
  for (int k = 0; k < 500; ++k) {
    const double lambda = 0.01 + rng.uniform();
    const double mu = lambda * (1.0 + 10.0 * rng.uniform());
    const double c = 2.0 * mu * lambda / (mu + lambda);
    const double gamma = lambda + (c - lambda) * rng.uniform();
    const double classic = 2.0 / (mu + lambda);
    for (int j = 1; j <= 100; ++j) {
      CHECK(gradient_rate_bound(classic * j / 100.0, c, gamma) >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("contraction diagnostics") {
  const ModelBundle model = identity_model();
  const Theta star(0.05, 0.1);
  const ObservationSet obs = stratified(model, star, 512, 8);
  const Theta center = empirical_fixed_point(model, obs, star);
  const QEstimate q = q_function(center, center, model, obs);
  CHECK(q.grad.norm() <= 1e-8);

  const ContractionRun fixed =
      contraction_diagnostics(center, center, model, obs, ContractionMode::em_operator, 0.0, 3, 1.0, 2.0, 0.5);
  for (double r : fixed.ratios) CHECK(std::isnan(r));
  CHECK_FALSE(fixed.diverged);

  const LambdaMu lm = estimate_lambda_mu(center, 0.005, model, obs);
  const double tau = 2.0 / (lm.mu_hat + lm.lambda_hat);
  const Theta start = Theta::from_vector(center.vector() + Eigen::Vector2d(0.003, 0.003));
  const ContractionRun run =
      contraction_diagnostics(center, start, model, obs, ContractionMode::gradient, tau, 10, lm.lambda_hat, lm.mu_hat, 0.0);
  CHECK(run.iterates.size() == 11);
  CHECK(run.ratios.size() == 10);
  CHECK_FALSE(run.diverged);
  CHECK(run.max_ratio < 1.0);
  CHECK(run.predicted_rate == doctest::Approx(gradient_rate_bound(tau, 2 * lm.mu_hat * lm.lambda_hat / (lm.mu_hat + lm.lambda_hat), 0.0)));
}

TEST_CASE("w1 and tv metrics") {
  Rng rng(9);
  const Eigen::VectorXd a = rng.normal_vector(500);
  CHECK(w1_1d(a, a) == 0.0);
  CHECK(w1_1d(Eigen::VectorXd::Zero(7), Eigen::VectorXd::Ones(7)) == 1.0);
  CHECK(w1_1d(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(5)) == 1.0);
  const Eigen::VectorXd n0 = rng.normal_vector(100000);
  const Eigen::VectorXd n1 = (rng.normal_vector(100000).array() + 1.0).matrix();
  CHECK(std::abs(w1_1d(n0, n1) - 1.0) <= 0.02);
  CHECK_THROWS_AS(w1_1d(Eigen::VectorXd(0), a), ContractViolation);

  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(40), y = rng.normal_vector(60), z = 2.0 * rng.normal_vector(50);
    CHECK(w1_1d(x, y) == w1_1d(y, x));
    CHECK(w1_1d(x, z) <= w1_1d(x, y) + w1_1d(y, z) + 1e-12);
  }

  const Eigen::VectorXd p = (-uniform_nodes(-5, 5, 101).array().square() / 2).exp().matrix();
  CHECK(std::abs(tv_grid(p, p, 0.1)) <= 1e-14);
  Eigen::VectorXd q1 = Eigen::VectorXd::Zero(4), q2 = Eigen::VectorXd::Zero(4);
  q1[0] = 1.0;
  q2[3] = 1.0;
  CHECK(tv_grid(q1, q2, 1.0) == 1.0);
  CHECK(w1_grid(q1, q2, 0.5) == doctest::Approx(1.5).epsilon(1e-15));

  Eigen::MatrixXd m0(2000, 3), m1(2000, 3);
  for (Eigen::Index r = 0; r < 2000; ++r) {
    m0.row(r) = rng.normal_vector(3).transpose();
    m1.row(r) = m0.row(r);
  }
  CHECK(w1_sliced(m0, m1) == 0.0);
  CHECK(w1_sliced(m0.leftCols(1), (m0.leftCols(1).array() + 1.0).matrix()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("posterior Lipschitz probe") {
  ModelBundle model = identity_model();
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 1.0);
  const std::vector<std::pair<Theta, Theta>> pairs = {{Theta(0.05, 0.1), Theta(0.06, 0.1)},
                                                      {Theta(0.05, 0.1), Theta(0.05, 0.11)},
                                                      {Theta(0.2, 0.2), Theta(0.21, 0.19)}};
  const double base = posterior_lipschitz_probe(y, pairs, model);
  CHECK(std::isfinite(base));
  CHECK(base > 0.0);
  model.grid.resolution = 2 * model.grid.resolution - 1;
  CHECK(std::abs(posterior_lipschitz_probe(y, pairs, model) / base - 1.0) <= 0.02);
  model.grid = GridSpec{};
  CHECK_THROWS_AS(posterior_lipschitz_probe(y, {{Theta(0.1, 0.1), Theta(0.1, 0.1)}}, model), ContractViolation);

  std::vector<double> logs_y, logs_l;
  for (double yv : {1.0, 2.0, 4.0, 8.0}) {
    logs_y.push_back(std::log(yv));
    logs_l.push_back(std::log(posterior_lipschitz_probe(Eigen::VectorXd::Constant(1, yv), pairs, model)));
  }
  const double my = (logs_y[0] + logs_y[1] + logs_y[2] + logs_y[3]) / 4;
  const double ml = (logs_l[0] + logs_l[1] + logs_l[2] + logs_l[3]) / 4;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < 4; ++k) {
    sxy += (logs_y[k] - my) * (logs_l[k] - ml);
    sxx += (logs_y[k] - my) * (logs_y[k] - my);
  }
  const double slope = sxy / sxx;
  MESSAGE("Lipschitz log-log slope " << slope);
  CHECK(slope <= 2.3);
}

TEST_CASE("theory report json") {
  TheoryReport r;
  r.fisher = fisher_information(Theta(0.1, 0.1), *make_identity(1), *GaussianPrior::standard(1));
  r.lambda_hat = 0.2;
  r.mu_hat = 1.0;
  r.tau_interval = step_size_interval(0.2, 1.0, 0.1);
  r.c = r.tau_interval.c;
  const nlohmann::json j = to_json(r);
  CHECK(j.at("c").get<double>() == doctest::Approx(1.0 / 3.0));
  CHECK(j.at("fisher").at("positive_definite").get<bool>());
  CHECK(j.contains("tau_interval"));
}

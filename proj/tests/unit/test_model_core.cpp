#include "mixem/error.hpp"
#include "mixem/forward_model.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/posterior.hpp"
#include "mixem/prior.hpp"
#include "mixem/quadrature.hpp"
#include "mixem/rng.hpp"
#include "mixem/theta.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace mixem;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Product of univariate normal densities, evaluated without the library.
double direct_log_density(const Theta& th, const Eigen::VectorXd& fx, const Eigen::VectorXd& y) {
  double p = 1.0;
  for (Eigen::Index i = 0; i < fx.size(); ++i) {
    const double var = th.a2() + th.b2() * fx[i] * fx[i];
    const double r = y[i] - fx[i];
    p *= std::exp(-r * r / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
  }
  return std::log(p);
}

struct Instance {
  Theta theta;
  Eigen::VectorXd fx;
  Eigen::VectorXd y;
};

Instance random_instance(Rng& rng) {
  const ThetaBox box{0.05, 1.0, 0.05, 1.0};
  const double a2 = box.a_min + 0.1 + 0.7 * rng.uniform();
  const double b2 = box.b_min + 0.1 + 0.7 * rng.uniform();
  const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(4));
  Eigen::VectorXd fx = rng.normal_vector(n);
  Eigen::VectorXd y = fx + rng.normal_vector(n);
  return {Theta(a2, b2), fx, y};
}

}  // namespace

TEST_CASE("sigma examples") {
  CHECK(sigma(Theta(1, 0), vec({5}))[0] == 1.0);
  CHECK(sigma(Theta(1, 1), vec({1}))[0] == 2.0);
  CHECK(sigma(Theta(0.01, 0.09), vec({0.5}))[0] == doctest::Approx(0.0325).epsilon(1e-14));
}

TEST_CASE("sigma is bounded below by a_min") {
  Rng rng(11);
  const ThetaBox box{0.02, 1.0, 0.0, 1.0};
  for (int k = 0; k < 200; ++k) {
    const Theta th(box.a_min + rng.uniform() * 0.5, rng.uniform(), box);
    const Eigen::VectorXd s = sigma(th, 10.0 * rng.normal_vector(5));
    CHECK(s.minCoeff() >= box.a_min);
  }
}

TEST_CASE("log_likelihood examples") {
  CHECK(log_likelihood(Theta(1, 0), vec({0}), vec({0})) == doctest::Approx(-0.918938533204673).epsilon(1e-13));
  CHECK(log_likelihood(Theta(1, 1), vec({1}), vec({1})) == doctest::Approx(-0.5 * std::log(4 * std::numbers::pi)).epsilon(1e-14));
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd fx = rng.normal_vector(3);
    const Eigen::VectorXd y = fx + 0.5 * rng.normal_vector(3);
    const Theta th(0.25, 0.25);
    CHECK(log_likelihood(th, fx, y) == doctest::Approx(direct_log_density(th, fx, y)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(log_likelihood(Theta(1, 1), vec({1, 2}), vec({1})), ContractViolation);
}

TEST_CASE("grad_theta examples") {
  const Eigen::Vector2d g0 = grad_theta_log_likelihood(Theta(1, 0), vec({0}), vec({0}));
  CHECK(g0[0] == -0.5);
  CHECK(g0[1] == 0.0);
  const Eigen::Vector2d g1 = grad_theta_log_likelihood(Theta(1, 0), vec({1}), vec({2}));
  CHECK(g1[0] == 0.0);
  CHECK(g1[1] == 0.0);
  CHECK_THROWS_AS(grad_theta_log_likelihood(Theta(1, 1), vec({1}), vec({1, 1})), ContractViolation);
}

TEST_CASE("hessian_theta examples") {
  const Eigen::Matrix2d h0 = hessian_theta_log_likelihood(Theta(1, 0), vec({0}), vec({0}));
  CHECK(h0(0, 0) == 0.5);
  CHECK(h0(0, 1) == 0.0);
  CHECK(h0(1, 0) == 0.0);
  CHECK(h0(1, 1) == 0.0);
  const Eigen::Matrix2d h1 = hessian_theta_log_likelihood(Theta(1, 0), vec({0}), vec({1}));
  CHECK(h1(0, 0) == -0.5);
  CHECK(h1(0, 1) == 0.0);
  CHECK(h1(1, 1) == 0.0);
}

TEST_CASE("derivatives match central finite differences on random instances") {
  Rng rng(2024);
  const double h = 1e-4;
  for (int k = 0; k < 100; ++k) {
    const Instance in = random_instance(rng);
    const double a = in.theta.a2(), b = in.theta.b2();
    auto ll = [&](double a2, double b2) { return log_likelihood(Theta(a2, b2), in.fx, in.y); };
    auto gr = [&](double a2, double b2) { return grad_theta_log_likelihood(Theta(a2, b2), in.fx, in.y); };
    const Eigen::Vector2d g = gr(a, b);
    const Eigen::Vector2d fd((ll(a + h, b) - ll(a - h, b)) / (2 * h), (ll(a, b + h) - ll(a, b - h)) / (2 * h));
    CHECK((g - fd).norm() / std::max(1e-8, g.norm()) <= 1e-6);
    const Eigen::Matrix2d hs = hessian_theta_log_likelihood(in.theta, in.fx, in.y);
    CHECK(hs(0, 1) == hs(1, 0));
    Eigen::Matrix2d fdh;
    fdh.col(0) = (gr(a + h, b) - gr(a - h, b)) / (2 * h);
    fdh.col(1) = (gr(a, b + h) - gr(a, b - h)) / (2 * h);
    CHECK((hs - fdh).norm() / std::max(1e-8, hs.norm()) <= 1e-5);
  }
}

TEST_CASE("joint_log_density examples") {
  const auto f = make_identity(1);
  const auto prior = GaussianPrior::standard(1);
  CHECK(joint_log_density(Theta(1, 0), vec({0}), vec({0}), *f, *prior) ==
        doctest::Approx(-1.8378770664093453).epsilon(1e-13));
  Rng rng(5);
  const auto g = make_scalar_nonlinear("tanh", 3);
  const auto p3 = GaussianPrior::standard(3);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(3);
    const Eigen::VectorXd y = rng.normal_vector(3);
    const Theta th(0.1 + rng.uniform(), rng.uniform());
    double expect = direct_log_density(th, x.array().tanh().matrix(), y);
    for (Eigen::Index i = 0; i < 3; ++i) expect += -0.5 * std::log(2 * std::numbers::pi) - 0.5 * x[i] * x[i];
    CHECK(joint_log_density(th, x, y, *g, *p3) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("theta gradient of the joint equals the likelihood gradient") {
  const auto f = make_identity(2);
  const auto prior = GaussianPrior::standard(2);
  Rng rng(8);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(2), y = rng.normal_vector(2);
    const double a = 0.2 + rng.uniform(), b = 0.2 + rng.uniform();
    auto j = [&](double a2, double b2) { return joint_log_density(Theta(a2, b2), x, y, *f, *prior); };
    const Eigen::Vector2d fd((j(a + h, b) - j(a - h, b)) / (2 * h), (j(a, b + h) - j(a, b - h)) / (2 * h));
    const Eigen::Vector2d g = grad_theta_log_likelihood(Theta(a, b), x, y);
    CHECK((fd - g).norm() <= 1e-7 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("sample_observation moments and determinism") {
  const auto f = make_identity(1);
  const long draws = 100000;
  auto empirical_var = [&](const Theta& th, double x0) {
    Rng rng(77);
    double s = 0.0, s2 = 0.0;
    for (long k = 0; k < draws; ++k) {
      const double r = sample_observation(th, vec({x0}), *f, rng)[0] - x0;
      s += r;
      s2 += r * r;
    }
    return s2 / draws - (s / draws) * (s / draws);
  };
  CHECK(std::abs(empirical_var(Theta(0.3, 0.0), 2.0) / 0.3 - 1.0) <= 0.03);
  CHECK(std::abs(empirical_var(Theta(0.01, 0.09), 1.0) / 0.10 - 1.0) <= 0.03);

  Rng r1(9), r2(9);
  const Eigen::VectorXd x = vec({0.3, -1.2});
  const auto f2 = make_identity(2);
  CHECK(sample_observation(Theta(0.1, 0.2), x, *f2, r1) == sample_observation(Theta(0.1, 0.2), x, *f2, r2));
}

TEST_CASE("likelihood gradient has zero mean under the model") {
  const auto f = make_scalar_nonlinear("sin", 2);
  const Eigen::VectorXd x = vec({0.7, -1.3});
  const Eigen::VectorXd fx = f->evaluate(x);
  const Theta th(0.05, 0.2);
  Rng rng(31);
  const long draws = 100000;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  for (long k = 0; k < draws; ++k) {
    const Eigen::Vector2d g = grad_theta_log_likelihood(th, fx, sample_observation(th, x, *f, rng));
    mean += g;
    sq += g.cwiseProduct(g);
  }
  mean /= draws;
  const Eigen::Vector2d se = ((sq / draws - mean.cwiseProduct(mean)) / draws).cwiseSqrt();
  CHECK(std::abs(mean[0]) <= 3 * se[0]);
  CHECK(std::abs(mean[1]) <= 3 * se[1]);
}

TEST_CASE("theta and box contracts") {
  CHECK_THROWS_AS(ThetaBox({0.0, 1.0, 0.0, 1.0}).validate(), ContractViolation);
  CHECK_THROWS_AS(ThetaBox({0.5, 0.1, 0.0, 1.0}).validate(), ContractViolation);
  CHECK_THROWS_AS(ThetaBox({0.1, 1.0, -0.1, 1.0}).validate(), ContractViolation);
  CHECK_NOTHROW(ThetaBox({0.1, 1.0, 0.0, 1.0}).validate());
  CHECK_THROWS_AS(Theta(std::numeric_limits<double>::quiet_NaN(), 0.1), ContractViolation);
  const ThetaBox box{0.01, 1.0, 0.0, 0.5};
  CHECK_THROWS_AS(Theta(0.001, 0.1, box), ContractViolation);
  const Eigen::Vector2d p = box.project(Eigen::Vector2d(-3.0, 0.7));
  CHECK(p[0] == 0.01);
  CHECK(p[1] == 0.5);
}

TEST_CASE("built-in priors integrate to one on grids") {
  const auto p1 = GaussianPrior::diagonal(vec({0.5}), vec({2.0}));
  const Eigen::VectorXd x = uniform_nodes(0.5 - 16, 0.5 + 16, 4001);
  const double dx = x[1] - x[0];
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) s += std::exp(p1->log_density(vec({x[j]}))) * dx;
  CHECK(std::abs(s - 1.0) <= 1e-4);

  Eigen::Matrix2d cov;
  cov << 1.0, 0.4, 0.4, 0.8;
  const GaussianPrior p2(vec({0.0, 1.0}), cov);
  const Eigen::VectorXd g = uniform_nodes(-9, 9, 401);
  const double d = g[1] - g[0];
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = 0; j < g.size(); ++j) s2 += std::exp(p2.log_density(vec({g[i], g[j] + 1.0}))) * d * d;
  CHECK(std::abs(s2 - 1.0) <= 1e-4);
  CHECK_FALSE(p2.factorizes());
  CHECK(p1->factorizes());
}

TEST_CASE("rng streams are reproducible and independent of parent state") {
  Rng a(42), b(42);
  a.normal();
  a.uniform();
  Rng ca = a.split(7), cb = b.split(7);
  for (int k = 0; k < 10; ++k) CHECK(ca.next_u64() == cb.next_u64());
  Rng c1 = b.split(1), c2 = b.split(2);
  CHECK(c1.next_u64() != c2.next_u64());
  Rng u(5);
  for (int k = 0; k < 1000; ++k) {
    const double v = u.uniform_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

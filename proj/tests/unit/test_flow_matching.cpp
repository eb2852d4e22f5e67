#include "mixem/error.hpp"
#include "mixem/flow_matching.hpp"
#include "mixem/posterior.hpp"
#include "mixem/prior.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

using namespace mixem;

namespace {

// v(x) = scale * x + shift, independent of t and y.
class AffineField final : public VelocityField {
 public:
  AffineField(double scale, double shift) : scale_(scale), shift_(shift) {}
  Eigen::Index latent_dim() const override { return 1; }
  Eigen::Index obs_dim() const override { return 1; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::MatrixXd&, double) const override {
    return (scale_ * x.array() + shift_).matrix();
  }

 private:
  double scale_;
  double shift_;
};

class NanField final : public VelocityField {
 public:
  Eigen::Index latent_dim() const override { return 1; }
  Eigen::Index obs_dim() const override { return 1; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::MatrixXd&, double t) const override {
    return Eigen::MatrixXd::Constant(x.rows(), x.cols(), t > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 1.0);
  }
};

double endpoint_error(OdeScheme scheme, int steps) {
  const AffineField field(1.0, 0.0);
  const Eigen::MatrixXd x1 = integrate(field, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1), scheme, steps);
  return std::abs(x1(0, 0) - std::numbers::e);
}

}  // namespace

TEST_CASE("training batch follows the linear path") {
  const auto f = make_identity(2);
  const auto prior = GaussianPrior::standard(2);
  Rng rng(1);
  const TrainingBatch b = make_training_batch(*prior, *f, Theta(0.1, 0.2), 64, rng);
  CHECK(b.xt.cols() == 64);
  for (Eigen::Index j = 0; j < 64; ++j) {
    const double t = b.t[j];
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
    CHECK(b.xt.col(j) == (t * b.x.col(j) + (1 - t) * b.z.col(j)).eval());
    CHECK(b.target.col(j) == (b.x.col(j) - b.z.col(j)).eval());
    CHECK((1.0 * b.x.col(j) + 0.0 * b.z.col(j)).eval() == b.x.col(j));
    CHECK((0.0 * b.x.col(j) + 1.0 * b.z.col(j)).eval() == b.z.col(j));
  }
  Rng again(1);
  const TrainingBatch c = make_training_batch(*prior, *f, Theta(0.1, 0.2), 64, again);
  CHECK(c.xt == b.xt);
  CHECK(c.y == b.y);
}

TEST_CASE("midpoint of the path has zero mean under a zero-mean prior") {
  const auto f = make_identity(1);
  const auto prior = GaussianPrior::standard(1);
  Rng rng(2);
  const TrainingBatch b = make_training_batch(*prior, *f, Theta(0.1, 0.0), 20000, rng);
  const Eigen::VectorXd mid = (0.5 * b.x.row(0) + 0.5 * b.z.row(0)).transpose();
  const double mean = mid.mean();
  const double se = std::sqrt((mid.array() - mean).square().sum() / (mid.size() - 1) / mid.size());
  CHECK(std::abs(mean) <= 4 * se);
  CHECK(se == doctest::Approx(std::sqrt(0.5 / 20000)).epsilon(0.05));
}

TEST_CASE("velocity input layout") {
  Eigen::MatrixXd x(1, 2), y(2, 1);
  x << 0.5, -0.5;
  y << 3.0, 4.0;
  Eigen::VectorXd t(2);
  t << 0.25, 0.0;
  const Eigen::MatrixXd in = velocity_input(x, y, t);
  CHECK(in.rows() == 1 + 2 + kTimeFeatures);
  CHECK(in(1, 1) == 3.0);
  CHECK(in(2, 1) == 4.0);
  CHECK(in(3, 0) == 0.25);
  CHECK(in(4, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(in(5, 1) == 1.0);
}

TEST_CASE("zero training steps give identity transport") {
  const auto f = make_identity(1);
  const auto prior = GaussianPrior::standard(1);
  FlowConfig cfg;
  cfg.training_steps = 0;
  Rng rng(3);
  const FlowSampler s = train_flow(*prior, *f, Theta(0.25, 0.0), cfg, rng);
  Rng draw(4), latent(4);
  const Eigen::MatrixXd out = s.sample(Eigen::VectorXd::Constant(1, 0.7), 100, draw);
  for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK(out(r, 0) == latent.normal());
}

TEST_CASE("constant field is integrated exactly by Euler") {
  const AffineField field(0.0, 1.25);
  Eigen::MatrixXd x0(1, 3);
  x0 << -1.0, 0.0, 2.5;
  const Eigen::MatrixXd x1 = integrate(field, x0, Eigen::VectorXd::Zero(1), OdeScheme::euler, 50);
  for (int j = 0; j < 3; ++j) CHECK(x1(0, j) == doctest::Approx(x0(0, j) + 1.25).epsilon(1e-14));
}

TEST_CASE("linear field approaches e") {
  const AffineField field(1.0, 0.0);
  const double euler = integrate(field, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1), OdeScheme::euler, 100)(0, 0);
  CHECK(euler == doctest::Approx(std::pow(1.01, 100)).epsilon(1e-12));
  CHECK(std::abs(euler / std::numbers::e - 1.0) <= 0.005);
  const double heun = integrate(field, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1), OdeScheme::heun, 100)(0, 0);
  CHECK(std::abs(heun / std::numbers::e - 1.0) <= 1e-4);
}

TEST_CASE("ODE order ratios") {
  for (int steps : {20, 50, 100}) {
    const double re = endpoint_error(OdeScheme::euler, steps) / endpoint_error(OdeScheme::euler, 2 * steps);
    CHECK(re >= 1.8);
    CHECK(re <= 2.2);
    const double rh = endpoint_error(OdeScheme::heun, steps) / endpoint_error(OdeScheme::heun, 2 * steps);
    CHECK(rh >= 3.5);
    CHECK(rh <= 4.5);
  }
}

TEST_CASE("integration aborts on non-finite state with the step index") {
  const NanField field;
  try {
    integrate(field, Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1), OdeScheme::euler, 10);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(e.step() == 6);
  }
}

TEST_CASE("transport is deterministic and thread-count independent") {
  const auto f = make_identity(2);
  const auto prior = GaussianPrior::standard(2);
  FlowConfig cfg;
  cfg.training_steps = 20;
  cfg.hidden = {16, 16};
  cfg.batch_size = 32;
  Rng rng(5);
  const FlowSampler s = train_flow(*prior, *f, Theta(0.1, 0.1), cfg, rng);
  const Eigen::VectorXd y = Eigen::Vector2d(0.3, -0.2);
  Rng a(9), b(9), c(9);
  const Eigen::MatrixXd sa = s.transport(y, 600, a, 1);
  CHECK(sa == s.transport(y, 600, b, 1));
  CHECK(sa == s.transport(y, 600, c, 3));
  CHECK(sa.rows() == 600);
  CHECK(sa.cols() == 2);
  Rng d(9);
  CHECK_THROWS_AS(s.transport(y, 0, d), ContractViolation);
}

TEST_CASE("sampler checkpoint round trip") {
  const auto f = make_identity(1);
  const auto prior = GaussianPrior::standard(1);
  FlowConfig cfg;
  cfg.training_steps = 5;
  cfg.hidden = {8};
  cfg.scheme = OdeScheme::heun;
  cfg.ode_steps = 17;
  Rng rng(6);
  const FlowSampler s = train_flow(*prior, *f, Theta(0.2, 0.1), cfg, rng);
  std::stringstream buf;
  write_sampler_checkpoint(buf, s);
  const FlowSampler back = read_sampler_checkpoint(buf);
  CHECK(back.field().net() == s.field().net());
  CHECK(back.config().scheme == OdeScheme::heun);
  CHECK(back.config().ode_steps == 17);
  Rng a(1), b(1);
  CHECK(back.sample(Eigen::VectorXd::Ones(1), 10, a) == s.sample(Eigen::VectorXd::Ones(1), 10, b));
}

TEST_CASE("flow config validation") {
  FlowConfig cfg;
  cfg.ode_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = FlowConfig{};
  cfg.training_steps = -1;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  CHECK(ode_scheme_from_string("heun") == OdeScheme::heun);
  CHECK_THROWS(ode_scheme_from_string("rk4"));
}

TEST_CASE("trained sampler matches the conjugate posterior") {
  const auto f = make_identity(1);
  const auto prior = GaussianPrior::standard(1);
  const Theta theta(0.25, 0.0);
  Rng rng(7);
  TrainingReport report;
  const FlowSampler s = train_flow(*prior, *f, theta, FlowConfig{}, rng, &report);
  CHECK(report.steps == FlowConfig{}.training_steps);
  CHECK(report.heldout_after < report.heldout_before);
  CHECK(std::isfinite(report.final_running_loss));
  for (double yv : {-0.5, 1.0}) {
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, yv);
    Rng draw(8);
    const Eigen::VectorXd xs = s.sample(y, 5000, draw).col(0);
    const double mean = xs.mean();
    const double sd = std::sqrt((xs.array() - mean).square().sum() / (xs.size() - 1));
    // Closed form: mean y / (1 + a²), variance a² / (1 + a²).
    CHECK(std::abs(mean - yv / 1.25) <= 0.05);
    CHECK(std::abs(sd - std::sqrt(0.2)) <= 0.05);
  }
}

#include "mixem/dense_net.hpp"
#include "mixem/error.hpp"
#include "mixem/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace mixem;

namespace {

double fd_grad_error(const DenseNet& net, const Eigen::MatrixXd& in, const Eigen::MatrixXd& target, double h) {
  const auto lg = net.loss_and_grad(in, target);
  Eigen::VectorXd fd(net.parameter_count());
  DenseNet probe = net;
  for (Eigen::Index p = 0; p < fd.size(); ++p) {
    const double keep = probe.parameters()[p];
    probe.parameters()[p] = keep + h;
    const double up = probe.loss(in, target);
    probe.parameters()[p] = keep - h;
    const double down = probe.loss(in, target);
    probe.parameters()[p] = keep;
    fd[p] = (up - down) / (2 * h);
  }
  return (lg.grad - fd).norm() / std::max(1e-10, lg.grad.norm());
}

}  // namespace

TEST_CASE("zero-initialized network outputs zero") {
  DenseNet net({5, 8, 3}, Activation::tanh);
  Rng rng(1);
  CHECK(net.forward(rng.normal_vector(5)).isZero(0.0));
  Rng r2(2);
  const DenseNet init = DenseNet::initialized({5, 16, 16, 3}, Activation::tanh, r2, true);
  CHECK(init.forward(rng.normal_vector(5)).isZero(0.0));
}

TEST_CASE("forward is deterministic") {
  Rng rng(3);
  const DenseNet net = DenseNet::initialized({4, 7, 2}, Activation::softplus, rng, false);
  const Eigen::VectorXd x = rng.normal_vector(4);
  CHECK(net.forward(x) == net.forward(x));
  Eigen::MatrixXd batch(4, 3);
  batch << x, x, x;
  const Eigen::MatrixXd out = net.forward(batch);
  for (int j = 0; j < 3; ++j) CHECK(out.col(j) == net.forward(x));
}

TEST_CASE("single linear layer reproduces a hand-computed affine map") {
  DenseNet net({2, 2}, Activation::linear);
  net.weight(0) << 1.0, 2.0, -3.0, 0.5;
  net.bias(0) << 0.25, -1.0;
  Eigen::Vector2d x(2.0, -4.0);
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd(x));
  CHECK(y[0] == 1.0 * 2.0 + 2.0 * -4.0 + 0.25);
  CHECK(y[1] == -3.0 * 2.0 + 0.5 * -4.0 - 1.0);
}

TEST_CASE("loss_and_grad basics") {
  Rng rng(5);
  const DenseNet net = DenseNet::initialized({3, 6, 2}, Activation::tanh, rng, false);
  const Eigen::MatrixXd in = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return rng.normal(); });
  const auto exact = net.loss_and_grad(in, net.forward(in));
  CHECK(exact.loss == 0.0);
  CHECK(exact.grad.isZero(0.0));

  const Eigen::VectorXd x = rng.normal_vector(3);
  const Eigen::VectorXd t = rng.normal_vector(2);
  Eigen::MatrixXd xs(3, 5), ts(2, 5);
  for (int j = 0; j < 5; ++j) {
    xs.col(j) = x;
    ts.col(j) = t;
  }
  const auto one = net.loss_and_grad(x, t);
  const auto many = net.loss_and_grad(xs, ts);
  CHECK(many.loss == doctest::Approx(one.loss).epsilon(1e-14));
  CHECK((many.grad - one.grad).norm() <= 1e-13 * std::max(1.0, one.grad.norm()));
  CHECK_THROWS_AS(net.loss_and_grad(Eigen::MatrixXd(3, 0), Eigen::MatrixXd(2, 0)), ContractViolation);
  CHECK_THROWS_AS(net.forward(Eigen::VectorXd(rng.normal_vector(4))), ContractViolation);
}

TEST_CASE("single-parameter gradient matches finite differences") {
  DenseNet net({1, 1}, Activation::linear);
  net.weight(0)(0, 0) = 0.7;
  net.bias(0)[0] = 0.0;
  const Eigen::MatrixXd in = Eigen::MatrixXd::Constant(1, 1, 1.5);
  const Eigen::MatrixXd target = Eigen::MatrixXd::Constant(1, 1, 2.0);
  CHECK(fd_grad_error(net, in, target, 1e-4) <= 1e-6);
}

TEST_CASE("gradient check on random small nets for every activation") {
  Rng rng(21);
  for (Activation act : {Activation::linear, Activation::tanh, Activation::softplus}) {
    for (int k = 0; k < 5; ++k) {
      const DenseNet net = DenseNet::initialized({3, 5, 4, 2}, act, rng, false);
      const Eigen::MatrixXd in = Eigen::MatrixXd::NullaryExpr(3, 6, [&] { return rng.normal(); });
      const Eigen::MatrixXd target = Eigen::MatrixXd::NullaryExpr(2, 6, [&] { return rng.normal(); });
      CHECK(fd_grad_error(net, in, target, 1e-5) <= 1e-5);
    }
  }
}

TEST_CASE("tanh network is Lipschitz with the spectral-norm bound") {
  Rng rng(8);
  const DenseNet net = DenseNet::initialized({4, 16, 16, 3}, Activation::tanh, rng, false);
  double bound = 1.0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    bound *= Eigen::JacobiSVD<Eigen::MatrixXd>(net.weight(l)).singularValues()[0];
  }
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(4);
    const Eigen::VectorXd dx = 1e-3 * rng.normal_vector(4);
    const double ratio = (net.forward(Eigen::VectorXd(x + dx)) - net.forward(x)).norm() / dx.norm();
    CHECK(ratio <= bound * (1 + 1e-9));
  }
}

TEST_CASE("adam step") {
  Rng rng(6);
  DenseNet net = DenseNet::initialized({2, 3, 1}, Activation::tanh, rng, false);
  const Eigen::VectorXd before = net.parameters();
  AdamState state(net, AdamConfig{});
  adam_step(net, state, Eigen::VectorXd::Zero(net.parameter_count()));
  CHECK(net.parameters() == before);
  CHECK(state.step == 1);

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(net.parameter_count());
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam_step(net, state, bad), NumericFailure);
}

TEST_CASE("adam minimizes a 1-D quadratic") {
  DenseNet net({1, 1}, Activation::linear);
  AdamState state(net, AdamConfig{1e-2, 0.9, 0.999, 1e-8});
  const Eigen::MatrixXd in = Eigen::MatrixXd::Zero(1, 1);
  const Eigen::MatrixXd target = Eigen::MatrixXd::Constant(1, 1, 3.0);
  long steps = 0;
  for (; steps < 2000; ++steps) {
    adam_step(net, state, net.loss_and_grad(in, target).grad);
  }
  CHECK(std::abs(net.bias(0)[0] - 3.0) <= 1e-3);

  DenseNet a({1, 1}, Activation::linear), b({1, 1}, Activation::linear);
  AdamState sa(a, AdamConfig{}), sb(b, AdamConfig{});
  for (int k = 0; k < 2; ++k) {
    adam_step(a, sa, a.loss_and_grad(in, target).grad);
    adam_step(b, sb, b.loss_and_grad(in, target).grad);
  }
  CHECK(a == b);
  CHECK(sa == sb);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(10);
  const DenseNet net = DenseNet::initialized({6, 9, 2}, Activation::softplus, rng, false);
  std::stringstream buf;
  write_checkpoint(buf, net);
  const DenseNet back = read_checkpoint(buf);
  CHECK(back == net);
  CHECK(back.activation() == Activation::softplus);
  std::stringstream junk("XXXX");
  CHECK_THROWS(read_checkpoint(junk));
}

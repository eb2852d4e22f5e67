#include "mixem/dense_net.hpp"

#include "mixem/error.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

namespace mixem {
namespace {

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::linear: return z;
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::softplus:
      // log(1 + e^z) evaluated without overflow.
      return (z.array().max(0.0) + (-z.array().abs()).exp().log1p()).matrix();
  }
  return z;
}

/// Derivative of the activation given pre-activation z and post-activation h.
Eigen::MatrixXd activate_derivative(Activation a, const Eigen::MatrixXd& z,
                                    const Eigen::MatrixXd& h) {
  switch (a) {
    case Activation::linear: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::tanh: return (1.0 - h.array().square()).matrix();
    case Activation::softplus: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  throw ContractViolation("unknown activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<Eigen::Index> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  require(widths_.size() >= 2, "DenseNet: need at least input and output widths");
  for (auto w : widths_) require(w >= 1, "DenseNet: layer widths must be positive");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(total);
    total += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(total);
}

DenseNet DenseNet::initialized(std::vector<Eigen::Index> widths, Activation activation, Rng& rng,
                               bool zero_last_layer) {
  DenseNet net(std::move(widths), activation);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (zero_last_layer && l + 1 == net.num_layers()) break;
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.widths_[l]));
    auto w = net.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  return net;
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(std::size_t l) const {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<Eigen::MatrixXd> DenseNet::weight(std::size_t l) {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<const Eigen::VectorXd> DenseNet::bias(std::size_t l) const {
  return {params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]};
}
Eigen::Map<Eigen::VectorXd> DenseNet::bias(std::size_t l) {
  return {params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]};
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& input) const {
  if (input.rows() != input_dim()) {
    throw ContractViolation("DenseNet: expected input dimension " + std::to_string(input_dim()) +
                            ", got " + std::to_string(input.rows()));
  }
  Eigen::MatrixXd h = input;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    h = (l + 1 == num_layers()) ? std::move(z) : activate(activation_, z);
  }
  return h;
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

DenseNet::LossAndGrad DenseNet::loss_and_grad(const Eigen::MatrixXd& input,
                                              const Eigen::MatrixXd& target) const {
  require(input.cols() >= 1, "DenseNet::loss_and_grad: empty batch");
  require(input.rows() == input_dim(), "DenseNet::loss_and_grad: input dimension mismatch");
  require(target.rows() == output_dim() && target.cols() == input.cols(),
          "DenseNet::loss_and_grad: target shape mismatch");
  const std::size_t layers = num_layers();
  const double batch = static_cast<double>(input.cols());

  std::vector<Eigen::MatrixXd> pre(layers), post(layers + 1);
  post[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = weight(l) * post[l];
    pre[l].colwise() += bias(l);
    post[l + 1] = (l + 1 == layers) ? pre[l] : activate(activation_, pre[l]);
  }
  const Eigen::MatrixXd residual = post[layers] - target;

  LossAndGrad out;
  out.loss = residual.squaredNorm() / batch;
  out.grad = Eigen::VectorXd::Zero(params_.size());

  Eigen::MatrixXd delta = (2.0 / batch) * residual;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 != layers) delta.array() *= activate_derivative(activation_, pre[l], post[l + 1]).array();
    Eigen::Map<Eigen::MatrixXd> gw(out.grad.data() + offsets_[l], widths_[l + 1], widths_[l]);
    Eigen::Map<Eigen::VectorXd> gb(out.grad.data() + offsets_[l] + widths_[l + 1] * widths_[l],
                                   widths_[l + 1]);
    gw.noalias() = delta * post[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0) delta = weight(l).transpose() * delta;
  }
  return out;
}

double DenseNet::loss(const Eigen::MatrixXd& input, const Eigen::MatrixXd& target) const {
  require(input.cols() >= 1, "DenseNet::loss: empty batch");
  return (forward(input) - target).squaredNorm() / static_cast<double>(input.cols());
}

bool DenseNet::operator==(const DenseNet& other) const {
  return widths_ == other.widths_ && activation_ == other.activation_ &&
         params_.size() == other.params_.size() && params_ == other.params_;
}

AdamState::AdamState(const DenseNet& net, AdamConfig cfg)
    : config(cfg),
      first_moment(Eigen::VectorXd::Zero(net.parameter_count())),
      second_moment(Eigen::VectorXd::Zero(net.parameter_count())) {}

void adam_step(DenseNet& net, AdamState& state, const Eigen::VectorXd& grad) {
  require(grad.size() == net.parameter_count() && state.first_moment.size() == grad.size() &&
              state.second_moment.size() == grad.size(),
          "adam_step: shape mismatch between parameters, gradient and moments");
  if (!grad.allFinite()) {
    throw NumericFailure("adam_step: non-finite gradient at optimizer step " +
                             std::to_string(state.step),
                         state.step);
  }
  const AdamConfig& c = state.config;
  ++state.step;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grad;
  state.second_moment =
      c.beta2 * state.second_moment + (1.0 - c.beta2) * grad.array().square().matrix();
  const double step = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, step);
  const double corr2 = 1.0 - std::pow(c.beta2, step);
  net.parameters().array() -= c.learning_rate * (state.first_moment.array() / corr1) /
                              ((state.second_moment.array() / corr2).sqrt() + c.epsilon);
}

namespace binio {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ContractViolation("checkpoint: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ContractViolation("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace binio

namespace {
constexpr char kNetMagic[4] = {'M', 'X', 'N', 'N'};
constexpr std::uint32_t kNetVersion = 1;
}  // namespace

void write_checkpoint(std::ostream& out, const DenseNet& net) {
  out.write(kNetMagic, 4);
  binio::put_u32(out, kNetVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(net.activation()));
  binio::put_u32(out, static_cast<std::uint32_t>(net.widths().size()));
  for (auto w : net.widths()) binio::put_u32(out, static_cast<std::uint32_t>(w));
  binio::put_u64(out, static_cast<std::uint64_t>(net.parameter_count()));
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i) binio::put_f64(out, net.parameters()[i]);
}

DenseNet read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kNetMagic)) {
    throw ContractViolation("checkpoint: bad magic, not a network checkpoint");
  }
  if (binio::get_u32(in) != kNetVersion) throw ContractViolation("checkpoint: unsupported version");
  const std::uint32_t act = binio::get_u32(in);
  if (act > 2) throw ContractViolation("checkpoint: unknown activation id");
  const std::uint32_t count = binio::get_u32(in);
  if (count < 2 || count > 1024) throw ContractViolation("checkpoint: bad layer count");
  std::vector<Eigen::Index> widths(count);
  for (auto& w : widths) w = binio::get_u32(in);
  DenseNet net(widths, static_cast<Activation>(act));
  const std::uint64_t params = binio::get_u64(in);
  if (params != static_cast<std::uint64_t>(net.parameter_count())) {
    throw ContractViolation("checkpoint: parameter count does not match layer widths");
  }
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i) net.parameters()[i] = binio::get_f64(in);
  return net;
}

}  // namespace mixem

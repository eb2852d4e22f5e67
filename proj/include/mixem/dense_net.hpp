#pragma once

#include "mixem/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mixem {

enum class Activation : std::uint32_t { linear = 0, tanh = 1, softplus = 2 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected network. Hidden layers use `activation`; the last layer is affine.
/// All weights and biases live in one contiguous parameter vector, layer by
/// layer, each layer stored as a column-major (out x in) weight block followed
/// by its bias.
class DenseNet {
 public:
  DenseNet(std::vector<Eigen::Index> widths, Activation activation);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. With
  /// `zero_last_layer` the output layer starts at exactly zero.
  static DenseNet initialized(std::vector<Eigen::Index> widths, Activation activation, Rng& rng,
                              bool zero_last_layer = true);

  Eigen::Index input_dim() const { return widths_.front(); }
  Eigen::Index output_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  const std::vector<Eigen::Index>& widths() const { return widths_; }
  Activation activation() const { return activation_; }

  Eigen::Index parameter_count() const { return params_.size(); }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  /// Columns of `input` are independent samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

  struct LossAndGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
  };
  /// Mean over columns of ||net(input_j) - target_j||², with its exact gradient.
  LossAndGrad loss_and_grad(const Eigen::MatrixXd& input, const Eigen::MatrixXd& target) const;
  double loss(const Eigen::MatrixXd& input, const Eigen::MatrixXd& target) const;

  bool operator==(const DenseNet& other) const;

 private:
  std::vector<Eigen::Index> widths_;
  Activation activation_;
  Eigen::VectorXd params_;
  std::vector<Eigen::Index> offsets_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// Moment accumulators for Adam, shaped like the network's parameter vector.
struct AdamState {
  AdamConfig config;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step = 0;

  AdamState() = default;
  AdamState(const DenseNet& net, AdamConfig cfg);

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. Throws NumericFailure on a non-finite gradient.
void adam_step(DenseNet& net, AdamState& state, const Eigen::VectorXd& grad);

/// Binary checkpoint: "MXNN", u32 version, u32 activation id, u32 layer-width
/// count, u32 widths..., u64 parameter count, then little-endian f64 parameters.
void write_checkpoint(std::ostream& out, const DenseNet& net);
DenseNet read_checkpoint(std::istream& in);

namespace binio {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);
}  // namespace binio

}  // namespace mixem

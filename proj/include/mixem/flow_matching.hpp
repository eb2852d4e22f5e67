#pragma once

#include "mixem/dense_net.hpp"
#include "mixem/forward_model.hpp"
#include "mixem/prior.hpp"
#include "mixem/rng.hpp"
#include "mixem/sampler.hpp"
#include "mixem/theta.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace mixem {

enum class OdeScheme : std::uint32_t { euler = 0, heun = 1 };

std::string to_string(OdeScheme s);
OdeScheme ode_scheme_from_string(const std::string& name);

/// Settings for conditional flow matching. The latent base distribution is
/// always the standard normal of the latent dimension.
struct FlowConfig {
  int ode_steps = 50;
  OdeScheme scheme = OdeScheme::euler;
  long training_steps = 6000;
  long batch_size = 256;
  std::vector<Eigen::Index> hidden = {128, 128, 128};
  Activation activation = Activation::tanh;
  AdamConfig adam{};

  void validate() const;
  bool operator==(const FlowConfig&) const = default;
};

/// Width of the time embedding (t, sin 2πt, cos 2πt).
inline constexpr Eigen::Index kTimeFeatures = 3;

/// Time-and-observation conditioned vector field v_t(x, y).
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Eigen::Index latent_dim() const = 0;
  virtual Eigen::Index obs_dim() const = 0;
  /// x: m x B, y: n x B (or n x 1, broadcast). Returns m x B.
  virtual Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                   double t) const = 0;
};

/// Network input [x; y; t; sin 2πt; cos 2πt] for each column, with per-column times.
Eigen::MatrixXd velocity_input(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                               const Eigen::VectorXd& t);

/// v_t(x, y) for a single point.
Eigen::VectorXd velocity(const DenseNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         double t);

/// DenseNet-backed velocity field.
class NetVelocity final : public VelocityField {
 public:
  NetVelocity(DenseNet net, Eigen::Index latent_dim, Eigen::Index obs_dim);

  Eigen::Index latent_dim() const override { return latent_; }
  Eigen::Index obs_dim() const override { return obs_; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           double t) const override;
  const DenseNet& net() const { return net_; }

 private:
  DenseNet net_;
  Eigen::Index latent_;
  Eigen::Index obs_;
};

/// One simulated batch along the linear path x_t = t x + (1 - t) z. Columns are items.
struct TrainingBatch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  Eigen::MatrixXd y;
  Eigen::VectorXd t;
  Eigen::MatrixXd xt;
  Eigen::MatrixXd target;  ///< x - z

  Eigen::MatrixXd input() const { return velocity_input(xt, y, t); }
};

TrainingBatch make_training_batch(const Prior& prior, const ForwardModel& forward,
                                  const Theta& theta, long batch, Rng& rng);

/// Network plus optimizer state; persists across EM rounds for warm starts.
struct FlowTrainer {
  DenseNet net;
  AdamState adam;
  Eigen::Index latent_dim = 0;
  Eigen::Index obs_dim = 0;
};

FlowTrainer make_flow_trainer(Eigen::Index latent_dim, Eigen::Index obs_dim,
                              const FlowConfig& config, Rng& rng);

struct TrainingReport {
  long steps = 0;
  double final_running_loss = 0.0;  ///< mean of the last (up to) 100 batch losses
  double heldout_before = 0.0;
  double heldout_after = 0.0;
};

/// Runs `steps` Adam steps on freshly simulated batches at `theta`.
/// Throws NumericFailure carrying the step index on a non-finite loss.
TrainingReport train_steps(FlowTrainer& trainer, const Prior& prior, const ForwardModel& forward,
                           const Theta& theta, long steps, long batch, Rng& rng);

/// Integrates dX/dt = v_t(X, y) from t = 0 to 1. `x0` holds one sample per column.
Eigen::MatrixXd integrate(const VelocityField& field, Eigen::MatrixXd x0, const Eigen::VectorXd& y,
                          OdeScheme scheme, int steps);

/// Draws `count` latent points from N(0, I) and transports them. Rows of the
/// result are samples. The latent draws are taken from `rng` in order, so the
/// output does not depend on `threads`.
Eigen::MatrixXd transport(const VelocityField& field, const Eigen::VectorXd& y, long count,
                          OdeScheme scheme, int steps, Rng& rng, std::size_t threads = 0);

/// Trained conditional sampler of P_{X | Y = y}.
class FlowSampler final : public PosteriorSampler {
 public:
  FlowSampler(NetVelocity field, FlowConfig config);

  Eigen::Index latent_dim() const override { return field_.latent_dim(); }
  std::string name() const override { return "flow"; }
  Eigen::MatrixXd sample(const Eigen::VectorXd& y, long count, Rng& rng) const override {
    return transport(y, count, rng);
  }

  Eigen::MatrixXd transport(const Eigen::VectorXd& y, long count, Rng& rng,
                            std::size_t threads = 0) const;
  const NetVelocity& field() const { return field_; }
  const FlowConfig& config() const { return config_; }

 private:
  NetVelocity field_;
  FlowConfig config_;
};

/// Trains a fresh sampler for `config.training_steps` steps.
FlowSampler train_flow(const Prior& prior, const ForwardModel& forward, const Theta& theta,
                       const FlowConfig& config, Rng& rng, TrainingReport* report = nullptr);

/// Sampler checkpoint: "MXFS", u32 version, u32 scheme, u32 ode steps,
/// u64 training steps, u64 batch size, u32 latent dim, u32 obs dim,
/// f64 learning rate, then the network checkpoint.
void write_sampler_checkpoint(std::ostream& out, const FlowSampler& sampler);
FlowSampler read_sampler_checkpoint(std::istream& in);
void save_sampler(const std::string& path, const FlowSampler& sampler);
FlowSampler load_sampler(const std::string& path);

}  // namespace mixem

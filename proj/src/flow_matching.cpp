#include "mixem/flow_matching.hpp"

#include "mixem/error.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/log.hpp"
#include "mixem/parallel.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <numeric>

namespace mixem {

std::string to_string(OdeScheme s) { return s == OdeScheme::heun ? "heun" : "euler"; }

OdeScheme ode_scheme_from_string(const std::string& name) {
  if (name == "euler") return OdeScheme::euler;
  if (name == "heun") return OdeScheme::heun;
  throw ContractViolation("unknown ODE scheme '" + name + "'");
}

void FlowConfig::validate() const {
  require(ode_steps >= 1, "FlowConfig: ode_steps must be at least 1");
  require(training_steps >= 0, "FlowConfig: training_steps must be non-negative");
  require(batch_size >= 1, "FlowConfig: batch_size must be at least 1");
  require(adam.learning_rate > 0.0, "FlowConfig: learning rate must be positive");
  for (auto w : hidden) require(w >= 1, "FlowConfig: hidden widths must be positive");
}

Eigen::MatrixXd velocity_input(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                               const Eigen::VectorXd& t) {
  const Eigen::Index batch = x.cols();
  require(t.size() == batch, "velocity_input: one time per column required");
  require(y.cols() == batch || y.cols() == 1, "velocity_input: y must have 1 or B columns");
  Eigen::MatrixXd in(x.rows() + y.rows() + kTimeFeatures, batch);
  in.topRows(x.rows()) = x;
  if (y.cols() == batch) {
    in.middleRows(x.rows(), y.rows()) = y;
  } else {
    in.middleRows(x.rows(), y.rows()) = y.col(0).replicate(1, batch);
  }
  const Eigen::Index off = x.rows() + y.rows();
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double phase = 2.0 * std::numbers::pi * t[j];
    in(off, j) = t[j];
    in(off + 1, j) = std::sin(phase);
    in(off + 2, j) = std::cos(phase);
  }
  return in;
}

Eigen::VectorXd velocity(const DenseNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         double t) {
  require(net.input_dim() == x.size() + y.size() + kTimeFeatures,
          "velocity: input dimensions do not match the network");
  return net.forward(velocity_input(x, y, Eigen::VectorXd::Constant(1, t))).col(0);
}

NetVelocity::NetVelocity(DenseNet net, Eigen::Index latent_dim, Eigen::Index obs_dim)
    : net_(std::move(net)), latent_(latent_dim), obs_(obs_dim) {
  require(net_.output_dim() == latent_, "NetVelocity: output width must equal latent dimension");
  require(net_.input_dim() == latent_ + obs_ + kTimeFeatures,
          "NetVelocity: input width must be latent + observation + time features");
}

Eigen::MatrixXd NetVelocity::evaluate(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                      double t) const {
  require(x.rows() == latent_ && y.rows() == obs_, "NetVelocity: dimension mismatch");
  return net_.forward(velocity_input(x, y, Eigen::VectorXd::Constant(x.cols(), t)));
}

TrainingBatch make_training_batch(const Prior& prior, const ForwardModel& forward,
                                  const Theta& theta, long batch, Rng& rng) {
  require(batch >= 1, "make_training_batch: batch must be at least 1");
  require(prior.dim() == forward.input_dim(), "make_training_batch: prior/forward dimension mismatch");
  const Eigen::Index m = prior.dim();
  const Eigen::Index n = forward.output_dim();
  TrainingBatch b;
  b.x.resize(m, batch);
  b.z.resize(m, batch);
  b.y.resize(n, batch);
  b.t.resize(batch);
  for (long j = 0; j < batch; ++j) {
    b.x.col(j) = prior.sample(rng);
    b.y.col(j) = sample_observation(theta, b.x.col(j), forward, rng);
    b.z.col(j) = rng.normal_vector(m);
    b.t[j] = rng.uniform();
  }
  b.xt = b.x * b.t.asDiagonal();
  b.xt += b.z * (1.0 - b.t.array()).matrix().asDiagonal();
  b.target = b.x - b.z;
  return b;
}

FlowTrainer make_flow_trainer(Eigen::Index latent_dim, Eigen::Index obs_dim,
                              const FlowConfig& config, Rng& rng) {
  config.validate();
  std::vector<Eigen::Index> widths;
  widths.push_back(latent_dim + obs_dim + kTimeFeatures);
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(latent_dim);
  FlowTrainer trainer{DenseNet::initialized(widths, config.activation, rng, true), AdamState{},
                      latent_dim, obs_dim};
  trainer.adam = AdamState(trainer.net, config.adam);
  return trainer;
}

TrainingReport train_steps(FlowTrainer& trainer, const Prior& prior, const ForwardModel& forward,
                           const Theta& theta, long steps, long batch, Rng& rng) {
  require(steps >= 0, "train_steps: steps must be non-negative");
  require(prior.dim() == trainer.latent_dim && forward.output_dim() == trainer.obs_dim,
          "train_steps: model dimensions do not match the trainer");
  Rng heldout_rng = rng.split(0x4e1d);
  const TrainingBatch heldout = make_training_batch(prior, forward, theta, batch, heldout_rng);
  const Eigen::MatrixXd heldout_in = heldout.input();

  TrainingReport report;
  report.heldout_before = trainer.net.loss(heldout_in, heldout.target);
  std::deque<double> window;
  double window_sum = 0.0;
  for (long s = 0; s < steps; ++s) {
    const TrainingBatch b = make_training_batch(prior, forward, theta, batch, rng);
    const auto lg = trainer.net.loss_and_grad(b.input(), b.target);
    if (!std::isfinite(lg.loss)) {
      throw NumericFailure("flow training: non-finite loss at step " + std::to_string(s), s);
    }
    adam_step(trainer.net, trainer.adam, lg.grad);
    window.push_back(lg.loss);
    window_sum += lg.loss;
    if (window.size() > 100) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (log::level() == log::Level::debug && (s + 1) % 1000 == 0) {
      log::debug("flow step " + std::to_string(s + 1) + " running loss " +
                 std::to_string(window_sum / static_cast<double>(window.size())));
    }
  }
  report.steps = steps;
  report.final_running_loss =
      window.empty() ? report.heldout_before : window_sum / static_cast<double>(window.size());
  report.heldout_after = trainer.net.loss(heldout_in, heldout.target);
  return report;
}

Eigen::MatrixXd integrate(const VelocityField& field, Eigen::MatrixXd x, const Eigen::VectorXd& y,
                          OdeScheme scheme, int steps) {
  require(steps >= 1, "integrate: need at least one step");
  require(x.rows() == field.latent_dim() && y.size() == field.obs_dim(),
          "integrate: dimension mismatch");
  const Eigen::MatrixXd ycol = y;
  const double h = 1.0 / static_cast<double>(steps);
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    const Eigen::MatrixXd v0 = field.evaluate(x, ycol, t);
    if (scheme == OdeScheme::euler) {
      x += h * v0;
    } else {
      const Eigen::MatrixXd v1 = field.evaluate(x + h * v0, ycol, t + h);
      x += 0.5 * h * (v0 + v1);
    }
    if (!x.allFinite()) {
      throw NumericFailure("transport: non-finite state at ODE step " + std::to_string(k), k);
    }
  }
  return x;
}

Eigen::MatrixXd transport(const VelocityField& field, const Eigen::VectorXd& y, long count,
                          OdeScheme scheme, int steps, Rng& rng, std::size_t threads) {
  require(count >= 1, "transport: count must be at least 1");
  const Eigen::Index m = field.latent_dim();
  Eigen::MatrixXd x0(m, count);
  for (long j = 0; j < count; ++j) x0.col(j) = rng.normal_vector(m);
  Eigen::MatrixXd out(count, m);
  constexpr long kChunk = 256;
  const auto chunks = static_cast<std::size_t>((count + kChunk - 1) / kChunk);
  parallel_for(chunks, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const long lo = static_cast<long>(c) * kChunk;
      const long len = std::min(kChunk, count - lo);
      const Eigen::MatrixXd xt = integrate(field, x0.middleCols(lo, len), y, scheme, steps);
      out.middleRows(lo, len) = xt.transpose();
    }
  });
  return out;
}

FlowSampler::FlowSampler(NetVelocity field, FlowConfig config)
    : field_(std::move(field)), config_(std::move(config)) {
  config_.validate();
}

Eigen::MatrixXd FlowSampler::transport(const Eigen::VectorXd& y, long count, Rng& rng,
                                       std::size_t threads) const {
  return mixem::transport(field_, y, count, config_.scheme, config_.ode_steps, rng, threads);
}

FlowSampler train_flow(const Prior& prior, const ForwardModel& forward, const Theta& theta,
                       const FlowConfig& config, Rng& rng, TrainingReport* report) {
  Rng init_rng = rng.split(0);
  Rng batch_rng = rng.split(1);
  FlowTrainer trainer = make_flow_trainer(prior.dim(), forward.output_dim(), config, init_rng);
  const TrainingReport r =
      train_steps(trainer, prior, forward, theta, config.training_steps, config.batch_size, batch_rng);
  if (report != nullptr) *report = r;
  return FlowSampler(NetVelocity(std::move(trainer.net), prior.dim(), forward.output_dim()), config);
}

namespace {
constexpr char kSamplerMagic[4] = {'M', 'X', 'F', 'S'};
constexpr std::uint32_t kSamplerVersion = 1;
}  // namespace

void write_sampler_checkpoint(std::ostream& out, const FlowSampler& sampler) {
  const FlowConfig& c = sampler.config();
  out.write(kSamplerMagic, 4);
  binio::put_u32(out, kSamplerVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(c.scheme));
  binio::put_u32(out, static_cast<std::uint32_t>(c.ode_steps));
  binio::put_u64(out, static_cast<std::uint64_t>(c.training_steps));
  binio::put_u64(out, static_cast<std::uint64_t>(c.batch_size));
  binio::put_u32(out, static_cast<std::uint32_t>(sampler.field().latent_dim()));
  binio::put_u32(out, static_cast<std::uint32_t>(sampler.field().obs_dim()));
  binio::put_f64(out, c.adam.learning_rate);
  write_checkpoint(out, sampler.field().net());
}

FlowSampler read_sampler_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kSamplerMagic)) {
    throw ContractViolation("sampler checkpoint: bad magic");
  }
  if (binio::get_u32(in) != kSamplerVersion) {
    throw ContractViolation("sampler checkpoint: unsupported version");
  }
  FlowConfig c;
  const std::uint32_t scheme = binio::get_u32(in);
  if (scheme > 1) throw ContractViolation("sampler checkpoint: unknown ODE scheme");
  c.scheme = static_cast<OdeScheme>(scheme);
  c.ode_steps = static_cast<int>(binio::get_u32(in));
  c.training_steps = static_cast<long>(binio::get_u64(in));
  c.batch_size = static_cast<long>(binio::get_u64(in));
  const Eigen::Index latent = binio::get_u32(in);
  const Eigen::Index obs = binio::get_u32(in);
  c.adam.learning_rate = binio::get_f64(in);
  DenseNet net = read_checkpoint(in);
  c.activation = net.activation();
  c.hidden.assign(net.widths().begin() + 1, net.widths().end() - 1);
  return FlowSampler(NetVelocity(std::move(net), latent, obs), c);
}

void save_sampler(const std::string& path, const FlowSampler& sampler) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write sampler checkpoint '" + path + "'");
  write_sampler_checkpoint(out, sampler);
}

FlowSampler load_sampler(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read sampler checkpoint '" + path + "'");
  return read_sampler_checkpoint(in);
}

}  // namespace mixem

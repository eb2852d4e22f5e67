#include "mixem/q_function.hpp"

#include "mixem/error.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/parallel.hpp"
#include "mixem/posterior.hpp"
#include "mixem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>

namespace mixem {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr std::size_t kChunks = 16;

std::uint64_t bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

/// Precomputed per-node quantities of one grid block at a fixed θ̂.
struct Factor {
  std::vector<Eigen::Index> comps;
  Eigen::VectorXd log_prior;
  Eigen::VectorXd base;   ///< log prior - ½ Σ_c (log 2π + log σ_c)
  Eigen::MatrixXd f;      ///< comps x G
  Eigen::MatrixXd inv;    ///< comps x G, 1/σ
  std::vector<char> edge;
  double log_cell = 0.0;

  Eigen::Index nodes() const { return base.size(); }
};

std::vector<Factor> build_factors(const ModelBundle& model, const Theta& theta) {
  const ForwardModel& forward = *model.forward;
  const Prior& prior = *model.prior;
  const Eigen::Index m = prior.dim();
  const Eigen::Index n = forward.output_dim();
  const std::vector<GridAxis> axes = default_axes(prior, model.grid);
  std::vector<Factor> factors;
  auto fill = [&](Factor& fac, Eigen::Index c, Eigen::Index j, double fv) {
    const double sig = theta.a2() + theta.b2() * fv * fv;
    fac.f(c, j) = fv;
    fac.inv(c, j) = 1.0 / sig;
    fac.base[j] -= 0.5 * (kLog2Pi + std::log(sig));
  };
  if (grid_factorizes(forward, prior)) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const GridAxis& ax = axes[static_cast<std::size_t>(i)];
      const Eigen::VectorXd x = uniform_nodes(ax.lo, ax.hi, ax.resolution);
      Factor fac;
      fac.comps = {i};
      fac.log_cell = std::log(ax.spacing());
      fac.log_prior.resize(x.size());
      fac.base.resize(x.size());
      fac.f.resize(1, x.size());
      fac.inv.resize(1, x.size());
      fac.edge.assign(static_cast<std::size_t>(x.size()), 0);
      fac.edge.front() = fac.edge.back() = 1;
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        fac.log_prior[j] = prior.component_log_density(i, x[j]);
        fac.base[j] = fac.log_prior[j];
        fill(fac, 0, j, forward.separable_component(i, x[j]));
      }
      factors.push_back(std::move(fac));
    }
    return factors;
  }
  require(m <= 2, "oracle E-step: dense grids support m <= 2; larger models must be separable "
                  "with a factorizing prior");
  Eigen::Index count = 1;
  double log_cell = 0.0;
  std::vector<Eigen::VectorXd> per_axis;
  for (const auto& ax : axes) {
    per_axis.push_back(uniform_nodes(ax.lo, ax.hi, ax.resolution));
    count *= ax.resolution;
    log_cell += std::log(ax.spacing());
  }
  Factor fac;
  for (Eigen::Index c = 0; c < n; ++c) fac.comps.push_back(c);
  fac.log_cell = log_cell;
  fac.log_prior.resize(count);
  fac.base.resize(count);
  fac.f.resize(n, count);
  fac.inv.resize(n, count);
  fac.edge.assign(static_cast<std::size_t>(count), 0);
  Eigen::VectorXd x(m);
  for (Eigen::Index j = 0; j < count; ++j) {
    Eigen::Index rest = j;
    bool edge = false;
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index r = axes[static_cast<std::size_t>(k)].resolution;
      const Eigen::Index idx = rest % r;
      rest /= r;
      x[k] = per_axis[static_cast<std::size_t>(k)][idx];
      edge = edge || idx == 0 || idx == r - 1;
    }
    fac.edge[static_cast<std::size_t>(j)] = edge ? 1 : 0;
    fac.log_prior[j] = prior.log_density(x);
    fac.base[j] = fac.log_prior[j];
    const Eigen::VectorXd fx = forward.evaluate(x);
    for (Eigen::Index c = 0; c < n; ++c) fill(fac, c, j, fx[c]);
  }
  factors.push_back(std::move(fac));
  return factors;
}

/// Posterior weights of every factor for one observation. Returns false when
/// any factor puts too much weight on its boundary nodes.
bool factor_weights(const std::vector<Factor>& factors, const Eigen::VectorXd& y,
                    double boundary_weight, std::vector<Eigen::VectorXd>& w, double& log_marginal) {
  log_marginal = 0.0;
  w.resize(factors.size());
  for (std::size_t q = 0; q < factors.size(); ++q) {
    const Factor& fac = factors[q];
    Eigen::VectorXd& lw = w[q];
    lw = fac.base;
    for (std::size_t c = 0; c < fac.comps.size(); ++c) {
      const auto cc = static_cast<Eigen::Index>(c);
      const double yc = y[fac.comps[c]];
      lw.array() -= 0.5 * (yc - fac.f.row(cc).transpose().array()).square() *
                    fac.inv.row(cc).transpose().array();
    }
    log_marginal += normalize_log_weights(lw) + fac.log_cell;
    double edge = 0.0;
    for (Eigen::Index j = 0; j < lw.size(); ++j) {
      if (fac.edge[static_cast<std::size_t>(j)]) edge += lw[j];
    }
    if (edge > boundary_weight) return false;
  }
  return true;
}

/// Adds the entries of one grid posterior with total weight `scale`.
void add_posterior(ResidualStats& stats, const GridPosterior& post, const ForwardModel& forward,
                   const Prior& prior, const Eigen::VectorXd& y, double scale) {
  for (const GridBlock& b : post.blocks()) {
    const bool single = post.factorized();
    for (Eigen::Index j = 0; j < b.weights.size(); ++j) {
      const double w = scale * b.weights[j];
      if (single) {
        const Eigen::Index i = b.coords[0];
        const double f = forward.separable_component(i, b.nodes(0, j));
        stats.add(f, y[i] - f, w);
        stats.constant += w * prior.component_log_density(i, b.nodes(0, j));
      } else {
        const Eigen::VectorXd x = b.nodes.col(j);
        const Eigen::VectorXd fx = forward.evaluate(x);
        for (Eigen::Index i = 0; i < fx.size(); ++i) stats.add(fx[i], y[i] - fx[i], w);
        stats.constant += w * prior.log_density(x);
      }
    }
  }
}

/// Per-observation statistics from factor weights.
void add_factor_entries(ResidualStats& stats, const std::vector<Factor>& factors,
                        const std::vector<Eigen::VectorXd>& w, const Eigen::VectorXd& y, double scale) {
  for (std::size_t q = 0; q < factors.size(); ++q) {
    const Factor& fac = factors[q];
    for (Eigen::Index j = 0; j < fac.nodes(); ++j) {
      const double wj = scale * w[q][j];
      for (std::size_t c = 0; c < fac.comps.size(); ++c) {
        const double f = fac.f(static_cast<Eigen::Index>(c), j);
        stats.add(f, y[fac.comps[c]] - f, wj);
      }
      stats.constant += wj * fac.log_prior[j];
    }
  }
}

struct ChunkAccumulator {
  std::vector<Eigen::MatrixXd> weight;  ///< per factor: comps x G
  std::vector<Eigen::MatrixXd> square;
  ResidualStats extra;
  double constant = 0.0;
  double log_marginal = 0.0;
};

double weighted_se(const std::vector<double>& v, const Eigen::VectorXd& w, double mean) {
  const auto n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double d = v[k] - mean;
    acc += w[static_cast<Eigen::Index>(k)] * w[static_cast<Eigen::Index>(k)] * d * d;
  }
  return std::sqrt(acc * n / (n - 1.0));
}

std::vector<std::pair<std::size_t, std::size_t>> fixed_chunks(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t chunks = std::min(kChunks, n);
  for (std::size_t c = 0; c < chunks; ++c) out.emplace_back(c * n / chunks, (c + 1) * n / chunks);
  return out;
}

}  // namespace

void ResidualStats::add(double f, double residual, double weight) {
  add_entry(f * f, weight, weight * residual * residual);
}

void ResidualStats::add_entry(double f2, double weight, double square) {
  f2_.push_back(f2);
  w_.push_back(weight);
  s_.push_back(square);
}

void ResidualStats::merge(const ResidualStats& other, double scale) {
  f2_.insert(f2_.end(), other.f2_.begin(), other.f2_.end());
  for (double v : other.w_) w_.push_back(scale * v);
  for (double v : other.s_) s_.push_back(scale * v);
  constant += scale * other.constant;
}

ResidualStats ResidualStats::compacted() const {
  ResidualStats out;
  out.constant = constant;
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(f2_.size());
  for (std::size_t e = 0; e < f2_.size(); ++e) {
    auto [it, inserted] = index.try_emplace(bits(f2_[e]), out.f2_.size());
    if (inserted) {
      out.add_entry(f2_[e], w_[e], s_[e]);
    } else {
      out.w_[it->second] += w_[e];
      out.s_[it->second] += s_[e];
    }
  }
  return out;
}

double ResidualStats::total_weight() const {
  double t = 0.0;
  for (double v : w_) t += v;
  return t;
}

double ResidualStats::value(const Theta& theta) const {
  double acc = 0.0;
  for (std::size_t e = 0; e < f2_.size(); ++e) {
    const double sig = theta.a2() + theta.b2() * f2_[e];
    acc += w_[e] * (kLog2Pi + std::log(sig)) + s_[e] / sig;
  }
  return -0.5 * acc + constant;
}

Eigen::Vector2d ResidualStats::grad(const Theta& theta) const {
  double ga = 0.0;
  double gb = 0.0;
  for (std::size_t e = 0; e < f2_.size(); ++e) {
    const double sig = theta.a2() + theta.b2() * f2_[e];
    const double g = w_[e] / sig - s_[e] / (sig * sig);
    ga += g;
    gb += f2_[e] * g;
  }
  return {-0.5 * ga, -0.5 * gb};
}

Eigen::Matrix2d ResidualStats::hessian(const Theta& theta) const {
  double h0 = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  for (std::size_t e = 0; e < f2_.size(); ++e) {
    const double sig = theta.a2() + theta.b2() * f2_[e];
    const double inv2 = 1.0 / (sig * sig);
    const double h = w_[e] * inv2 - 2.0 * s_[e] * inv2 / sig;
    h0 += h;
    h1 += f2_[e] * h;
    h2 += f2_[e] * f2_[e] * h;
  }
  Eigen::Matrix2d out;
  out << 0.5 * h0, 0.5 * h1, 0.5 * h1, 0.5 * h2;
  return out;
}

EStepSummary oracle_estep(const ModelBundle& model, const Theta& theta_hat,
                          const ObservationSet& obs, std::size_t threads) {
  model.validate();
  obs.validate();
  require(obs.obs_dim() == model.obs_dim(), "oracle E-step: observation length mismatch");
  const std::vector<Factor> factors = build_factors(model, theta_hat);
  const auto chunks = fixed_chunks(static_cast<std::size_t>(obs.size()));
  std::vector<ChunkAccumulator> acc(chunks.size());
  for (auto& a : acc) {
    for (const auto& fac : factors) {
      a.weight.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fac.comps.size()), fac.nodes()));
      a.square.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fac.comps.size()), fac.nodes()));
    }
  }
  parallel_for(chunks.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Eigen::VectorXd> w;
    for (std::size_t c = begin; c < end; ++c) {
      ChunkAccumulator& a = acc[c];
      for (std::size_t k = chunks[c].first; k < chunks[c].second; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const Eigen::VectorXd y = obs.y.col(kk);
        const double omega = obs.weights[kk];
        double lml = 0.0;
        if (!factor_weights(factors, y, model.grid.boundary_weight, w, lml)) {
          const GridPosterior post = grid_posterior(theta_hat, *model.forward, *model.prior, y, model.grid);
          add_posterior(a.extra, post, *model.forward, *model.prior, y, omega);
          a.log_marginal += omega * post.log_marginal_likelihood();
          continue;
        }
        a.log_marginal += omega * lml;
        for (std::size_t q = 0; q < factors.size(); ++q) {
          const Factor& fac = factors[q];
          const Eigen::RowVectorXd wq = omega * w[q].transpose();
          a.constant += wq.dot(fac.log_prior);
          for (std::size_t cc = 0; cc < fac.comps.size(); ++cc) {
            const auto ci = static_cast<Eigen::Index>(cc);
            const double yc = y[fac.comps[cc]];
            a.weight[q].row(ci) += wq;
            a.square[q].row(ci).array() += wq.array() * (yc - fac.f.row(ci).array()).square();
          }
        }
      }
    }
  });

  EStepSummary out;
  ResidualStats raw;
  for (std::size_t q = 0; q < factors.size(); ++q) {
    const Factor& fac = factors[q];
    for (std::size_t cc = 0; cc < fac.comps.size(); ++cc) {
      const auto ci = static_cast<Eigen::Index>(cc);
      for (Eigen::Index j = 0; j < fac.nodes(); ++j) {
        double wsum = 0.0;
        double ssum = 0.0;
        for (const auto& a : acc) {
          wsum += a.weight[q](ci, j);
          ssum += a.square[q](ci, j);
        }
        if (wsum > 0.0 || ssum > 0.0) raw.add_entry(fac.f(ci, j) * fac.f(ci, j), wsum, ssum);
      }
    }
  }
  for (const auto& a : acc) {
    raw.merge(a.extra);
    raw.constant += a.constant;
    out.log_marginal += a.log_marginal;
  }
  out.stats = raw.compacted();
  return out;
}

ResidualStats sample_stats(const ForwardModel& forward, const Prior& prior,
                           const ObservationSet& obs, const std::vector<Eigen::MatrixXd>& samples) {
  obs.validate();
  require(static_cast<Eigen::Index>(samples.size()) == obs.size(),
          "sample_stats: need one sample block per observation");
  ResidualStats stats;
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    const Eigen::MatrixXd& s = samples[static_cast<std::size_t>(k)];
    require(s.rows() >= 1, "sample_stats: empty sample block");
    require(s.cols() == prior.dim(), "sample_stats: sample dimension mismatch");
    const double w = obs.weights[k] / static_cast<double>(s.rows());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const Eigen::VectorXd x = s.row(r).transpose();
      const Eigen::VectorXd fx = forward.evaluate(x);
      for (Eigen::Index i = 0; i < fx.size(); ++i) stats.add(fx[i], obs.y(i, k) - fx[i], w);
      stats.constant += w * prior.log_density(x);
    }
  }
  return stats;
}

double log_marginal_likelihood(const ModelBundle& model, const Theta& theta,
                               const ObservationSet& obs, std::size_t threads) {
  return oracle_estep(model, theta, obs, threads).log_marginal;
}

QEstimate q_function(const Theta& theta, const Theta& theta_hat, const ModelBundle& model,
                     const ObservationSet& obs, const QOptions& options) {
  model.validate();
  obs.validate();
  require(model.box.contains(theta.a2(), theta.b2()) && model.box.contains(theta_hat.a2(), theta_hat.b2()),
          "q_function: both parameters must lie in the box");
  require(obs.obs_dim() == model.obs_dim(), "q_function: observation length mismatch");
  const auto n = static_cast<std::size_t>(obs.size());
  std::vector<double> value(n), ga(n), gb(n);
  std::vector<Eigen::Matrix2d> hess(n);

  QEstimate est;
  const std::vector<Factor> factors =
      options.sampler == nullptr ? build_factors(model, theta_hat) : std::vector<Factor>{};
  if (options.sampler != nullptr) {
    require(options.samples_per_observation >= 1, "q_function: samples_per_observation must be positive");
    est.source = QSource::monte_carlo;
    est.sample_count = options.samples_per_observation;
  }
  const Rng base(options.seed, 0x51);
  parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Eigen::VectorXd> w;
    for (std::size_t k = begin; k < end; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const Eigen::VectorXd y = obs.y.col(kk);
      ResidualStats stats;
      if (options.sampler != nullptr) {
        Rng rng = base.split(k);
        const Eigen::MatrixXd s = options.sampler->sample(y, options.samples_per_observation, rng);
        const double wt = 1.0 / static_cast<double>(s.rows());
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
          const Eigen::VectorXd x = s.row(r).transpose();
          const Eigen::VectorXd fx = model.forward->evaluate(x);
          for (Eigen::Index i = 0; i < fx.size(); ++i) stats.add(fx[i], y[i] - fx[i], wt);
          stats.constant += wt * model.prior->log_density(x);
        }
      } else {
        double lml = 0.0;
        if (factor_weights(factors, y, model.grid.boundary_weight, w, lml)) {
          add_factor_entries(stats, factors, w, y, 1.0);
        } else {
          const GridPosterior post = grid_posterior(theta_hat, *model.forward, *model.prior, y, model.grid);
          add_posterior(stats, post, *model.forward, *model.prior, y, 1.0);
        }
      }
      value[k] = stats.value(theta);
      const Eigen::Vector2d g = stats.grad(theta);
      ga[k] = g[0];
      gb[k] = g[1];
      hess[k] = stats.hessian(theta);
    }
  });
  for (std::size_t k = 0; k < n; ++k) {
    const double wk = obs.weights[static_cast<Eigen::Index>(k)];
    est.value += wk * value[k];
    est.grad += wk * Eigen::Vector2d(ga[k], gb[k]);
    est.hessian += wk * hess[k];
  }
  est.hessian = 0.5 * (est.hessian + est.hessian.transpose()).eval();
  est.value_se = weighted_se(value, obs.weights, est.value);
  est.grad_se = {weighted_se(ga, obs.weights, est.grad[0]), weighted_se(gb, obs.weights, est.grad[1])};
  return est;
}

Eigen::Vector2d projected_gradient(const Eigen::Vector2d& theta, const Eigen::Vector2d& grad,
                                   const ThetaBox& box) {
  Eigen::Vector2d pg = grad;
  const double lo[2] = {box.a_min, box.b_min};
  const double hi[2] = {box.a_max, box.b_max};
  for (int k = 0; k < 2; ++k) {
    if ((theta[k] <= lo[k] && grad[k] < 0.0) || (theta[k] >= hi[k] && grad[k] > 0.0)) pg[k] = 0.0;
  }
  return pg;
}

QMaximum maximize_q(const ResidualStats& stats, const ThetaBox& box, const Theta& start,
                    const AscentOptions& options) {
  box.validate();
  require(stats.size() > 0, "maximize_q: empty statistics");
  Eigen::Vector2d x = box.project(start.vector());
  double fx = stats.value(Theta::from_vector(x));
  Eigen::Vector2d g = stats.grad(Theta::from_vector(x));
  Eigen::Vector2d pg = projected_gradient(x, g, box);
  double t = 1.0 / std::max(stats.hessian(Theta::from_vector(x)).norm(), 1e-300);

  QMaximum out;
  out.history.push_back(x);
  for (long it = 0; it < options.max_iterations; ++it) {
    if (pg.norm() <= options.grad_tol) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    Eigen::Vector2d xn = x;
    double fn = fx;
    Eigen::Vector2d gn = g;
    for (int ls = 0; ls < 80; ++ls) {
      xn = box.project(x + t * g);
      if ((xn - x).norm() == 0.0) break;
      fn = stats.value(Theta::from_vector(xn));
      if (fn >= fx + options.armijo * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      if (std::abs(fn - fx) <= 1e-13 * (1.0 + std::abs(fx))) {
        gn = stats.grad(Theta::from_vector(xn));
        if (projected_gradient(xn, gn, box).norm() < pg.norm()) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (pg.norm() <= 1e-6 * (1.0 + std::abs(fx))) break;
      throw OptimizationFailure("maximize_q: line search failed to increase Q at " +
                                    to_string(Theta::from_vector(x)),
                                out.history);
    }
    gn = stats.grad(Theta::from_vector(xn));
    const Eigen::Vector2d s = xn - x;
    const double curvature = -s.dot(gn - g);
    t = curvature > 0.0 ? s.squaredNorm() / curvature : 2.0 * t;
    x = xn;
    fx = fn;
    g = gn;
    pg = projected_gradient(x, g, box);
    out.history.push_back(x);
    out.iterations = it + 1;
  }
  out.theta = Theta::from_vector(x);
  out.value = fx;
  out.grad_norm = pg.norm();
  out.converged = out.converged || out.grad_norm <= options.grad_tol;
  out.boundary_active = (pg - g).norm() > 0.0;
  return out;
}

}  // namespace mixem

#include "mixem/posterior.hpp"

#include "mixem/error.hpp"
#include "mixem/likelihood.hpp"
#include "mixem/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mixem {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

GridAxis checked_axis(const GridAxis& axis) {
  require(std::isfinite(axis.lo) && std::isfinite(axis.hi) && axis.lo < axis.hi,
          "grid axis: need finite lo < hi");
  require(axis.resolution >= 3, "grid axis: resolution must be at least 3");
  return axis;
}

Eigen::VectorXd axis_nodes(const GridAxis& axis) {
  Eigen::VectorXd nodes(axis.resolution);
  const double h = axis.spacing();
  for (Eigen::Index j = 0; j < axis.resolution; ++j) {
    nodes[j] = axis.lo + h * static_cast<double>(j);
  }
  nodes[axis.resolution - 1] = axis.hi;
  return nodes;
}

GridBlock component_block(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                          double yi, Eigen::Index i, const GridAxis& axis) {
  GridBlock block;
  block.coords = {i};
  block.axes = {axis};
  const Eigen::VectorXd nodes = axis_nodes(axis);
  block.nodes = nodes.transpose();
  Eigen::VectorXd lw(nodes.size());
  for (Eigen::Index j = 0; j < nodes.size(); ++j) {
    const double f = forward.separable_component(i, nodes[j]);
    const double sig = theta.a2() + theta.b2() * f * f;
    const double r = yi - f;
    lw[j] = -0.5 * (kLog2Pi + kernel::log_term(sig, r * r)) + prior.component_log_density(i, nodes[j]);
  }
  block.log_normalizer = normalize_log_weights(lw) + std::log(axis.spacing());
  block.weights = std::move(lw);
  return block;
}

GridBlock dense_block(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                      const Eigen::VectorXd& y, const std::vector<GridAxis>& axes,
                      std::size_t threads) {
  const Eigen::Index m = prior.dim();
  GridBlock block;
  block.axes = axes;
  Eigen::Index count = 1;
  double cell = 1.0;
  std::vector<Eigen::VectorXd> per_axis;
  for (Eigen::Index k = 0; k < m; ++k) {
    block.coords.push_back(k);
    per_axis.push_back(axis_nodes(axes[k]));
    count *= axes[k].resolution;
    cell *= axes[k].spacing();
  }
  block.nodes.resize(m, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    Eigen::Index rest = j;
    for (Eigen::Index k = 0; k < m; ++k) {
      block.nodes(k, j) = per_axis[k][rest % axes[k].resolution];
      rest /= axes[k].resolution;
    }
  }
  Eigen::VectorXd lw(count);
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      lw[jj] = joint_log_density(theta, block.nodes.col(jj), y, forward, prior);
    }
  });
  block.log_normalizer = normalize_log_weights(lw) + std::log(cell);
  block.weights = std::move(lw);
  return block;
}

}  // namespace

void GridSpec::validate() const {
  require(resolution >= 3 && resolution_2d >= 3, "GridSpec: resolution must be at least 3");
  require(half_width > 0.0, "GridSpec: half_width must be positive");
  require(boundary_weight > 0.0 && boundary_weight < 1.0, "GridSpec: boundary_weight must be in (0, 1)");
  require(max_widenings >= 0, "GridSpec: max_widenings must be non-negative");
}

double GridBlock::boundary_weight() const {
  double total = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    bool edge = false;
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const double v = nodes(static_cast<Eigen::Index>(k), j);
      if (v == axes[k].lo || v == axes[k].hi) edge = true;
    }
    if (edge) total += weights[j];
  }
  return total;
}

double normalize_log_weights(Eigen::Ref<Eigen::VectorXd> lw) {
  require(lw.size() > 0, "normalize_log_weights: empty input");
  const double peak = lw.maxCoeff();
  if (!std::isfinite(peak)) {
    throw NumericFailure("grid posterior: log-density is not finite on the grid");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < lw.size(); ++j) {
    lw[j] = std::exp(lw[j] - peak);
    total += lw[j];
  }
  lw /= total;
  return peak + std::log(total);
}

GridPosterior::GridPosterior(std::vector<GridBlock> blocks, Eigen::Index dim)
    : blocks_(std::move(blocks)), dim_(dim) {
  require(!blocks_.empty(), "GridPosterior: no blocks");
  Eigen::Index covered = 0;
  for (const auto& b : blocks_) covered += static_cast<Eigen::Index>(b.coords.size());
  require(covered == dim_, "GridPosterior: blocks must cover every coordinate once");
}

double GridPosterior::log_marginal_likelihood() const {
  double total = 0.0;
  for (const auto& b : blocks_) total += b.log_normalizer;
  return total;
}

Eigen::VectorXd GridPosterior::mean() const {
  Eigen::VectorXd out(dim_);
  for (const auto& b : blocks_) {
    const Eigen::VectorXd mu = b.nodes * b.weights;
    for (std::size_t k = 0; k < b.coords.size(); ++k) out[b.coords[k]] = mu[static_cast<Eigen::Index>(k)];
  }
  return out;
}

Eigen::MatrixXd GridPosterior::covariance() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& b : blocks_) {
    const Eigen::VectorXd mu = b.nodes * b.weights;
    const Eigen::MatrixXd centered = b.nodes.colwise() - mu;
    const Eigen::MatrixXd cov = centered * b.weights.asDiagonal() * centered.transpose();
    for (std::size_t r = 0; r < b.coords.size(); ++r) {
      for (std::size_t c = 0; c < b.coords.size(); ++c) {
        out(b.coords[r], b.coords[c]) = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
  }
  return out;
}

Eigen::VectorXd GridPosterior::expectation(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g) const {
  require(!factorized(), "GridPosterior::expectation needs a dense grid over all coordinates");
  const GridBlock& b = blocks_[0];
  Eigen::VectorXd acc;
  for (Eigen::Index j = 0; j < b.weights.size(); ++j) {
    const Eigen::VectorXd v = g(b.nodes.col(j));
    if (!v.allFinite()) throw ContractViolation("GridPosterior::expectation: non-finite integrand");
    if (j == 0) acc = Eigen::VectorXd::Zero(v.size());
    require(v.size() == acc.size(), "GridPosterior::expectation: integrand size changed");
    acc += b.weights[j] * v;
  }
  return acc;
}

Eigen::MatrixXd GridPosterior::resample(long count, Rng& rng) const {
  require(count >= 1, "GridPosterior::resample: count must be at least 1");
  Eigen::MatrixXd out(count, dim_);
  for (const auto& b : blocks_) {
    std::vector<double> cdf(static_cast<std::size_t>(b.weights.size()));
    double run = 0.0;
    for (Eigen::Index j = 0; j < b.weights.size(); ++j) {
      run += b.weights[j];
      cdf[static_cast<std::size_t>(j)] = run;
    }
    for (long s = 0; s < count; ++s) {
      const double u = rng.uniform() * run;
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto j = static_cast<Eigen::Index>(std::min<std::size_t>(
          static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1));
      for (std::size_t k = 0; k < b.coords.size(); ++k) {
        out(s, b.coords[k]) = b.nodes(static_cast<Eigen::Index>(k), j);
      }
    }
  }
  return out;
}

const GridBlock& GridPosterior::block_for(Eigen::Index coord) const {
  for (const auto& b : blocks_) {
    if (std::find(b.coords.begin(), b.coords.end(), coord) != b.coords.end()) return b;
  }
  throw ContractViolation("GridPosterior: coordinate out of range");
}

double GridPosterior::excess_kurtosis(Eigen::Index coord) const {
  const GridBlock& b = block_for(coord);
  const auto k = static_cast<Eigen::Index>(std::find(b.coords.begin(), b.coords.end(), coord) - b.coords.begin());
  const Eigen::VectorXd v = b.nodes.row(k).transpose();
  const double mu = v.dot(b.weights);
  const Eigen::ArrayXd c = v.array() - mu;
  const double m2 = (c.square() * b.weights.array()).sum();
  const double m4 = (c.square().square() * b.weights.array()).sum();
  return m4 / (m2 * m2) - 3.0;
}

Eigen::VectorXd GridPosterior::marginal_cdf(Eigen::Index coord) const {
  const GridBlock& b = block_for(coord);
  require(b.coords.size() == 1, "GridPosterior::marginal_cdf needs a 1-D block");
  Eigen::VectorXd cdf(b.weights.size());
  double run = 0.0;
  for (Eigen::Index j = 0; j < b.weights.size(); ++j) {
    run += b.weights[j];
    cdf[j] = run;
  }
  return cdf;
}

bool grid_factorizes(const ForwardModel& forward, const Prior& prior) {
  return forward.separable() && prior.factorizes() && forward.input_dim() == prior.dim();
}

std::vector<GridAxis> default_axes(const Prior& prior, const GridSpec& spec, int widening) {
  spec.validate();
  const Eigen::VectorXd mu = prior.mean();
  const Eigen::VectorXd sd = prior.stddev();
  const double scale = std::ldexp(1.0, widening);
  const Eigen::Index base = prior.dim() == 2 ? spec.resolution_2d : spec.resolution;
  std::vector<GridAxis> axes;
  for (Eigen::Index k = 0; k < prior.dim(); ++k) {
    const double half = spec.half_width * scale * sd[k];
    axes.push_back({mu[k] - half, mu[k] + half, (base - 1) * static_cast<Eigen::Index>(scale) + 1});
  }
  return axes;
}

GridPosterior grid_posterior(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                             const Eigen::VectorXd& y, const std::vector<GridAxis>& axes,
                             double boundary_weight, std::size_t threads) {
  const Eigen::Index m = prior.dim();
  require(forward.input_dim() == m, "grid_posterior: forward and prior dimensions differ");
  require(y.size() == forward.output_dim(), "grid_posterior: observation has the wrong length");
  require(y.allFinite(), "grid_posterior: observation must be finite");
  require(static_cast<Eigen::Index>(axes.size()) == m, "grid_posterior: need one axis per coordinate");
  for (const auto& a : axes) checked_axis(a);

  std::vector<GridBlock> blocks;
  if (grid_factorizes(forward, prior)) {
    for (Eigen::Index i = 0; i < m; ++i) {
      blocks.push_back(component_block(theta, forward, prior, y[i], i, axes[static_cast<std::size_t>(i)]));
    }
  } else {
    require(m <= 2, "grid_posterior: dense grids support m <= 2; larger models must be "
                    "separable with a factorizing prior");
    blocks.push_back(dense_block(theta, forward, prior, y, axes, threads));
  }
  for (const auto& b : blocks) {
    if (b.boundary_weight() > boundary_weight) {
      throw GridBoundaryError("grid_posterior: posterior mass reaches the grid boundary; "
                              "use a wider range");
    }
  }
  return GridPosterior(std::move(blocks), m);
}

GridPosterior grid_posterior(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                             const Eigen::VectorXd& y, const GridSpec& spec, std::size_t threads) {
  spec.validate();
  for (int w = 0;; ++w) {
    try {
      return grid_posterior(theta, forward, prior, y, default_axes(prior, spec, w),
                            spec.boundary_weight, threads);
    } catch (const GridBoundaryError&) {
      if (w >= spec.max_widenings) throw;
    }
  }
}

GridSampler::GridSampler(Theta theta, ForwardPtr forward, PriorPtr prior, GridSpec spec)
    : theta_(theta), forward_(std::move(forward)), prior_(std::move(prior)), spec_(spec) {
  require(forward_ && prior_, "GridSampler: null model");
  spec_.validate();
}

Eigen::MatrixXd GridSampler::sample(const Eigen::VectorXd& y, long count, Rng& rng) const {
  return grid_posterior(theta_, *forward_, *prior_, y, spec_).resample(count, rng);
}

}  // namespace mixem

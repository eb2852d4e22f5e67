#include "mixem/fisher.hpp"

#include "mixem/error.hpp"
#include "mixem/quadrature.hpp"

#include <cmath>

namespace mixem {

namespace {

struct Moments {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  void add(const Theta& theta, double f, double w) {
    const double f2 = f * f;
    const double sig = theta.a2() + theta.b2() * f2;
    const double inv2 = w / (sig * sig);
    a += inv2;
    b += f2 * inv2;
    c += f2 * f2 * inv2;
  }
};

Eigen::VectorXd prior_weights(const Eigen::VectorXd& lp, const std::vector<char>& edge, double tol) {
  Eigen::VectorXd w = lp;
  normalize_log_weights(w);
  double boundary = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (edge[static_cast<std::size_t>(j)]) boundary += w[j];
  }
  if (boundary > tol) {
    throw GridBoundaryError("fisher_information: prior mass reaches the grid boundary; use a wider range");
  }
  return w;
}

}  // namespace

FisherInfo fisher_information(const Theta& theta, const ForwardModel& forward, const Prior& prior,
                              const GridSpec& spec) {
  require(forward.input_dim() == prior.dim(), "fisher_information: dimension mismatch");
  const std::vector<GridAxis> axes = default_axes(prior, spec);
  const Eigen::Index m = prior.dim();
  Moments mom;
  FisherInfo out;
  if (grid_factorizes(forward, prior)) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const GridAxis& ax = axes[static_cast<std::size_t>(i)];
      const Eigen::VectorXd x = uniform_nodes(ax.lo, ax.hi, ax.resolution);
      Eigen::VectorXd lp(x.size());
      for (Eigen::Index j = 0; j < x.size(); ++j) lp[j] = prior.component_log_density(i, x[j]);
      std::vector<char> edge(static_cast<std::size_t>(x.size()), 0);
      edge[0] = 1;
      edge[edge.size() - 1] = 1;
      const Eigen::VectorXd w = prior_weights(lp, edge, spec.boundary_weight);
      for (Eigen::Index j = 0; j < x.size(); ++j) mom.add(theta, forward.separable_component(i, x[j]), w[j]);
      out.nodes += x.size();
    }
    out.quadrature = "uniform grid per coordinate";
  } else {
    require(m <= 2, "fisher_information: dense quadrature supports m <= 2");
    Eigen::Index count = 1;
    std::vector<Eigen::VectorXd> per_axis;
    for (const auto& ax : axes) {
      per_axis.push_back(uniform_nodes(ax.lo, ax.hi, ax.resolution));
      count *= ax.resolution;
    }
    Eigen::MatrixXd nodes(m, count);
    Eigen::VectorXd lp(count);
    std::vector<char> edge(static_cast<std::size_t>(count), 0);
    for (Eigen::Index j = 0; j < count; ++j) {
      Eigen::Index rest = j;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index r = axes[static_cast<std::size_t>(k)].resolution;
        const Eigen::Index idx = rest % r;
        rest /= r;
        nodes(k, j) = per_axis[static_cast<std::size_t>(k)][idx];
        if (idx == 0 || idx == r - 1) edge[static_cast<std::size_t>(j)] = 1;
      }
      lp[j] = prior.log_density(nodes.col(j));
    }
    const Eigen::VectorXd w = prior_weights(lp, edge, spec.boundary_weight);
    for (Eigen::Index j = 0; j < count; ++j) {
      const Eigen::VectorXd fx = forward.evaluate(nodes.col(j));
      for (Eigen::Index i = 0; i < fx.size(); ++i) mom.add(theta, fx[i], w[j]);
    }
    out.nodes = count;
    out.quadrature = "dense uniform grid";
  }
  out.a = mom.a;
  out.b = mom.b;
  out.c = mom.c;
  out.matrix << 0.5 * mom.a, 0.5 * mom.b, 0.5 * mom.b, 0.5 * mom.c;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(out.matrix);
  out.eigenvalues = eig.eigenvalues();
  const double scale = std::max(mom.a * mom.c, 1e-300);
  out.positive_definite = mom.a > 0.0 && out.determinant_minor() > 1e-12 * scale;
  return out;
}

}  // namespace mixem

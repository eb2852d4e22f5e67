#include "mixem/metrics.hpp"

#include "mixem/error.hpp"
#include "mixem/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mixem {

double w1_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() > 0 && b.size() > 0, "w1_1d: empty sample set");
  require(a.allFinite() && b.allFinite(), "w1_1d: samples must be finite");
  std::vector<double> sa(a.data(), a.data() + a.size());
  std::vector<double> sb(b.data(), b.data() + b.size());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) acc += std::abs(sa[i] - sb[i]);
    return acc / static_cast<double>(sa.size());
  }
  // Integrate |F_a - F_b| between consecutive support points of the merged sample.
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double prev = std::min(sa.front(), sb.front());
  double acc = 0.0;
  while (i < sa.size() || j < sb.size()) {
    const double next = (j >= sb.size() || (i < sa.size() && sa[i] <= sb[j])) ? sa[i] : sb[j];
    acc += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    prev = next;
    while (i < sa.size() && sa[i] == next) ++i;
    while (j < sb.size() && sb[j] == next) ++j;
  }
  return acc;
}

double w1_sliced(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int projections,
                 std::uint64_t seed) {
  require(a.rows() > 0 && b.rows() > 0, "w1_sliced: empty sample set");
  require(a.cols() == b.cols(), "w1_sliced: sample dimensions differ");
  require(projections >= 1, "w1_sliced: need at least one projection");
  if (a.cols() == 1) return w1_1d(a.col(0), b.col(0));
  Rng rng(seed, 0x511ced);
  double acc = 0.0;
  for (int p = 0; p < projections; ++p) {
    Eigen::VectorXd dir = rng.normal_vector(a.cols());
    dir /= dir.norm();
    acc += w1_1d(a * dir, b * dir);
  }
  return acc / static_cast<double>(projections);
}

double tv_grid(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double dx) {
  require(p.size() > 0 && p.size() == q.size(), "tv_grid: densities must be non-empty and equal length");
  require(dx > 0.0, "tv_grid: dx must be positive");
  return 0.5 * (p - q).cwiseAbs().sum() * dx;
}

double w1_grid(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double dx) {
  require(p.size() > 0 && p.size() == q.size(), "w1_grid: distributions must be non-empty and equal length");
  require(dx > 0.0, "w1_grid: dx must be positive");
  double fp = 0.0;
  double fq = 0.0;
  double acc = 0.0;
  for (Eigen::Index j = 0; j + 1 < p.size(); ++j) {
    fp += p[j];
    fq += q[j];
    acc += std::abs(fp - fq);
  }
  return acc * dx;
}

}  // namespace mixem

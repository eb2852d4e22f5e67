#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace mixem {

/// Wasserstein-1 distance between two empirical distributions on R. Sizes may
/// differ; for equal sizes this is the mean absolute difference of the sorted samples.
double w1_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean of w1_1d over `projections` seeded random unit directions. Rows are samples.
double w1_sliced(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int projections = 64,
                 std::uint64_t seed = 0x5eed);

/// ½ Σ |p - q| dx for densities tabulated on a common uniform grid.
double tv_grid(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double dx);

/// W1 between two discrete distributions on a common uniform grid with
/// spacing dx, given their node probabilities: Σ |F_p - F_q| dx.
double w1_grid(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double dx);

}  // namespace mixem

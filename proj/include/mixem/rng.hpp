#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace mixem {

/// Seedable, portable random source built on std::mt19937_64.
///
/// Uniform and normal variates are produced by hand-written transforms rather
/// than the <random> distributions, whose output is implementation-defined.
/// `split(id)` derives an independent child stream from (seed, stream path, id)
/// only; it does not consume or depend on the parent's state, so workers can be
/// handed streams in any order and still reproduce the same draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  Rng split(std::uint64_t id) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1), never returns 0.
  double uniform_open();
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index n);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mixem

#pragma once

#include "mixem/forward_model.hpp"
#include "mixem/posterior.hpp"
#include "mixem/prior.hpp"
#include "mixem/theta.hpp"

namespace mixem {

/// Everything that defines one inverse problem apart from θ and the data.
struct ModelBundle {
  ForwardPtr forward;
  PriorPtr prior;
  ThetaBox box{};
  GridSpec grid{};

  /// Throws ContractViolation when the pieces are missing or inconsistent.
  void validate() const;
  Eigen::Index latent_dim() const { return prior->dim(); }
  Eigen::Index obs_dim() const { return forward->output_dim(); }
};

}  // namespace mixem

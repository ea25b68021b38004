#pragma once

#include <Eigen/Core>

namespace pmelm {

// Gauss-Hermite rule for integrals against exp(-t^2). Nodes ascend; weights
// sum to sqrt(pi). log_weights stores log(w_q) + t_q^2, the constant part of
// the adaptive scheme, so extreme nodes never underflow in products.
//
// With adaptive = true the rule is recentered at the conditional mode of the
// integrand and rescaled by its curvature before summing; with adaptive =
// false it is anchored at the prior mean and prior standard deviation.
struct QuadratureRule {
  int order = 25;
  bool adaptive = true;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::VectorXd log_weights;

  static QuadratureRule gauss_hermite(int order, bool adaptive = true);
};

}  // namespace pmelm

#include "pmelm/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "pmelm/errors.hpp"

namespace pmelm {

namespace {

// Orthonormal Hermite recurrence evaluated at t with periodic rescaling, so
// extreme nodes of large rules neither overflow nor lose their weights:
//   sqrt((k+1)/2) p_{k+1} = t p_k - sqrt(k/2) p_{k-1}
// Returns log(sum_{k<q} p_k(t)^2), the Christoffel weight denominator.
double hermite_log_christoffel(double t, int q) {
  double p_prev = 0.0;
  double p = std::pow(std::numbers::pi, -0.25);
  double sum = p * p;
  double sum_scale = 0.0;  // true sum = sum * exp(sum_scale)
  double scale = 0.0;      // true p = p * exp(scale)
  for (int k = 0; k + 1 < q; ++k) {
    const double p_next =
        (t * p - std::sqrt(k / 2.0) * p_prev) / std::sqrt((k + 1) / 2.0);
    p_prev = p;
    p = p_next;
    // fold the term into the running sum, aligning the two scales
    const double term_scale = 2.0 * scale;
    if (term_scale > sum_scale) {
      sum = sum * std::exp(sum_scale - term_scale) + p * p;
      sum_scale = term_scale;
    } else {
      sum += p * p * std::exp(term_scale - sum_scale);
    }
    if (std::abs(p) > 1e140) {
      p *= 1e-140;
      p_prev *= 1e-140;
      scale += std::log(1e140);
    }
  }
  return std::log(sum) + sum_scale;
}

// One Newton step toward the q-th orthonormal Hermite root nearest t.
double newton_polish(double t, int q) {
  // p_q and p_{q-1} share the recurrence scale, so the ratio is exact
  double p_prev = 0.0;
  double p = std::pow(std::numbers::pi, -0.25);
  for (int k = 0; k < q; ++k) {
    const double p_next =
        (t * p - std::sqrt(k / 2.0) * p_prev) / std::sqrt((k + 1) / 2.0);
    p_prev = p;
    p = p_next;
    if (std::abs(p) > 1e140) {
      p *= 1e-140;
      p_prev *= 1e-140;
    }
  }
  const double derivative = std::sqrt(2.0 * q) * p_prev;
  if (derivative == 0.0) return t;
  return t - p / derivative;
}

}  // namespace

QuadratureRule QuadratureRule::gauss_hermite(int order, bool adaptive) {
  if (order < 1) throw Error("quadrature order must be >= 1");

  QuadratureRule rule;
  rule.order = order;
  rule.adaptive = adaptive;

  if (order == 1) {
    rule.nodes = Eigen::VectorXd::Zero(1);
    rule.weights = Eigen::VectorXd::Constant(1, std::sqrt(std::numbers::pi));
    rule.log_weights =
        Eigen::VectorXd::Constant(1, 0.5 * std::log(std::numbers::pi));
    return rule;
  }

  // Golub-Welsch eigenvalues seed the nodes; two Newton polish passes pin
  // them to the polynomial roots.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success)
    throw Error("Gauss-Hermite eigen decomposition failed");

  rule.nodes = eig.eigenvalues();
  for (int q = 0; q < order; ++q) {
    rule.nodes(q) = newton_polish(rule.nodes(q), order);
    rule.nodes(q) = newton_polish(rule.nodes(q), order);
  }
  // the rule is symmetric; average the mirrored pairs
  for (int q = 0; q < order / 2; ++q) {
    const double t = 0.5 * (rule.nodes(q) - rule.nodes(order - 1 - q));
    rule.nodes(q) = t;
    rule.nodes(order - 1 - q) = -t;
  }
  if (order % 2 == 1) rule.nodes(order / 2) = 0.0;

  rule.weights.resize(order);
  rule.log_weights.resize(order);
  for (int q = 0; q < order; ++q) {
    const double log_w = -hermite_log_christoffel(rule.nodes(q), order);
    rule.weights(q) = std::exp(log_w);
    rule.log_weights(q) = log_w + rule.nodes(q) * rule.nodes(q);
  }
  return rule;
}

}  // namespace pmelm

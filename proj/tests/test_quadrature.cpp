#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pmelm/errors.hpp"
#include "pmelm/quadrature.hpp"

using namespace pmelm;

TEST_CASE("weights sum to sqrt(pi) and nodes are symmetric") {
  for (int q : {1, 2, 5, 25, 50}) {
    const QuadratureRule rule = QuadratureRule::gauss_hermite(q);
    CHECK(rule.weights.sum() ==
          doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-13));
    for (int k = 0; k < q; ++k)
      CHECK(rule.nodes(k) == doctest::Approx(-rule.nodes(q - 1 - k)).epsilon(1e-12));
  }
}

// Adaptive integration of a standard normal density must give exactly one:
// sqrt(2) * sum_q w_q e^{t_q^2} phi(sqrt(2) t_q) = sum_q w_q / sqrt(pi).
TEST_CASE("adaptive rule normalizes the Gaussian") {
  for (int q : {5, 10, 25, 50}) {
    const QuadratureRule rule = QuadratureRule::gauss_hermite(q);
    double total = 0.0;
    for (int k = 0; k < q; ++k) {
      const double u = std::numbers::sqrt2 * rule.nodes(k);
      const double phi =
          std::exp(-u * u / 2.0) / std::sqrt(2.0 * std::numbers::pi);
      total += std::numbers::sqrt2 * rule.weights(k) *
               std::exp(rule.nodes(k) * rule.nodes(k)) * phi;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("polynomial exactness up to degree 2q-1") {
  const QuadratureRule rule = QuadratureRule::gauss_hermite(7);
  // integral of t^8 e^{-t^2} = 105/16 sqrt(pi)
  double total = 0.0;
  for (int k = 0; k < rule.order; ++k)
    total += rule.weights(k) * std::pow(rule.nodes(k), 8);
  CHECK(total ==
        doctest::Approx(105.0 / 16.0 * std::sqrt(std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("order must be positive") {
  CHECK_THROWS_AS(QuadratureRule::gauss_hermite(0), Error);
}

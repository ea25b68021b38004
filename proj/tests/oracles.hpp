// Independent reference computations for the test suites. Everything here is
// written directly from the model definition, without touching the library's
// quadrature or derivative code paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Joint log density of one subject's counts and random intercept.
inline double joint_logdensity(const Eigen::VectorXd& y,
                               const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& beta, double sigma_sq,
                               double u) {
  double out = -0.5 * std::log(2.0 * std::numbers::pi * sigma_sq) -
               u * u / (2.0 * sigma_sq);
  for (int j = 0; j < y.size(); ++j) {
    const double eta = x.row(j).dot(beta) + u;
    out += y(j) * eta - std::exp(eta) - std::lgamma(y(j) + 1.0);
  }
  return out;
}

// Dense trapezoid integration of the marginal likelihood over
// u in [-width_sd * sigma, width_sd * sigma], in log space.
inline double subject_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& beta, double sigma_sq,
                             int points = 20001, double width_sd = 10.0) {
  const double sigma = std::sqrt(sigma_sq);
  const double lo = -width_sd * sigma;
  const double step = 2.0 * width_sd * sigma / (points - 1);
  std::vector<double> logs(points);
  double peak = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double u = lo + k * step;
    double v = joint_logdensity(y, x, beta, sigma_sq, u);
    if (k == 0 || k == points - 1) v += std::log(0.5);
    logs[k] = v;
    peak = std::max(peak, v);
  }
  double total = 0.0;
  for (double v : logs) total += std::exp(v - peak);
  return peak + std::log(total) + std::log(step);
}

struct Posterior {
  double mean = 0.0;
  double var = 0.0;
};

// Posterior mean and variance of the random intercept on the same grid.
inline Posterior posterior_moments(const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& beta, double sigma_sq,
                                   int points = 20001, double width_sd = 10.0) {
  const double sigma = std::sqrt(sigma_sq);
  const double lo = -width_sd * sigma;
  const double step = 2.0 * width_sd * sigma / (points - 1);
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(points);
  for (int k = 0; k < points; ++k) {
    const double u = lo + k * step;
    double v = joint_logdensity(y, x, beta, sigma_sq, u);
    if (k == 0 || k == points - 1) v += std::log(0.5);
    logs[k] = v;
    peak = std::max(peak, v);
  }
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < points; ++k) {
    const double u = lo + k * step;
    const double w = std::exp(logs[k] - peak);
    z += w;
    m1 += w * u;
    m2 += w * u * u;
  }
  Posterior p;
  p.mean = m1 / z;
  p.var = m2 / z - p.mean * p.mean;
  return p;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  const auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    sa += (ra[i] - ma) * (ra[i] - ma);
    sb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(sa * sb);
}

}  // namespace oracle

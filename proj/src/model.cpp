#include "pmelm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <json.hpp>

#include "pmelm/errors.hpp"

namespace pmelm {

namespace {

// The optimizer keeps log sigma1_sq inside a box: below 1e-6 the variance is
// statistically zero for panels of this size, and the sigma-block curvature
// cancellations stay well inside double precision there.
constexpr double kLogSigmaFloor = -13.815510557964274;  // log(1e-6)
constexpr double kLogSigmaCeil = 13.815510557964274;    // log(1e6)

void check_theta(const Theta& theta) {
  if (!(theta.sigma1_sq > 0.0) || !std::isfinite(theta.sigma1_sq))
    throw Error("sigma1_sq must be positive and finite");
  if (!theta.beta.allFinite()) throw Error("beta must be finite");
}

// Joint log density of one subject's counts and random intercept, up to the
// pieces that depend on u, plus cached u-free sums.
struct JointDensity {
  double sum_y = 0.0;
  double lam_sum = 0.0;   // sum_j exp(x_j' beta)
  double const_term = 0.0;  // y'eta0 - sum lgamma(y_j+1) - log-normal constant
  double sigma_sq = 1.0;

  double value(double u) const {
    return const_term + sum_y * u - lam_sum * std::exp(u) -
           u * u / (2.0 * sigma_sq);
  }
};

JointDensity make_joint(const SubjectBlock& s, const Theta& theta) {
  JointDensity j;
  j.sigma_sq = theta.sigma1_sq;
  const Eigen::VectorXd eta0 = s.X * theta.beta;
  double lgamma_sum = 0.0;
  for (int k = 0; k < s.y.size(); ++k) {
    j.sum_y += s.y(k);
    j.lam_sum += std::exp(eta0(k));
    lgamma_sum += std::lgamma(s.y(k) + 1.0);
  }
  j.const_term = s.y.dot(eta0) - lgamma_sum -
                 0.5 * std::log(2.0 * std::numbers::pi * theta.sigma1_sq);
  if (!std::isfinite(j.lam_sum) || !std::isfinite(j.const_term))
    throw QuadratureDegenerate("nonfinite joint density (linear predictor overflow)");
  return j;
}

ConditionalMode find_mode(const JointDensity& j) {
  double u = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double mu = j.lam_sum * std::exp(u);
    const double grad = j.sum_y - mu - u / j.sigma_sq;
    const double curv = mu + 1.0 / j.sigma_sq;
    double step = grad / curv;
    if (!std::isfinite(step))
      throw QuadratureDegenerate("mode search produced nonfinite step");
    step = std::clamp(step, -10.0, 10.0);
    u += step;
    if (std::abs(step) <= 1e-13 * (1.0 + std::abs(u)))
      return {u, j.lam_sum * std::exp(u) + 1.0 / j.sigma_sq};
  }
  throw QuadratureDegenerate("conditional mode search did not converge");
}

// Everything the likelihood, score, Hessian and EB summaries need from one
// subject: the log integral and posterior moments of the random intercept.
struct Moments {
  double li = 0.0;
  double m1 = 0.0;   // E[u]
  double m2 = 0.0;   // E[u^2]
  double m4 = 0.0;   // E[u^4]
  double e_u = 0.0;  // E[e^u]
  double e_2u = 0.0; // E[e^{2u}]
  double c2 = 0.0;   // E[u^2 e^u]
};

Moments subject_moments(const SubjectBlock& s, const Theta& theta,
                        const QuadratureRule& rule) {
  const JointDensity joint = make_joint(s, theta);

  double center = 0.0;
  double curvature = 1.0 / theta.sigma1_sq;
  if (rule.adaptive) {
    const ConditionalMode m = find_mode(joint);
    center = m.mode;
    curvature = m.curvature;
  }
  const double tau = 1.0 / std::sqrt(curvature);
  const double scale = std::numbers::sqrt2 * tau;

  const int q = rule.order;
  Eigen::VectorXd u(q), a(q);
  double amax = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < q; ++k) {
    u(k) = center + scale * rule.nodes(k);
    a(k) = rule.log_weights(k) + joint.value(u(k));
    amax = std::max(amax, a(k));
  }
  if (!std::isfinite(amax))
    throw QuadratureDegenerate("quadrature produced nonfinite density values");

  double total = 0.0;
  Eigen::VectorXd w(q);
  for (int k = 0; k < q; ++k) {
    w(k) = std::exp(a(k) - amax);
    total += w(k);
  }

  Moments out;
  out.li = std::log(scale) + amax + std::log(total);
  for (int k = 0; k < q; ++k) {
    const double p = w(k) / total;
    const double uk = u(k);
    const double eu = std::exp(uk);
    out.m1 += p * uk;
    out.m2 += p * uk * uk;
    out.m4 += p * uk * uk * uk * uk;
    out.e_u += p * eu;
    out.e_2u += p * eu * eu;
    out.c2 += p * uk * uk * eu;
  }
  return out;
}

Eigen::VectorXd pack(const Theta& theta, bool log_scale) {
  Eigen::VectorXd phi(theta.dim());
  phi.head(theta.beta.size()) = theta.beta;
  phi(theta.beta.size()) =
      log_scale ? std::log(theta.sigma1_sq) : theta.sigma1_sq;
  return phi;
}

Theta unpack(const Eigen::VectorXd& phi, bool log_scale) {
  Theta theta;
  const int p = static_cast<int>(phi.size()) - 1;
  theta.beta = phi.head(p);
  theta.sigma1_sq = log_scale ? std::exp(phi(p)) : phi(p);
  return theta;
}

struct Objective {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// Weighted objective with gradient and Hessian in the optimization scale.
Objective evaluate_objective(const std::vector<SubjectBlock>& blocks,
                             const Theta& theta, const QuadratureRule& rule,
                             const Eigen::VectorXd& weights, bool log_scale) {
  const int p = static_cast<int>(theta.beta.size());
  Objective obj;
  obj.grad = Eigen::VectorXd::Zero(p + 1);
  obj.hess = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const double w = weights(static_cast<Eigen::Index>(i));
    if (w == 0.0) continue;
    const SubjectDerivs d = subject_derivs(blocks[i], theta, rule);
    obj.value += w * d.li;
    obj.grad += w * d.score;
    obj.hess += w * d.hessian;
  }
  if (log_scale) {
    const double s2 = theta.sigma1_sq;
    const double gs = obj.grad(p);
    obj.grad(p) = gs * s2;
    obj.hess(p, p) = obj.hess(p, p) * s2 * s2 + gs * s2;
    obj.hess.col(p).head(p) *= s2;
    obj.hess.row(p).head(p) *= s2;
  }
  if (!std::isfinite(obj.value) || !obj.grad.allFinite() ||
      !obj.hess.allFinite())
    throw NonFiniteDerivative("objective or derivatives are not finite");
  return obj;
}

// Plain Poisson IRLS, ignoring the random effect; provides starting values.
Eigen::VectorXd poisson_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& row_weights) {
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd eta = (y.array() + 0.5).log();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 25; ++it) {
    const Eigen::ArrayXd mu = eta.array().min(30.0).exp();
    const Eigen::ArrayXd w = mu * row_weights.array();
    const Eigen::VectorXd z =
        (eta.array() + (y.array() - mu) / mu).matrix();
    Eigen::MatrixXd xtwx = X.transpose() * w.matrix().asDiagonal() * X;
    xtwx.diagonal().array() += 1e-10;
    const Eigen::VectorXd rhs =
        X.transpose() * (w * z.array()).matrix();
    const Eigen::VectorXd next = xtwx.ldlt().solve(rhs);
    const double delta = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    eta = X * beta;
    if (delta < 1e-10) break;
  }
  return beta;
}

Eigen::VectorXd unit_weights(std::size_t m) {
  return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m));
}

void check_weights(const Eigen::VectorXd& w, std::size_t m) {
  if (static_cast<std::size_t>(w.size()) != m)
    throw LengthMismatch("weight vector has length " +
                         std::to_string(w.size()) + ", expected " +
                         std::to_string(m));
  if (!w.allFinite()) throw Error("weights must be finite");
}

// Populates everything downstream diagnostics need, at a fixed theta.
FitResult finalize_fit(const PanelDataset& data, const DesignSpec& spec,
                       DesignMatrices design, std::vector<SubjectBlock> blocks,
                       const QuadratureRule& rule, const Theta& theta,
                       const Eigen::VectorXd& weights, int iterations,
                       bool check_concave) {
  const int m = data.size();
  const int p = spec.p();

  FitResult fit;
  fit.theta_hat = theta;
  fit.li.resize(m);
  fit.delta.resize(p + 1, m);
  fit.hessian = Eigen::MatrixXd::Zero(p + 1, p + 1);
  fit.eb.resize(m);

  Eigen::VectorXd weighted_grad = Eigen::VectorXd::Zero(p + 1);
  fit.loglik = 0.0;
  for (int i = 0; i < m; ++i) {
    const SubjectDerivs d = subject_derivs(blocks[i], theta, rule);
    fit.li(i) = d.li;
    fit.delta.col(i) = d.score;
    fit.hessian += weights(i) * d.hessian;
    weighted_grad += weights(i) * d.score;
    fit.eb[i] = d.eb;
    fit.loglik += d.li;  // ordered sum, matching total_loglik bitwise
  }
  fit.grad_norm = weighted_grad.cwiseAbs().maxCoeff();
  fit.iterations = iterations;

  fit.mu_hat = ((design.X * theta.beta).array() + theta.sigma1_sq / 2.0)
                   .min(700.0)
                   .exp();

  if (check_concave) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.hessian);
    if (eig.info() != Eigen::Success || eig.eigenvalues().maxCoeff() >= 0.0)
      throw NonConcaveAtOptimum(
          "Hessian is not negative definite at the reported optimum");
  }

  fit.data = data;
  fit.spec = spec;
  fit.design = std::move(design);
  fit.blocks = std::move(blocks);
  return fit;
}

}  // namespace

Eigen::VectorXd Theta::stacked() const {
  Eigen::VectorXd v(dim());
  v.head(beta.size()) = beta;
  v(beta.size()) = sigma1_sq;
  return v;
}

Theta Theta::from_stacked(const Eigen::VectorXd& v) {
  Theta t;
  t.beta = v.head(v.size() - 1);
  t.sigma1_sq = v(v.size() - 1);
  return t;
}

std::vector<SubjectBlock> split_subjects(const PanelDataset& data,
                                         const DesignMatrices& design) {
  std::vector<SubjectBlock> blocks(data.size());
  for (int i = 0; i < data.size(); ++i) {
    SubjectBlock& b = blocks[i];
    b.y.resize(kPeriods);
    for (int j = 0; j < kPeriods; ++j)
      b.y(j) = static_cast<double>(data.subjects[i].y[j]);
    b.X = design.X.middleRows(i * kPeriods, kPeriods);
  }
  return blocks;
}

ConditionalMode conditional_mode(const SubjectBlock& s, const Theta& theta) {
  check_theta(theta);
  const ConditionalMode m = find_mode(make_joint(s, theta));
  return m;
}

double subject_loglik(const SubjectBlock& s, const Theta& theta,
                      const QuadratureRule& rule) {
  check_theta(theta);
  if (s.y.size() < 1) throw Error("subject must have at least one observation");
  return subject_moments(s, theta, rule).li;
}

EbEstimate eb_estimate(const SubjectBlock& s, const Theta& theta,
                       const QuadratureRule& rule) {
  check_theta(theta);
  const Moments m = subject_moments(s, theta, rule);
  return {m.m1, m.m2 - m.m1 * m.m1};
}

SubjectDerivs subject_derivs(const SubjectBlock& s, const Theta& theta,
                             const QuadratureRule& rule) {
  check_theta(theta);
  const Moments m = subject_moments(s, theta, rule);
  const int p = static_cast<int>(s.X.cols());
  const double s2 = theta.sigma1_sq;

  const Eigen::VectorXd eta0 = s.X * theta.beta;
  const Eigen::VectorXd lam0 = eta0.array().exp();
  const Eigen::VectorXd s_y = s.X.transpose() * s.y;
  const Eigen::VectorXd s_l = s.X.transpose() * lam0;
  const Eigen::MatrixXd q_l = s.X.transpose() * lam0.asDiagonal() * s.X;

  SubjectDerivs d;
  d.li = m.li;
  d.eb = {m.m1, m.m2 - m.m1 * m.m1};

  d.score.resize(p + 1);
  d.score.head(p) = s_y - m.e_u * s_l;
  const double g_sigma = m.m2 / (2.0 * s2 * s2) - 1.0 / (2.0 * s2);
  d.score(p) = g_sigma;

  // H = E[d2f] + E[g g'] - (E g)(E g)', expectations under the posterior of u
  d.hessian.resize(p + 1, p + 1);
  const Eigen::VectorXd gb = d.score.head(p);
  d.hessian.topLeftCorner(p, p) =
      -m.e_u * q_l + s_y * s_y.transpose() -
      m.e_u * (s_y * s_l.transpose() + s_l * s_y.transpose()) +
      m.e_2u * (s_l * s_l.transpose()) - gb * gb.transpose();
  const Eigen::VectorXd cross =
      s_y * g_sigma - s_l * (m.c2 / (2.0 * s2 * s2) - m.e_u / (2.0 * s2)) -
      gb * g_sigma;
  d.hessian.col(p).head(p) = cross;
  d.hessian.row(p).head(p) = cross.transpose();
  d.hessian(p, p) = -m.m2 / (s2 * s2 * s2) + 1.0 / (2.0 * s2 * s2) +
                    m.m4 / (4.0 * s2 * s2 * s2 * s2) -
                    m.m2 / (2.0 * s2 * s2 * s2) + 1.0 / (4.0 * s2 * s2) -
                    g_sigma * g_sigma;
  if (!d.score.allFinite() || !d.hessian.allFinite())
    throw NonFiniteDerivative("subject score or Hessian is not finite");
  return d;
}

double total_loglik(const std::vector<SubjectBlock>& blocks, const Theta& theta,
                    const QuadratureRule& rule,
                    const Eigen::VectorXd& weights) {
  check_weights(weights, blocks.size());
  check_theta(theta);
  double total = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    total += weights(static_cast<Eigen::Index>(i)) *
             subject_loglik(blocks[i], theta, rule);
  return total;
}

double total_loglik(const std::vector<SubjectBlock>& blocks, const Theta& theta,
                    const QuadratureRule& rule) {
  return total_loglik(blocks, theta, rule, unit_weights(blocks.size()));
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> score_and_hessian(
    const std::vector<SubjectBlock>& blocks, const Theta& theta,
    const QuadratureRule& rule) {
  check_theta(theta);
  const int m = static_cast<int>(blocks.size());
  const int dim = theta.dim();
  Eigen::MatrixXd delta(dim, m);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < m; ++i) {
    const SubjectDerivs d = subject_derivs(blocks[i], theta, rule);
    delta.col(i) = d.score;
    hess += d.hessian;
  }
  return {std::move(delta), std::move(hess)};
}

FitResult fit_ml(const PanelDataset& data, const DesignSpec& spec,
                 const QuadratureRule& rule, std::optional<Theta> init,
                 FitOptions options) {
  DesignMatrices design = build_design(data, spec);
  std::vector<SubjectBlock> blocks = split_subjects(data, design);

  const int m = data.size();
  const int p = spec.p();
  if (data.rows() <= p + 1)
    throw Error("panel has too few observations for the design");

  Eigen::VectorXd weights =
      options.weights ? *options.weights : unit_weights(blocks.size());
  check_weights(weights, blocks.size());

  Theta theta;
  if (init) {
    theta = *init;
    check_theta(theta);
    if (theta.beta.size() != p) throw Error("init beta has wrong length");
  } else {
    Eigen::VectorXd y(data.rows());
    Eigen::VectorXd row_w(data.rows());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < kPeriods; ++j) {
        y(i * kPeriods + j) = static_cast<double>(data.subjects[i].y[j]);
        row_w(i * kPeriods + j) = std::max(weights(i), 0.0);
      }
    theta.beta = poisson_irls(design.X, y, row_w);
    theta.sigma1_sq = 0.1;
  }

  const bool log_scale = options.log_sigma_scale;
  Eigen::VectorXd phi = pack(theta, log_scale);
  Objective cur = evaluate_objective(blocks, unpack(phi, log_scale), rule,
                                     weights, log_scale);

  bool converged = false;
  int iterations = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    iterations = it;

    // A sigma gradient pointing outward while pinned at the floor is
    // unreachable; freeze that coordinate out of the step and the
    // convergence test (active-set projection).
    const bool pinned =
        log_scale && phi(p) <= kLogSigmaFloor + 1e-9 && cur.grad(p) < 0.0;
    Eigen::VectorXd proj_grad = cur.grad;
    Eigen::MatrixXd proj_hess = cur.hess;
    if (pinned) {
      proj_grad(p) = 0.0;
      proj_hess.row(p).setZero();
      proj_hess.col(p).setZero();
      proj_hess(p, p) = -1.0;
    }

    // Newton direction through an eigenvalue-clamped curvature, so indefinite
    // iterates still yield a scaled ascent direction.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> curv(-proj_hess);
    if (curv.info() != Eigen::Success)
      throw NonFiniteDerivative("curvature eigendecomposition failed");
    const double lam_max = curv.eigenvalues().cwiseAbs().maxCoeff();
    const double lam_floor = std::max(1e-12, 1e-12 * lam_max);
    const Eigen::VectorXd inv_lam =
        curv.eigenvalues().cwiseAbs().cwiseMax(lam_floor).cwiseInverse();
    const Eigen::VectorXd direction =
        curv.eigenvectors() * inv_lam.asDiagonal() *
        (curv.eigenvectors().transpose() * proj_grad);
    if (!direction.allFinite())
      throw NonFiniteDerivative("search direction is not finite");

    Eigen::VectorXd full_cand = phi + direction;
    if (log_scale)
      full_cand(p) = std::clamp(full_cand(p), kLogSigmaFloor, kLogSigmaCeil);
    if (proj_grad.cwiseAbs().maxCoeff() < options.grad_tol &&
        (full_cand - phi).cwiseAbs().maxCoeff() < options.step_tol) {
      converged = true;
      break;
    }

    // Step halving keeps every accepted iterate at least as likely as the
    // previous one.
    double alpha = 1.0;
    bool accepted = false;
    while (alpha > 1e-12) {
      Eigen::VectorXd cand = phi + alpha * direction;
      if (log_scale) {
        cand(p) = std::clamp(cand(p), kLogSigmaFloor, kLogSigmaCeil);
      } else if (cand(p) <= 0.0) {
        alpha *= 0.5;
        continue;
      }
      Objective trial;
      try {
        trial = evaluate_objective(blocks, unpack(cand, log_scale), rule,
                                   weights, log_scale);
      } catch (const Error&) {
        alpha *= 0.5;
        continue;
      }
      if (trial.value >= cur.value - 1e-12 * (1.0 + std::abs(cur.value))) {
        phi = cand;
        cur = trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (proj_grad.cwiseAbs().maxCoeff() < options.grad_tol) {
        converged = true;
        break;
      }
      throw NonConvergence("line search failed with gradient norm " +
                           std::to_string(cur.grad.cwiseAbs().maxCoeff()));
    }
  }
  if (!converged)
    throw NonConvergence("no convergence after " +
                         std::to_string(options.max_iterations) +
                         " iterations; gradient norm " +
                         std::to_string(cur.grad.cwiseAbs().maxCoeff()));

  return finalize_fit(data, spec, std::move(design), std::move(blocks), rule,
                      unpack(phi, log_scale), weights, iterations,
                      options.check_concave);
}

FitResult evaluate_at(const PanelDataset& data, const DesignSpec& spec,
                      const QuadratureRule& rule, const Theta& theta) {
  check_theta(theta);
  DesignMatrices design = build_design(data, spec);
  std::vector<SubjectBlock> blocks = split_subjects(data, design);
  if (theta.beta.size() != spec.p()) throw Error("theta beta has wrong length");
  return finalize_fit(data, spec, std::move(design), std::move(blocks), rule,
                      theta, unit_weights(data.size()), 0,
                      /*check_concave=*/false);
}

std::string fit_json(const FitResult& fit) {
  nlohmann::json j;
  j["beta"] = std::vector<double>(fit.theta_hat.beta.begin(),
                                  fit.theta_hat.beta.end());
  j["sigma1_sq"] = fit.theta_hat.sigma1_sq;
  j["loglik"] = fit.loglik;
  j["li"] = std::vector<double>(fit.li.begin(), fit.li.end());
  j["iterations"] = fit.iterations;
  j["grad_norm"] = fit.grad_norm;
  return j.dump(2) + "\n";
}

Theta theta_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Theta theta;
  const std::vector<double> beta = j.at("beta").get<std::vector<double>>();
  theta.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                 static_cast<long>(beta.size()));
  theta.sigma1_sq = j.at("sigma1_sq").get<double>();
  check_theta(theta);
  return theta;
}

}  // namespace pmelm

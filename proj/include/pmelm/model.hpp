#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmelm/panel.hpp"
#include "pmelm/quadrature.hpp"

namespace pmelm {

// Model parameters, ordered (beta_1..beta_p, sigma1_sq) everywhere a stacked
// vector or matrix appears. sigma1_sq is the random-intercept variance and
// must stay positive; the optimizer works on its log internally.
struct Theta {
  Eigen::VectorXd beta;
  double sigma1_sq = 1.0;

  int dim() const { return static_cast<int>(beta.size()) + 1; }
  Eigen::VectorXd stacked() const;
  static Theta from_stacked(const Eigen::VectorXd& v);
};

// Per-subject slice of the stacked design: the four counts and their
// covariate rows. The random-effect incidence column is all ones.
struct SubjectBlock {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
};

std::vector<SubjectBlock> split_subjects(const PanelDataset& data,
                                         const DesignMatrices& design);

// Mode and negated second derivative of the joint log density of one
// subject, as a function of the random intercept.
struct ConditionalMode {
  double mode = 0.0;
  double curvature = 1.0;  // -d2/du2 at the mode, always > 0
};

ConditionalMode conditional_mode(const SubjectBlock& s, const Theta& theta);

// Marginal log-likelihood contribution of one subject, integrating the
// random intercept out by (adaptive) Gauss-Hermite quadrature.
double subject_loglik(const SubjectBlock& s, const Theta& theta,
                      const QuadratureRule& rule);

struct EbEstimate {
  double b_hat = 0.0;
  double var_b = 0.0;
};

// Posterior mean and variance of the subject's random intercept at theta.
EbEstimate eb_estimate(const SubjectBlock& s, const Theta& theta,
                       const QuadratureRule& rule);

// Value, exact score and exact Hessian of one subject's contribution, in the
// (beta, sigma1_sq) parameterization. Inner derivatives are analytic; the
// outer integrals reuse the adaptive rule.
struct SubjectDerivs {
  double li = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
  EbEstimate eb;
};

SubjectDerivs subject_derivs(const SubjectBlock& s, const Theta& theta,
                             const QuadratureRule& rule);

// Case-weighted total log-likelihood sum(omega_i * l_i). Weights of exactly
// one reproduce the plain likelihood bitwise.
double total_loglik(const std::vector<SubjectBlock>& blocks, const Theta& theta,
                    const QuadratureRule& rule, const Eigen::VectorXd& weights);
double total_loglik(const std::vector<SubjectBlock>& blocks, const Theta& theta,
                    const QuadratureRule& rule);

// Per-subject scores as columns of delta, and the total Hessian.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> score_and_hessian(
    const std::vector<SubjectBlock>& blocks, const Theta& theta,
    const QuadratureRule& rule);

struct FitOptions {
  int max_iterations = 200;
  double grad_tol = 1e-6;
  double step_tol = 1e-8;
  bool log_sigma_scale = true;  // optimize log sigma1_sq instead of sigma1_sq
  std::optional<Eigen::VectorXd> weights;  // case weights, default all ones
  bool check_concave = true;
};

// Maximum-likelihood fit. loglik and li always report the unweighted
// likelihood at the optimum; hessian is the Hessian of the maximized
// objective (they coincide for unit weights). delta holds the unweighted
// per-subject scores.
struct FitResult {
  Theta theta_hat;
  double loglik = 0.0;
  Eigen::VectorXd li;
  Eigen::MatrixXd delta;    // (p+1) x m1
  Eigen::MatrixXd hessian;  // (p+1) x (p+1)
  std::vector<EbEstimate> eb;
  Eigen::VectorXd mu_hat;  // marginal means exp(x'beta + sigma1_sq/2)
  int iterations = 0;
  double grad_norm = 0.0;

  // context carried for the diagnostics layer
  PanelDataset data;
  DesignSpec spec;
  DesignMatrices design;
  std::vector<SubjectBlock> blocks;
};

FitResult fit_ml(const PanelDataset& data, const DesignSpec& spec,
                 const QuadratureRule& rule, std::optional<Theta> init = {},
                 FitOptions options = {});

// FitResult populated at a fixed theta, without optimizing. Used to rebuild
// the diagnostics context from a serialized fit.
FitResult evaluate_at(const PanelDataset& data, const DesignSpec& spec,
                      const QuadratureRule& rule, const Theta& theta);

// JSON document with exactly the fields
// beta, sigma1_sq, loglik, li, iterations, grad_norm.
std::string fit_json(const FitResult& fit);
Theta theta_from_json(const std::string& text);

}  // namespace pmelm

#pragma once

#include <vector>

#include <Eigen/Core>

#include "pmelm/model.hpp"

namespace pmelm {

// Per-subject local-influence summary. Ci is the case-weight normal
// curvature 2 d' (-L..)^{-1} d; Ci_b and Ci_d are its fixed-effect and
// variance blocks taken from the block-diagonal restriction of the Hessian.
// rri is the squared length of the marginal residual vector. cos_alpha is
// the angle between the subject's design outer product X_i X_i' and the
// residual outer product r_i r_i'; cos_phi is the ratio that makes
// Ci = 2 |L..^{-1}| |d_i|^2 cos_phi exact in the Frobenius norm. A subject
// with a zero residual vector gets cos_alpha = 0 by convention, and a zero
// score gets cos_phi = 0.
struct DiagnosticRecord {
  int subject_id = 0;
  int trt = 0;
  double Ci = 0.0;
  double Ci_b = 0.0;
  double Ci_d = 0.0;
  double rri = 0.0;
  double cos_alpha = 0.0;
  double cos_phi = 0.0;
  double cook1 = 0.0;
  double comp_xx = 0.0;
  double comp_r = 0.0;
  double comp_zz = 0.0;
  double comp_ir = 0.0;
  double comp_vinv = 0.0;
};

// Curvature of the likelihood displacement along the i-th case weight.
double local_curvature(const FitResult& fit, int i);

// Quadratic-form curvature for an arbitrary score against a (negated)
// Hessian; exposed for the algebra on synthetic inputs.
double curvature_form(const Eigen::VectorXd& score,
                      const Eigen::MatrixXd& hessian);

// Fixed-effect and variance parts of Ci under the block-diagonal Hessian.
std::pair<double, double> decompose(const FitResult& fit, int i);

// Variance-part curvature in the scalar trace form
// (1/2)|L..^{-1}| cos_phi (1/s^4)(1 - Var(b_i)/s^2)^2, reported alongside the
// block quadratic form because the two follow different constant
// conventions.
double variance_curvature_trace_form(const FitResult& fit, int i);

struct ResidualSet {
  Eigen::VectorXd r;  // y - mu_hat, stacked
  std::vector<Eigen::VectorXd> per_subject;
};

ResidualSet residual_stats(const FitResult& fit);
double rr(const FitResult& fit, int i);
double cos_alpha(const FitResult& fit, int i);

struct OneStepDeletion {
  Theta theta;
  double cook = 0.0;
};

// Single Newton step toward the fit without subject i, and the Cook-type
// distance of that step.
OneStepDeletion one_step_deletion(const FitResult& fit, int i,
                                  const QuadratureRule& rule);

// Log-likelihood with subject i removed, as an ordered sum over the
// remaining contributions.
double deleted_loglik(const FitResult& fit, int i);

struct ComponentNorms {
  double xx = 0.0;    // |X_i X_i'|_F
  double r = 0.0;     // |V_i^{-1/2} r_i|
  double zz = 0.0;    // |Z_i Z_i'|_F
  double ir = 0.0;    // |I - R_i R_i'|_F
  double vinv = 0.0;  // |V_i^{-1}|_F
};

ComponentNorms component_norms(const FitResult& fit, int i);

// Approximate marginal covariance of the subject's counts:
// Var(y_ij) = mu_ij + mu_ij^2 (e^{s2} - 1), Cov = mu_ij mu_ik (e^{s2} - 1).
Eigen::MatrixXd marginal_covariance(const FitResult& fit, int i);

// One record per subject, ordered by subject id.
std::vector<DiagnosticRecord> diagnose(const FitResult& fit,
                                       const QuadratureRule& rule);

}  // namespace pmelm

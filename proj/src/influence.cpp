#include "pmelm/influence.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "pmelm/errors.hpp"

namespace pmelm {

namespace {

Eigen::LDLT<Eigen::MatrixXd> factor_neg(const Eigen::MatrixXd& hessian,
                                        const char* what) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(-hessian);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw SingularHessian(std::string(what) +
                          ": -Hessian is not positive definite");
  return ldlt;
}

double frobenius_inverse_norm(const Eigen::MatrixXd& hessian) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(hessian);
  if (!lu.isInvertible()) throw SingularHessian("Hessian is singular");
  return lu.inverse().norm();
}

void check_index(const FitResult& fit, int i) {
  if (i < 0 || i >= fit.data.size())
    throw Error("subject index out of range: " + std::to_string(i));
}

}  // namespace

double curvature_form(const Eigen::VectorXd& score,
                      const Eigen::MatrixXd& hessian) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt = factor_neg(hessian, "curvature");
  return 2.0 * score.dot(ldlt.solve(score));
}

double local_curvature(const FitResult& fit, int i) {
  check_index(fit, i);
  return curvature_form(fit.delta.col(i), fit.hessian);
}

std::pair<double, double> decompose(const FitResult& fit, int i) {
  check_index(fit, i);
  const int p = fit.spec.p();
  const Eigen::VectorXd score_b = fit.delta.col(i).head(p);
  const Eigen::MatrixXd hess_b = fit.hessian.topLeftCorner(p, p);
  const double c1 = curvature_form(score_b, hess_b);

  const double h_ss = fit.hessian(p, p);
  if (!(-h_ss > 0.0))
    throw SingularHessian("variance block of -Hessian is not positive");
  const double d_s = fit.delta(p, i);
  const double c2 = 2.0 * d_s * d_s / (-h_ss);
  return {c1, c2};
}

double variance_curvature_trace_form(const FitResult& fit, int i) {
  check_index(fit, i);
  const double s2 = fit.theta_hat.sigma1_sq;
  const double v = fit.eb[static_cast<std::size_t>(i)].var_b;
  const double inv_norm = frobenius_inverse_norm(fit.hessian);

  const Eigen::VectorXd d = fit.delta.col(i);
  const double dd = d.squaredNorm();
  const double ci = curvature_form(fit.delta.col(i), fit.hessian);
  const double cphi = dd > 0.0 ? ci / (2.0 * inv_norm * dd) : 0.0;

  const double bracket =
      (1.0 / (s2 * s2)) * (1.0 - v / s2) * (1.0 - v / s2);
  return 0.5 * inv_norm * cphi * bracket;
}

ResidualSet residual_stats(const FitResult& fit) {
  ResidualSet rs;
  const int m = fit.data.size();
  rs.r.resize(fit.data.rows());
  rs.per_subject.resize(m);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd ri(kPeriods);
    for (int j = 0; j < kPeriods; ++j) {
      const int row = i * kPeriods + j;
      ri(j) = fit.blocks[i].y(j) - fit.mu_hat(row);
    }
    rs.r.segment(i * kPeriods, kPeriods) = ri;
    rs.per_subject[i] = std::move(ri);
  }
  return rs;
}

double rr(const FitResult& fit, int i) {
  check_index(fit, i);
  Eigen::VectorXd ri(kPeriods);
  for (int j = 0; j < kPeriods; ++j)
    ri(j) = fit.blocks[i].y(j) - fit.mu_hat(i * kPeriods + j);
  return ri.squaredNorm();
}

double cos_alpha(const FitResult& fit, int i) {
  check_index(fit, i);
  const Eigen::MatrixXd& x = fit.blocks[i].X;
  Eigen::VectorXd ri(kPeriods);
  for (int j = 0; j < kPeriods; ++j)
    ri(j) = fit.blocks[i].y(j) - fit.mu_hat(i * kPeriods + j);

  const double rri = ri.squaredNorm();
  const double xx_norm = (x * x.transpose()).norm();
  if (rri == 0.0 || xx_norm == 0.0) return 0.0;

  // <X X', r r'>_F = |X' r|^2
  const double inner = (x.transpose() * ri).squaredNorm();
  return std::clamp(inner / (xx_norm * rri), -1.0, 1.0);
}

double deleted_loglik(const FitResult& fit, int i) {
  check_index(fit, i);
  double total = 0.0;
  for (int k = 0; k < fit.data.size(); ++k)
    if (k != i) total += fit.li(k);
  return total;
}

OneStepDeletion one_step_deletion(const FitResult& fit, int i,
                                  const QuadratureRule& rule) {
  check_index(fit, i);
  const int dim = fit.theta_hat.dim();

  // Deleted-case score at the optimum is -delta_i; the deleted Hessian drops
  // the subject's own contribution. A subject that carries most of the
  // curvature can leave the deleted Hessian indefinite, so the step goes
  // through reflected, floored eigenvalues, like the fitter's own Newton
  // step.
  const SubjectDerivs di = subject_derivs(fit.blocks[i], fit.theta_hat, rule);
  const Eigen::MatrixXd hess_del = fit.hessian - di.hessian;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> del_eig(-hess_del);
  if (del_eig.info() != Eigen::Success)
    throw SingularHessian("one-step deletion: eigendecomposition failed");
  const double lam_max = del_eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(lam_max > 0.0))
    throw SingularHessian("one-step deletion: deleted Hessian is zero");
  const Eigen::VectorXd inv_lam = del_eig.eigenvalues()
                                      .cwiseAbs()
                                      .cwiseMax(1e-12 * lam_max)
                                      .cwiseInverse();
  const Eigen::VectorXd displacement =
      del_eig.eigenvectors() * inv_lam.asDiagonal() *
      (del_eig.eigenvectors().transpose() * fit.delta.col(i));
  const Eigen::VectorXd theta1 = fit.theta_hat.stacked() - displacement;
  const Eigen::VectorXd w = hess_del * displacement;
  const double cook = curvature_form(w, fit.hessian);

  OneStepDeletion out;
  out.theta.beta = theta1.head(dim - 1);
  out.theta.sigma1_sq = std::max(theta1(dim - 1), 1e-12);
  out.cook = cook;
  return out;
}

Eigen::MatrixXd marginal_covariance(const FitResult& fit, int i) {
  check_index(fit, i);
  const double infl = std::expm1(fit.theta_hat.sigma1_sq);
  Eigen::VectorXd mu(kPeriods);
  for (int j = 0; j < kPeriods; ++j) mu(j) = fit.mu_hat(i * kPeriods + j);
  Eigen::MatrixXd v = infl * (mu * mu.transpose());
  v.diagonal() += mu;
  return v;
}

ComponentNorms component_norms(const FitResult& fit, int i) {
  check_index(fit, i);
  ComponentNorms out;

  const Eigen::MatrixXd& x = fit.blocks[i].X;
  out.xx = (x * x.transpose()).norm();

  const Eigen::VectorXd z = Eigen::VectorXd::Ones(kPeriods);
  out.zz = (z * z.transpose()).norm();

  const Eigen::MatrixXd v = marginal_covariance(fit, i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
    throw SingularV("marginal covariance is not positive definite");

  const Eigen::VectorXd inv_vals = eig.eigenvalues().cwiseInverse();
  const Eigen::MatrixXd vinv = eig.eigenvectors() * inv_vals.asDiagonal() *
                               eig.eigenvectors().transpose();
  out.vinv = vinv.norm();

  Eigen::VectorXd ri(kPeriods);
  for (int j = 0; j < kPeriods; ++j)
    ri(j) = fit.blocks[i].y(j) - fit.mu_hat(i * kPeriods + j);
  const Eigen::MatrixXd vinv_half = eig.eigenvectors() *
                                    inv_vals.cwiseSqrt().asDiagonal() *
                                    eig.eigenvectors().transpose();
  const Eigen::VectorXd std_r = vinv_half * ri;
  out.r = std_r.norm();
  out.ir = (Eigen::MatrixXd::Identity(kPeriods, kPeriods) -
            std_r * std_r.transpose())
               .norm();
  return out;
}

std::vector<DiagnosticRecord> diagnose(const FitResult& fit,
                                       const QuadratureRule& rule) {
  const int m = fit.data.size();
  const int p = fit.spec.p();

  Eigen::LDLT<Eigen::MatrixXd> full = factor_neg(fit.hessian, "diagnose");
  Eigen::LDLT<Eigen::MatrixXd> beta_block =
      factor_neg(fit.hessian.topLeftCorner(p, p), "diagnose beta block");
  const double h_ss = fit.hessian(p, p);
  if (!(-h_ss > 0.0))
    throw SingularHessian("variance block of -Hessian is not positive");
  const double inv_norm = frobenius_inverse_norm(fit.hessian);

  std::vector<DiagnosticRecord> records(m);
  for (int i = 0; i < m; ++i) {
    DiagnosticRecord& rec = records[i];
    rec.subject_id = fit.data.subjects[i].id;
    rec.trt = fit.data.subjects[i].trt;

    const Eigen::VectorXd d = fit.delta.col(i);
    rec.Ci = 2.0 * d.dot(full.solve(d));
    const Eigen::VectorXd db = d.head(p);
    rec.Ci_b = 2.0 * db.dot(beta_block.solve(db));
    rec.Ci_d = 2.0 * d(p) * d(p) / (-h_ss);

    rec.rri = rr(fit, i);
    rec.cos_alpha = cos_alpha(fit, i);
    const double dd = d.squaredNorm();
    rec.cos_phi =
        dd > 0.0 ? std::clamp(rec.Ci / (2.0 * inv_norm * dd), -1.0, 1.0) : 0.0;

    rec.cook1 = one_step_deletion(fit, i, rule).cook;

    const ComponentNorms norms = component_norms(fit, i);
    rec.comp_xx = norms.xx;
    rec.comp_r = norms.r;
    rec.comp_zz = norms.zz;
    rec.comp_ir = norms.ir;
    rec.comp_vinv = norms.vinv;
  }

  std::sort(records.begin(), records.end(),
            [](const DiagnosticRecord& a, const DiagnosticRecord& b) {
              return a.subject_id < b.subject_id;
            });
  return records;
}

}  // namespace pmelm

// Acceptance suite: every release-gating property, one pass/fail line each,
// pinned tolerances. Exit code is the number of failed criteria.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "pmelm/influence.hpp"
#include "pmelm/model.hpp"
#include "pmelm/report.hpp"
#include "pmelm/rng.hpp"
#include "pmelm/simulate.hpp"

using namespace pmelm;

namespace {

int g_failed = 0;

class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)) {
    start_ = std::chrono::steady_clock::now();
  }

  void check(bool ok, const std::string& detail) {
    if (!ok) {
      failures_.push_back(detail);
      if (failures_.size() <= 8)
        std::cerr << "       " << name_ << ": " << detail << "\n";
    }
  }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_)
            .count();
    if (failures_.empty()) {
      std::printf("[PASS] %s (%.1fs)\n", name_.c_str(), secs);
    } else {
      std::printf("[FAIL] %s (%.1fs, %zu failure%s)\n", name_.c_str(), secs,
                  failures_.size(), failures_.size() == 1 ? "" : "s");
      ++g_failed;
    }
    std::fflush(stdout);
  }

 private:
  std::string name_;
  std::vector<std::string> failures_;
  std::chrono::steady_clock::time_point start_;
};

const QuadratureRule& rule25() {
  static const QuadratureRule r = QuadratureRule::gauss_hermite(25);
  return r;
}

PanelDataset study_panel(double sigma1, std::uint64_t seed, int m1 = 59) {
  GenSpec spec;
  spec.m1 = m1;
  spec.sigma1 = sigma1;
  spec.seed = seed;
  spec.beta = study_beta(sigma1, DesignSpec::standard());
  return generate(spec, DesignSpec::standard());
}

DesignSpec plain_design() {
  return DesignSpec{{Term::Intercept, Term::Trt, Term::LAge}};
}

Theta weighted_refit(const FitResult& fit, const Eigen::VectorXd& weights) {
  FitOptions options;
  options.weights = weights;
  options.check_concave = false;
  options.grad_tol = 1e-9;
  options.step_tol = 1e-11;
  return fit_ml(fit.data, fit.spec, rule25(), fit.theta_hat, options)
      .theta_hat;
}

// 1. adaptive quadrature vs dense trapezoid, 50 random cases, 1e-8 relative
void criterion_quadrature() {
  Criterion c("criterion 1: quadrature matches dense-grid oracle (rel 1e-8)");
  const PanelDataset panel = study_panel(1.0, 901);
  const DesignMatrices d = build_design(panel, DesignSpec::standard());
  const std::vector<SubjectBlock> blocks = split_subjects(panel, d);

  SplitMix64 rng(902);
  for (int rep = 0; rep < 50; ++rep) {
    Theta theta;
    theta.beta.resize(5);
    theta.beta(0) = 0.5 + rng.uniform();
    for (int k = 1; k < 5; ++k) theta.beta(k) = rng.uniform() - 0.5;
    theta.sigma1_sq = 0.05 + 0.95 * rng.uniform();
    const int i = static_cast<int>(rng.below(59));

    const double got = subject_loglik(blocks[i], theta, rule25());
    const double want = oracle::subject_loglik(blocks[i].y, blocks[i].X,
                                               theta.beta, theta.sigma1_sq);
    c.check(std::abs(got - want) <= 1e-8 * std::abs(want),
            "case " + std::to_string(rep) + ": got " + std::to_string(got) +
                " want " + std::to_string(want));
  }
  c.finish();
}

// 2. analytic scores vs central finite differences, 50 cases, 1e-4 relative
void criterion_score() {
  Criterion c("criterion 2: scores match finite differences (rel 1e-4)");
  const PanelDataset panel = study_panel(0.5, 903);
  const DesignMatrices d = build_design(panel, DesignSpec::standard());
  const std::vector<SubjectBlock> blocks = split_subjects(panel, d);

  SplitMix64 rng(904);
  for (int rep = 0; rep < 50; ++rep) {
    Theta theta;
    theta.beta.resize(5);
    theta.beta(0) = 0.5 + rng.uniform();
    for (int k = 1; k < 5; ++k) theta.beta(k) = rng.uniform() - 0.5;
    theta.sigma1_sq = 0.05 + 0.95 * rng.uniform();
    const int i = static_cast<int>(rng.below(59));
    const SubjectDerivs derivs = subject_derivs(blocks[i], theta, rule25());

    for (int k = 0; k < theta.dim(); ++k) {
      Eigen::VectorXd stack = theta.stacked();
      const double h = 1e-5 * (1.0 + std::abs(stack(k)));
      Eigen::VectorXd up = stack, down = stack;
      up(k) += h;
      down(k) -= h;
      const double fu =
          subject_loglik(blocks[i], Theta::from_stacked(up), rule25());
      const double fd =
          subject_loglik(blocks[i], Theta::from_stacked(down), rule25());
      const double fdiff = (fu - fd) / (2.0 * h);
      const double scale =
          std::max({std::abs(derivs.score(k)), std::abs(fdiff), 1e-6});
      c.check(std::abs(derivs.score(k) - fdiff) <= 1e-4 * scale,
              "case " + std::to_string(rep) + " component " +
                  std::to_string(k));
    }
  }
  c.finish();
}

// 3. parameters recovered within 3 Monte-Carlo standard errors, 18/20 seeds
void criterion_recovery() {
  Criterion c("criterion 3: parametric recovery (3 MC SE, >= 18/20 seeds)");
  const DesignSpec design = plain_design();
  Theta truth;
  truth.beta = (Eigen::VectorXd(3) << 1.6, -0.4, 0.3).finished();
  truth.sigma1_sq = 0.25;

  const int n_seeds = 20;
  std::vector<Eigen::VectorXd> estimates;
  for (int s = 0; s < n_seeds; ++s) {
    GenSpec spec;
    spec.m1 = 500;
    spec.sigma1 = std::sqrt(truth.sigma1_sq);
    spec.seed = derive_seed(905, static_cast<std::uint64_t>(s));
    spec.beta = truth.beta;
    const PanelDataset panel = generate(spec, design);
    estimates.push_back(fit_ml(panel, design, rule25()).theta_hat.stacked());
  }

  const int dim = truth.dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const Eigen::VectorXd& e : estimates) mean += e;
  mean /= n_seeds;
  Eigen::VectorXd sd = Eigen::VectorXd::Zero(dim);
  for (const Eigen::VectorXd& e : estimates)
    sd += (e - mean).cwiseProduct(e - mean);
  sd = (sd / (n_seeds - 1)).cwiseSqrt();

  int passed = 0;
  const Eigen::VectorXd target = truth.stacked();
  for (const Eigen::VectorXd& e : estimates) {
    bool ok = true;
    for (int k = 0; k < dim; ++k)
      if (std::abs(e(k) - target(k)) > 3.0 * sd(k)) ok = false;
    if (ok) ++passed;
  }
  c.check(passed >= 18, "only " + std::to_string(passed) +
                            "/20 seeds inside 3 MC standard errors");
  c.finish();
}

// 4. curvature identities on every subject of two fitted panels
void criterion_influence_identities() {
  Criterion c("criterion 4: influence identities (Ci >= 0, blocks, "
              "weights, displacement 5%)");
  for (double sigma : {0.5, 1.0}) {
    // sigma = 1 clean panels usually sit on the sigma boundary under the
    // baseline-coupled generator; a light contamination keeps the variance
    // interior without changing what the identities assert.
    PanelDataset panel = study_panel(sigma, 914);
    if (sigma == 1.0) panel = contaminate(panel, {1, 1});
    const FitResult fit = fit_ml(panel, DesignSpec::standard(), rule25());
    const int p = fit.spec.p();

    // omega = 1 recovers the total log-likelihood exactly
    const double weighted = total_loglik(
        fit.blocks, fit.theta_hat, rule25(), Eigen::VectorXd::Ones(59));
    c.check(weighted == fit.loglik, "unit weights changed the likelihood");

    Eigen::MatrixXd blockdiag = Eigen::MatrixXd::Zero(p + 1, p + 1);
    blockdiag.topLeftCorner(p, p) = fit.hessian.topLeftCorner(p, p);
    blockdiag(p, p) = fit.hessian(p, p);

    const double t = 1e-3;
    for (int i = 0; i < fit.data.size(); ++i) {
      const double ci = local_curvature(fit, i);
      c.check(ci >= 0.0, "negative curvature at subject " + std::to_string(i));

      const auto [c1, c2] = decompose(fit, i);
      const double combined = curvature_form(fit.delta.col(i), blockdiag);
      c.check(std::abs(c1 + c2 - combined) <= 1e-8 * std::max(combined, 1e-12),
              "block additivity at subject " + std::to_string(i));

      double ld[2];
      for (int s = 0; s < 2; ++s) {
        Eigen::VectorXd w = Eigen::VectorXd::Ones(59);
        w(i) += s == 0 ? t : -t;
        const Theta theta_w = weighted_refit(fit, w);
        ld[s] =
            2.0 * (fit.loglik - total_loglik(fit.blocks, theta_w, rule25()));
      }
      const double fd = (ld[0] + ld[1]) / (t * t);
      c.check(std::abs(fd - ci) <= 0.05 * std::max(ci, 1e-10),
              "displacement curvature at subject " + std::to_string(i) +
                  ": fd " + std::to_string(fd) + " vs Ci " +
                  std::to_string(ci));
    }
  }
  c.finish();
}

// 5. one-step vs full-refit Cook distances, Spearman >= 0.8, 10 panels
void criterion_deletion() {
  Criterion c("criterion 5: one-step Cook tracks refits (Spearman >= 0.8)");
  for (int rep = 0; rep < 10; ++rep) {
    const double sigma = rep % 2 == 0 ? 0.5 : 0.25;
    const PanelDataset panel =
        study_panel(sigma, derive_seed(907, static_cast<std::uint64_t>(rep)));
    const FitResult fit = fit_ml(panel, DesignSpec::standard(), rule25());

    std::vector<double> onestep, refit;
    for (int i = 0; i < fit.data.size(); ++i) {
      onestep.push_back(one_step_deletion(fit, i, rule25()).cook);
      Eigen::VectorXd w = Eigen::VectorXd::Ones(59);
      w(i) = 0.0;
      const Eigen::VectorXd d =
          fit.theta_hat.stacked() - weighted_refit(fit, w).stacked();
      refit.push_back(d.dot((-fit.hessian) * d));
    }
    const double rho = oracle::spearman(onestep, refit);
    c.check(rho >= 0.8, "panel " + std::to_string(rep) + ": Spearman " +
                            std::to_string(rho));
  }
  c.finish();
}

// 6. detection replication across the sigma x method grid, R = 20:
//    (a) method 4 caught at rank 1 by rri in >= 80% of replicates
//    (b) methods 1 and 3 at rank <= 3 by rri in >= 70%
//    (c) rr_1 strictly larger under method 3 than method 1 on matched seeds
//    (d) the pooled all-stat rank-1 rate is strictly inside (0, 1)
void criterion_detection() {
  Criterion c("criterion 6: detection replication (3 sigma x 4 methods x 20)");
  StudyOptions options;
  options.replicates = 20;
  const std::vector<StudyCell> cells =
      study_grid(908, options, DesignSpec::standard());
  const std::vector<Stat> stats = {Stat::Ci, Stat::Ci_b, Stat::Ci_d, Stat::Rri,
                                   Stat::Cook1};

  struct CellStats {
    std::array<int, 5> rank{};
    double rr1 = 0.0;
  };
  std::map<std::tuple<double, int, int>, CellStats> grid;

  for (const StudyCell& cell : cells) {
    const FitResult fit =
        fit_ml(cell.contaminated, DesignSpec::standard(), rule25());
    const std::vector<DiagnosticRecord> records = diagnose(fit, rule25());

    CellStats cs;
    for (std::size_t s = 0; s < stats.size(); ++s) {
      double target_value = 0.0;
      for (const DiagnosticRecord& r : records)
        if (r.subject_id == 1) target_value = stat_value(r, stats[s]);
      int rank = 1;
      for (const DiagnosticRecord& r : records)
        if (r.subject_id != 1 && stat_value(r, stats[s]) > target_value)
          ++rank;
      cs.rank[s] = rank;
    }
    for (const DiagnosticRecord& r : records)
      if (r.subject_id == 1) cs.rr1 = r.rri;
    grid[{cell.sigma1, cell.method, cell.replicate}] = cs;
  }

  const int rri_slot = 3;
  int pooled_rank1 = 0, pooled_total = 0;
  for (double sigma : options.sigmas) {
    int m4_rank1 = 0, m1_rank3 = 0, m3_rank3 = 0;
    for (int rep = 0; rep < options.replicates; ++rep) {
      const CellStats& m1 = grid.at({sigma, 1, rep});
      const CellStats& m3 = grid.at({sigma, 3, rep});
      const CellStats& m4 = grid.at({sigma, 4, rep});
      if (m4.rank[rri_slot] == 1) ++m4_rank1;
      if (m1.rank[rri_slot] <= 3) ++m1_rank3;
      if (m3.rank[rri_slot] <= 3) ++m3_rank3;
      c.check(m3.rr1 > m1.rr1,
              "rr_1 not monotone at sigma " + std::to_string(sigma) +
                  " replicate " + std::to_string(rep));
    }
    c.check(m4_rank1 >= 16, "method 4 rri rank-1 rate " +
                                std::to_string(m4_rank1) + "/20 at sigma " +
                                std::to_string(sigma));
    c.check(m1_rank3 >= 14, "method 1 rri rank<=3 rate " +
                                std::to_string(m1_rank3) + "/20 at sigma " +
                                std::to_string(sigma));
    c.check(m3_rank3 >= 14, "method 3 rri rank<=3 rate " +
                                std::to_string(m3_rank3) + "/20 at sigma " +
                                std::to_string(sigma));
  }
  for (const auto& [key, cs] : grid)
    for (int s = 0; s < 5; ++s) {
      ++pooled_total;
      if (cs.rank[s] == 1) ++pooled_rank1;
    }
  c.check(pooled_rank1 > 0 && pooled_rank1 < pooled_total,
          "pooled rank-1 rate degenerate: " + std::to_string(pooled_rank1) +
              "/" + std::to_string(pooled_total));
  c.finish();
}

// 7. plot contract: a balanced selection holds exactly 20 needles, 10 per
//    facet, and the bytes do not change between runs
void criterion_plots() {
  Criterion c("criterion 7: plot contract (20 needles, 10 per arm, stable)");
  const PanelDataset panel = study_panel(0.5, 909);
  const FitResult fit = fit_ml(panel, DesignSpec::standard(), rule25());
  const std::vector<DiagnosticRecord> records = diagnose(fit, rule25());

  PlotSelection sel;
  sel.mode = PlotSelection::Mode::Balanced20;
  sel.seed = 909;
  const std::string svg = needle_plot(records, Stat::Rri, sel);

  const auto count = [](const std::string& hay, const std::string& pat) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(pat); pos != std::string::npos;
         pos = hay.find(pat, pos + pat.size()))
      ++n;
    return n;
  };
  c.check(count(svg, "class=\"needle\"") == 20, "needle count is not 20");
  const std::size_t facet1 = svg.find("data-arm=\"1\"");
  c.check(count(svg.substr(0, facet1), "class=\"needle\"") == 10,
          "left facet needle count is not 10");
  c.check(count(svg.substr(facet1), "class=\"needle\"") == 10,
          "right facet needle count is not 10");
  c.check(needle_plot(records, Stat::Rri, sel) == svg,
          "needle plot bytes changed between runs");
  c.check(scatter_plot(records, sel) == scatter_plot(records, sel),
          "scatter plot bytes changed between runs");
  c.finish();
}

// 8. the six contamination edits are exact, and the baseline pathway makes
//    methods 5 and 6 diagnostically distinct from 1 and 4
void criterion_contamination() {
  Criterion c("criterion 8: contamination table fidelity");
  const PanelDataset clean = study_panel(0.5, 910);
  const std::array<long, 4> y1 = clean.subjects[0].y;
  const long base1 = clean.subjects[0].base;

  const auto untouched = [&](const PanelDataset& d, bool skip_lbase) {
    for (int i = 1; i < clean.size(); ++i) {
      if (!(d.subjects[i] == clean.subjects[i])) return false;
      if (!skip_lbase && d.lbase[i] != clean.lbase[i]) return false;
    }
    return true;
  };

  const PanelDataset m1 = contaminate(clean, {1, 1});
  c.check(m1.subjects[0].y == std::array<long, 4>{y1[0] + 30, y1[1], y1[2],
                                                  y1[3]} &&
              m1.subjects[0].base == base1 && untouched(m1, false),
          "method 1 edit");
  const PanelDataset m2 = contaminate(clean, {2, 1});
  c.check(m2.subjects[0].y == std::array<long, 4>{y1[0] + 30, y1[1] + 30,
                                                  y1[2] + 30, y1[3] + 30} &&
              untouched(m2, false),
          "method 2 edit");
  const PanelDataset m3 = contaminate(clean, {3, 1});
  c.check(m3.subjects[0].y == std::array<long, 4>{y1[0] + 100, y1[1], y1[2],
                                                  y1[3]} &&
              untouched(m3, false),
          "method 3 edit");
  const PanelDataset m4 = contaminate(clean, {4, 1});
  c.check(m4.subjects[0].y == std::array<long, 4>{y1[0] + 100, y1[1] + 100,
                                                  y1[2] + 100, y1[3] + 100} &&
              untouched(m4, false),
          "method 4 edit");
  const PanelDataset m5 = contaminate(clean, {5, 1});
  c.check(m5.subjects[0].base == 50 && m5.subjects[0].y == y1 &&
              untouched(m5, true),
          "method 5 edit");
  const PanelDataset m6 = contaminate(clean, {6, 1});
  c.check(m6.subjects[0].base == 50 &&
              m6.subjects[0].y == std::array<long, 4>{y1[0] + 100, y1[1] + 100,
                                                      y1[2] + 100,
                                                      y1[3] + 100} &&
              untouched(m6, true),
          "method 6 edit");

  // the baseline pathway must propagate: methods 5/6 are not 1/4 in disguise
  const auto diag_of = [&](const PanelDataset& panel) {
    const FitResult fit = fit_ml(panel, DesignSpec::standard(), rule25());
    return diagnose(fit, rule25());
  };
  const auto max_gap = [](const std::vector<DiagnosticRecord>& a,
                          const std::vector<DiagnosticRecord>& b) {
    double gap = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      gap = std::max(gap, std::abs(a[i].Ci - b[i].Ci));
    return gap;
  };
  const std::vector<DiagnosticRecord> d1 = diag_of(m1);
  const std::vector<DiagnosticRecord> d4 = diag_of(m4);
  const std::vector<DiagnosticRecord> d5 = diag_of(m5);
  const std::vector<DiagnosticRecord> d6 = diag_of(m6);
  c.check(max_gap(d5, d1) > 1e-3, "method 5 indistinguishable from method 1");
  c.check(max_gap(d6, d4) > 1e-3, "method 6 indistinguishable from method 4");
  c.finish();
}

}  // namespace

int main() {
  criterion_quadrature();
  criterion_score();
  criterion_recovery();
  criterion_influence_identities();
  criterion_deletion();
  criterion_detection();
  criterion_plots();
  criterion_contamination();
  if (g_failed == 0) std::printf("all acceptance criteria passed\n");
  return g_failed;
}

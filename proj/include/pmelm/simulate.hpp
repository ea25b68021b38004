#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmelm/panel.hpp"

namespace pmelm {

// How trt, age and the baseline calibration target are drawn. Synthetic uses
// trt ~ Bernoulli(1/2), age ~ uniform integers 18..42 and a shifted
// negative-binomial baseline law 6 + Poisson(Gamma(1.6, 16)). Resample draws
// whole (trt, base, age) triples from a reference panel.
struct CovariateSource {
  enum class Kind { Synthetic, Resample };
  Kind kind = Kind::Synthetic;
  PanelDataset reference;
};

struct GenSpec {
  int m1 = 59;
  double sigma1 = 0.5;
  Eigen::VectorXd beta;  // ordered per the DesignSpec used for generation
  std::uint64_t seed = 0;
  CovariateSource covariates;
  double alpha_sd = 0.0;  // optional per-observation noise on the log scale
};

// Everything needed to reproduce a generated panel, serialized as the
// sidecar JSON next to each emitted CSV.
struct SimMetadata {
  std::string generator = "splitmix64";
  std::string version;
  std::uint64_t seed = 0;
  int m1 = 0;
  double sigma1 = 0.0;
  std::vector<double> beta;
  double gamma0 = 0.0;  // calibrated baseline intercept, 8-week scale
  std::string covariate_source;
  double alpha_sd = 0.0;

  std::string to_json() const;
  static SimMetadata from_json(const std::string& text);
};

// Draws one panel: subject intercepts u_i ~ N(0, sigma1^2), an 8-week
// baseline count Poisson(exp(gamma0 + u_i)) with gamma0 calibrated so the
// mean baseline matches the covariate source, derived covariates recomputed
// from the generated baseline, then the four period counts
// Poisson(exp(x_ij' beta + u_i [+ alpha])). Deterministic given the seed.
PanelDataset generate(const GenSpec& spec, const DesignSpec& design,
                      SimMetadata* metadata = nullptr);

struct ContaminationSpec {
  int method = 1;  // 1..6
  int target = 1;  // 1-based subject position
};

// Plants a known influential subject:
//   1: +30 to period 1          2: +30 to all four periods
//   3: +100 to period 1         4: +100 to all four periods
//   5: baseline set to 50       6: method 4 plus method 5
// Derived covariates are recentered afterwards, so methods 5 and 6 shift
// every subject's lbase.
PanelDataset contaminate(const PanelDataset& data, const ContaminationSpec& spec);

// Epilepsy-style default effects for a design: lbase 0.9, trt -0.9,
// lbase:trt 0.35, lage 0.5, and an intercept calibrated so the marginal mean
// period count stays near target_mean despite the baseline-coupled intercept
// widening the rate spread as sigma1 grows.
Eigen::VectorXd study_beta(double sigma1, const DesignSpec& design,
                           double target_mean = 0.0);  // 0 = auto

struct StudyOptions {
  std::vector<double> sigmas = {0.25, 0.5, 1.0};
  std::vector<int> methods = {1, 2, 3, 4};
  int replicates = 1;
  int m1 = 59;
  int target = 1;
  double target_mean = 0.0;  // 0 = auto per sigma
};

struct StudyCell {
  double sigma1 = 0.0;
  int method = 0;
  int replicate = 0;
  std::uint64_t seed = 0;  // panel seed, shared across methods of a replicate
  PanelDataset clean;
  PanelDataset contaminated;
};

// Deterministic enumeration over sigma x method x replicate. The clean panel
// of a cell depends only on (sigma, replicate), so methods are compared on
// matched draws.
std::vector<StudyCell> study_grid(std::uint64_t base_seed,
                                  const StudyOptions& options,
                                  const DesignSpec& design);

}  // namespace pmelm

#include "pmelm/simulate.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "pmelm/errors.hpp"
#include "pmelm/rng.hpp"

namespace pmelm {

namespace {

constexpr double kEtaGuard = 30.0;
constexpr const char* kVersion = "0.1.0";

struct CovariateDraw {
  int trt = 0;
  int age = 0;
  long base_src = 0;
};

std::vector<CovariateDraw> draw_covariates(const GenSpec& spec,
                                           SplitMix64& rng) {
  std::vector<CovariateDraw> out(spec.m1);
  if (spec.covariates.kind == CovariateSource::Kind::Synthetic) {
    for (CovariateDraw& c : out) {
      c.trt = static_cast<int>(rng.next() & 1ull);
      c.age = 18 + static_cast<int>(rng.below(25));
      c.base_src = 6 + rng.poisson(rng.gamma(1.6, 16.0));
    }
  } else {
    const PanelDataset& ref = spec.covariates.reference;
    if (ref.size() == 0)
      throw Error("resample covariate source needs a reference panel");
    for (CovariateDraw& c : out) {
      const SubjectRecord& r =
          ref.subjects[rng.below(static_cast<std::uint64_t>(ref.size()))];
      c.trt = r.trt;
      c.age = r.age;
      c.base_src = r.base;
    }
  }
  return out;
}

}  // namespace

PanelDataset generate(const GenSpec& spec, const DesignSpec& design,
                      SimMetadata* metadata) {
  if (!(spec.sigma1 > 0.0)) throw Error("sigma1 must be positive");
  if (spec.m1 < 2) throw Error("m1 must be at least 2");
  if (spec.beta.size() != design.p())
    throw Error("beta length does not match the design");

  SplitMix64 rng(spec.seed);
  const double s2 = spec.sigma1 * spec.sigma1;

  // pass 1: covariates and the baseline calibration target
  const std::vector<CovariateDraw> cov = draw_covariates(spec, rng);
  double base_mean = 0.0;
  for (const CovariateDraw& c : cov) base_mean += static_cast<double>(c.base_src);
  base_mean /= static_cast<double>(spec.m1);
  if (!(base_mean > 0.0)) throw Error("covariate source has zero mean baseline");
  const double gamma0 = std::log(base_mean) - s2 / 2.0;

  // pass 2: random intercepts and the generated baseline column
  std::vector<double> u(spec.m1);
  std::vector<SubjectRecord> records(spec.m1);
  for (int i = 0; i < spec.m1; ++i) {
    u[i] = spec.sigma1 * rng.normal();
    const double base_eta = gamma0 + u[i];
    if (base_eta > kEtaGuard)
      throw RateOverflow("baseline linear predictor " +
                         std::to_string(base_eta) + " exceeds the guard");
    records[i].id = i + 1;
    records[i].trt = cov[i].trt;
    records[i].age = cov[i].age;
    records[i].base = rng.poisson(std::exp(base_eta));
  }

  PanelDataset panel = PanelDataset::from_records(records);
  const DesignMatrices d = build_design(panel, design);

  // pass 3: period counts from the freshly derived covariates
  for (int i = 0; i < spec.m1; ++i) {
    for (int j = 0; j < kPeriods; ++j) {
      double eta = d.X.row(i * kPeriods + j).dot(spec.beta) + u[i];
      if (spec.alpha_sd > 0.0) eta += spec.alpha_sd * rng.normal();
      if (eta > kEtaGuard)
        throw RateOverflow("linear predictor " + std::to_string(eta) +
                           " exceeds the guard for subject " +
                           std::to_string(i + 1));
      records[i].y[j] = rng.poisson(std::exp(eta));
    }
  }

  if (metadata) {
    metadata->generator = "splitmix64";
    metadata->version = kVersion;
    metadata->seed = spec.seed;
    metadata->m1 = spec.m1;
    metadata->sigma1 = spec.sigma1;
    metadata->beta.assign(spec.beta.begin(), spec.beta.end());
    metadata->gamma0 = gamma0;
    metadata->covariate_source =
        spec.covariates.kind == CovariateSource::Kind::Synthetic ? "synthetic"
                                                                 : "resample";
    metadata->alpha_sd = spec.alpha_sd;
  }
  return PanelDataset::from_records(std::move(records));
}

PanelDataset contaminate(const PanelDataset& data,
                         const ContaminationSpec& spec) {
  if (spec.method < 1 || spec.method > 6)
    throw BadMethod("contamination method must be in 1..6, got " +
                    std::to_string(spec.method));
  if (spec.target < 1 || spec.target > data.size())
    throw BadTarget("target subject " + std::to_string(spec.target) +
                    " outside 1.." + std::to_string(data.size()));

  std::vector<SubjectRecord> records = data.subjects;
  SubjectRecord& t = records[spec.target - 1];
  switch (spec.method) {
    case 1: t.y[0] += 30; break;
    case 2:
      for (long& c : t.y) c += 30;
      break;
    case 3: t.y[0] += 100; break;
    case 4:
      for (long& c : t.y) c += 100;
      break;
    case 5: t.base = 50; break;
    case 6:
      for (long& c : t.y) c += 100;
      t.base = 50;
      break;
  }
  return PanelDataset::from_records(std::move(records));
}

Eigen::VectorXd study_beta(double sigma1, const DesignSpec& design,
                           double target_mean) {
  bool has_lbase = false;
  for (Term t : design.terms)
    if (t == Term::LBase) has_lbase = true;

  // The default target mean balances two pressures: large counts keep the
  // intercept variance identified at small sigma1, while small counts keep
  // the clean-subject residual tail below a planted +100 spike when the
  // baseline-coupled lbase effect widens the rate spread at large sigma1.
  if (target_mean <= 0.0)
    target_mean = std::clamp(4.125 / sigma1, 4.0, 10.0);

  // The baseline shares the subject intercept, so an lbase effect b adds
  // (1+b) sigma1 of log-rate spread; the intercept absorbs the implied
  // Jensen lift to hold the marginal mean near target_mean.
  const double loading = (has_lbase ? 1.5 : 1.0) * sigma1;

  Eigen::VectorXd beta(design.p());
  for (int k = 0; k < design.p(); ++k) {
    switch (design.terms[k]) {
      case Term::Intercept:
        beta(k) = std::log(target_mean) - loading * loading / 2.0;
        break;
      case Term::LBase: beta(k) = 0.5; break;
      case Term::Trt: beta(k) = -0.9; break;
      case Term::LBaseTrt: beta(k) = 0.2; break;
      case Term::LAge: beta(k) = 0.5; break;
    }
  }
  return beta;
}

std::vector<StudyCell> study_grid(std::uint64_t base_seed,
                                  const StudyOptions& options,
                                  const DesignSpec& design) {
  if (options.replicates < 1) throw Error("replicates must be >= 1");
  for (int m : options.methods)
    if (m < 1 || m > 6)
      throw BadMethod("study method must be in 1..6, got " + std::to_string(m));

  std::vector<StudyCell> cells;
  cells.reserve(options.sigmas.size() * options.methods.size() *
                static_cast<std::size_t>(options.replicates));
  for (std::size_t si = 0; si < options.sigmas.size(); ++si) {
    const double sigma = options.sigmas[si];
    for (int rep = 0; rep < options.replicates; ++rep) {
      // one panel per (sigma, replicate); methods see matched draws
      const std::uint64_t seed =
          derive_seed(base_seed, (si + 1) * 1000003ull + rep);
      GenSpec gen;
      gen.m1 = options.m1;
      gen.sigma1 = sigma;
      gen.beta = study_beta(sigma, design, options.target_mean);
      gen.seed = seed;
      const PanelDataset clean = generate(gen, design);
      for (int method : options.methods) {
        StudyCell cell;
        cell.sigma1 = sigma;
        cell.method = method;
        cell.replicate = rep;
        cell.seed = seed;
        cell.clean = clean;
        cell.contaminated =
            contaminate(clean, ContaminationSpec{method, options.target});
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::string SimMetadata::to_json() const {
  nlohmann::json j;
  j["generator"] = generator;
  j["version"] = version;
  j["seed"] = seed;
  j["m1"] = m1;
  j["sigma1"] = sigma1;
  j["beta"] = beta;
  j["gamma0"] = gamma0;
  j["covariate_source"] = covariate_source;
  j["alpha_sd"] = alpha_sd;
  return j.dump(2) + "\n";
}

SimMetadata SimMetadata::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SimMetadata m;
  m.generator = j.at("generator").get<std::string>();
  m.version = j.value("version", "");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.m1 = j.at("m1").get<int>();
  m.sigma1 = j.at("sigma1").get<double>();
  m.beta = j.at("beta").get<std::vector<double>>();
  m.gamma0 = j.at("gamma0").get<double>();
  m.covariate_source = j.at("covariate_source").get<std::string>();
  m.alpha_sd = j.value("alpha_sd", 0.0);
  return m;
}

}  // namespace pmelm

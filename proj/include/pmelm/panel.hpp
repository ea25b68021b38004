#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pmelm {

inline constexpr int kPeriods = 4;

// One subject of a longitudinal count panel: treatment arm, 8-week baseline
// seizure count, age in years, and four successive 2-week period counts.
struct SubjectRecord {
  int id = 0;
  int trt = 0;
  long base = 0;
  int age = 0;
  std::array<long, kPeriods> y{};
};

// Complete panel plus the derived covariates. lbase is the centered log of
// the baseline rate on the 2-week scale, log(base/4); zero baselines enter as
// log((base+0.5)/4). lage is the centered log age. Both are recentered on
// every construction, so their sample means are zero.
struct PanelDataset {
  std::vector<SubjectRecord> subjects;
  std::vector<double> lbase;
  std::vector<double> lage;

  static PanelDataset from_records(std::vector<SubjectRecord> records);

  int size() const { return static_cast<int>(subjects.size()); }
  int rows() const { return size() * kPeriods; }
};

bool operator==(const SubjectRecord& a, const SubjectRecord& b);
bool operator==(const PanelDataset& a, const PanelDataset& b);

// CSV schema: `id,trt,base,age,y1,y2,y3,y4`, header mandatory, one row per
// subject, LF line endings.
PanelDataset load_panel(const std::filesystem::path& path);
PanelDataset parse_panel_csv(const std::string& text);
std::string panel_csv(const PanelDataset& panel);
void write_panel(const PanelDataset& panel, const std::filesystem::path& path);

enum class Term { Intercept, LBase, Trt, LBaseTrt, LAge };

std::string term_name(Term term);
Term term_from_name(const std::string& name);

struct DesignSpec {
  std::vector<Term> terms;

  // intercept + lbase + trt + lbase:trt + lage
  static DesignSpec standard();

  int p() const { return static_cast<int>(terms.size()); }
};

// Stacked fixed- and random-effect design. Rows are ordered by subject, then
// period. Z is the subject-incidence block of the random intercept: each row
// has exactly one 1.
struct DesignMatrices {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  std::vector<int> subject_index;  // row -> subject position
};

DesignMatrices build_design(const PanelDataset& data, const DesignSpec& spec);

}  // namespace pmelm

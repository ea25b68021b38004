#include "pmelm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pmelm/errors.hpp"

namespace pmelm {

namespace {

std::vector<double> centered(std::vector<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double& x : v) x -= mean;
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

long parse_count(const std::string& cell, const std::string& column, int line_no) {
  if (cell.empty())
    throw SubjectWithMissingPeriods("empty value for column '" + column +
                                    "' at line " + std::to_string(line_no));
  std::size_t pos = 0;
  long value = 0;
  try {
    value = std::stol(cell, &pos);
  } catch (const std::exception&) {
    throw NonIntegerCount("non-integer value '" + cell + "' for column '" +
                          column + "' at line " + std::to_string(line_no));
  }
  if (pos != cell.size())
    throw NonIntegerCount("non-integer value '" + cell + "' for column '" +
                          column + "' at line " + std::to_string(line_no));
  if (value < 0)
    throw NegativeCount("negative value '" + cell + "' for column '" + column +
                        "' at line " + std::to_string(line_no));
  return value;
}

}  // namespace

bool operator==(const SubjectRecord& a, const SubjectRecord& b) {
  return a.id == b.id && a.trt == b.trt && a.base == b.base && a.age == b.age &&
         a.y == b.y;
}

bool operator==(const PanelDataset& a, const PanelDataset& b) {
  return a.subjects == b.subjects && a.lbase == b.lbase && a.lage == b.lage;
}

PanelDataset PanelDataset::from_records(std::vector<SubjectRecord> records) {
  if (records.empty()) throw Error("panel must contain at least one subject");

  std::set<int> seen;
  for (const SubjectRecord& r : records) {
    if (!seen.insert(r.id).second)
      throw DuplicatePeriod("subject id " + std::to_string(r.id) +
                            " appears more than once");
    if (r.base < 0)
      throw NegativeCount("subject " + std::to_string(r.id) +
                          " has negative baseline");
    if (r.age <= 0)
      throw Error("subject " + std::to_string(r.id) + " has nonpositive age");
    if (r.trt != 0 && r.trt != 1)
      throw Error("subject " + std::to_string(r.id) +
                  " has treatment outside {0,1}");
    for (long c : r.y)
      if (c < 0)
        throw NegativeCount("subject " + std::to_string(r.id) +
                            " has a negative period count");
  }

  PanelDataset panel;
  panel.subjects = std::move(records);

  std::vector<double> lb, la;
  lb.reserve(panel.subjects.size());
  la.reserve(panel.subjects.size());
  for (const SubjectRecord& r : panel.subjects) {
    const double b = r.base > 0 ? static_cast<double>(r.base)
                                : static_cast<double>(r.base) + 0.5;
    lb.push_back(std::log(b / 4.0));
    la.push_back(std::log(static_cast<double>(r.age)));
  }
  panel.lbase = centered(std::move(lb));
  panel.lage = centered(std::move(la));
  return panel;
}

PanelDataset parse_panel_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("panel file is empty");

  const std::vector<std::string> header = split_line(line);
  const std::vector<std::string> required = {"id",  "trt", "base", "age",
                                             "y1",  "y2",  "y3",   "y4"};
  std::vector<int> col(required.size(), -1);
  for (std::size_t i = 0; i < required.size(); ++i) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == required[i]) col[i] = static_cast<int>(j);
    if (col[i] < 0) throw MissingColumn("missing column '" + required[i] + "'");
  }
  for (const std::string& name : header)
    if (std::find(required.begin(), required.end(), name) == required.end())
      throw IoError("unexpected column '" + name + "'");

  std::vector<SubjectRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw IoError("line " + std::to_string(line_no) + " has " +
                    std::to_string(cells.size()) + " fields, expected " +
                    std::to_string(header.size()));
    SubjectRecord r;
    r.id = static_cast<int>(parse_count(cells[col[0]], "id", line_no));
    r.trt = static_cast<int>(parse_count(cells[col[1]], "trt", line_no));
    r.base = parse_count(cells[col[2]], "base", line_no);
    r.age = static_cast<int>(parse_count(cells[col[3]], "age", line_no));
    for (int j = 0; j < kPeriods; ++j)
      r.y[j] = parse_count(cells[col[4 + j]], "y" + std::to_string(j + 1), line_no);
    records.push_back(r);
  }
  return PanelDataset::from_records(std::move(records));
}

PanelDataset load_panel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_panel_csv(buf.str());
}

std::string panel_csv(const PanelDataset& panel) {
  std::string out = "id,trt,base,age,y1,y2,y3,y4\n";
  char line[160];
  for (const SubjectRecord& r : panel.subjects) {
    std::snprintf(line, sizeof(line), "%d,%d,%ld,%d,%ld,%ld,%ld,%ld\n", r.id,
                  r.trt, r.base, r.age, r.y[0], r.y[1], r.y[2], r.y[3]);
    out += line;
  }
  return out;
}

void write_panel(const PanelDataset& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << panel_csv(panel);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string term_name(Term term) {
  switch (term) {
    case Term::Intercept: return "intercept";
    case Term::LBase: return "lbase";
    case Term::Trt: return "trt";
    case Term::LBaseTrt: return "lbase:trt";
    case Term::LAge: return "lage";
  }
  throw Error("unknown design term");
}

Term term_from_name(const std::string& name) {
  if (name == "intercept") return Term::Intercept;
  if (name == "lbase") return Term::LBase;
  if (name == "trt") return Term::Trt;
  if (name == "lbase:trt" || name == "lbase_trt") return Term::LBaseTrt;
  if (name == "lage") return Term::LAge;
  throw Error("unknown design term '" + name + "'");
}

DesignSpec DesignSpec::standard() {
  return DesignSpec{{Term::Intercept, Term::LBase, Term::Trt, Term::LBaseTrt,
                     Term::LAge}};
}

DesignMatrices build_design(const PanelDataset& data, const DesignSpec& spec) {
  if (spec.terms.empty()) throw EmptyDesign("design has no terms");
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.terms.size(); ++j)
      if (spec.terms[i] == spec.terms[j])
        throw Error("duplicate design term '" + term_name(spec.terms[i]) + "'");
    if (spec.terms[i] == Term::Intercept && i != 0)
      throw Error("intercept must be the first design term");
  }

  const int m = data.size();
  const int n = data.rows();
  const int p = spec.p();

  DesignMatrices d;
  d.X.resize(n, p);
  d.Z = Eigen::MatrixXd::Zero(n, m);
  d.subject_index.resize(n);

  for (int i = 0; i < m; ++i) {
    const SubjectRecord& r = data.subjects[i];
    Eigen::RowVectorXd row(p);
    for (int k = 0; k < p; ++k) {
      switch (spec.terms[k]) {
        case Term::Intercept: row(k) = 1.0; break;
        case Term::LBase: row(k) = data.lbase[i]; break;
        case Term::Trt: row(k) = static_cast<double>(r.trt); break;
        case Term::LBaseTrt: row(k) = data.lbase[i] * r.trt; break;
        case Term::LAge: row(k) = data.lage[i]; break;
      }
    }
    for (int j = 0; j < kPeriods; ++j) {
      const int rr = i * kPeriods + j;
      d.X.row(rr) = row;
      d.Z(rr, i) = 1.0;
      d.subject_index[rr] = i;
    }
  }
  return d;
}

}  // namespace pmelm

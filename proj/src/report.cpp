#include "pmelm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pmelm/errors.hpp"
#include "pmelm/rng.hpp"

namespace pmelm {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 56.0;
constexpr double kRight = 624.0;
constexpr double kTop = 44.0;
constexpr double kBottom = 436.0;
constexpr const char* kRed = "#D62728";
constexpr const char* kBlack = "#000000";

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string svg_open() {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
         "width=\"640\" height=\"480\" viewBox=\"0 0 640 480\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
}

std::string text(double x, double y, const std::string& s,
                 const std::string& anchor = "start") {
  return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" +
         anchor + "\" fill=\"" + kBlack + "\">" + s + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2,
                 const std::string& stroke, const std::string& cls = "",
                 const std::string& extra = "") {
  std::string out = "<line ";
  if (!cls.empty()) out += "class=\"" + cls + "\" ";
  out += "x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
         "\" y2=\"" + fmt(y2) + "\" stroke=\"" + stroke +
         "\" stroke-width=\"2\"";
  if (!extra.empty()) out += " " + extra;
  out += "/>\n";
  return out;
}

bool is_highlighted(const PlotSelection& sel, int id) {
  return std::find(sel.highlight.begin(), sel.highlight.end(), id) !=
         sel.highlight.end();
}

// Balanced20 keeps highlighted ids, fills each arm to 10 by a seeded shuffle
// of the remaining id-sorted subjects, and reports everything in id order.
std::vector<DiagnosticRecord> select_records(
    const std::vector<DiagnosticRecord>& records, const PlotSelection& sel) {
  std::vector<DiagnosticRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(),
            [](const DiagnosticRecord& a, const DiagnosticRecord& b) {
              return a.subject_id < b.subject_id;
            });
  if (sel.mode == PlotSelection::Mode::AllSubjects) return sorted;

  std::vector<DiagnosticRecord> out;
  for (int arm = 0; arm <= 1; ++arm) {
    std::vector<DiagnosticRecord> pool;
    for (const DiagnosticRecord& r : sorted)
      if (r.trt == arm) pool.push_back(r);
    if (pool.size() < 10)
      throw TooFewSubjects("arm trt=" + std::to_string(arm) + " has " +
                           std::to_string(pool.size()) +
                           " subjects, need 10");

    std::vector<DiagnosticRecord> chosen;
    for (const DiagnosticRecord& r : pool)
      if (is_highlighted(sel, r.subject_id)) chosen.push_back(r);

    std::vector<DiagnosticRecord> rest;
    for (const DiagnosticRecord& r : pool)
      if (!is_highlighted(sel, r.subject_id)) rest.push_back(r);
    SplitMix64 rng(derive_seed(sel.seed, static_cast<std::uint64_t>(arm)));
    for (std::size_t k = rest.size(); k > 1; --k)
      std::swap(rest[k - 1], rest[rng.below(k)]);

    for (std::size_t k = 0; chosen.size() < 10; ++k) {
      if (k >= rest.size())
        throw TooFewSubjects("highlights exceed the arm quota");
      chosen.push_back(rest[k]);
    }
    if (chosen.size() > 10)
      throw TooFewSubjects("more than 10 highlighted subjects in one arm");
    out.insert(out.end(), chosen.begin(), chosen.end());
  }
  std::sort(out.begin(), out.end(),
            [](const DiagnosticRecord& a, const DiagnosticRecord& b) {
              return a.subject_id < b.subject_id;
            });
  return out;
}

std::string y_axis(double upper, const std::string& label) {
  std::string out;
  out += text(8.0, 18.0, label);
  out += line(kLeft, kTop, kLeft, kBottom, kBlack);
  for (int t = 0; t <= 4; ++t) {
    const double v = upper * t / 4.0;
    const double y = kBottom - (kBottom - kTop) * t / 4.0;
    out += line(kLeft - 4.0, y, kLeft, y, kBlack);
    out += text(kLeft - 8.0, y + 4.0, fmt_tick(v), "end");
  }
  return out;
}

}  // namespace

std::string stat_name(Stat stat) {
  switch (stat) {
    case Stat::Ci: return "Ci";
    case Stat::Ci_b: return "Ci_b";
    case Stat::Ci_d: return "Ci_d";
    case Stat::Rri: return "rri";
    case Stat::Cook1: return "cook1";
  }
  throw Error("unknown statistic");
}

Stat stat_from_name(const std::string& name) {
  if (name == "Ci") return Stat::Ci;
  if (name == "Ci_b") return Stat::Ci_b;
  if (name == "Ci_d") return Stat::Ci_d;
  if (name == "rri") return Stat::Rri;
  if (name == "cook1") return Stat::Cook1;
  throw Error("unknown statistic '" + name + "'");
}

double stat_value(const DiagnosticRecord& rec, Stat stat) {
  switch (stat) {
    case Stat::Ci: return rec.Ci;
    case Stat::Ci_b: return rec.Ci_b;
    case Stat::Ci_d: return rec.Ci_d;
    case Stat::Rri: return rec.rri;
    case Stat::Cook1: return rec.cook1;
  }
  throw Error("unknown statistic");
}

std::string needle_plot(const std::vector<DiagnosticRecord>& records,
                        Stat stat, const PlotSelection& sel) {
  if (records.empty()) throw Error("no diagnostic records to plot");
  const std::vector<DiagnosticRecord> chosen = select_records(records, sel);

  double top = 0.0;
  for (const DiagnosticRecord& r : chosen) {
    const double v = stat_value(r, stat);
    if (!std::isfinite(v)) throw Error("statistic is not finite");
    top = std::max(top, v);
  }
  const double upper = top > 0.0 ? top * 1.05 : 1.0;

  std::string svg = svg_open();
  svg += y_axis(upper, stat_name(stat));
  svg += line(kLeft, kBottom, kRight, kBottom, kBlack);

  const double gap = 24.0;
  const double facet_w = (kRight - kLeft - gap) / 2.0;
  for (int arm = 0; arm <= 1; ++arm) {
    const double x0 = kLeft + arm * (facet_w + gap);
    svg += "<g class=\"facet\" data-arm=\"" + std::to_string(arm) + "\">\n";
    svg += text(x0 + facet_w / 2.0, kTop - 12.0, "trt=" + std::to_string(arm),
                "middle");
    if (arm == 1) svg += line(x0, kTop, x0, kBottom, kBlack);

    std::vector<const DiagnosticRecord*> armrec;
    for (const DiagnosticRecord& r : chosen)
      if (r.trt == arm) armrec.push_back(&r);
    const double slot =
        facet_w / static_cast<double>(std::max<std::size_t>(armrec.size(), 1));
    for (std::size_t k = 0; k < armrec.size(); ++k) {
      const DiagnosticRecord& r = *armrec[k];
      const double x = x0 + (static_cast<double>(k) + 0.5) * slot;
      const double v = std::max(stat_value(r, stat), 0.0);
      const double y = kBottom - (kBottom - kTop) * (v / upper);
      const char* color = is_highlighted(sel, r.subject_id) ? kRed : kBlack;
      svg += line(x, kBottom, x, y, color, "needle",
                  "data-id=\"" + std::to_string(r.subject_id) + "\"");
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string scatter_plot(const std::vector<DiagnosticRecord>& records,
                         const PlotSelection& sel) {
  if (records.empty()) throw Error("no diagnostic records to plot");
  const std::vector<DiagnosticRecord> chosen = select_records(records, sel);

  double xmax = 0.0, ymax = 0.0;
  for (const DiagnosticRecord& r : chosen) {
    if (!std::isfinite(r.Ci_b) || !std::isfinite(r.Ci_d))
      throw Error("statistic is not finite");
    xmax = std::max(xmax, r.Ci_b);
    ymax = std::max(ymax, r.Ci_d);
  }
  const double xu = xmax > 0.0 ? xmax * 1.05 : 1.0;
  const double yu = ymax > 0.0 ? ymax * 1.05 : 1.0;

  std::string svg = svg_open();
  svg += y_axis(yu, "Ci_d");
  svg += line(kLeft, kBottom, kRight, kBottom, kBlack);
  for (int t = 0; t <= 4; ++t) {
    const double v = xu * t / 4.0;
    const double x = kLeft + (kRight - kLeft) * t / 4.0;
    svg += line(x, kBottom, x, kBottom + 4.0, kBlack);
    svg += text(x, kBottom + 18.0, fmt_tick(v), "middle");
  }
  svg += text((kLeft + kRight) / 2.0, kHeight - 8.0, "Ci_b", "middle");

  for (const DiagnosticRecord& r : chosen) {
    const double x = kLeft + (kRight - kLeft) * (std::max(r.Ci_b, 0.0) / xu);
    const double y = kBottom - (kBottom - kTop) * (std::max(r.Ci_d, 0.0) / yu);
    const char* color = is_highlighted(sel, r.subject_id) ? kRed : kBlack;
    svg += "<circle class=\"pt\" cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) +
           "\" r=\"3\" fill=\"" + color + "\" data-id=\"" +
           std::to_string(r.subject_id) + "\"/>\n";
    svg += text(x + 5.0, y - 5.0, std::to_string(r.subject_id));
  }
  svg += "</svg>\n";
  return svg;
}

std::string trajectory_plot(const PanelDataset& panel, int highlight_id,
                            int others, std::uint64_t seed) {
  int target = -1;
  for (int i = 0; i < panel.size(); ++i)
    if (panel.subjects[i].id == highlight_id) target = i;
  if (target < 0)
    throw BadTarget("no subject with id " + std::to_string(highlight_id));
  if (others < 0 || others > panel.size() - 1)
    throw Error("cannot select " + std::to_string(others) + " companions");

  std::vector<int> rest;
  for (int i = 0; i < panel.size(); ++i)
    if (i != target) rest.push_back(i);
  SplitMix64 rng(seed);
  for (std::size_t k = rest.size(); k > 1; --k)
    std::swap(rest[k - 1], rest[rng.below(k)]);
  rest.resize(static_cast<std::size_t>(others));
  std::sort(rest.begin(), rest.end());

  long top = 1;
  const auto track_max = [&top, &panel](int i) {
    for (long c : panel.subjects[i].y) top = std::max(top, c);
  };
  track_max(target);
  for (int i : rest) track_max(i);
  const double upper = static_cast<double>(top) * 1.05;

  const auto polyline = [&](int i, const char* color) {
    std::string pts;
    for (int j = 0; j < kPeriods; ++j) {
      const double x = kLeft + 40.0 + (kRight - kLeft - 80.0) * j / 3.0;
      const double y = kBottom - (kBottom - kTop) *
                                     (static_cast<double>(panel.subjects[i].y[j]) /
                                      upper);
      if (j) pts += " ";
      pts += fmt(x) + "," + fmt(y);
    }
    return "<polyline class=\"traj\" points=\"" + pts +
           "\" fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" data-id=\"" +
           std::to_string(panel.subjects[i].id) + "\"/>\n";
  };

  std::string svg = svg_open();
  svg += y_axis(upper, "count");
  svg += line(kLeft, kBottom, kRight, kBottom, kBlack);
  for (int j = 0; j < kPeriods; ++j) {
    const double x = kLeft + 40.0 + (kRight - kLeft - 80.0) * j / 3.0;
    svg += text(x, kBottom + 18.0, std::to_string(j + 1), "middle");
  }
  svg += text((kLeft + kRight) / 2.0, kHeight - 8.0, "period", "middle");

  for (int i : rest) svg += polyline(i, kBlack);
  svg += polyline(target, kRed);
  svg += "</svg>\n";
  return svg;
}

std::string diagnostics_csv(const std::vector<DiagnosticRecord>& records) {
  std::string out =
      "id,trt,Ci,Ci_b,Ci_d,rri,cos_alpha,cos_phi,cook1,comp_xx,comp_r,"
      "comp_zz,comp_ir,comp_vinv\n";
  char buf[512];
  for (const DiagnosticRecord& r : records) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g,%.17g,%.17g,%.17g\n",
                  r.subject_id, r.trt, r.Ci, r.Ci_b, r.Ci_d, r.rri,
                  r.cos_alpha, r.cos_phi, r.cook1, r.comp_xx, r.comp_r,
                  r.comp_zz, r.comp_ir, r.comp_vinv);
    out += buf;
  }
  return out;
}

std::vector<DiagnosticRecord> parse_diagnostics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw IoError("diagnostics table is empty");
  if (header ==
      "id,trt,Ci,Ci_b,Ci_d,rri,cos_alpha,cos_phi,cook1,comp_xx,comp_r,"
      "comp_zz,comp_ir,comp_vinv\r")
    header.pop_back();
  if (header !=
      "id,trt,Ci,Ci_b,Ci_d,rri,cos_alpha,cos_phi,cook1,comp_xx,comp_r,"
      "comp_zz,comp_ir,comp_vinv")
    throw IoError("unexpected diagnostics header");

  std::vector<DiagnosticRecord> out;
  std::string linestr;
  while (std::getline(in, linestr)) {
    if (linestr.empty() || linestr == "\r") continue;
    DiagnosticRecord r;
    double vals[12];
    const int got = std::sscanf(
        linestr.c_str(),
        "%d,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
        &r.subject_id, &r.trt, &vals[0], &vals[1], &vals[2], &vals[3],
        &vals[4], &vals[5], &vals[6], &vals[7], &vals[8], &vals[9], &vals[10],
        &vals[11]);
    if (got != 14) throw IoError("malformed diagnostics row: " + linestr);
    r.Ci = vals[0];
    r.Ci_b = vals[1];
    r.Ci_d = vals[2];
    r.rri = vals[3];
    r.cos_alpha = vals[4];
    r.cos_phi = vals[5];
    r.cook1 = vals[6];
    r.comp_xx = vals[7];
    r.comp_r = vals[8];
    r.comp_zz = vals[9];
    r.comp_ir = vals[10];
    r.comp_vinv = vals[11];
    out.push_back(r);
  }
  return out;
}

}  // namespace pmelm

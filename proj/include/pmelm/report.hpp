#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmelm/influence.hpp"
#include "pmelm/panel.hpp"

namespace pmelm {

enum class Stat { Ci, Ci_b, Ci_d, Rri, Cook1 };

std::string stat_name(Stat stat);
Stat stat_from_name(const std::string& name);
double stat_value(const DiagnosticRecord& rec, Stat stat);

// Which subjects a plot shows. Balanced20 keeps 10 per treatment arm, chosen
// by a seeded shuffle of each arm's id-sorted subjects; highlighted ids are
// always kept and drawn in red.
struct PlotSelection {
  enum class Mode { AllSubjects, Balanced20 };
  Mode mode = Mode::AllSubjects;
  std::vector<int> highlight;
  std::uint64_t seed = 0;
};

// All emitters return standalone SVG 1.1 documents on a fixed 640x480
// canvas, 12-unit font, red #D62728 and black #000000, byte-stable for
// identical inputs.
std::string needle_plot(const std::vector<DiagnosticRecord>& records,
                        Stat stat, const PlotSelection& sel);

// x = Ci_b, y = Ci_d, one labelled point per selected subject.
std::string scatter_plot(const std::vector<DiagnosticRecord>& records,
                         const PlotSelection& sel);

// Period-count polylines: the highlighted subject in red plus `others`
// deterministically chosen companions in black.
std::string trajectory_plot(const PanelDataset& panel, int highlight_id,
                            int others, std::uint64_t seed);

// Diagnostic table with the fixed header
// id,trt,Ci,Ci_b,Ci_d,rri,cos_alpha,cos_phi,cook1,comp_xx,comp_r,comp_zz,comp_ir,comp_vinv
// Values round-trip exactly.
std::string diagnostics_csv(const std::vector<DiagnosticRecord>& records);
std::vector<DiagnosticRecord> parse_diagnostics_csv(const std::string& text);

}  // namespace pmelm

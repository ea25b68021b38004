// Command-line front end: simulate | contaminate | fit | diagnose | plot |
// study. Exit codes: 0 success, 2 invalid arguments, 3 I/O or study failure,
// 4 non-convergence. stderr carries diagnostics; files carry the output.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pmelm/errors.hpp"
#include "pmelm/influence.hpp"
#include "pmelm/model.hpp"
#include "pmelm/panel.hpp"
#include "pmelm/report.hpp"
#include "pmelm/simulate.hpp"

namespace fs = std::filesystem;
using namespace pmelm;

namespace {

bool g_quiet = false;

void info(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << "\n";
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void parallel_for(int threads, int n, const std::function<void(int)>& work) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          work(i);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

DesignSpec design_from_names(const std::vector<std::string>& names) {
  if (names.empty()) return DesignSpec::standard();
  DesignSpec spec;
  for (const std::string& n : names) spec.terms.push_back(term_from_name(n));
  return spec;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<long>(v.size()));
}

struct SimulateArgs {
  double sigma1 = 0.5;
  int m1 = 59;
  std::uint64_t seed = 0;
  std::string out;
  std::string covariates;
  std::vector<double> beta;
  double alpha_sd = 0.0;
};

int run_simulate(const SimulateArgs& a) {
  const DesignSpec design = DesignSpec::standard();
  GenSpec spec;
  spec.m1 = a.m1;
  spec.sigma1 = a.sigma1;
  spec.seed = a.seed;
  spec.alpha_sd = a.alpha_sd;
  spec.beta = a.beta.empty() ? study_beta(a.sigma1, design) : to_vector(a.beta);
  if (!a.covariates.empty()) {
    spec.covariates.kind = CovariateSource::Kind::Resample;
    spec.covariates.reference = load_panel(a.covariates);
  }
  SimMetadata meta;
  const PanelDataset panel = generate(spec, design, &meta);
  write_file_atomic(a.out, panel_csv(panel));
  write_file_atomic(a.out + ".meta.json", meta.to_json());
  info("wrote " + a.out + " and " + a.out + ".meta.json");
  return 0;
}

struct ContaminateArgs {
  std::string in, out;
  int method = 1;
  int target = 1;
};

int run_contaminate(const ContaminateArgs& a) {
  const PanelDataset panel = load_panel(a.in);
  const PanelDataset out = contaminate(panel, {a.method, a.target});
  write_file_atomic(a.out, panel_csv(out));
  info("wrote " + a.out);
  return 0;
}

struct FitArgs {
  std::string panel, out;
  int quad = 25;
  std::vector<std::string> design;
};

int run_fit(const FitArgs& a) {
  const PanelDataset panel = load_panel(a.panel);
  const DesignSpec design = design_from_names(a.design);
  const QuadratureRule rule = QuadratureRule::gauss_hermite(a.quad);
  const FitResult fit = fit_ml(panel, design, rule);
  write_file_atomic(a.out, fit_json(fit));
  info("wrote " + a.out + " (loglik " + std::to_string(fit.loglik) + ", " +
       std::to_string(fit.iterations) + " iterations)");
  return 0;
}

struct DiagnoseArgs {
  std::string panel, fit, out;
  int quad = 25;
  std::vector<std::string> design;
};

int run_diagnose(const DiagnoseArgs& a) {
  const PanelDataset panel = load_panel(a.panel);
  const DesignSpec design = design_from_names(a.design);
  const QuadratureRule rule = QuadratureRule::gauss_hermite(a.quad);
  const Theta theta = theta_from_json(read_file(a.fit));
  const FitResult fit = evaluate_at(panel, design, rule, theta);
  const std::vector<DiagnosticRecord> records = diagnose(fit, rule);
  write_file_atomic(a.out, diagnostics_csv(records));
  info("wrote " + a.out);
  return 0;
}

struct PlotArgs {
  std::string kind = "needle";
  std::string diag, panel, out;
  std::string stat = "rri";
  std::string select = "all";
  std::vector<int> highlight;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int subject = 1;
  int others = 5;
};

int run_plot(const PlotArgs& a) {
  std::uint64_t seed = a.seed;
  if (!a.seed_given && !a.panel.empty()) {
    const fs::path side = a.panel + ".meta.json";
    if (fs::exists(side)) seed = SimMetadata::from_json(read_file(side)).seed;
  }

  std::string svg;
  if (a.kind == "trajectory") {
    if (a.panel.empty()) throw IoError("trajectory plots need --panel");
    svg = trajectory_plot(load_panel(a.panel), a.subject, a.others, seed);
  } else {
    if (a.diag.empty()) throw IoError("needle/scatter plots need --diag");
    const std::vector<DiagnosticRecord> records =
        parse_diagnostics_csv(read_file(a.diag));
    PlotSelection sel;
    sel.mode = a.select == "balanced20" ? PlotSelection::Mode::Balanced20
                                        : PlotSelection::Mode::AllSubjects;
    sel.highlight = a.highlight;
    sel.seed = seed;
    svg = a.kind == "scatter" ? scatter_plot(records, sel)
                              : needle_plot(records, stat_from_name(a.stat), sel);
  }
  write_file_atomic(a.out, svg);
  info("wrote " + a.out);
  return 0;
}

struct StudyArgs {
  int replicates = 20;
  std::uint64_t seed = 0;
  std::vector<int> methods = {1, 2, 3, 4};
  std::vector<double> sigmas = {0.25, 0.5, 1.0};
  int m1 = 59;
  std::string outdir;
  bool skip_failures = false;
  bool plots = false;
  int quad = 25;
  int threads = 0;
};

std::string cell_tag(const StudyCell& cell) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "s%g_m%d_r%d", cell.sigma1, cell.method,
                cell.replicate);
  return buf;
}

int run_study(const StudyArgs& a) {
  const DesignSpec design = DesignSpec::standard();
  StudyOptions options;
  options.sigmas = a.sigmas;
  options.methods = a.methods;
  options.replicates = a.replicates;
  options.m1 = a.m1;

  const std::vector<StudyCell> cells = study_grid(a.seed, options, design);
  const QuadratureRule rule = QuadratureRule::gauss_hermite(a.quad);
  const std::vector<Stat> stats = {Stat::Ci, Stat::Ci_b, Stat::Ci_d, Stat::Rri,
                                   Stat::Cook1};

  struct CellOutcome {
    bool ok = false;
    std::string error;
    std::array<int, 5> rank{};
  };
  std::vector<CellOutcome> outcomes(cells.size());

  const int threads = a.threads > 0
                          ? a.threads
                          : static_cast<int>(std::max(
                                1u, std::thread::hardware_concurrency()));
  parallel_for(threads, static_cast<int>(cells.size()), [&](int ci) {
    const StudyCell& cell = cells[static_cast<std::size_t>(ci)];
    CellOutcome& out = outcomes[static_cast<std::size_t>(ci)];
    try {
      const FitResult fit = fit_ml(cell.contaminated, design, rule);
      const std::vector<DiagnosticRecord> records = diagnose(fit, rule);

      const int target_id = cell.contaminated.subjects[0].id;
      for (std::size_t s = 0; s < stats.size(); ++s) {
        double target_value = 0.0;
        for (const DiagnosticRecord& r : records)
          if (r.subject_id == target_id) target_value = stat_value(r, stats[s]);
        int rank = 1;
        for (const DiagnosticRecord& r : records)
          if (r.subject_id != target_id &&
              stat_value(r, stats[s]) > target_value)
            ++rank;
        out.rank[s] = rank;
      }

      const std::string tag = cell_tag(cell);
      const fs::path dir = fs::path(a.outdir) / "cells";
      write_file_atomic(dir / (tag + ".csv"), panel_csv(cell.contaminated));
      write_file_atomic(dir / (tag + "_diag.csv"), diagnostics_csv(records));
      if (a.plots) {
        PlotSelection sel;
        sel.mode = PlotSelection::Mode::Balanced20;
        sel.highlight = {target_id};
        sel.seed = cell.seed;
        for (Stat st : {Stat::Ci, Stat::Ci_b, Stat::Ci_d, Stat::Rri}) {
          const std::string name = tag + "_" + stat_name(st) + "_m" +
                                   std::to_string(cell.method) + ".svg";
          write_file_atomic(dir / name, needle_plot(records, st, sel));
        }
      }
      out.ok = true;
    } catch (const Error& e) {
      out.error = e.what();
    }
  });

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    if (!outcomes[ci].ok) {
      std::cerr << "cell " << cell_tag(cells[ci]) << " failed: "
                << outcomes[ci].error << "\n";
      if (!a.skip_failures) throw IoError("study cell failed");
    }
  }

  // one row per (sigma, method, stat), rates over the completed replicates
  std::string table = "sigma1,method,stat,rank1_rate,rank3_rate,replicates\n";
  for (double sigma : a.sigmas) {
    for (int method : a.methods) {
      for (std::size_t s = 0; s < stats.size(); ++s) {
        int done = 0, rank1 = 0, rank3 = 0;
        for (std::size_t ci = 0; ci < cells.size(); ++ci) {
          const StudyCell& cell = cells[ci];
          if (cell.sigma1 != sigma || cell.method != method) continue;
          if (!outcomes[ci].ok) continue;
          ++done;
          if (outcomes[ci].rank[s] == 1) ++rank1;
          if (outcomes[ci].rank[s] <= 3) ++rank3;
        }
        char row[160];
        std::snprintf(row, sizeof(row), "%g,%d,%s,%.6g,%.6g,%d\n", sigma,
                      method, stat_name(stats[s]).c_str(),
                      done ? static_cast<double>(rank1) / done : 0.0,
                      done ? static_cast<double>(rank3) / done : 0.0, done);
        table += row;
      }
    }
  }
  write_file_atomic(fs::path(a.outdir) / "detection_rates.csv", table);
  info("wrote " + (fs::path(a.outdir) / "detection_rates.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson mixed-effect model fitting and influence diagnostics"};
  app.require_subcommand(1);
  app.set_config("--config", "", "configuration file (key = value)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  int threads = 0;
  app.add_flag("--quiet", g_quiet, "suppress informational messages");
  app.add_option("--threads", threads, "worker threads (default: all cores)");

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a panel");
  c_sim->add_option("--sigma1", sim.sigma1, "random-intercept SD")
      ->required()
      ->check(CLI::PositiveNumber);
  c_sim->add_option("--m1", sim.m1, "subject count")->check(CLI::Range(2, 100000));
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--out", sim.out, "output CSV path")->required();
  c_sim->add_option("--covariates", sim.covariates,
                    "reference panel to resample trt/base/age from");
  c_sim->add_option("--beta", sim.beta,
                    "fixed effects for the standard design (5 values)")
      ->delimiter(',');
  c_sim->add_option("--alpha-sd", sim.alpha_sd,
                    "per-observation log-scale noise SD")
      ->check(CLI::NonNegativeNumber);

  ContaminateArgs con;
  CLI::App* c_con = app.add_subcommand("contaminate", "plant an outlier");
  c_con->add_option("--in", con.in, "input panel CSV")->required();
  c_con->add_option("--method", con.method, "contamination method 1..6")
      ->required()
      ->check(CLI::Range(1, 6));
  c_con->add_option("--target", con.target, "1-based subject position");
  c_con->add_option("--out", con.out, "output CSV path")->required();

  FitArgs fit;
  CLI::App* c_fit = app.add_subcommand("fit", "maximum-likelihood fit");
  c_fit->add_option("--panel", fit.panel, "panel CSV")->required();
  c_fit->add_option("--out", fit.out, "output JSON path")->required();
  c_fit->add_option("--quad", fit.quad, "quadrature order")
      ->check(CLI::Range(1, 199));
  c_fit->add_option("--design", fit.design,
                    "design terms (default: intercept,lbase,trt,lbase:trt,lage)")
      ->delimiter(',');

  DiagnoseArgs diag;
  CLI::App* c_diag = app.add_subcommand("diagnose", "influence diagnostics");
  c_diag->add_option("--panel", diag.panel, "panel CSV")->required();
  c_diag->add_option("--fit", diag.fit, "fit JSON from `fit`")->required();
  c_diag->add_option("--out", diag.out, "output CSV path")->required();
  c_diag->add_option("--quad", diag.quad, "quadrature order")
      ->check(CLI::Range(1, 199));
  c_diag->add_option("--design", diag.design, "design terms")->delimiter(',');

  PlotArgs plot;
  CLI::App* c_plot = app.add_subcommand("plot", "emit an SVG figure");
  c_plot->add_option("--kind", plot.kind, "needle | scatter | trajectory")
      ->check(CLI::IsMember({"needle", "scatter", "trajectory"}));
  c_plot->add_option("--diag", plot.diag, "diagnostics CSV");
  c_plot->add_option("--panel", plot.panel, "panel CSV (trajectory, seed)");
  c_plot->add_option("--stat", plot.stat, "needle statistic")
      ->check(CLI::IsMember({"Ci", "Ci_b", "Ci_d", "rri", "cook1"}));
  c_plot->add_option("--select", plot.select, "all | balanced20")
      ->check(CLI::IsMember({"all", "balanced20"}));
  c_plot->add_option("--highlight", plot.highlight, "subject ids drawn red")
      ->delimiter(',');
  CLI::Option* seed_opt = c_plot->add_option("--seed", plot.seed,
                                             "selection seed");
  c_plot->add_option("--subject", plot.subject, "trajectory highlight id");
  c_plot->add_option("--others", plot.others, "trajectory companion count")
      ->check(CLI::NonNegativeNumber);
  c_plot->add_option("--out", plot.out, "output SVG path")->required();

  StudyArgs study;
  CLI::App* c_study = app.add_subcommand("study", "full detection study");
  c_study->add_option("--replicates", study.replicates, "replicates per cell")
      ->check(CLI::Range(1, 100000));
  c_study->add_option("--seed", study.seed, "base seed");
  c_study->add_option("--methods", study.methods, "contamination methods")
      ->delimiter(',');
  c_study->add_option("--sigma1", study.sigmas, "sigma1 grid")
      ->delimiter(',');
  c_study->add_option("--m1", study.m1, "subjects per panel")
      ->check(CLI::Range(21, 100000));
  c_study->add_option("--outdir", study.outdir, "output directory")->required();
  c_study->add_flag("--skip-failures", study.skip_failures,
                    "drop non-converging cells instead of failing");
  c_study->add_flag("--plots", study.plots, "emit needle plots per cell");
  c_study->add_option("--quad", study.quad, "quadrature order")
      ->check(CLI::Range(1, 199));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  plot.seed_given = seed_opt->count() > 0;
  study.threads = threads;

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_con->parsed()) return run_contaminate(con);
    if (c_fit->parsed()) return run_fit(fit);
    if (c_diag->parsed()) return run_diagnose(diag);
    if (c_plot->parsed()) return run_plot(plot);
    if (c_study->parsed()) return run_study(study);
  } catch (const NonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return c_study->parsed() ? 3 : 4;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "meissner/commands.hpp"
#include "meissner/config.hpp"
#include "meissner/dynamics.hpp"
#include "meissner/errors.hpp"
#include "meissner/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

using namespace meissner;

namespace {

struct Options {
  unsigned threads = 0;
  std::string config;
  std::string out;
  // fieldmap
  std::string plane = "xz";
  std::string grid1 = "-0.6e-3:0.6e-3:25";
  std::string grid2 = "-0.6e-3:0.6e-3:25";
  double plane_offset = 0.0;
  // trap
  std::string bc1;
  // sweep
  std::string currents;
  std::string separations;
  std::string report;
  // odmr
  std::string in;
  int dips = 0;
  // ringdown
  std::string frames;
  std::string psd_out;
  std::string write_series;
  std::string write_frames;
};

Config config_of(const Options& o) { return o.config.empty() ? Config{} : load_config(o.config); }

std::string pick(const std::string& flag, const std::string& fallback) {
  return flag.empty() ? fallback : flag;
}

void emit(const std::string& path, const std::string& text) { io::write_file_atomic(path, text); }

int run_fieldmap(const Options& o) {
  const Config cfg = config_of(o);
  const auto plane = commands::parse_plane(o.plane);
  const auto a = commands::parse_grid(o.grid1);
  const auto b = commands::parse_grid(o.grid2);
  emit(pick(o.out, cfg.output.fieldmap),
       commands::fieldmap_csv(cfg, plane, a, b, o.plane_offset, o.threads));
  return 0;
}

int run_trap(const Options& o) {
  const Config cfg = config_of(o);
  std::optional<double> bc1;
  if (!o.bc1.empty()) bc1 = parse_field_quantity(o.bc1);
  const std::string report = commands::trap_report(cfg, bc1);
  emit(pick(o.out, cfg.output.trap_report), report);
  std::cout << report;
  return 0;
}

int run_sweep(const Options& o) {
  const Config cfg = config_of(o);
  if (o.currents.empty() == o.separations.empty())
    throw ConfigError("give exactly one of --currents or --separations");
  const auto kind = o.currents.empty() ? commands::SweepKind::Separation : commands::SweepKind::Current;
  const auto grid = commands::parse_grid(o.currents.empty() ? o.separations : o.currents);
  const auto result = commands::sweep(cfg, kind, grid, o.threads);
  emit(pick(o.out, cfg.output.sweep), result.csv);
  if (!o.report.empty()) emit(o.report, result.report);
  std::cout << result.report;
  return 0;
}

int run_odmr_simulate(const Options& o) {
  const Config cfg = config_of(o);
  emit(pick(o.out, cfg.output.spectrum), commands::odmr_simulate_csv(cfg));
  return 0;
}

int run_odmr_fit(const Options& o) {
  const Config cfg = config_of(o);
  const std::string text = io::read_file(pick(o.in, cfg.output.spectrum));
  const auto result = commands::odmr_fit(cfg, text, o.dips);
  emit(pick(o.out, cfg.output.lines), result.lines_csv);
  if (!o.report.empty()) emit(o.report, result.report);
  std::cout << result.report;
  return 0;
}

int run_odmr_sweep(const Options& o) {
  const Config cfg = config_of(o);
  const auto result = commands::odmr_sweep(cfg, o.threads);
  emit(pick(o.out, cfg.output.odmr_sweep), result.csv);
  if (!o.report.empty()) emit(o.report, result.report);
  std::cout << result.report;
  return 0;
}

int run_ringdown(const Options& o) {
  const Config cfg = config_of(o);
  if (!o.in.empty() && !o.frames.empty()) throw ConfigError("give at most one of --in or --frames");
  dynamics::TimeSeries series;
  std::string source;
  if (!o.in.empty()) {
    series = dynamics::read_time_series_csv(o.in);
    source = "csv";
  } else if (!o.frames.empty()) {
    const auto stack = dynamics::read_frame_stack(o.frames);
    series = dynamics::track_centroid(stack, std::nullopt, cfg.ringdown.background_percentile,
                                      o.threads)
                 .x;
    source = "frames";
  } else {
    series = dynamics::simulate_ringdown(cfg.ringdown.resolved());
    source = "simulation";
  }
  if (!o.write_series.empty()) emit(o.write_series, dynamics::format_time_series_csv(series));
  if (!o.write_frames.empty())
    dynamics::write_frame_stack(o.write_frames, commands::render_frames(cfg, series));
  const auto result = commands::ringdown(cfg, series, source);
  emit(pick(o.out, cfg.output.ringdown_report), result.report);
  emit(pick(o.psd_out, cfg.output.psd), result.psd_csv);
  std::cout << result.report;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flux-concentrator Meissner trap modelling: fields, trap dynamics, NV ODMR, ringdowns"};
  app.require_subcommand(1);
  app.fallthrough();  // --threads may follow the subcommand
  Options o;
  app.add_option("--threads", o.threads,
                 "Worker threads (0: MEISSNER_TRAP_THREADS or machine parallelism)")
      ->check(CLI::NonNegativeNumber);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI config file (defaults apply when omitted)");
    sub->add_option("--out", o.out, "Output file (overrides the [output] path)");
  };

  auto* fieldmap = app.add_subcommand("fieldmap", "Field map CSV over a plane of the trap");
  add_common(fieldmap);
  fieldmap->add_option("--plane", o.plane, "xy, xz or yz")->capture_default_str();
  fieldmap->add_option("--grid1", o.grid1, "First in-plane axis, min:max:count in m")->capture_default_str();
  fieldmap->add_option("--grid2", o.grid2, "Second in-plane axis, min:max:count in m")->capture_default_str();
  fieldmap->add_option("--plane-offset", o.plane_offset, "Coordinate along the plane normal, m");

  auto* trap = app.add_subcommand("trap", "Equilibrium, eigenfrequencies, gradients and hotspot field");
  add_common(trap);
  trap->add_option("--bc1", o.bc1, "Lower critical field, e.g. 173.5mT; adds the breach current");

  auto* sweep = app.add_subcommand("sweep", "Trap characterization over currents or separations");
  add_common(sweep);
  sweep->add_option("--currents", o.currents, "min:max:count in A");
  sweep->add_option("--separations", o.separations, "min:max:count in m");
  sweep->add_option("--report", o.report, "Also write the fit report here");

  auto* odmr = app.add_subcommand("odmr", "NV ODMR spectra: simulate, fit, current sweep");
  odmr->require_subcommand(1);
  auto* sim = odmr->add_subcommand("simulate", "Spectrum CSV for the configured field");
  add_common(sim);
  auto* fit = odmr->add_subcommand("fit", "Fit Lorentzian dips and invert the field magnitude");
  add_common(fit);
  fit->add_option("--in", o.in, "Spectrum CSV (freq_Hz,signal)");
  fit->add_option("--dips", o.dips, "Number of dips to fit (0: as detected)");
  fit->add_option("--report", o.report, "Also write the field report here");
  auto* osweep = odmr->add_subcommand("sweep", "Spectra over drive current above one concentrator");
  add_common(osweep);
  osweep->add_option("--report", o.report, "Also write the slope report here");

  auto* ring = app.add_subcommand("ringdown", "Fit a ringdown from CSV, frames or simulation");
  add_common(ring);
  ring->add_option("--in", o.in, "Time series CSV (t_s,x_m)");
  ring->add_option("--frames", o.frames, "Frame-stack directory (PGM files plus meta)");
  ring->add_option("--psd-out", o.psd_out, "PSD CSV (overrides [output] psd)");
  ring->add_option("--write-series", o.write_series, "Also write the analysed series as CSV");
  ring->add_option("--write-frames", o.write_frames, "Also render the series into a frame stack");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (fieldmap->parsed()) return run_fieldmap(o);
    if (trap->parsed()) return run_trap(o);
    if (sweep->parsed()) return run_sweep(o);
    if (sim->parsed()) return run_odmr_simulate(o);
    if (fit->parsed()) return run_odmr_fit(o);
    if (osweep->parsed()) return run_odmr_sweep(o);
    if (ring->parsed()) return run_ringdown(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return commands::exit_code_for(e);
  }
  return 0;
}

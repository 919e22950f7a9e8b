#pragma once

#include "meissner/config.hpp"
#include "meissner/dynamics.hpp"
#include "meissner/trap.hpp"

#include <exception>
#include <optional>
#include <string>
#include <vector>

// Text-producing back ends of the command-line tool. Each returns file
// contents; the tool decides where they go.
namespace meissner::commands {

struct GridSpec {
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 1;

  std::vector<double> values() const;
};

// "min:max:count"; count 1 requires min == max.
GridSpec parse_grid(const std::string& text);

enum class Plane { XY, XZ, YZ };
Plane parse_plane(const std::string& text);

// Field map over a plane of the trap assembly; `offset` is the coordinate
// along the plane normal. Schema fieldmap/1.
std::string fieldmap_csv(const Config& cfg, Plane plane, const GridSpec& a, const GridSpec& b,
                         double offset, unsigned threads = 0);

std::string trap_report(const Config& cfg, std::optional<double> bc1 = std::nullopt);

enum class SweepKind { Current, Separation };

struct SweepOutput {
  std::string csv;
  std::string report;
  SweepTable table;
};

SweepOutput sweep(const Config& cfg, SweepKind kind, const GridSpec& grid, unsigned threads = 0);

// Field per ampere of one concentrator (drive centered at the origin, axis
// +z) at `height` above its core face.
Vec3 probe_field_per_ampere(const FluxConcentratorCoil& coil, double height);

std::string odmr_simulate_csv(const Config& cfg);

struct OdmrFitOutput {
  std::string lines_csv;
  std::string report;
  std::vector<nv::ODMRLine> lines;
  nv::FieldEstimate field;
};

// n_dips = 0 fits min(nv.max_dips, detected) dips.
OdmrFitOutput odmr_fit(const Config& cfg, const std::string& spectrum_csv, int n_dips = 0);

struct OdmrSweepOutput {
  std::string csv;  // long format current_A,freq_Hz,signal
  std::string report;
  std::vector<double> currents;    // A
  std::vector<double> magnitudes;  // T
  LinearFit fit;                   // mT against mA
};

OdmrSweepOutput odmr_sweep(const Config& cfg, unsigned threads = 0);

struct RingdownOutput {
  std::string report;
  std::string psd_csv;
  dynamics::RingdownFit fit;
};

RingdownOutput ringdown(const Config& cfg, const dynamics::TimeSeries& series,
                        const std::string& source);

// Spot frames following x(t) of `series` (converted with the configured
// pixel size), centered in the frame.
dynamics::FrameStack render_frames(const Config& cfg, const dynamics::TimeSeries& series);

// 2 config, 3 singularity, 4 no trap, 5 fit, 6 no oscillation, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace meissner::commands

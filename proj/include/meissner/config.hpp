#pragma once

#include "meissner/dynamics.hpp"
#include "meissner/nv.hpp"
#include "meissner/trap.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace meissner {

struct NvSettings {
  nv::ZeemanModel zeeman;
  double linewidth = 8e6;      // Hz
  double contrast = 0.1;
  double grid_start = 2.577e9;  // Hz
  double grid_stop = 3.177e9;   // Hz
  std::size_t grid_count = 1201;
  double noise_sigma = 0.0;    // absolute, in normalized signal units
  std::uint64_t seed = 1;
  Vec3 field = Vec3(0.0, 0.0, 3e-3);  // T, lab frame, for `odmr simulate`
  double probe_height = 0.5e-3;       // m above the core face, for `odmr sweep`
  double sweep_start = 0.0;           // A
  double sweep_stop = 0.5;            // A
  std::size_t sweep_count = 11;
  std::array<double, 4> orientation_weights{1.0, 1.0, 1.0, 1.0};
  int max_dips = 8;
  double theta = nv::magic_angle();   // rad, angle used for magnitude inversion
};

struct RingdownSettings {
  dynamics::RingdownParams sim;
  std::optional<double> snr_db = 20.0;  // overrides sim.noise_rms when set
  std::size_t psd_segment = 1024;
  double psd_overlap = 0.5;
  double background_percentile = 50.0;
  double pixel_size = 0.5e-6;  // m/px for rendered frames
  int frame_size = 48;         // px, square frames
  double spot_sigma = 2.0;     // px
  double spot_peak = 4000.0;   // counts

  dynamics::RingdownParams resolved() const;
};

// Sweeps run without gravity by default: low currents and wide gaps cannot
// levitate the particle, and linearity is a g = 0 property.
struct SweepSettings {
  double gravity = 0.0;  // m/s^2
};

struct OutputSettings {
  std::string fieldmap = "fieldmap.csv";
  std::string trap_report = "trap.txt";
  std::string sweep = "sweep.csv";
  std::string spectrum = "spectrum.csv";
  std::string lines = "lines.csv";
  std::string odmr_sweep = "odmr_sweep.csv";
  std::string ringdown_report = "ringdown.txt";
  std::string psd = "psd.csv";
};

struct Config {
  TrapConfig trap = default_trap_config();
  NvSettings nv;
  RingdownSettings ringdown;
  SweepSettings sweep;
  OutputSettings output;
};

// INI subset: [section] headers, key = value lines, '#' or ';' comments.
// Unknown sections or keys, duplicates and malformed values raise ConfigError.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);

// Every recognised "section.key", for documentation and tests.
std::vector<std::string> config_keys();

// "<number><unit>" with unit one of T, mT, uT, nT (a bare number is tesla).
double parse_field_quantity(const std::string& text);

}  // namespace meissner

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace meissner::dynamics {

struct TimeSeries {
  std::vector<double> t;  // s, uniform step
  std::vector<double> x;  // m (or px for raw tracked data)
  // Sample at which the drive was switched off, when known.
  std::optional<std::size_t> release_index;

  void validate() const;
  double sample_rate() const;
};

struct RingdownParams {
  double f0 = 20.0;             // Hz
  double tau = 10.0;            // s
  double amplitude = 1e-6;      // m
  double phase = 0.0;           // rad
  double drive_duration = 0.0;  // s of steady-state drive before t = 0
  double record_duration = 30.0;
  double sample_rate = 300.0;   // Hz
  double noise_rms = 0.0;       // m
  std::uint64_t seed = 0;

  void validate() const;
};

// Noise RMS giving the requested ratio of initial signal power (A^2/2) to
// noise power, in dB.
double noise_rms_for_snr(double amplitude, double snr_db);

// Samples t = -drive_duration ... record_duration with the release at t = 0:
// A cos(2 pi f0 t + phi) before it, A exp(-t/tau) cos(2 pi f0 t + phi) after,
// plus seeded Gaussian noise.
TimeSeries simulate_ringdown(const RingdownParams& p);

struct RingdownFit {
  // x(t) = amplitude exp(-(t - t_start)/tau) cos(2 pi f0 (t - t_start) + phase) + offset
  double f0 = 0.0;
  double tau = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
  double offset = 0.0;
  double q = 0.0;
  double f0_err = 0.0;
  double tau_err = 0.0;
  double q_err = 0.0;
  double residual_rms = 0.0;
  double t_start = 0.0;
  std::size_t start_index = 0;
  std::size_t downweighted = 0;  // samples with Huber weight below one
};

// Fits the post-release part of the series. The start is `start_index`, else
// ts.release_index, else detected as the last envelope peak within 5% of the
// maximum.
RingdownFit fit_ringdown(const TimeSeries& ts, std::optional<std::size_t> start_index = std::nullopt);

double quality_factor(double f0, double tau);

struct PowerSpectrum {
  std::vector<double> frequency;  // Hz
  std::vector<double> power;      // units^2 / Hz, one-sided
  double df() const { return frequency.size() > 1 ? frequency[1] - frequency[0] : 0.0; }
};

// Welch estimate with a Hann window and per-segment mean removal. A
// segment_length of 0 selects the whole series.
PowerSpectrum psd(const TimeSeries& ts, std::size_t segment_length = 0, double overlap = 0.5);

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;  // row-major

  std::uint16_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct FrameStack {
  std::vector<Frame> frames;
  double frame_rate = 0.0;  // Hz
  double pixel_size = 0.0;  // m/px

  void validate() const;
};

struct Roi {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
};

struct CentroidTrack {
  TimeSeries x;  // m
  TimeSeries y;  // m
};

// Per frame: subtract the ROI's background percentile, clamp at zero, take the
// intensity-weighted centroid. Coordinates are pixel centers times pixel_size.
CentroidTrack track_centroid(const FrameStack& fs, const std::optional<Roi>& roi = std::nullopt,
                             double background_percentile = 50.0, unsigned threads = 0);

struct SpotRender {
  int width = 48;
  int height = 48;
  double sigma_px = 2.0;
  double peak = 4000.0;       // counts
  double background = 100.0;  // counts
  double noise_rms = 0.0;     // counts
  std::uint64_t seed = 0;
};

// Pixel-integrated Gaussian spots at the given pixel positions.
FrameStack render_spot_frames(const std::vector<double>& x_px, const std::vector<double>& y_px,
                              const SpotRender& r, double frame_rate, double pixel_size);

// Directory of frame_NNNNNN.pgm (P5, 16-bit) plus a key=value `meta` file.
FrameStack read_frame_stack(const std::filesystem::path& dir);
void write_frame_stack(const std::filesystem::path& dir, const FrameStack& fs);

TimeSeries read_time_series_csv(const std::filesystem::path& path);
std::string format_time_series_csv(const TimeSeries& ts);
std::string format_psd_csv(const PowerSpectrum& p);
std::string format_ringdown_report(const RingdownFit& fit);

}  // namespace meissner::dynamics

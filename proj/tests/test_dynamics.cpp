#include "meissner/dynamics.hpp"
#include "meissner/errors.hpp"
#include "meissner/io.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <random>

using namespace meissner;
using namespace meissner::dynamics;

namespace {

RingdownParams base_params() {
  RingdownParams p;
  p.f0 = 20.0;
  p.tau = 10.0;
  p.amplitude = 1e-6;
  p.phase = 0.3;
  p.record_duration = 30.0;
  p.sample_rate = 300.0;
  return p;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / v.size();
}

double integrated(const PowerSpectrum& p) {
  return std::accumulate(p.power.begin(), p.power.end(), 0.0) * p.df();
}

TimeSeries sine(double amplitude, double f, double fs, std::size_t n) {
  TimeSeries ts;
  for (std::size_t k = 0; k < n; ++k) {
    ts.t.push_back(k / fs);
    ts.x.push_back(amplitude * std::sin(2 * std::numbers::pi * f * k / fs + 0.4));
  }
  return ts;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("meissner_dyn_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("ringdown synthesis: start value, envelope, release index") {
  auto p = base_params();
  const auto ts = simulate_ringdown(p);
  REQUIRE(ts.release_index.has_value());
  CHECK(*ts.release_index == 0);
  CHECK(ts.t[0] == 0.0);
  CHECK(ts.x[0] == p.amplitude * std::cos(p.phase));
  CHECK(ts.t.size() == 9001);
  // sample at t = tau falls on the grid (10 s * 300 Hz)
  const std::size_t k = 3000;
  CHECK(ts.t[k] == doctest::Approx(p.tau).epsilon(1e-15));
  const double env = ts.x[k] / std::cos(2 * std::numbers::pi * p.f0 * ts.t[k] + p.phase);
  CHECK(oracle::rel(env, p.amplitude / std::numbers::e) < 1e-9);
  p.drive_duration = 2.0;
  const auto driven = simulate_ringdown(p);
  CHECK(*driven.release_index == 600);
  CHECK(driven.t[600] == 0.0);
  CHECK(driven.x[600] == ts.x[0]);
  // steady drive: undamped before the release
  CHECK(std::abs(driven.x[0] - p.amplitude * std::cos(-2 * std::numbers::pi * p.f0 * 2.0 + p.phase)) < 1e-18);
}

TEST_CASE("ringdown synthesis: oscillator energy decays as exp(-2t/tau)") {
  auto p = base_params();
  p.sample_rate = 20000.0;
  p.record_duration = 12.0;
  const auto ts = simulate_ringdown(p);
  const double h = 1.0 / p.sample_rate, w = 2 * std::numbers::pi * p.f0;
  const double e0 = p.amplitude * p.amplitude;
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < ts.x.size(); k += 97) {
    const double v = (ts.x[k + 1] - ts.x[k - 1]) / (2 * h);
    const double e = ts.x[k] * ts.x[k] + (v / w) * (v / w);
    worst = std::max(worst, std::abs(e / (e0 * std::exp(-2 * ts.t[k] / p.tau)) - 1.0));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("ringdown synthesis: validation and determinism") {
  auto p = base_params();
  p.sample_rate = 150.0;
  CHECK_THROWS_AS(simulate_ringdown(p), UndersamplingError);
  p = base_params();
  p.tau = 0.0;
  CHECK_THROWS_AS(simulate_ringdown(p), InvalidArgument);
  p = base_params();
  p.record_duration = 0.02;
  CHECK_THROWS_AS(simulate_ringdown(p), TooShortError);
  p = base_params();
  p.noise_rms = 1e-8;
  p.seed = 5;
  CHECK(simulate_ringdown(p).x == simulate_ringdown(p).x);
  p.seed = 6;
  CHECK(simulate_ringdown(p).x != simulate_ringdown(base_params()).x);
}

TEST_CASE("quality factor") {
  CHECK(quality_factor(20.0, 10.0) == doctest::Approx(628.3185307179586).epsilon(1e-15));
  CHECK(quality_factor(40.0, 10.0) == 2 * quality_factor(20.0, 10.0));
  CHECK(quality_factor(20.0, 1e-300) > 0.0);
  CHECK(quality_factor(20.0, 1e-300) < 1e-290);
  CHECK_THROWS_AS(quality_factor(0.0, 1.0), InvalidArgument);
}

TEST_CASE("fit: noise-free recovery to 1e-6") {
  const auto p = base_params();
  const auto fit = fit_ringdown(simulate_ringdown(p));
  CHECK(oracle::rel(fit.f0, p.f0) < 1e-6);
  CHECK(oracle::rel(fit.tau, p.tau) < 1e-6);
  CHECK(oracle::rel(fit.amplitude, p.amplitude) < 1e-6);
  CHECK(std::abs(fit.phase - p.phase) < 1e-6);
  CHECK(std::abs(fit.offset) < 1e-6 * p.amplitude);
}

TEST_CASE("fit: 20 dB SNR round trip") {
  auto p = base_params();
  p.noise_rms = noise_rms_for_snr(p.amplitude, 20.0);
  CHECK(p.noise_rms == doctest::Approx(p.amplitude / std::sqrt(2.0) / 10.0).epsilon(1e-14));
  p.seed = 11;
  const auto fit = fit_ringdown(simulate_ringdown(p));
  CHECK(oracle::rel(fit.f0, 20.0) < 1e-3);
  CHECK(oracle::rel(fit.tau, 10.0) < 0.02);
  CHECK(fit.q == doctest::Approx(628.3).epsilon(0.02));
  CHECK(fit.f0_err > 0.0);
  CHECK(fit.tau_err > 0.0);
}

TEST_CASE("fit: a Q near 1000 is recovered within 3%") {
  auto p = base_params();
  p.tau = 1000.0 / (std::numbers::pi * p.f0);
  p.noise_rms = noise_rms_for_snr(p.amplitude, 20.0);
  p.seed = 12;
  const auto fit = fit_ringdown(simulate_ringdown(p));
  CHECK(oracle::rel(fit.q, 1000.0) < 0.03);
}

TEST_CASE("fit: driven prefix is skipped via the release index or detection") {
  auto p = base_params();
  p.drive_duration = 5.0;
  p.noise_rms = noise_rms_for_snr(p.amplitude, 30.0);
  p.seed = 13;
  auto ts = simulate_ringdown(p);
  const auto known = fit_ringdown(ts);
  CHECK(known.start_index == 1500);
  CHECK(oracle::rel(known.tau, p.tau) < 0.02);
  ts.release_index.reset();
  const auto detected = fit_ringdown(ts);
  CHECK(detected.start_index >= 1500);
  CHECK(detected.start_index < 1500 + 300);
  CHECK(oracle::rel(detected.tau, p.tau) < 0.02);
  CHECK(oracle::rel(detected.f0, p.f0) < 1e-3);
}

TEST_CASE("property: Q = pi f0 tau exactly, residual within 1.2x the noise over 50 seeds") {
  auto p = base_params();
  p.noise_rms = noise_rms_for_snr(p.amplitude, 20.0);
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    p.seed = seed;
    const auto fit = fit_ringdown(simulate_ringdown(p));
    CHECK(fit.q == quality_factor(fit.f0, fit.tau));
    CHECK(fit.q == M_PI * fit.f0 * fit.tau);
    CHECK(fit.residual_rms <= 1.2 * p.noise_rms);
  }
}

TEST_CASE("fit: isolated tracking glitches are down-weighted") {
  auto p = base_params();
  p.noise_rms = noise_rms_for_snr(p.amplitude, 20.0);
  p.seed = 14;
  auto ts = simulate_ringdown(p);
  for (std::size_t k = 200; k < ts.x.size(); k += 700) ts.x[k] += 20 * p.noise_rms;
  const auto fit = fit_ringdown(ts);
  CHECK(fit.downweighted >= 12);
  CHECK(oracle::rel(fit.f0, p.f0) < 1e-3);
  CHECK(oracle::rel(fit.tau, p.tau) < 0.02);
}

TEST_CASE("fit: failure modes") {
  TimeSeries flat;
  for (int k = 0; k < 1000; ++k) {
    flat.t.push_back(k / 300.0);
    flat.x.push_back(1e-6);
  }
  CHECK_THROWS_AS(fit_ringdown(flat), NoOscillationError);
  TimeSeries noise = flat;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : noise.x) v = n(rng);
  CHECK_THROWS_AS(fit_ringdown(noise), NoOscillationError);
  TimeSeries tiny = flat;
  tiny.t.resize(10);
  tiny.x.resize(10);
  CHECK_THROWS_AS(fit_ringdown(tiny), TooShortError);
  TimeSeries uneven = flat;
  uneven.t[5] += 1e-4;
  CHECK_THROWS_AS(fit_ringdown(uneven), InvalidArgument);
}

TEST_CASE("psd: a sinusoid integrates to A^2/2") {
  const double a = 2.5e-6;
  const auto whole = psd(sine(a, 20.0, 300.0, 9000));
  CHECK(oracle::rel(integrated(whole), a * a / 2) < 0.01);
  const auto welch = psd(sine(a, 20.0, 300.0, 9000), 1024, 0.5);
  CHECK(oracle::rel(integrated(welch), a * a / 2) < 0.01);
  CHECK(welch.df() == doctest::Approx(300.0 / 1024).epsilon(1e-14));
  CHECK(welch.frequency.front() == 0.0);
  CHECK(welch.frequency.back() == doctest::Approx(150.0).epsilon(1e-14));
}

TEST_CASE("psd: white noise is flat at sigma^2 / (fs/2)") {
  const double sigma = 3e-7, fs = 300.0;
  TimeSeries ts;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, sigma);
  for (int k = 0; k < 65536; ++k) {
    ts.t.push_back(k / fs);
    ts.x.push_back(n(rng));
  }
  const auto p = psd(ts, 512, 0.5);
  // interior bins; DC is removed per segment and Nyquist is a half bin
  std::vector<double> mid(p.power.begin() + 2, p.power.end() - 1);
  CHECK(oracle::rel(mean(mid), sigma * sigma / (fs / 2)) < 0.05);
}

TEST_CASE("property: psd integrates to the window-corrected variance within 2%") {
  for (int trial = 0; trial < 10; ++trial) {
    auto p = base_params();
    p.f0 = 5.0 + 2.5 * trial;
    p.noise_rms = 2e-8 * (trial + 1);
    p.seed = 200 + trial;
    auto ts = simulate_ringdown(p);
    for (auto& v : ts.x) v += 1e-6;  // offset removed per segment
    // single Hann segment: sum of (w (x - mean))^2 over sum of w^2
    const std::size_t n = ts.x.size();
    const double m = mean(ts.x);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * k / n);
      num += std::pow(w * (ts.x[k] - m), 2);
      den += w * w;
    }
    CHECK(oracle::rel(integrated(psd(ts)), num / den) < 0.02);
    // stationary series: the plain variance
    std::mt19937_64 rng(300 + trial);
    std::normal_distribution<double> noise(0.0, p.noise_rms);
    TimeSeries steady;
    for (std::size_t k = 0; k < 4096; ++k) {
      steady.t.push_back(ts.t[k]);
      steady.x.push_back(p.amplitude * std::cos(2 * std::numbers::pi * p.f0 * ts.t[k]) + noise(rng) + 1e-6);
    }
    CHECK(oracle::rel(integrated(psd(steady, 256, 0.5)), variance(steady.x)) < 0.02);
  }
}

TEST_CASE("psd: ringdown peak lands within one bin of f0") {
  auto p = base_params();
  p.f0 = 23.7;
  p.noise_rms = 1e-8;
  p.seed = 19;
  const auto spec = psd(simulate_ringdown(p));
  const auto it = std::max_element(spec.power.begin(), spec.power.end());
  CHECK(std::abs(spec.frequency[it - spec.power.begin()] - p.f0) <= spec.df());
}

TEST_CASE("psd: validation") {
  const auto ts = sine(1.0, 20.0, 300.0, 100);
  CHECK_THROWS_AS(psd(ts, 200), TooShortError);
  CHECK_THROWS_AS(psd(ts, 64, 0.95), InvalidArgument);
  CHECK_THROWS_AS(psd(ts, 4), TooShortError);
  CHECK_NOTHROW(psd(ts, 64, 0.9));
}

TEST_CASE("centroid: noise-free sub-pixel spots within 0.05 px RMS") {
  std::vector<double> xs, ys;
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(18.0, 30.0);
  for (int k = 0; k < 200; ++k) {
    xs.push_back(u(rng));
    ys.push_back(u(rng));
  }
  const auto fs = render_spot_frames(xs, ys, SpotRender{}, 300.0, 1.0);
  const auto track = track_centroid(fs);
  double se = 0.0;
  for (int k = 0; k < 200; ++k)
    se += std::pow(track.x.x[k] - xs[k], 2) + std::pow(track.y.x[k] - ys[k], 2);
  CHECK(std::sqrt(se / 200) < 0.05);
  CHECK(track.x.t[1] == doctest::Approx(1.0 / 300).epsilon(1e-14));
}

TEST_CASE("centroid: a one-pixel step reads as one pixel") {
  const auto fs = render_spot_frames({20.3, 21.3}, {24.6, 24.6}, SpotRender{}, 100.0, 2e-6);
  FrameStack stack = fs;
  while (stack.frames.size() < 16) stack.frames.push_back(fs.frames[stack.frames.size() % 2]);
  const auto track = track_centroid(stack);
  CHECK(std::abs((track.x.x[1] - track.x.x[0]) / 2e-6 - 1.0) < 1e-6);
  CHECK(std::abs(track.y.x[1] - track.y.x[0]) < 1e-12);
}

TEST_CASE("property: tracking is translation-equivariant") {
  std::vector<double> xs, ys;
  for (int k = 0; k < 20; ++k) {
    xs.push_back(24.0 + 3.0 * std::sin(0.7 * k));
    ys.push_back(22.0 + 2.0 * std::cos(0.3 * k));
  }
  SpotRender r;
  r.noise_rms = 15.0;
  r.seed = 4;
  const auto fs = render_spot_frames(xs, ys, r, 300.0, 1.0);
  const auto base = track_centroid(fs, Roi{4, 4, 40, 40});
  for (auto [dx, dy] : {std::pair{3, 0}, {0, 5}, {7, 2}}) {
    FrameStack moved = fs;
    for (auto& f : moved.frames) {
      Frame g{f.width + 8, f.height + 8, {}};
      g.pixels.assign(static_cast<std::size_t>(g.width) * g.height, 0);
      for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) g.pixels[(y + dy) * g.width + x + dx] = f.at(x, y);
      f = g;
    }
    const auto shifted = track_centroid(moved, Roi{4 + dx, 4 + dy, 40, 40});
    for (std::size_t k = 0; k < xs.size(); ++k) {
      CHECK(std::abs(shifted.x.x[k] - base.x.x[k] - dx) < 1e-9);
      CHECK(std::abs(shifted.y.x[k] - base.y.x[k] - dy) < 1e-9);
    }
  }
}

TEST_CASE("centroid: failure modes and thread independence") {
  const auto fs = render_spot_frames(std::vector<double>(16, 24.0), std::vector<double>(16, 24.0),
                                     SpotRender{}, 100.0, 1.0);
  FrameStack blank = fs;
  for (auto& p : blank.frames[3].pixels) p = 100;
  CHECK_THROWS_AS(track_centroid(blank), EmptyRoiError);
  CHECK_THROWS_AS(track_centroid(fs, Roi{40, 40, 20, 20}), InvalidArgument);
  CHECK_THROWS_AS(track_centroid(fs, std::nullopt, 120.0), InvalidArgument);
  FrameStack ragged = fs;
  ragged.frames[2].width = 47;
  CHECK_THROWS_AS(track_centroid(ragged), InvalidArgument);
  SpotRender r;
  r.noise_rms = 20.0;
  r.seed = 9;
  std::vector<double> xs(64), ys(64);
  for (int k = 0; k < 64; ++k) xs[k] = ys[k] = 20.0 + 0.1 * k;
  const auto noisy = render_spot_frames(xs, ys, r, 100.0, 1.0);
  CHECK(track_centroid(noisy, std::nullopt, 50.0, 1).x.x == track_centroid(noisy, std::nullopt, 50.0, 8).x.x);
}

TEST_CASE("end to end: frames of a simulated ringdown recover f0 within 0.5%") {
  auto p = base_params();
  p.amplitude = 4.0;  // px
  p.record_duration = 20.0;
  const auto motion = simulate_ringdown(p);
  std::vector<double> ys(motion.x.size(), 24.0), xs;
  for (double v : motion.x) xs.push_back(24.0 + v);
  SpotRender r;
  r.noise_rms = 10.0;
  r.seed = 21;
  const double pixel = 0.8e-6;
  const auto fs = render_spot_frames(xs, ys, r, p.sample_rate, pixel);
  const auto track = track_centroid(fs);
  const auto fit = fit_ringdown(track.x, 0);
  CHECK(oracle::rel(fit.f0, p.f0) < 0.005);
}

TEST_CASE("frame stacks and time series survive a disk round trip") {
  const auto dir = scratch_dir("frames");
  SpotRender r;
  r.noise_rms = 30.0;
  r.seed = 2;
  const auto fs = render_spot_frames({20.0, 21.5, 22.25}, {19.0, 18.0, 25.0}, r, 250.0, 1.5e-6);
  write_frame_stack(dir / "stack", fs);
  const auto back = read_frame_stack(dir / "stack");
  REQUIRE(back.frames.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(back.frames[k].pixels == fs.frames[k].pixels);
  CHECK(back.frame_rate == 250.0);
  CHECK(back.pixel_size == 1.5e-6);

  auto p = base_params();
  p.noise_rms = 1e-8;
  p.seed = 3;
  const auto ts = simulate_ringdown(p);
  io::write_file_atomic(dir / "ts.csv", format_time_series_csv(ts));
  const auto text = io::read_file(dir / "ts.csv");
  CHECK(text.rfind("# schema=", 0) == 0);
  const auto again = read_time_series_csv(dir / "ts.csv");
  REQUIRE(again.x.size() == ts.x.size());
  for (std::size_t k = 0; k < ts.x.size(); k += 101) {
    CHECK(oracle::rel(again.x[k], ts.x[k]) < 1e-9);
    CHECK(std::abs(again.t[k] - ts.t[k]) < 1e-12);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("ringdown report keys") {
  RingdownFit f;
  f.f0 = 20.0;
  f.tau = 10.0;
  f.q = quality_factor(20.0, 10.0);
  const auto kv = io::parse_key_values(format_ringdown_report(f));
  for (const char* key : {"f0_hz", "tau_s", "q", "residual_rms"}) CHECK(kv.count(key) == 1);
  CHECK(kv.at("q") == "6.283185307e+02");
}

#include "meissner/dynamics.hpp"

#include "meissner/errors.hpp"
#include "meissner/io.hpp"
#include "meissner/optimize.hpp"
#include "meissner/parallel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

namespace meissner::dynamics {

void TimeSeries::validate() const {
  if (t.size() != x.size()) throw InvalidArgument("time and value lengths differ");
  if (t.size() < 16) throw TooShortError("time series needs at least 16 samples");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw InvalidArgument("time must be strictly ascending");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * dt)
      throw InvalidArgument("time steps are not uniform");
  }
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidArgument("time series has non-finite values");
  if (release_index && *release_index >= t.size())
    throw InvalidArgument("release index outside the series");
}

double TimeSeries::sample_rate() const {
  return static_cast<double>(t.size() - 1) / (t.back() - t.front());
}

void RingdownParams::validate() const {
  if (!(f0 > 0.0) || !(tau > 0.0)) throw InvalidArgument("f0 and tau must be positive");
  if (!(amplitude > 0.0)) throw InvalidArgument("amplitude must be positive");
  if (!(record_duration > 0.0) || !(drive_duration >= 0.0))
    throw InvalidArgument("record duration must be positive and drive duration non-negative");
  if (!(noise_rms >= 0.0)) throw InvalidArgument("noise RMS must be non-negative");
  if (!(sample_rate > 10.0 * f0))
    throw UndersamplingError("sample rate must exceed 10 f0");
}

double noise_rms_for_snr(double amplitude, double snr_db) {
  return amplitude / std::sqrt(2.0) * std::pow(10.0, -snr_db / 20.0);
}

TimeSeries simulate_ringdown(const RingdownParams& p) {
  p.validate();
  const auto n_drive = static_cast<std::size_t>(std::llround(p.drive_duration * p.sample_rate));
  const auto n_record = static_cast<std::size_t>(std::floor(p.record_duration * p.sample_rate)) + 1;
  const std::size_t n = n_drive + n_record;
  if (n < 16) throw TooShortError("ringdown needs at least 16 samples");
  TimeSeries ts;
  ts.t.resize(n);
  ts.x.resize(n);
  ts.release_index = n_drive;
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, p.noise_rms > 0.0 ? p.noise_rms : 1.0);
  const double w = 2.0 * M_PI * p.f0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = (static_cast<double>(k) - static_cast<double>(n_drive)) / p.sample_rate;
    const double envelope = k < n_drive ? 1.0 : std::exp(-t / p.tau);
    ts.t[k] = t;
    ts.x[k] = p.amplitude * envelope * std::cos(w * t + p.phase);
    if (p.noise_rms > 0.0) ts.x[k] += noise(rng);
  }
  return ts;
}

double quality_factor(double f0, double tau) {
  if (!(f0 > 0.0) || !(tau > 0.0)) throw InvalidArgument("f0 and tau must be positive");
  return M_PI * f0 * tau;
}

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// |X_k|^2 for k = 0 .. len/2 of the zero-padded real input.
std::vector<double> power_bins(const std::vector<double>& in, std::size_t len) {
  std::vector<double> buf(len, 0.0);
  std::copy_n(in.begin(), std::min(in.size(), len), buf.begin());
  const std::size_t nb = len / 2 + 1;
  std::vector<std::complex<double>> out(nb);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), buf.data(),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  std::vector<double> p(nb);
  for (std::size_t k = 0; k < nb; ++k) p[k] = std::norm(out[k]);
  return p;
}

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double percentile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<double> welch(const std::vector<double>& x, double fs, std::size_t len, double overlap,
                          std::vector<double>* freqs) {
  const std::size_t step = std::max<std::size_t>(
      1, len - static_cast<std::size_t>(std::llround(overlap * static_cast<double>(len))));
  std::vector<double> window(len);
  double u = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(len));
    u += window[i] * window[i];
  }
  const std::size_t nb = len / 2 + 1;
  std::vector<double> acc(nb, 0.0);
  std::size_t segments = 0;
  std::vector<double> seg(len);
  for (std::size_t start = 0; start + len <= x.size(); start += step) {
    const double mean =
        std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(start),
                        x.begin() + static_cast<std::ptrdiff_t>(start + len), 0.0) /
        static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) seg[i] = (x[start + i] - mean) * window[i];
    const auto p = power_bins(seg, len);
    for (std::size_t k = 0; k < nb; ++k) acc[k] += p[k];
    ++segments;
  }
  for (std::size_t k = 0; k < nb; ++k) {
    const bool edge = k == 0 || (len % 2 == 0 && k == nb - 1);
    acc[k] *= (edge ? 1.0 : 2.0) / (fs * u * static_cast<double>(segments));
  }
  if (freqs) {
    freqs->resize(nb);
    for (std::size_t k = 0; k < nb; ++k) (*freqs)[k] = static_cast<double>(k) * fs / static_cast<double>(len);
  }
  return acc;
}

struct PeakInfo {
  double frequency = 0.0;
  double ratio = 0.0;  // peak power over median power
};

PeakInfo dominant_peak(const std::vector<double>& x, double fs) {
  const std::size_t len = std::max<std::size_t>(16, x.size() / 8);
  std::vector<double> freqs;
  const auto p = welch(x, fs, len, 0.5, &freqs);
  std::size_t best = 1;
  for (std::size_t k = 1; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;
  std::vector<double> body(p.begin() + 1, p.end());
  const double med = median_of(body);
  PeakInfo out;
  out.ratio = med > 0.0 ? p[best] / med : (p[best] > 0.0 ? INFINITY : 0.0);
  out.frequency = freqs[best];
  return out;
}

// Parabolic refinement of the strongest zero-padded periodogram bin within
// +-2 coarse bins of `guess`.
double refine_frequency(const std::vector<double>& x, double fs, double guess, double coarse_df) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - mean;
  std::size_t len = 1;
  while (len < 4 * x.size()) len <<= 1;
  const auto p = power_bins(y, len);
  const double df = fs / static_cast<double>(len);
  const auto lo = static_cast<std::size_t>(std::max(1.0, std::floor((guess - 2.0 * coarse_df) / df)));
  const auto hi = std::min(p.size() - 2, static_cast<std::size_t>(std::ceil((guess + 2.0 * coarse_df) / df)));
  std::size_t best = lo;
  for (std::size_t k = lo; k <= hi; ++k)
    if (p[k] > p[best]) best = k;
  if (best == 0) return guess;
  const double a = std::log(p[best - 1] + 1e-300);
  const double b = std::log(p[best] + 1e-300);
  const double c = std::log(p[best + 1] + 1e-300);
  const double denom = a - 2.0 * b + c;
  const double shift = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
  return (static_cast<double>(best) + std::clamp(shift, -0.5, 0.5)) * df;
}

std::size_t detect_release(const TimeSeries& ts) {
  const double fs = ts.sample_rate();
  const PeakInfo peak = dominant_peak(ts.x, fs);
  if (!(peak.ratio >= 3.0)) throw NoOscillationError("no spectral peak above 3x the median");
  const auto period = static_cast<std::size_t>(std::max(2.0, std::round(fs / peak.frequency)));
  const double center = median_of(ts.x);
  std::vector<double> amp;
  for (std::size_t s = 0; s + period <= ts.x.size(); s += period) {
    double m = 0.0;
    for (std::size_t i = s; i < s + period; ++i) m = std::max(m, std::abs(ts.x[i] - center));
    amp.push_back(m);
  }
  const double top = *std::max_element(amp.begin(), amp.end());
  std::size_t last = 0;
  for (std::size_t j = 0; j < amp.size(); ++j)
    if (amp[j] >= 0.95 * top) last = j;
  return std::min((last + 1) * period, ts.x.size() - 1);
}

struct DampedFit {
  VectorX params;  // A, f0, phi, tau, c (A and c in units of `scale`)
  LeastSquaresResult lsq;
};

DampedFit fit_damped(const std::vector<double>& t, const std::vector<double>& y,
                     const std::vector<double>& w, const VectorX& p0) {
  const auto m = static_cast<Eigen::Index>(t.size());
  LeastSquaresProblem problem;
  problem.n_residuals = m;
  problem.residuals = [&](const VectorX& p, VectorX& r) {
    r.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double model =
          p(0) * std::exp(-ti / p(3)) * std::cos(2.0 * M_PI * p(1) * ti + p(2)) + p(4);
      r(i) = w[static_cast<std::size_t>(i)] * (y[static_cast<std::size_t>(i)] - model);
    }
  };
  problem.jacobian = [&](const VectorX& p, MatrixX& j) {
    j.resize(m, 5);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double e = std::exp(-ti / p(3));
      const double th = 2.0 * M_PI * p(1) * ti + p(2);
      const double c = std::cos(th);
      const double s = std::sin(th);
      const double wi = w[static_cast<std::size_t>(i)];
      j(i, 0) = -wi * e * c;
      j(i, 1) = wi * p(0) * e * s * 2.0 * M_PI * ti;
      j(i, 2) = wi * p(0) * e * s;
      j(i, 3) = -wi * p(0) * e * c * ti / (p(3) * p(3));
      j(i, 4) = -wi;
    }
  };
  DampedFit out;
  out.lsq = levenberg_marquardt(problem, p0);
  out.params = out.lsq.params;
  return out;
}

}  // namespace

PowerSpectrum psd(const TimeSeries& ts, std::size_t segment_length, double overlap) {
  ts.validate();
  if (segment_length == 0) segment_length = ts.x.size();
  if (segment_length > ts.x.size()) throw TooShortError("segment longer than the series");
  if (segment_length < 8) throw TooShortError("segment length must be at least 8");
  if (!(overlap >= 0.0 && overlap <= 0.9)) throw InvalidArgument("overlap must lie in [0, 0.9]");
  PowerSpectrum out;
  out.power = welch(ts.x, ts.sample_rate(), segment_length, overlap, &out.frequency);
  return out;
}

RingdownFit fit_ringdown(const TimeSeries& ts, std::optional<std::size_t> start_index) {
  ts.validate();
  const auto [lo, hi] = std::minmax_element(ts.x.begin(), ts.x.end());
  if (*lo == *hi) throw NoOscillationError("series is constant");
  std::size_t start = start_index ? *start_index
                                  : (ts.release_index ? *ts.release_index : detect_release(ts));
  if (start + 16 > ts.x.size()) throw TooShortError("fewer than 16 samples after the release");

  const double fs = ts.sample_rate();
  const double t_start = ts.t[start];
  std::vector<double> t(ts.t.size() - start);
  std::vector<double> y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = ts.t[start + i] - t_start;
    y[i] = ts.x[start + i];
  }

  const PeakInfo peak = dominant_peak(y, fs);
  if (!(peak.ratio >= 3.0)) throw NoOscillationError("no spectral peak above 3x the median");
  const double coarse_df = fs / static_cast<double>(std::max<std::size_t>(16, y.size() / 8));
  const double f_init = refine_frequency(y, fs, peak.frequency, coarse_df);
  if (t.back() * f_init < 3.0) throw TooShortError("fewer than 3 oscillation periods recorded");

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double scale = 0.0;
  for (double v : y) scale = std::max(scale, std::abs(v - mean));
  if (!(scale > 0.0)) throw NoOscillationError("series is constant");
  std::vector<double> yn(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) yn[i] = y[i] / scale;

  // Envelope from per-period rectified peaks, log-linear in time.
  const auto period = static_cast<std::size_t>(std::max(2.0, std::round(fs / f_init)));
  std::vector<double> pt;
  std::vector<double> pa;
  for (std::size_t s = 0; s + period <= yn.size(); s += period) {
    std::size_t arg = s;
    for (std::size_t i = s; i < s + period; ++i)
      if (std::abs(yn[i] - mean / scale) > std::abs(yn[arg] - mean / scale)) arg = i;
    pt.push_back(t[arg]);
    pa.push_back(std::abs(yn[arg] - mean / scale));
  }
  std::size_t keep = 0;
  while (keep < pa.size() && pa[keep] >= 0.3 * pa.front()) ++keep;
  keep = std::min(pa.size(), std::max<std::size_t>(keep, 3));
  double tau_init = 10.0 * t.back();
  if (keep >= 2) {
    double st = 0, sl = 0, stt = 0, stl = 0;
    for (std::size_t j = 0; j < keep; ++j) {
      const double l = std::log(std::max(pa[j], 1e-300));
      st += pt[j];
      sl += l;
      stt += pt[j] * pt[j];
      stl += pt[j] * l;
    }
    const double k = static_cast<double>(keep);
    const double slope = (k * stl - st * sl) / (k * stt - st * st);
    if (slope < 0.0 && std::isfinite(slope)) tau_init = -1.0 / slope;
  }

  // Amplitude and phase by linear least squares at fixed f and tau.
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(yn.size()), 3);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(yn.size()));
  for (std::size_t i = 0; i < yn.size(); ++i) {
    const double e = std::exp(-t[i] / tau_init);
    const double th = 2.0 * M_PI * f_init * t[i];
    basis(static_cast<Eigen::Index>(i), 0) = e * std::cos(th);
    basis(static_cast<Eigen::Index>(i), 1) = -e * std::sin(th);
    basis(static_cast<Eigen::Index>(i), 2) = 1.0;
    rhs(static_cast<Eigen::Index>(i)) = yn[i];
  }
  const Eigen::Vector3d ab = basis.colPivHouseholderQr().solve(rhs);
  VectorX p(5);
  p << std::hypot(ab(0), ab(1)), f_init, std::atan2(ab(1), ab(0)), tau_init, ab(2);

  std::vector<double> w(yn.size(), 1.0);
  DampedFit fit;
  std::size_t downweighted = 0;
  for (int round = 0; round < 4; ++round) {
    fit = fit_damped(t, yn, w, p);
    p = fit.params;
    // Huber weights from distances to a 15-sample moving median of residuals.
    std::vector<double> r(yn.size());
    for (std::size_t i = 0; i < yn.size(); ++i)
      r[i] = yn[i] - (p(0) * std::exp(-t[i] / p(3)) * std::cos(2.0 * M_PI * p(1) * t[i] + p(2)) + p(4));
    std::vector<double> dev(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::size_t lo = i >= 7 ? i - 7 : 0;
      const std::size_t hi = std::min(r.size(), i + 8);
      dev[i] = r[i] - median_of(std::vector<double>(r.begin() + static_cast<std::ptrdiff_t>(lo),
                                                    r.begin() + static_cast<std::ptrdiff_t>(hi)));
    }
    std::vector<double> abs_dev(dev.size());
    for (std::size_t i = 0; i < dev.size(); ++i) abs_dev[i] = std::abs(dev[i]);
    const double sigma = 1.4826 * median_of(abs_dev);
    std::vector<double> next(w.size(), 1.0);
    downweighted = 0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
      if (sigma > 0.0 && abs_dev[i] > 5.0 * sigma) {
        next[i] = std::sqrt(5.0 * sigma / abs_dev[i]);
        ++downweighted;
      }
    }
    if (next == w) break;
    w = std::move(next);
  }
  if (!fit.lsq.converged) throw FitError("ringdown fit did not converge");

  double amp = p(0);
  double phase = p(2);
  if (amp < 0.0) {
    amp = -amp;
    phase += M_PI;
  }
  phase = std::remainder(phase, 2.0 * M_PI);
  if (!(p(1) > 0.0) || !(p(3) > 0.0) || !std::isfinite(p(3)))
    throw FitError("ringdown fit produced non-physical f0 or tau");

  RingdownFit out;
  out.f0 = p(1);
  out.tau = p(3);
  out.amplitude = amp * scale;
  out.phase = phase;
  out.offset = p(4) * scale;
  out.q = quality_factor(out.f0, out.tau);
  out.f0_err = fit.lsq.std_errors(1);
  out.tau_err = fit.lsq.std_errors(3);
  out.q_err = M_PI * std::hypot(out.f0 * out.tau_err, out.tau * out.f0_err);
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double model = out.amplitude * std::exp(-t[i] / out.tau) *
                             std::cos(2.0 * M_PI * out.f0 * t[i] + out.phase) +
                         out.offset;
    ss += (y[i] - model) * (y[i] - model);
  }
  out.residual_rms = std::sqrt(ss / static_cast<double>(y.size()));
  out.t_start = t_start;
  out.start_index = start;
  out.downweighted = downweighted;
  return out;
}

void FrameStack::validate() const {
  if (frames.empty()) throw InvalidArgument("frame stack is empty");
  if (!(frame_rate > 0.0)) throw InvalidArgument("frame rate must be positive");
  if (!(pixel_size > 0.0)) throw InvalidArgument("pixel size must be positive");
  const int w = frames.front().width;
  const int h = frames.front().height;
  if (w <= 0 || h <= 0) throw InvalidArgument("frames must have positive size");
  for (const auto& f : frames) {
    if (f.width != w || f.height != h) throw InvalidArgument("frames differ in size");
    if (f.pixels.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
      throw InvalidArgument("frame pixel count does not match its size");
  }
}

CentroidTrack track_centroid(const FrameStack& fs, const std::optional<Roi>& roi,
                             double background_percentile, unsigned threads) {
  fs.validate();
  if (!(background_percentile >= 0.0 && background_percentile <= 100.0))
    throw InvalidArgument("background percentile must lie in [0, 100]");
  const Roi r = roi.value_or(Roi{0, 0, fs.frames.front().width, fs.frames.front().height});
  if (r.width <= 0 || r.height <= 0 || r.x0 < 0 || r.y0 < 0 ||
      r.x0 + r.width > fs.frames.front().width || r.y0 + r.height > fs.frames.front().height)
    throw InvalidArgument("ROI lies outside the frames");

  struct Centroid {
    double x = 0.0;
    double y = 0.0;
  };
  const auto centroids = parallel_map(fs.frames.size(), threads, [&](std::size_t k) {
    const Frame& f = fs.frames[k];
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height));
    for (int yy = r.y0; yy < r.y0 + r.height; ++yy)
      for (int xx = r.x0; xx < r.x0 + r.width; ++xx) v.push_back(f.at(xx, yy));
    const double bg = percentile_of(v, background_percentile);
    double sum = 0.0;
    double sx = 0.0;
    double sy = 0.0;
    for (int yy = r.y0; yy < r.y0 + r.height; ++yy) {
      for (int xx = r.x0; xx < r.x0 + r.width; ++xx) {
        const double i = std::max(0.0, f.at(xx, yy) - bg);
        sum += i;
        sx += i * xx;
        sy += i * yy;
      }
    }
    if (!(sum > 0.0))
      throw EmptyRoiError("frame " + std::to_string(k) + " is empty after background removal");
    return Centroid{sx / sum, sy / sum};
  });

  CentroidTrack out;
  const std::size_t n = centroids.size();
  for (TimeSeries* ts : {&out.x, &out.y}) {
    ts->t.resize(n);
    ts->x.resize(n);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs.frame_rate;
    out.x.t[k] = out.y.t[k] = t;
    out.x.x[k] = centroids[k].x * fs.pixel_size;
    out.y.x[k] = centroids[k].y * fs.pixel_size;
  }
  return out;
}

FrameStack render_spot_frames(const std::vector<double>& x_px, const std::vector<double>& y_px,
                              const SpotRender& r, double frame_rate, double pixel_size) {
  if (x_px.size() != y_px.size()) throw InvalidArgument("x and y trajectories differ in length");
  if (r.width <= 0 || r.height <= 0 || !(r.sigma_px > 0.0))
    throw InvalidArgument("invalid spot rendering parameters");
  FrameStack fs;
  fs.frame_rate = frame_rate;
  fs.pixel_size = pixel_size;
  std::mt19937_64 rng(r.seed);
  std::normal_distribution<double> noise(0.0, r.noise_rms > 0.0 ? r.noise_rms : 1.0);
  const double norm = 2.0 * M_PI * r.sigma_px * r.sigma_px * r.peak;
  const double s2 = std::sqrt(2.0) * r.sigma_px;
  auto mass = [&](int i, double c) {
    return 0.5 * (std::erf((i + 0.5 - c) / s2) - std::erf((i - 0.5 - c) / s2));
  };
  std::vector<double> mx(static_cast<std::size_t>(r.width));
  std::vector<double> my(static_cast<std::size_t>(r.height));
  for (std::size_t k = 0; k < x_px.size(); ++k) {
    Frame f;
    f.width = r.width;
    f.height = r.height;
    f.pixels.resize(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height));
    for (int i = 0; i < r.width; ++i) mx[static_cast<std::size_t>(i)] = mass(i, x_px[k]);
    for (int j = 0; j < r.height; ++j) my[static_cast<std::size_t>(j)] = mass(j, y_px[k]);
    for (int j = 0; j < r.height; ++j) {
      for (int i = 0; i < r.width; ++i) {
        double v = r.background + norm * mx[static_cast<std::size_t>(i)] * my[static_cast<std::size_t>(j)];
        if (r.noise_rms > 0.0) v += noise(rng);
        f.pixels[static_cast<std::size_t>(j) * r.width + i] =
            static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
      }
    }
    fs.frames.push_back(std::move(f));
  }
  fs.validate();
  return fs;
}

namespace {

Frame read_pgm(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t b = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(b, pos - b);
  };
  if (token() != "P5") throw InvalidArgument(path.string() + " is not a binary PGM");
  Frame f;
  int maxval = 0;
  try {
    f.width = std::stoi(token());
    f.height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw InvalidArgument(path.string() + " has a malformed PGM header");
  }
  ++pos;  // single whitespace before the raster
  if (f.width <= 0 || f.height <= 0 || maxval <= 0 || maxval > 65535)
    throw InvalidArgument(path.string() + " has an invalid PGM header");
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height);
  if (data.size() < pos + count * bytes) throw InvalidArgument(path.string() + " is truncated");
  f.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bytes);
    f.pixels[i] = bytes == 2 ? static_cast<std::uint16_t>((p[0] << 8) | p[1]) : p[0];
  }
  return f;
}

std::string format_pgm(const Frame& f) {
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n65535\n";
  out.reserve(out.size() + 2 * f.pixels.size());
  for (std::uint16_t v : f.pixels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

double parse_positive(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw InvalidArgument("frame metadata lacks " + key);
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size() || !(v > 0.0)) throw InvalidArgument("");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("frame metadata " + key + " must be a positive number");
  }
}

}  // namespace

FrameStack read_frame_stack(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument(dir.string() + " is not a directory");
  const auto kv = io::parse_key_values(io::read_file(dir / "meta"));
  for (const auto& [k, v] : kv) {
    if (k != "frame_rate_hz" && k != "pixel_size_m")
      throw InvalidArgument("unknown frame metadata key " + k);
  }
  FrameStack fs;
  fs.frame_rate = parse_positive(kv, "frame_rate_hz");
  fs.pixel_size = parse_positive(kv, "pixel_size_m");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) fs.frames.push_back(read_pgm(p));
  fs.validate();
  return fs;
}

void write_frame_stack(const std::filesystem::path& dir, const FrameStack& fs) {
  fs.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < fs.frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.pgm", k);
    io::write_file_atomic(dir / name, format_pgm(fs.frames[k]));
  }
  io::write_file_atomic(dir / "meta", "frame_rate_hz=" + io::fmt(fs.frame_rate) +
                                          "\npixel_size_m=" + io::fmt(fs.pixel_size) + "\n");
}

TimeSeries read_time_series_csv(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  const std::size_t ct = table.column("t_s");
  const std::size_t cx = table.column("x_m");
  TimeSeries ts;
  for (const auto& row : table.rows) {
    ts.t.push_back(row[ct]);
    ts.x.push_back(row[cx]);
  }
  if (ts.t.size() < 16) throw TooShortError("time series needs at least 16 samples");
  // Printed times carry ten significant digits; accept that jitter and
  // rebuild the uniform axis.
  const double dt = (ts.t.back() - ts.t.front()) / static_cast<double>(ts.t.size() - 1);
  if (!(dt > 0.0)) throw InvalidArgument("time must be strictly ascending");
  for (std::size_t i = 1; i < ts.t.size(); ++i) {
    if (std::abs((ts.t[i] - ts.t[i - 1]) - dt) > 1e-6 * dt + 1e-9 * std::abs(ts.t[i]))
      throw InvalidArgument("time steps are not uniform");
  }
  const double t0 = ts.t.front();
  for (std::size_t i = 0; i < ts.t.size(); ++i) ts.t[i] = t0 + dt * static_cast<double>(i);
  ts.validate();
  return ts;
}

std::string format_time_series_csv(const TimeSeries& ts) {
  std::vector<std::vector<double>> rows(ts.t.size());
  for (std::size_t i = 0; i < ts.t.size(); ++i) rows[i] = {ts.t[i], ts.x[i]};
  return io::format_csv("timeseries/1", {"t_s", "x_m"}, rows);
}

std::string format_psd_csv(const PowerSpectrum& p) {
  std::vector<std::vector<double>> rows(p.frequency.size());
  for (std::size_t i = 0; i < p.frequency.size(); ++i) rows[i] = {p.frequency[i], p.power[i]};
  return io::format_csv("psd/1", {"freq_Hz", "power_m2_per_Hz"}, rows);
}

std::string format_ringdown_report(const RingdownFit& fit) {
  std::ostringstream s;
  s << "f0_hz=" << io::fmt(fit.f0) << "\n"
    << "tau_s=" << io::fmt(fit.tau) << "\n"
    << "q=" << io::fmt(fit.q) << "\n"
    << "residual_rms=" << io::fmt(fit.residual_rms) << "\n"
    << "f0_err_hz=" << io::fmt(fit.f0_err) << "\n"
    << "tau_err_s=" << io::fmt(fit.tau_err) << "\n"
    << "q_err=" << io::fmt(fit.q_err) << "\n"
    << "amplitude_m=" << io::fmt(fit.amplitude) << "\n"
    << "phase_rad=" << io::fmt(fit.phase) << "\n"
    << "offset_m=" << io::fmt(fit.offset) << "\n"
    << "t_start_s=" << io::fmt(fit.t_start) << "\n"
    << "start_index=" << fit.start_index << "\n"
    << "downweighted=" << fit.downweighted << "\n";
  return s.str();
}

}  // namespace meissner::dynamics

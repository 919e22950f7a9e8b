#include "meissner/nv.hpp"

#include "meissner/errors.hpp"
#include "meissner/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <string>

namespace meissner::nv {

using cd = std::complex<double>;

void ZeemanModel::validate() const {
  if (!(D > 0.0) || !std::isfinite(D)) throw InvalidArgument("zero-field splitting must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw InvalidArgument("gyromagnetic ratio must be positive");
}

const SpinOperators& spin_one() {
  static const SpinOperators ops = [] {
    SpinOperators s;
    const double r = 1.0 / std::sqrt(2.0);
    s.Sx << 0, r, 0, r, 0, r, 0, r, 0;
    s.Sy << cd(0, 0), cd(0, -r), cd(0, 0), cd(0, r), cd(0, 0), cd(0, -r), cd(0, 0), cd(0, r),
        cd(0, 0);
    s.Sz << 1, 0, 0, 0, 0, 0, 0, 0, -1;
    return s;
  }();
  return ops;
}

Mat3c hamiltonian(const ZeemanModel& zm, const Vec3& b_nv) {
  zm.validate();
  const auto& s = spin_one();
  return zm.D * s.Sz * s.Sz +
         zm.gamma * (b_nv.x() * s.Sx + b_nv.y() * s.Sy + b_nv.z() * s.Sz);
}

HermitianEigen jacobi_eigen(const Mat3c& h, double rel_tol) {
  const double scale = h.norm();
  if (!std::isfinite(scale)) throw InvalidArgument("matrix has non-finite entries");
  if ((h - h.adjoint()).norm() > 1e-12 * std::max(scale, 1e-300))
    throw InvalidArgument("matrix is not Hermitian");

  Mat3c a = 0.5 * (h + h.adjoint());
  Mat3c v = Mat3c::Identity();
  HermitianEigen out;
  auto off_norm = [&] {
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) s += std::norm(a(i, j));
    return std::sqrt(s);
  };
  int sweep = 0;
  for (; sweep < 64 && off_norm() > rel_tol * scale; ++sweep) {
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double mag = std::abs(a(p, q));
        if (mag == 0.0) continue;
        const cd phase = a(p, q) / mag;
        const double theta = (a(q, q).real() - a(p, p).real()) / (2.0 * mag);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // Phase the q basis vector so a(p,q) turns real, then rotate.
        Mat3c g = Mat3c::Identity();
        g(p, p) = c;
        g(p, q) = s;
        g(q, p) = -s * std::conj(phase);
        g(q, q) = c * std::conj(phase);
        a = g.adjoint() * a * g;
        v = v * g;
      }
    }
  }
  out.sweeps = sweep;
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(),
            [&](int i, int j) { return a(i, i).real() < a(j, j).real(); });
  for (int k = 0; k < 3; ++k) {
    out.values(k) = a(idx[k], idx[k]).real();
    out.vectors.col(k) = v.col(idx[k]);
  }
  return out;
}

TransitionPair transition_frequencies(const ZeemanModel& zm, const Vec3& b_lab,
                                      const Vec3& orientation) {
  const double n_norm = orientation.norm();
  if (!(std::abs(n_norm - 1.0) <= 1e-9)) throw InvalidArgument("NV orientation must be a unit vector");
  const Vec3 n = orientation / n_norm;
  const double b_par = b_lab.dot(n);
  const double b_perp = (b_lab - b_par * n).norm();
  const HermitianEigen eig = jacobi_eigen(hamiltonian(zm, Vec3(b_perp, 0.0, b_par)));

  int ground = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::norm(eig.vectors(1, k)) > std::norm(eig.vectors(1, ground))) ground = k;
  }
  std::array<double, 2> f{};
  int m = 0;
  for (int k = 0; k < 3; ++k) {
    if (k != ground) f[m++] = eig.values(k) - eig.values(ground);
  }
  if (f[0] > f[1]) std::swap(f[0], f[1]);
  return {f[0], f[1]};
}

DiamondCut100::DiamondCut100() {
  const double r = 1.0 / std::sqrt(3.0);
  orientations = {Vec3(r, r, r), Vec3(r, -r, -r), Vec3(-r, r, -r), Vec3(-r, -r, r)};
}

double magic_angle() { return std::acos(1.0 / std::sqrt(3.0)); }

void ODMRSpectrum::validate() const {
  if (frequencies.size() != signal.size())
    throw InvalidArgument("spectrum frequency and signal lengths differ");
  if (frequencies.size() < 8) throw InvalidArgument("spectrum needs at least 8 samples");
  for (std::size_t i = 1; i < frequencies.size(); ++i) {
    if (!(frequencies[i] > frequencies[i - 1]))
      throw InvalidArgument("spectrum frequencies must be strictly ascending");
  }
  for (double s : signal) {
    if (!std::isfinite(s)) throw InvalidArgument("spectrum signal has non-finite values");
  }
}

std::vector<double> linear_grid(double start, double stop, std::size_t count) {
  if (count < 2 || !(stop > start)) throw InvalidArgument("grid needs count >= 2 and stop > start");
  std::vector<double> g(count);
  const double step = (stop - start) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) g[i] = start + step * static_cast<double>(i);
  g.back() = stop;
  return g;
}

namespace {

double lorentzian(double f, double center, double fwhm) {
  const double hw = 0.5 * fwhm;
  const double d = f - center;
  return hw * hw / (d * d + hw * hw);
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

}  // namespace

ODMRSpectrum odmr_forward(const ZeemanModel& zm, const Vec3& b_lab, const DiamondCut100& cut,
                          double linewidth, double contrast, const std::vector<double>& grid,
                          const std::optional<std::array<double, 4>>& weights) {
  if (!(linewidth > 0.0)) throw InvalidArgument("linewidth must be positive");
  if (!(contrast > 0.0 && contrast <= 0.3)) throw InvalidArgument("contrast must lie in (0, 0.3]");
  ODMRSpectrum spec;
  spec.frequencies = grid;
  spec.signal.assign(grid.size(), 1.0);
  spec.linewidth = linewidth;
  spec.contrast = contrast;
  for (std::size_t k = 0; k < 4; ++k) {
    const double w = weights ? (*weights)[k] : 1.0;
    if (!(w >= 0.0)) throw InvalidArgument("orientation weights must be non-negative");
    const TransitionPair t = transition_frequencies(zm, b_lab, cut.orientations[k]);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      spec.signal[i] -= w * contrast / 8.0 *
                        (lorentzian(grid[i], t.lower, linewidth) +
                         lorentzian(grid[i], t.upper, linewidth));
    }
  }
  spec.validate();
  return spec;
}

ODMRSpectrum with_gaussian_noise(ODMRSpectrum spectrum, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  if (sigma > 0.0) {
    for (double& s : spectrum.signal) s += noise(rng);
  }
  return spectrum;
}

namespace {

struct Prepared {
  std::vector<double> smooth;
  double baseline = 0.0;
  double sigma = 0.0;         // per-sample noise of the raw signal
  double sigma_smooth = 0.0;  // after smoothing
  double step = 0.0;
};

Prepared prepare(const ODMRSpectrum& spec) {
  spec.validate();
  Prepared p;
  const std::size_t n = spec.signal.size();
  p.step = (spec.frequencies.back() - spec.frequencies.front()) / static_cast<double>(n - 1);
  int half = 1;
  if (spec.linewidth > 0.0) {
    half = std::clamp(static_cast<int>(std::lround(0.25 * spec.linewidth / p.step)), 1, 5);
  }
  p.smooth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= static_cast<std::size_t>(half) ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += spec.signal[j];
    p.smooth[i] = s / static_cast<double>(hi - lo + 1);
  }
  p.baseline = percentile(p.smooth, 0.9);
  std::vector<double> d2(n - 2);
  for (std::size_t i = 1; i + 1 < n; ++i)
    d2[i - 1] = spec.signal[i + 1] - 2.0 * spec.signal[i] + spec.signal[i - 1];
  const double m = median(d2);
  for (double& d : d2) d = std::abs(d - m);
  p.sigma = 1.4826 * median(d2) / std::sqrt(6.0);
  p.sigma_smooth = p.sigma / std::sqrt(2.0 * half + 1.0);
  return p;
}

std::vector<DipCandidate> find_dips(const Prepared& p) {
  const auto& s = p.smooth;
  const std::size_t n = s.size();
  std::vector<DipCandidate> out;
  const double threshold = p.baseline - 3.0 * p.sigma;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(s[i] < s[i - 1] && s[i] <= s[i + 1])) continue;
    if (!(s[i] < threshold)) continue;
    double left_max = s[i];
    for (std::size_t j = i; j-- > 0;) {
      if (s[j] < s[i]) break;
      left_max = std::max(left_max, s[j]);
    }
    double right_max = s[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (s[j] < s[i]) break;
      right_max = std::max(right_max, s[j]);
    }
    const double prominence = std::min(left_max, right_max) - s[i];
    if (prominence > std::max(3.0 * p.sigma_smooth, 1e-12)) out.push_back({i, prominence});
  }
  std::stable_sort(out.begin(), out.end(), [](const DipCandidate& a, const DipCandidate& b) {
    return a.prominence > b.prominence;
  });
  return out;
}

}  // namespace

std::vector<DipCandidate> detect_dips(const ODMRSpectrum& spec) { return find_dips(prepare(spec)); }

std::vector<ODMRLine> fit_lorentzians(const ODMRSpectrum& spec, int n_dips) {
  if (n_dips < 1) throw InvalidArgument("n_dips must be at least 1");
  const Prepared prep = prepare(spec);
  const auto dips = find_dips(prep);
  if (static_cast<int>(dips.size()) < n_dips) {
    throw FewerDipsError("found " + std::to_string(dips.size()) + " dips, expected " +
                         std::to_string(n_dips));
  }

  // Fit in MHz relative to the grid center for conditioning.
  constexpr double kScale = 1e6;
  const auto& f = spec.frequencies;
  const double f_ref = 0.5 * (f.front() + f.back());
  const std::size_t n = f.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = (f[i] - f_ref) / kScale;

  const int k = n_dips;
  VectorX p0(1 + 3 * k);
  p0(0) = prep.baseline;
  for (int d = 0; d < k; ++d) {
    const std::size_t i = dips[d].index;
    const double half_level = prep.smooth[i] + 0.5 * dips[d].prominence;
    std::size_t lo = i;
    while (lo > 0 && prep.smooth[lo] < half_level) --lo;
    std::size_t hi = i;
    while (hi + 1 < n && prep.smooth[hi] < half_level) ++hi;
    double width = (f[hi] - f[lo]) / kScale;
    width = std::max(width, 2.0 * prep.step / kScale);
    p0(1 + 3 * d) = x[i];
    p0(2 + 3 * d) = width;
    p0(3 + 3 * d) = std::max(prep.baseline - prep.smooth[i], dips[d].prominence);
  }

  LeastSquaresProblem problem;
  problem.n_residuals = static_cast<Eigen::Index>(n);
  problem.residuals = [&](const VectorX& p, VectorX& r) {
    r.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double model = p(0);
      for (int d = 0; d < k; ++d)
        model -= p(3 + 3 * d) * lorentzian(x[i], p(1 + 3 * d), std::abs(p(2 + 3 * d)));
      r(static_cast<Eigen::Index>(i)) = spec.signal[i] - model;
    }
  };
  LevenbergMarquardtOptions opts;
  opts.fd_step = VectorX::Constant(p0.size(), 1e-7);
  const LeastSquaresResult fit = levenberg_marquardt(problem, p0, opts);
  if (!fit.converged) throw FitError("Lorentzian fit did not converge");

  const double base = fit.params(0);
  if (!(base > 0.0)) throw FitError("fitted baseline is not positive");
  std::vector<ODMRLine> lines(k);
  for (int d = 0; d < k; ++d) {
    ODMRLine& l = lines[d];
    l.center = f_ref + fit.params(1 + 3 * d) * kScale;
    l.fwhm = std::abs(fit.params(2 + 3 * d)) * kScale;
    l.depth = fit.params(3 + 3 * d) / base;
    l.center_err = fit.std_errors(1 + 3 * d) * kScale;
    l.fwhm_err = fit.std_errors(2 + 3 * d) * kScale;
    l.depth_err = fit.std_errors(3 + 3 * d) / base;
    if (!std::isfinite(l.center) || !(l.fwhm > 0.0)) throw FitError("degenerate Lorentzian fit");
  }
  std::sort(lines.begin(), lines.end(),
            [](const ODMRLine& a, const ODMRLine& b) { return a.center < b.center; });
  return lines;
}

namespace {

double splitting_at(const ZeemanModel& zm, double b0, double theta) {
  const TransitionPair t = transition_frequencies(
      zm, Vec3(b0 * std::sin(theta), 0.0, b0 * std::cos(theta)), Vec3::UnitZ());
  return t.splitting();
}

}  // namespace

FieldEstimate invert_field_magnitude(const ZeemanModel& zm, double f_lower, double f_upper,
                                     double theta, double splitting_sigma) {
  zm.validate();
  if (!std::isfinite(f_lower) || !std::isfinite(f_upper))
    throw InvalidArgument("transition frequencies must be finite");
  if (f_upper < f_lower) throw NoSolutionError("negative splitting: f_upper is below f_lower");
  if (!(theta >= 0.0 && theta <= 0.5 * M_PI)) throw InvalidArgument("theta must lie in [0, pi/2]");
  constexpr double kMaxField = 1.0;

  const double target = f_upper - f_lower;
  FieldEstimate out;
  if (target == 0.0) {
    out.residuals = {0.0};
    out.uncertainty = splitting_sigma / (2.0 * zm.gamma * std::cos(theta) + 1e-300);
    return out;
  }
  if (theta == 0.0) {
    out.magnitude = target / (2.0 * zm.gamma);
    if (out.magnitude > kMaxField) throw NoSolutionError("splitting exceeds the model range below 1 T");
    out.residuals = {target - splitting_at(zm, out.magnitude, theta)};
    out.uncertainty = splitting_sigma / (2.0 * zm.gamma);
    return out;
  }

  double lo = 0.0;
  double hi = kMaxField;
  if (splitting_at(zm, hi, theta) < target) {
    throw NoSolutionError("splitting exceeds the model range below 1 T");
  }
  while (hi - lo > 1e-9 * hi) {
    const double mid = 0.5 * (lo + hi);
    (splitting_at(zm, mid, theta) < target ? lo : hi) = mid;
  }
  double b = 0.5 * (lo + hi);
  double slope = 0.0;
  for (int it = 0; it < 4; ++it) {
    const double h = std::max(1e-9, 1e-6 * b);
    slope = (splitting_at(zm, b + h, theta) - splitting_at(zm, std::max(b - h, 0.0), theta)) /
            (b + h - std::max(b - h, 0.0));
    if (!(slope > 0.0)) break;
    const double next = b - (splitting_at(zm, b, theta) - target) / slope;
    if (!(next >= lo && next <= hi)) break;
    b = next;
  }
  out.magnitude = b;
  out.residuals = {target - splitting_at(zm, b, theta)};
  out.uncertainty = slope > 0.0 ? splitting_sigma / slope : 0.0;
  return out;
}

FieldEstimate reconstruct_field_vector(const ZeemanModel& zm, const DiamondCut100& cut,
                                       const std::vector<ObservedTransition>& transitions) {
  zm.validate();
  std::array<std::vector<double>, 4> groups;
  for (const auto& t : transitions) {
    if (t.orientation < 0 || t.orientation > 3)
      throw DegenerateGeometryError("orientation label out of range");
    if (!std::isfinite(t.frequency)) throw InvalidArgument("transition frequency is not finite");
    groups[t.orientation].push_back(t.frequency);
  }
  int distinct = 0;
  for (auto& g : groups) {
    if (g.size() > 2) throw DegenerateGeometryError("more than two transitions for one orientation");
    std::sort(g.begin(), g.end());
    if (!g.empty()) ++distinct;
  }
  if (transitions.size() < 3 || distinct < 2)
    throw UnderdeterminedError("need at least 3 transitions spanning 2 orientations");

  // Residual order follows `transitions` so callers can match them up.
  constexpr double kFieldScale = 1e-3;  // parameters in mT
  const auto m = static_cast<Eigen::Index>(transitions.size());
  auto residuals = [&](const VectorX& p, VectorX& r) {
    r.resize(m);
    const Vec3 b = Vec3(p(0), p(1), p(2)) * kFieldScale;
    std::array<TransitionPair, 4> model{};
    for (int k = 0; k < 4; ++k)
      if (!groups[k].empty()) model[k] = transition_frequencies(zm, b, cut.orientations[k]);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& t = transitions[static_cast<std::size_t>(i)];
      const auto& g = groups[t.orientation];
      const TransitionPair& mp = model[t.orientation];
      double predicted;
      if (g.size() == 2) {
        predicted = t.frequency == g[0] ? mp.lower : mp.upper;
      } else {
        predicted = std::abs(t.frequency - mp.lower) <= std::abs(t.frequency - mp.upper)
                        ? mp.lower
                        : mp.upper;
      }
      r(i) = (t.frequency - predicted) / kFieldScale / zm.gamma;  // mT-equivalent
    }
  };

  double b_scale = 0.0;
  for (const auto& g : groups) {
    if (g.size() == 2) b_scale = std::max(b_scale, (g[1] - g[0]) / (2.0 * zm.gamma));
    for (double f : g) b_scale = std::max(b_scale, std::abs(f - zm.D) / zm.gamma);
  }
  b_scale = std::max(b_scale, 1e-6) / kFieldScale;

  LeastSquaresProblem problem{m, residuals, {}};
  LevenbergMarquardtOptions opts;
  opts.fd_step = VectorX::Constant(3, 1e-6);
  std::vector<LeastSquaresResult> fits;
  for (int octant = 0; octant < 8; ++octant) {
    VectorX seed(3);
    for (int a = 0; a < 3; ++a) seed(a) = ((octant >> a) & 1 ? -1.0 : 1.0) * b_scale / std::sqrt(3.0);
    fits.push_back(levenberg_marquardt(problem, seed, opts));
  }
  // Octant seeds sit on NV axes, which are symmetric points of the cost; the
  // cube-axis seeds reach the solutions lying between them.
  for (int a = 0; a < 3; ++a) {
    VectorX seed = VectorX::Zero(3);
    seed(a) = b_scale;
    fits.push_back(levenberg_marquardt(problem, seed, opts));
  }
  double best_cost = fits.front().cost;
  for (const auto& f : fits) best_cost = std::min(best_cost, f.cost);
  // Equal-cost solutions can differ by more than sign (a field along any cube
  // axis projects equally on all four axes); prefer the largest |B_z|.
  const double tie = best_cost * 1e-6 + 1e-18;
  const LeastSquaresResult* chosen = nullptr;
  for (const auto& f : fits) {
    if (f.cost > best_cost + tie) continue;
    if (!chosen || std::abs(f.params(2)) > std::abs(chosen->params(2)) + 1e-9 * b_scale)
      chosen = &f;
  }

  Vec3 b(chosen->params(0), chosen->params(1), chosen->params(2));
  if (b.z() < 0.0) b = -b;
  FieldEstimate out;
  out.magnitude = b.norm() * kFieldScale;
  out.vector = b * kFieldScale;
  out.residuals.resize(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i)
    out.residuals[i] = chosen->residuals(static_cast<Eigen::Index>(i)) * kFieldScale * zm.gamma;
  if (b.norm() > 0.0) {
    const Vec3 u = b.normalized();
    const Eigen::Matrix3d cov = chosen->covariance.topLeftCorner(3, 3);
    out.uncertainty = std::sqrt(std::max(0.0, u.dot(cov * u))) * kFieldScale;
  }
  return out;
}

double rabi_rate(const ZeemanModel& zm, double b1) {
  zm.validate();
  if (!(b1 >= 0.0)) throw InvalidArgument("drive amplitude must be non-negative");
  return zm.gamma * b1;
}

double gradient_broadened_linewidth(double base, double dbdz, double dz, double gamma) {
  if (!(base > 0.0)) throw InvalidArgument("base linewidth must be positive");
  if (!(dz >= 0.0)) throw InvalidArgument("depth range must be non-negative");
  if (!(gamma > 0.0)) throw InvalidArgument("gyromagnetic ratio must be positive");
  return base + gamma * std::abs(dbdz) * dz;
}

double axial_resolution(double refractive_index, double wavelength, double numerical_aperture) {
  if (!(refractive_index >= 1.0) || !(wavelength > 0.0) || !(numerical_aperture > 0.0) ||
      numerical_aperture > 1.0)
    throw InvalidArgument("need n >= 1, wavelength > 0 and NA in (0, 1]");
  return 2.0 * refractive_index * wavelength / (numerical_aperture * numerical_aperture);
}

FieldEstimate magnitude_from_spectrum(const ZeemanModel& zm, const ODMRSpectrum& spec,
                                      int max_dips, double theta) {
  if (max_dips < 1) throw InvalidArgument("max_dips must be at least 1");
  const auto dips = detect_dips(spec);
  if (dips.empty()) throw FewerDipsError("no dips found");
  const int n = std::min<int>(max_dips, static_cast<int>(dips.size()));
  const auto lines = fit_lorentzians(spec, n);
  if (n == 1) {
    FieldEstimate out;
    out.residuals = {0.0};
    return out;
  }
  const ODMRLine& lo = lines.front();
  const ODMRLine& hi = lines.back();
  const double sigma = std::hypot(lo.center_err, hi.center_err);
  return invert_field_magnitude(zm, lo.center, hi.center, theta, sigma);
}

}  // namespace meissner::nv

#include "meissner/commands.hpp"

#include "meissner/errors.hpp"
#include "meissner/io.hpp"
#include "meissner/magnetics.hpp"
#include "meissner/parallel.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace meissner::commands {

std::vector<double> GridSpec::values() const {
  if (count == 1) return {min};
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = min + (max - min) * static_cast<double>(i) / static_cast<double>(count - 1);
  v.back() = max;
  return v;
}

GridSpec parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(io::trim(p));
  if (parts.size() != 3) throw ConfigError("grid '" + text + "' is not min:max:count");
  auto number = [&](const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(d))
      throw ConfigError("grid '" + text + "' has a malformed number");
    return d;
  };
  GridSpec g;
  g.min = number(parts[0]);
  g.max = number(parts[1]);
  const double c = number(parts[2]);
  if (c < 1 || c != std::floor(c) || c > 1e6) throw ConfigError("grid count must be a positive integer");
  g.count = static_cast<std::size_t>(c);
  if (g.count == 1 ? g.min != g.max : !(g.max > g.min))
    throw ConfigError("grid '" + text + "' needs max > min");
  return g;
}

Plane parse_plane(const std::string& text) {
  if (text == "xy") return Plane::XY;
  if (text == "xz") return Plane::XZ;
  if (text == "yz") return Plane::YZ;
  throw ConfigError("plane must be xy, xz or yz");
}

std::string fieldmap_csv(const Config& cfg, Plane plane, const GridSpec& a, const GridSpec& b,
                         double offset, unsigned threads) {
  cfg.trap.validate();
  const Assembly assembly = cfg.trap.assembly();
  const auto av = a.values();
  const auto bv = b.values();
  auto point = [&](double u, double v) {
    switch (plane) {
      case Plane::XY: return Vec3(u, v, offset);
      case Plane::XZ: return Vec3(u, offset, v);
      case Plane::YZ: return Vec3(offset, u, v);
    }
    return Vec3(u, v, offset);
  };
  const auto blocks = parallel_map(bv.size(), threads, [&](std::size_t j) {
    std::vector<std::vector<double>> rows;
    rows.reserve(av.size());
    for (double u : av) {
      const Vec3 p = point(u, bv[j]);
      const Vec3 bf = field_at(assembly, p);
      rows.push_back({p.x(), p.y(), p.z(), bf.x(), bf.y(), bf.z(), bf.norm()});
    }
    return rows;
  });
  std::vector<std::vector<double>> rows;
  for (const auto& block : blocks) rows.insert(rows.end(), block.begin(), block.end());
  return io::format_csv("fieldmap/1", {"x_m", "y_m", "z_m", "Bx_T", "By_T", "Bz_T", "Bnorm_T"}, rows);
}

std::string trap_report(const Config& cfg, std::optional<double> bc1) {
  const TrapCharacterization c = characterize(cfg.trap);
  std::string out = format_characterization(c);
  if (bc1) {
    out += "bc1_T=" + io::fmt(*bc1) + "\n";
    out += "bc1_breach_current_A=" + io::fmt(bc1_breach_current(cfg.trap, *bc1)) + "\n";
  }
  return out;
}

SweepOutput sweep(const Config& cfg, SweepKind kind, const GridSpec& grid, unsigned threads) {
  SweepOutput out;
  const auto values = grid.values();
  TrapConfig trap = cfg.trap;
  trap.gravity = cfg.sweep.gravity;
  out.table = kind == SweepKind::Current ? current_sweep(trap, values, threads)
                                         : separation_sweep(trap, values, threads);
  std::vector<std::vector<double>> rows;
  for (const auto& r : out.table.rows) {
    const auto& c = r.result;
    rows.push_back({r.parameter, c.frequencies[0], c.frequencies[1], c.frequencies[2],
                    c.gradients[0], c.gradients[1], c.gradients[2], c.zeta[0], c.zeta[1], c.zeta[2],
                    c.hot_field});
  }
  const std::string first = kind == SweepKind::Current ? "I_A" : "d_m";
  out.csv = io::format_csv(kind == SweepKind::Current ? "sweep-current/1" : "sweep-separation/1",
                           {first, "fx_Hz", "fy_Hz", "fz_Hz", "gradx_T_per_m", "grady_T_per_m",
                            "gradz_T_per_m", "zeta_x", "zeta_y", "zeta_z", "Bhot_T"},
                           rows);
  std::ostringstream rep;
  rep << "sweep=" << (kind == SweepKind::Current ? "current" : "separation") << "\n";
  rep << "points=" << out.table.rows.size() << "\n";
  rep << "gravity_m_per_s2=" << io::fmt(trap.gravity) << "\n";
  const char* axes[3] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    const auto& f = out.table.frequency_fits[i];
    rep << "f" << axes[i] << "_slope=" << io::fmt(f.slope) << "\n";
    rep << "f" << axes[i] << "_intercept_Hz=" << io::fmt(f.intercept) << "\n";
    rep << "f" << axes[i] << "_r_squared=" << io::fmt(f.r_squared) << "\n";
  }
  if (kind == SweepKind::Separation) {
    bool decreasing = true;
    for (std::size_t k = 1; k < out.table.rows.size(); ++k)
      for (int i = 0; i < 3; ++i)
        decreasing = decreasing && out.table.rows[k].result.frequencies[i] <
                                       out.table.rows[k - 1].result.frequencies[i];
    rep << "frequencies_decrease_with_separation=" << (decreasing ? "true" : "false") << "\n";
  }
  out.report = rep.str();
  return out;
}

Vec3 probe_field_per_ampere(const FluxConcentratorCoil& coil, double height) {
  if (!(height > 0.0)) throw InvalidArgument("probe height must be positive");
  FluxConcentratorCoil c = coil;
  c.drive.center = Vec3::Zero();
  c.drive.axis = Vec3::UnitZ();
  c.drive.current = 1.0;
  const Assembly a({Source(c)});
  return field_at(a, c.face_center() + height * Vec3::UnitZ());
}

namespace {

std::string spectrum_csv(const nv::ODMRSpectrum& s) {
  std::vector<std::vector<double>> rows(s.frequencies.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {s.frequencies[i], s.signal[i]};
  std::string body = io::format_csv("odmr-spectrum/1", {"freq_Hz", "signal"}, rows);
  const auto nl = body.find('\n');
  return body.substr(0, nl + 1) + "# linewidth_Hz=" + io::fmt(s.linewidth) +
         "\n# contrast=" + io::fmt(s.contrast) + "\n" + body.substr(nl + 1);
}

nv::ODMRSpectrum simulate(const Config& cfg, const Vec3& field, std::uint64_t seed) {
  const auto grid = nv::linear_grid(cfg.nv.grid_start, cfg.nv.grid_stop, cfg.nv.grid_count);
  auto spec = nv::odmr_forward(cfg.nv.zeeman, field, nv::DiamondCut100(), cfg.nv.linewidth,
                               cfg.nv.contrast, grid, cfg.nv.orientation_weights);
  return nv::with_gaussian_noise(std::move(spec), cfg.nv.noise_sigma, seed);
}

double comment_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = io::trim(line);
    if (line.empty()) continue;
    if (line[0] != '#') break;
    const auto pos = line.find(key + "=");
    if (pos != std::string::npos) return std::strtod(line.c_str() + pos + key.size() + 1, nullptr);
  }
  return 0.0;
}

}  // namespace

std::string odmr_simulate_csv(const Config& cfg) {
  return spectrum_csv(simulate(cfg, cfg.nv.field, cfg.nv.seed));
}

OdmrFitOutput odmr_fit(const Config& cfg, const std::string& spectrum_text, int n_dips) {
  const io::CsvTable table = io::parse_csv(spectrum_text);
  const std::size_t cf = table.column("freq_Hz");
  const std::size_t cs = table.column("signal");
  nv::ODMRSpectrum spec;
  for (const auto& row : table.rows) {
    spec.frequencies.push_back(row[cf]);
    spec.signal.push_back(row[cs]);
  }
  spec.linewidth = std::max(0.0, comment_value(spectrum_text, "linewidth_Hz"));
  spec.contrast = comment_value(spectrum_text, "contrast");

  OdmrFitOutput out;
  if (n_dips <= 0) {
    const auto dips = nv::detect_dips(spec);
    if (dips.empty()) throw FewerDipsError("no dips found");
    n_dips = std::min<int>(cfg.nv.max_dips, static_cast<int>(dips.size()));
  }
  out.lines = nv::fit_lorentzians(spec, n_dips);
  if (out.lines.size() >= 2) {
    const auto& lo = out.lines.front();
    const auto& hi = out.lines.back();
    out.field = nv::invert_field_magnitude(cfg.nv.zeeman, lo.center, hi.center, cfg.nv.theta,
                                           std::hypot(lo.center_err, hi.center_err));
  }
  std::vector<std::vector<double>> rows;
  for (const auto& l : out.lines) rows.push_back({l.center, l.fwhm, l.depth, l.center_err});
  out.lines_csv =
      io::format_csv("odmr-lines/1", {"center_Hz", "fwhm_Hz", "depth", "center_err_Hz"}, rows);
  std::ostringstream rep;
  rep << "lines=" << out.lines.size() << "\n"
      << "theta_rad=" << io::fmt(cfg.nv.theta) << "\n"
      << "magnitude_T=" << io::fmt(out.field.magnitude) << "\n"
      << "uncertainty_T=" << io::fmt(out.field.uncertainty) << "\n";
  out.report = rep.str();
  return out;
}

OdmrSweepOutput odmr_sweep(const Config& cfg, unsigned threads) {
  if (cfg.nv.sweep_count < 2) throw ConfigError("nv.sweep_count must be at least 2");
  if (!(cfg.nv.sweep_stop > cfg.nv.sweep_start)) throw ConfigError("nv sweep needs stop > start");
  const Vec3 per_amp = probe_field_per_ampere(cfg.trap.coil, cfg.nv.probe_height);
  OdmrSweepOutput out;
  out.currents = GridSpec{cfg.nv.sweep_start, cfg.nv.sweep_stop, cfg.nv.sweep_count}.values();

  struct Point {
    nv::ODMRSpectrum spectrum;
    double magnitude = 0.0;
  };
  const auto points = parallel_map(out.currents.size(), threads, [&](std::size_t k) {
    Point p;
    p.spectrum = simulate(cfg, out.currents[k] * per_amp, cfg.nv.seed + k);
    p.magnitude = nv::magnitude_from_spectrum(cfg.nv.zeeman, p.spectrum, cfg.nv.max_dips,
                                              cfg.nv.theta)
                      .magnitude;
    return p;
  });
  std::vector<std::vector<double>> rows;
  std::vector<double> ma;
  std::vector<double> mt;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& s = points[k].spectrum;
    for (std::size_t i = 0; i < s.frequencies.size(); ++i)
      rows.push_back({out.currents[k], s.frequencies[i], s.signal[i]});
    out.magnitudes.push_back(points[k].magnitude);
    ma.push_back(out.currents[k] * 1e3);
    mt.push_back(points[k].magnitude * 1e3);
  }
  out.fit = linear_fit(ma, mt);
  out.csv = io::format_csv("odmr-sweep/1", {"current_A", "freq_Hz", "signal"}, rows);
  std::ostringstream rep;
  rep << "state=" << (cfg.trap.coil.state == CoreState::Superconducting ? "superconducting" : "normal")
      << "\n"
      << "probe_height_m=" << io::fmt(cfg.nv.probe_height) << "\n"
      << "slope_mT_per_mA=" << io::fmt(out.fit.slope) << "\n"
      << "intercept_mT=" << io::fmt(out.fit.intercept) << "\n"
      << "r_squared=" << io::fmt(out.fit.r_squared) << "\n";
  for (std::size_t k = 0; k < out.currents.size(); ++k)
    rep << "field_T[" << k << "]=" << io::fmt(out.magnitudes[k]) << "\n";
  out.report = rep.str();
  return out;
}

RingdownOutput ringdown(const Config& cfg, const dynamics::TimeSeries& series,
                        const std::string& source) {
  RingdownOutput out;
  out.fit = dynamics::fit_ringdown(series);
  const std::size_t seg = std::min(cfg.ringdown.psd_segment, series.x.size());
  const auto p = dynamics::psd(series, seg, cfg.ringdown.psd_overlap);
  std::size_t peak = 1;
  for (std::size_t k = 1; k < p.power.size(); ++k)
    if (p.power[k] > p.power[peak]) peak = k;
  out.psd_csv = dynamics::format_psd_csv(p);
  out.report = "source=" + source + "\n" + dynamics::format_ringdown_report(out.fit) +
               "psd_peak_hz=" + io::fmt(p.frequency[peak]) + "\n";
  return out;
}

dynamics::FrameStack render_frames(const Config& cfg, const dynamics::TimeSeries& series) {
  series.validate();
  const auto& r = cfg.ringdown;
  if (!(r.pixel_size > 0.0)) throw ConfigError("ringdown.pixel_size_m must be positive");
  dynamics::SpotRender spot;
  spot.width = spot.height = r.frame_size;
  spot.sigma_px = r.spot_sigma;
  spot.peak = r.spot_peak;
  spot.seed = r.sim.seed;
  const double c = 0.5 * (r.frame_size - 1);
  std::vector<double> xs(series.x.size());
  std::vector<double> ys(series.x.size(), c);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = c + series.x[i] / r.pixel_size;
  return dynamics::render_spot_frames(xs, ys, spot, series.sample_rate(), r.pixel_size);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) return 2;
  if (dynamic_cast<const SingularityError*>(&e)) return 3;
  if (dynamic_cast<const NoMinimumError*>(&e) || dynamic_cast<const SaddlePointError*>(&e)) return 4;
  if (dynamic_cast<const FitError*>(&e) || dynamic_cast<const NoSolutionError*>(&e) ||
      dynamic_cast<const UnderdeterminedError*>(&e) || dynamic_cast<const DegenerateGeometryError*>(&e))
    return 5;
  if (dynamic_cast<const NoOscillationError*>(&e)) return 6;
  return 1;
}

}  // namespace meissner::commands

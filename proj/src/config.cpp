#include "meissner/config.hpp"

#include "meissner/errors.hpp"
#include "meissner/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace meissner {

dynamics::RingdownParams RingdownSettings::resolved() const {
  dynamics::RingdownParams p = sim;
  if (snr_db) p.noise_rms = dynamics::noise_rms_for_snr(p.amplitude, *snr_db);
  return p;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

long long to_integer(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return i;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long i = to_integer(key, v);
  if (i < 0) throw ConfigError(key + ": must be non-negative");
  return static_cast<std::size_t>(i);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(Config&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [&](const std::string& name, std::function<double&(Config&)> field) {
      t[name] = [field](Config& c, const std::string& k, const std::string& v) {
        field(c) = to_double(k, v);
      };
    };
    // coil
    num("coil.inner_radius_m", [](Config& c) -> double& { return c.trap.coil.drive.inner_radius; });
    num("coil.outer_radius_m", [](Config& c) -> double& { return c.trap.coil.drive.outer_radius; });
    num("coil.length_m", [](Config& c) -> double& { return c.trap.coil.drive.length; });
    t["coil.turns"] = [](Config& c, const std::string& k, const std::string& v) {
      const long long n = to_integer(k, v);
      if (n < 1 || n > 1000000) throw ConfigError(k + ": must be a positive turn count");
      c.trap.coil.drive.turns = static_cast<int>(n);
    };
    num("coil.core_l1_m", [](Config& c) -> double& { return c.trap.coil.core_l1; });
    num("coil.core_l2_m", [](Config& c) -> double& { return c.trap.coil.core_l2; });
    num("coil.core_r1_m", [](Config& c) -> double& { return c.trap.coil.core_r1; });
    num("coil.core_r2_m", [](Config& c) -> double& { return c.trap.coil.core_r2; });
    num("coil.slit_width_m", [](Config& c) -> double& { return c.trap.coil.slit_width; });
    t["coil.slit_angle_rad"] = [](Config& c, const std::string& k, const std::string& v) {
      const double a = to_double(k, v);
      c.trap.coil.slit_direction = Vec3(std::cos(a), std::sin(a), 0.0);
    };
    t["coil.state"] = [](Config& c, const std::string& k, const std::string& v) {
      if (v == "superconducting") {
        c.trap.coil.state = CoreState::Superconducting;
      } else if (v == "normal") {
        c.trap.coil.state = CoreState::Normal;
      } else {
        throw ConfigError(k + ": expected superconducting or normal, got '" + v + "'");
      }
    };
    t["coil.n_sheet"] = [](Config& c, const std::string& k, const std::string& v) {
      const long long n = to_integer(k, v);
      if (n < 1 || n > 4096) throw ConfigError(k + ": must lie in [1, 4096]");
      c.trap.coil.n_sheet = static_cast<int>(n);
    };
    // trap
    num("trap.separation_m", [](Config& c) -> double& { return c.trap.separation; });
    num("trap.current_top_a", [](Config& c) -> double& { return c.trap.current_top; });
    num("trap.current_bottom_a", [](Config& c) -> double& { return c.trap.current_bottom; });
    num("trap.gravity_m_per_s2", [](Config& c) -> double& { return c.trap.gravity; });
    t["trap.anti_aligned_slits"] = [](Config& c, const std::string& k, const std::string& v) {
      c.trap.anti_aligned_slits = to_bool(k, v);
    };
    t["trap.particle_radius_m"] = [](Config& c, const std::string& k, const std::string& v) {
      try {
        c.trap.particle = Particle(to_double(k, v), c.trap.particle.density());
      } catch (const InvalidArgument& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["trap.particle_density_kg_per_m3"] = [](Config& c, const std::string& k, const std::string& v) {
      try {
        c.trap.particle = Particle(c.trap.particle.radius(), to_double(k, v));
      } catch (const InvalidArgument& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    // nv
    num("nv.zero_field_splitting_hz", [](Config& c) -> double& { return c.nv.zeeman.D; });
    num("nv.gamma_hz_per_t", [](Config& c) -> double& { return c.nv.zeeman.gamma; });
    num("nv.linewidth_hz", [](Config& c) -> double& { return c.nv.linewidth; });
    num("nv.contrast", [](Config& c) -> double& { return c.nv.contrast; });
    num("nv.grid_start_hz", [](Config& c) -> double& { return c.nv.grid_start; });
    num("nv.grid_stop_hz", [](Config& c) -> double& { return c.nv.grid_stop; });
    t["nv.grid_count"] = [](Config& c, const std::string& k, const std::string& v) {
      c.nv.grid_count = to_count(k, v);
    };
    num("nv.noise_sigma", [](Config& c) -> double& { return c.nv.noise_sigma; });
    t["nv.seed"] = [](Config& c, const std::string& k, const std::string& v) {
      c.nv.seed = static_cast<std::uint64_t>(to_count(k, v));
    };
    num("nv.field_x_t", [](Config& c) -> double& { return c.nv.field.x(); });
    num("nv.field_y_t", [](Config& c) -> double& { return c.nv.field.y(); });
    num("nv.field_z_t", [](Config& c) -> double& { return c.nv.field.z(); });
    num("nv.probe_height_m", [](Config& c) -> double& { return c.nv.probe_height; });
    num("nv.sweep_start_a", [](Config& c) -> double& { return c.nv.sweep_start; });
    num("nv.sweep_stop_a", [](Config& c) -> double& { return c.nv.sweep_stop; });
    t["nv.sweep_count"] = [](Config& c, const std::string& k, const std::string& v) {
      c.nv.sweep_count = to_count(k, v);
    };
    t["nv.max_dips"] = [](Config& c, const std::string& k, const std::string& v) {
      const long long n = to_integer(k, v);
      if (n < 1 || n > 8) throw ConfigError(k + ": must lie in [1, 8]");
      c.nv.max_dips = static_cast<int>(n);
    };
    t["nv.orientation_weights"] = [](Config& c, const std::string& k, const std::string& v) {
      std::stringstream ss(v);
      std::string item;
      std::size_t n = 0;
      while (std::getline(ss, item, ',')) {
        if (n == 4) throw ConfigError(k + ": expected four comma-separated weights");
        const double w = to_double(k, io::trim(item));
        if (!(w >= 0.0)) throw ConfigError(k + ": weights must be non-negative");
        c.nv.orientation_weights[n++] = w;
      }
      if (n != 4) throw ConfigError(k + ": expected four comma-separated weights");
    };
    num("nv.theta_rad", [](Config& c) -> double& { return c.nv.theta; });
    // ringdown
    num("ringdown.f0_hz", [](Config& c) -> double& { return c.ringdown.sim.f0; });
    num("ringdown.tau_s", [](Config& c) -> double& { return c.ringdown.sim.tau; });
    num("ringdown.amplitude_m", [](Config& c) -> double& { return c.ringdown.sim.amplitude; });
    num("ringdown.phase_rad", [](Config& c) -> double& { return c.ringdown.sim.phase; });
    num("ringdown.drive_duration_s", [](Config& c) -> double& { return c.ringdown.sim.drive_duration; });
    num("ringdown.record_duration_s", [](Config& c) -> double& { return c.ringdown.sim.record_duration; });
    num("ringdown.sample_rate_hz", [](Config& c) -> double& { return c.ringdown.sim.sample_rate; });
    t["ringdown.noise_rms_m"] = [](Config& c, const std::string& k, const std::string& v) {
      c.ringdown.sim.noise_rms = to_double(k, v);
      c.ringdown.snr_db.reset();
    };
    t["ringdown.snr_db"] = [](Config& c, const std::string& k, const std::string& v) {
      c.ringdown.snr_db = to_double(k, v);
    };
    t["ringdown.seed"] = [](Config& c, const std::string& k, const std::string& v) {
      c.ringdown.sim.seed = static_cast<std::uint64_t>(to_count(k, v));
    };
    t["ringdown.psd_segment"] = [](Config& c, const std::string& k, const std::string& v) {
      c.ringdown.psd_segment = to_count(k, v);
    };
    num("ringdown.psd_overlap", [](Config& c) -> double& { return c.ringdown.psd_overlap; });
    num("ringdown.background_percentile", [](Config& c) -> double& { return c.ringdown.background_percentile; });
    num("ringdown.pixel_size_m", [](Config& c) -> double& { return c.ringdown.pixel_size; });
    t["ringdown.frame_size"] = [](Config& c, const std::string& k, const std::string& v) {
      const long long n = to_integer(k, v);
      if (n < 8 || n > 4096) throw ConfigError(k + ": must lie in [8, 4096]");
      c.ringdown.frame_size = static_cast<int>(n);
    };
    num("ringdown.spot_sigma_px", [](Config& c) -> double& { return c.ringdown.spot_sigma; });
    num("ringdown.spot_peak", [](Config& c) -> double& { return c.ringdown.spot_peak; });
    // output
    auto path = [&](const std::string& name, std::function<std::string&(Config&)> field) {
      t[name] = [field](Config& c, const std::string& k, const std::string& v) {
        if (v.empty()) throw ConfigError(k + ": path must not be empty");
        field(c) = v;
      };
    };
    num("sweep.gravity_m_per_s2", [](Config& c) -> double& { return c.sweep.gravity; });
    path("output.fieldmap", [](Config& c) -> std::string& { return c.output.fieldmap; });
    path("output.trap_report", [](Config& c) -> std::string& { return c.output.trap_report; });
    path("output.sweep", [](Config& c) -> std::string& { return c.output.sweep; });
    path("output.spectrum", [](Config& c) -> std::string& { return c.output.spectrum; });
    path("output.lines", [](Config& c) -> std::string& { return c.output.lines; });
    path("output.odmr_sweep", [](Config& c) -> std::string& { return c.output.odmr_sweep; });
    path("output.ringdown_report", [](Config& c) -> std::string& { return c.output.ringdown_report; });
    path("output.psd", [](Config& c) -> std::string& { return c.output.psd; });
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

Config parse_config(const std::string& text) {
  Config cfg;
  const auto& table = setters();
  std::set<std::string> sections;
  for (const auto& [k, _] : table) sections.insert(k.substr(0, k.find('.')));

  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = io::trim(line);
    if (line.empty() || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = io::trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = section + "." + io::trim(line.substr(0, eq));
    const std::string value = io::trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(where + "unknown key " + key);
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key " + key);
    it->second(cfg, key, value);
  }
  try {
    cfg.trap.validate();
    cfg.nv.zeeman.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

double parse_field_quantity(const std::string& text) {
  const std::string s = io::trim(text);
  std::size_t pos = 0;
  while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.' ||
                            s[pos] == '-' || s[pos] == '+' || s[pos] == 'e' || s[pos] == 'E')) {
    // Stop before a unit that starts with 'e'-free letters; 'e' is only part of
    // the number when followed by a digit or sign.
    if ((s[pos] == 'e' || s[pos] == 'E') &&
        !(pos + 1 < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos + 1])) ||
                                 s[pos + 1] == '-' || s[pos + 1] == '+')))
      break;
    ++pos;
  }
  const double value = to_double("field quantity", s.substr(0, pos));
  const std::string unit = io::trim(s.substr(pos));
  static const std::map<std::string, double> scale = {
      {"", 1.0}, {"T", 1.0}, {"mT", 1e-3}, {"uT", 1e-6}, {"nT", 1e-9}};
  const auto it = scale.find(unit);
  if (it == scale.end()) throw ConfigError("unknown field unit '" + unit + "'");
  return value * it->second;
}

}  // namespace meissner

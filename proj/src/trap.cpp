#include "meissner/trap.hpp"

#include "meissner/errors.hpp"
#include "meissner/optimize.hpp"
#include "meissner/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace meissner {

namespace {

constexpr double kHotProbeStandoff = 10e-6;  // m
constexpr int kHotProbeSamples = 720;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

}  // namespace

Particle::Particle(double radius, double density) : radius_(radius), density_(density) {
  if (!(radius > 0.0) || !(density > 0.0)) {
    throw InvalidArgument("particle radius and density must be positive");
  }
  volume_ = 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
  mass_ = density_ * volume_;
}

FluxConcentratorCoil default_concentrator() {
  FluxConcentratorCoil fc;
  fc.drive.inner_radius = 6.57e-3;
  fc.drive.outer_radius = 6.97e-3;  // four layers of 100 um wire
  fc.drive.length = 4.5e-3;
  fc.drive.turns = 180;
  fc.drive.current = 1.0;
  fc.core_l1 = 4.5e-3;
  fc.core_l2 = 0.45e-3;
  fc.core_r1 = 6.57e-3;
  fc.core_r2 = 0.2e-3;
  fc.slit_direction = Vec3::UnitX();
  fc.slit_width = 0.2e-3;
  fc.state = CoreState::Superconducting;
  return fc;
}

TrapConfig default_trap_config() {
  TrapConfig cfg;
  cfg.coil = default_concentrator();
  return cfg;
}

void TrapConfig::validate() const {
  if (!(separation > 0.0)) throw InvalidArgument("trap separation must be positive");
  if (std::abs(coil.slit_direction.z()) > 1e-9) {
    throw InvalidArgument("slit direction must lie in the xy plane");
  }
  if (!(gravity >= 0.0)) throw InvalidArgument("gravity must be non-negative");
  if (2.0 * particle.radius() >= separation) {
    throw InvalidArgument("particle does not fit in the gap");
  }
}

FluxConcentratorCoil TrapConfig::top() const {
  FluxConcentratorCoil fc = coil;
  fc.drive.axis = -Vec3::UnitZ();
  fc.drive.center = Vec3(0.0, 0.0, 0.5 * separation + 0.5 * coil.core_l1);
  fc.drive.current = current_top;
  fc.slit_direction = coil.slit_direction.normalized();
  return fc;
}

FluxConcentratorCoil TrapConfig::bottom() const {
  FluxConcentratorCoil fc = coil;
  fc.drive.axis = Vec3::UnitZ();
  fc.drive.center = Vec3(0.0, 0.0, -0.5 * separation - 0.5 * coil.core_l1);
  fc.drive.current = current_bottom;
  const Vec3 s = coil.slit_direction.normalized();
  fc.slit_direction = anti_aligned_slits ? Vec3(-s) : s;
  return fc;
}

Assembly TrapConfig::assembly() const {
  validate();
  return Assembly({top(), bottom()});
}

double potential_energy(const TrapConfig& cfg, const Assembly& assembly, const Vec3& p) {
  const Particle& part = cfg.particle;
  const double b2 = field_at(assembly, p).squaredNorm();
  return 3.0 * part.volume() / (4.0 * kMu0) * b2 + part.mass() * cfg.gravity * p.z();
}

double potential_energy(const TrapConfig& cfg, const Vec3& p) {
  return potential_energy(cfg, cfg.assembly(), p);
}

EquilibriumResult find_equilibrium(const TrapConfig& cfg, const Assembly& assembly) {
  cfg.validate();
  const double z_limit = 0.5 * cfg.separation - cfg.particle.radius();
  const double rho_limit = cfg.coil.core_r1;
  auto inside = [&](const Vec3& p) {
    return std::abs(p.z()) < z_limit && std::hypot(p.x(), p.y()) < rho_limit;
  };
  auto objective = [&](const VectorX& x) {
    const Vec3 p(x(0), x(1), x(2));
    if (!inside(p)) return std::numeric_limits<double>::infinity();
    return potential_energy(cfg, assembly, p);
  };

  const double offset = 0.25 * cfg.separation;
  std::vector<Vec3> starts{Vec3::Zero()};
  for (int axis = 0; axis < 3; ++axis) {
    starts.push_back(offset * Vec3::Unit(axis));
    starts.push_back(-offset * Vec3::Unit(axis));
  }

  NelderMeadOptions options;
  options.initial_step = 0.05 * cfg.separation;
  const double margin = 1e-3 * cfg.separation;

  EquilibriumResult best;
  best.energy = std::numeric_limits<double>::infinity();
  for (const Vec3& start : starts) {
    const auto result = nelder_mead(objective, VectorX(start), options);
    const Vec3 p(result.x(0), result.x(1), result.x(2));
    const bool interior = std::abs(p.z()) < z_limit - margin &&
                          std::hypot(p.x(), p.y()) < rho_limit - margin;
    if (!result.converged || !interior) continue;
    ++best.restarts_converged;
    // Field zeros far from the center tie at U = 0 when g = 0; ties within
    // the simplex tolerance go to the minimum nearest the gap center.
    const bool tie = std::abs(result.value - best.energy) <= options.f_tol;
    if ((!tie && result.value < best.energy) || (tie && p.norm() < best.position.norm())) {
      best.energy = result.value;
      best.position = p;
    }
  }
  if (best.restarts_converged == 0) {
    throw NoMinimumError("no interior potential minimum found in the trap gap");
  }
  return best;
}

Vec3 find_equilibrium(const TrapConfig& cfg) {
  return find_equilibrium(cfg, cfg.assembly()).position;
}

Mat3 potential_hessian(const TrapConfig& cfg, const Assembly& assembly, const Vec3& p, double h) {
  auto U = [&](const Vec3& q) { return potential_energy(cfg, assembly, q); };
  auto estimate = [&](double step) {
    Mat3 H;
    const double u0 = U(p);
    for (int i = 0; i < 3; ++i) {
      const Vec3 ei = step * Vec3::Unit(i);
      H(i, i) = (U(p + ei) - 2.0 * u0 + U(p - ei)) / (step * step);
      for (int j = i + 1; j < 3; ++j) {
        const Vec3 ej = step * Vec3::Unit(j);
        H(i, j) = (U(p + ei + ej) - U(p + ei - ej) - U(p - ei + ej) + U(p - ei - ej)) /
                  (4.0 * step * step);
        H(j, i) = H(i, j);
      }
    }
    return H;
  };
  const Mat3 coarse = estimate(h);
  const Mat3 fine = estimate(0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

double hot_field(const TrapConfig& cfg, const Assembly& assembly) {
  double hottest = 0.0;
  for (const FluxConcentratorCoil& fc : {cfg.top(), cfg.bottom()}) {
    const Vec3 n = fc.drive.axis.normalized();
    const Vec3 u = fc.slit_direction;
    const Vec3 v = n.cross(u);
    const Vec3 center = fc.face_center() + kHotProbeStandoff * n;
    for (int k = 0; k < kHotProbeSamples; ++k) {
      const double t = kTwoPi * k / kHotProbeSamples;
      const Vec3 p = center + fc.core_r2 * (std::cos(t) * u + std::sin(t) * v);
      hottest = std::max(hottest, field_at(assembly, p).norm());
    }
  }
  return hottest;
}

namespace {

// Assigns each eigenvector to the lab axis it projects on most, as a
// permutation maximizing total squared projection.
std::array<int, 3> label_modes(const Eigen::Vector3d& values, const Mat3& vectors) {
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (int k = 0; k < 3; ++k) score += vectors(perm[k], k) * vectors(perm[k], k);
    if (score > best_score + 1e-12) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  // Degenerate eigenvalues: labels in x, y, z order along ascending index.
  const double scale = values.cwiseAbs().maxCoeff();
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(values(i) - values(j)) < 1e-6 * scale && best[i] > best[j]) {
        std::swap(best[i], best[j]);
      }
    }
  }
  return best;
}

}  // namespace

TrapCharacterization characterize(const TrapConfig& cfg) {
  const Assembly assembly = cfg.assembly();
  TrapCharacterization out;
  out.equilibrium = find_equilibrium(cfg, assembly).position;
  out.hessian = potential_hessian(cfg, assembly, out.equilibrium);

  Eigen::SelfAdjointEigenSolver<Mat3> eig(out.hessian);
  const Eigen::Vector3d lambda = eig.eigenvalues();
  if (lambda.minCoeff() <= 0.0) {
    throw SaddlePointError("potential Hessian is not positive definite at the equilibrium");
  }
  const auto labels = label_modes(lambda, eig.eigenvectors());
  const double mass = cfg.particle.mass();
  for (int k = 0; k < 3; ++k) {
    out.frequencies[labels[k]] = std::sqrt(lambda(k) / mass) / kTwoPi;
    out.mode_axes[labels[k]] = eig.eigenvectors().col(k);
  }

  out.field_jacobian = field_jacobian(assembly, out.equilibrium).dB_dx;
  out.mean_current = cfg.mean_current();
  const double ampere_turns = cfg.coil.drive.turns * out.mean_current;
  const double r2 = cfg.coil.core_r2;
  for (int i = 0; i < 3; ++i) {
    out.gradients[i] = out.field_jacobian.col(i).norm();
    out.zeta[i] = ampere_turns != 0.0 ? out.gradients[i] * r2 * r2 / (kMu0 * ampere_turns) : 0.0;
  }
  out.zeta_definition = "zeta_i = |dB/dx_i| * r2^2 / (mu0 * N * I_mean)";
  out.hot_field = hot_field(cfg, assembly);
  return out;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("linear fit needs at least two paired samples");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

namespace {

SweepTable finish_sweep(std::vector<SweepRow> rows) {
  SweepTable table;
  table.rows = std::move(rows);
  if (table.rows.size() >= 2) {
    std::vector<double> x;
    for (const auto& r : table.rows) x.push_back(r.parameter);
    for (int i = 0; i < 3; ++i) {
      std::vector<double> y;
      for (const auto& r : table.rows) y.push_back(r.result.frequencies[i]);
      table.frequency_fits[i] = linear_fit(x, y);
    }
  }
  return table;
}

}  // namespace

SweepTable current_sweep(const TrapConfig& cfg, const std::vector<double>& currents,
                         unsigned threads) {
  for (std::size_t i = 0; i < currents.size(); ++i) {
    if (!(currents[i] > 0.0)) throw InvalidArgument("sweep currents must be positive");
    if (i > 0 && !(currents[i] > currents[i - 1])) {
      throw InvalidArgument("sweep currents must be ascending");
    }
  }
  auto rows = parallel_map(currents.size(), threads, [&](std::size_t i) {
    TrapConfig c = cfg;
    c.current_top = currents[i];
    c.current_bottom = currents[i];
    return SweepRow{currents[i], characterize(c)};
  });
  return finish_sweep(std::move(rows));
}

SweepTable separation_sweep(const TrapConfig& cfg, const std::vector<double>& separations,
                            unsigned threads) {
  for (double d : separations) {
    if (!(d > 0.0)) throw InvalidArgument("separations must be positive");
  }
  auto rows = parallel_map(separations.size(), threads, [&](std::size_t i) {
    TrapConfig c = cfg;
    c.separation = separations[i];
    return SweepRow{separations[i], characterize(c)};
  });
  return finish_sweep(std::move(rows));
}

double bc1_breach_current(double hot_field_per_ampere, double b_c1) {
  if (!(b_c1 >= 0.0)) throw InvalidArgument("B_c1 must be non-negative");
  if (!(hot_field_per_ampere > 0.0)) {
    throw InvalidArgument("hotspot field per ampere must be positive");
  }
  return b_c1 / hot_field_per_ampere;
}

double bc1_breach_current(const TrapConfig& cfg, double b_c1) {
  const double reference = std::max(std::abs(cfg.current_top), std::abs(cfg.current_bottom));
  if (reference == 0.0) throw InvalidArgument("trap currents are zero");
  const double hot = hot_field(cfg, cfg.assembly());
  return bc1_breach_current(hot / reference, b_c1);
}

std::string format_characterization(const TrapCharacterization& c) {
  std::ostringstream os;
  os << "equilibrium_x_m=" << fmt(c.equilibrium.x()) << '\n'
     << "equilibrium_y_m=" << fmt(c.equilibrium.y()) << '\n'
     << "equilibrium_z_m=" << fmt(c.equilibrium.z()) << '\n';
  const char* axes = "xyz";
  for (int i = 0; i < 3; ++i) os << "f" << axes[i] << "_hz=" << fmt(c.frequencies[i]) << '\n';
  for (int i = 0; i < 3; ++i) {
    os << "mode_" << axes[i] << "_axis=" << fmt(c.mode_axes[i].x()) << ','
       << fmt(c.mode_axes[i].y()) << ',' << fmt(c.mode_axes[i].z()) << '\n';
  }
  for (int i = 0; i < 3; ++i) {
    os << "grad" << axes[i] << "_t_per_m=" << fmt(c.gradients[i]) << '\n';
  }
  for (int i = 0; i < 3; ++i) os << "zeta_" << axes[i] << '=' << fmt(c.zeta[i]) << '\n';
  os << "zeta_definition=" << c.zeta_definition << '\n'
     << "bhot_t=" << fmt(c.hot_field) << '\n'
     << "mean_current_a=" << fmt(c.mean_current) << '\n';
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      os << "hessian_" << axes[i] << axes[j] << "_j_per_m2=" << fmt(c.hessian(i, j)) << '\n';
    }
  }
  return os.str();
}

}  // namespace meissner

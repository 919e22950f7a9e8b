#include "meissner/errors.hpp"
#include "meissner/trap.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <numbers>

using namespace meissner;

namespace {

TrapConfig no_gravity(TrapConfig c = default_trap_config()) {
  c.gravity = 0.0;
  return c;
}

Vec3 grad_u(const TrapConfig& cfg, const Assembly& a, const Vec3& p, double h = 1e-7) {
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = h * Vec3::Unit(i);
    g[i] = (potential_energy(cfg, a, p + e) - potential_energy(cfg, a, p - e)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("particle: mass is density times volume") {
  const Particle p(25e-6, 8400.0);
  CHECK(p.volume() == doctest::Approx(4.0 / 3.0 * std::numbers::pi * std::pow(25e-6, 3)).epsilon(1e-15));
  CHECK(p.mass() == p.density() * p.volume());
  CHECK_THROWS_AS(Particle(0.0, 8400.0), InvalidArgument);
  CHECK_THROWS_AS(Particle(1e-6, -1.0), InvalidArgument);
}

TEST_CASE("trap geometry: coaxial, facing, slit orientation") {
  TrapConfig cfg = default_trap_config();
  const auto top = cfg.top(), bottom = cfg.bottom();
  CHECK(std::abs(std::abs(top.drive.axis.dot(bottom.drive.axis)) - 1.0) < 1e-9);
  CHECK(top.face_center().z() == doctest::Approx(0.5 * cfg.separation));
  CHECK(bottom.face_center().z() == doctest::Approx(-0.5 * cfg.separation));
  CHECK((top.slit_direction + bottom.slit_direction).norm() < 1e-15);
  cfg.anti_aligned_slits = false;
  CHECK((cfg.top().slit_direction - cfg.bottom().slit_direction).norm() < 1e-15);
  cfg.separation = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("potential: zero field and no gravity give zero energy") {
  TrapConfig cfg = no_gravity();
  cfg.current_top = cfg.current_bottom = 0.0;
  for (const Vec3& p : {Vec3(0, 0, 0), Vec3(1e-4, -2e-4, 3e-4)}) CHECK(potential_energy(cfg, p) == 0.0);
  CHECK(potential_energy(cfg, Assembly(), Vec3(1, 2, 3)) == 0.0);
}

TEST_CASE("potential: near-uniform field gives the constant-field energy and no force") {
  // Helmholtz pair of 1 m radius: the field at the center is flat to fourth order.
  const double R = 1.0, I = 100.0;
  const Assembly helmholtz({make_loop(Vec3(0, 0, R / 2), Vec3::UnitZ(), R, I),
                            make_loop(Vec3(0, 0, -R / 2), Vec3::UnitZ(), R, I)});
  const TrapConfig cfg = no_gravity();
  const double b0 = std::pow(0.8, 1.5) * kMu0 * I / R;
  const double expected = 3 * cfg.particle.volume() / (4 * kMu0) * b0 * b0;
  CHECK(oracle::rel(potential_energy(cfg, helmholtz, Vec3::Zero()), expected) < 1e-12);
  for (const Vec3& d : {Vec3(1e-4, 0, 0), Vec3(0, 1e-4, 0), Vec3(0, 0, 1e-4)})
    CHECK(oracle::rel(potential_energy(cfg, helmholtz, d), expected) < 1e-12);
}

TEST_CASE("potential: a single interior minimum along z between the coils") {
  const TrapConfig cfg = default_trap_config();
  const Assembly a = cfg.assembly();
  const double zmax = 0.5 * cfg.separation - cfg.particle.radius();
  std::vector<double> u(2001);
  for (int i = 0; i < 2001; ++i) u[i] = potential_energy(cfg, a, Vec3(0, 0, -zmax + 2 * zmax * i / 2000.0));
  int minima = 0;
  for (int i = 1; i < 2000; ++i) minima += (u[i] < u[i - 1] && u[i] <= u[i + 1]);
  CHECK(minima == 1);
  CHECK(u[0] > *std::min_element(u.begin(), u.end()));
  CHECK(u[2000] > *std::min_element(u.begin(), u.end()));
}

TEST_CASE("equilibrium: midplane for symmetric currents, aligned slits, no gravity") {
  TrapConfig cfg = no_gravity();
  cfg.anti_aligned_slits = false;
  const Vec3 r0 = find_equilibrium(cfg);
  CHECK(std::abs(r0.z()) < 1e-7);
}

TEST_CASE("equilibrium: gradient of U vanishes at r0") {
  for (bool anti : {true, false}) {
    TrapConfig cfg = default_trap_config();
    cfg.anti_aligned_slits = anti;
    const Assembly a = cfg.assembly();
    const Vec3 r0 = find_equilibrium(cfg, a).position;
    double typical = 0.0;
    for (int i = 0; i < 3; ++i) {
      typical += grad_u(cfg, a, r0 + 100e-6 * Vec3::Unit(i)).norm() / 3.0;
      typical += grad_u(cfg, a, r0 - 100e-6 * Vec3::Unit(i)).norm() / 3.0;
    }
    typical /= 2.0;
    CHECK(grad_u(cfg, a, r0).norm() < 1e-3 * typical);
  }
}

TEST_CASE("equilibrium: unbalanced currents shift it monotonically along the slit") {
  TrapConfig cfg = default_trap_config();
  cfg.current_top = 1.1;
  std::vector<Vec3> r;
  for (double ib : {0.8, 0.7, 0.6, 0.5, 0.4}) {
    cfg.current_bottom = ib;
    r.push_back(find_equilibrium(cfg));
  }
  const Vec3 s = cfg.coil.slit_direction;
  const double first_step = (r[1] - r[0]).dot(s);
  CHECK(first_step != 0.0);
  for (std::size_t k = 1; k < r.size(); ++k) {
    const double step = (r[k] - r[k - 1]).dot(s);
    CHECK(step * first_step > 0.0);
  }
  // motion along the slit dominates the transverse in-plane motion
  const Vec3 total = r.back() - r.front();
  CHECK(std::abs(total.dot(s)) > std::abs(total.dot(Vec3::UnitZ().cross(s))));
}

TEST_CASE("equilibrium: exchanging the currents mirrors r0 through the midplane") {
  for (bool anti : {false, true}) {
    TrapConfig cfg = no_gravity();
    cfg.anti_aligned_slits = anti;
    cfg.current_top = 1.2;
    cfg.current_bottom = 0.8;
    const Vec3 a = find_equilibrium(cfg);
    std::swap(cfg.current_top, cfg.current_bottom);
    const Vec3 b = find_equilibrium(cfg);
    // anti-aligned slits are mapped onto each other by the extra reflection x -> -x
    const Vec3 expected(anti ? -a.x() : a.x(), a.y(), -a.z());
    CHECK((b - expected).norm() < 1e-7);
    CHECK(std::abs(a.z()) > 1e-6);
  }
}

TEST_CASE("gravity pulls the equilibrium down without stiffening the vertical mode") {
  const TrapConfig with = default_trap_config();
  const TrapConfig without = no_gravity();
  const auto cg = characterize(with);
  const auto c0 = characterize(without);
  CHECK(cg.equilibrium.z() < c0.equilibrium.z());
  // FD noise floor of f_z from the step-halving difference of the Hessian
  const Assembly a = with.assembly();
  const Mat3 h1 = potential_hessian(with, a, cg.equilibrium, 1e-6);
  const Mat3 h2 = potential_hessian(with, a, cg.equilibrium, 2e-6);
  const double noise = 0.5 * std::abs(h1(2, 2) - h2(2, 2)) / h1(2, 2) * cg.frequencies[2];
  CHECK(cg.frequencies[2] <= c0.frequencies[2] + std::max(noise, 1e-9 * c0.frequencies[2]));
}

TEST_CASE("characterization invariants at the default trap") {
  const TrapConfig cfg = default_trap_config();
  const auto c = characterize(cfg);
  CHECK((c.hessian - c.hessian.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(c.hessian);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  std::vector<double> from_lambda, reported(c.frequencies.begin(), c.frequencies.end());
  for (int k = 0; k < 3; ++k) from_lambda.push_back(std::sqrt(eig.eigenvalues()(k) / cfg.particle.mass()) / (2 * std::numbers::pi));
  std::sort(reported.begin(), reported.end());
  for (int k = 0; k < 3; ++k) CHECK(oracle::rel(reported[k], from_lambda[k]) < 1e-14);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(c.mode_axes[i].norm() - 1.0) < 1e-12);
    CHECK(std::abs(c.mode_axes[i][i]) > 0.5);  // labelled by dominant axis
  }
  CHECK(c.frequencies[0] < c.frequencies[1]);
  CHECK(c.frequencies[1] < c.frequencies[2]);
  CHECK(c.zeta[0] < c.zeta[1]);
  CHECK(c.zeta[1] < c.zeta[2]);
  CHECK(c.gradients[0] < c.gradients[1]);
  CHECK(c.gradients[1] < c.gradients[2]);
  CHECK_FALSE(c.zeta_definition.empty());
  const std::string text = format_characterization(c);
  for (const char* key : {"fx_hz=", "fy_hz=", "fz_hz=", "zeta_x=", "bhot_t="})
    CHECK(text.find(key) != std::string::npos);
}

TEST_CASE("property: FD Hessian matches a quadratic fit on a 5x5x5 stencil") {
  std::vector<TrapConfig> matrix;
  matrix.push_back(default_trap_config());
  matrix.push_back(no_gravity());
  TrapConfig asym = no_gravity();
  asym.current_top = 1.3;
  asym.current_bottom = 0.7;
  asym.anti_aligned_slits = false;
  matrix.push_back(asym);
  for (const auto& cfg : matrix) {
    const Assembly a = cfg.assembly();
    const Vec3 r0 = find_equilibrium(cfg, a).position;
    const Mat3 h = potential_hessian(cfg, a, r0);
    const double s = 2e-6;
    Eigen::MatrixXd A(125, 10);
    Eigen::VectorXd y(125);
    int row = 0;
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j)
        for (int k = -2; k <= 2; ++k) {
          const Vec3 d(i * s, j * s, k * s);
          A.row(row) << 1, d.x(), d.y(), d.z(), 0.5 * d.x() * d.x(), 0.5 * d.y() * d.y(),
              0.5 * d.z() * d.z(), d.x() * d.y(), d.x() * d.z(), d.y() * d.z();
          y(row) = potential_energy(cfg, a, r0 + d);
          ++row;
        }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    Mat3 fit;
    fit << c(4), c(7), c(8), c(7), c(5), c(9), c(8), c(9), c(6);
    CHECK((fit - h).cwiseAbs().maxCoeff() <= 0.01 * h.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("geometric factors are invariant under current scaling") {
  TrapConfig lo = no_gravity(), hi = no_gravity();
  lo.current_top = lo.current_bottom = 0.5;
  hi.current_top = hi.current_bottom = 1.5;
  const auto a = characterize(lo), b = characterize(hi);
  for (int i = 0; i < 3; ++i) CHECK(oracle::rel(a.zeta[i], b.zeta[i]) < 1e-4);
  CHECK(oracle::rel(3.0 * a.hot_field, b.hot_field) < 1e-12);
}

TEST_CASE("frequencies are linear in current without gravity") {
  TrapConfig one = no_gravity(), two = no_gravity();
  one.current_top = one.current_bottom = 0.6;
  two.current_top = two.current_bottom = 1.2;
  const auto a = characterize(one), b = characterize(two);
  for (int i = 0; i < 3; ++i) CHECK(oracle::rel(b.frequencies[i], 2.0 * a.frequencies[i]) < 1e-6);

  std::vector<double> currents;
  for (int k = 0; k < 16; ++k) currents.push_back(0.2 + 0.1 * k);
  const auto sweep = current_sweep(no_gravity(), currents);
  for (const auto& f : sweep.frequency_fits) {
    CHECK(f.r_squared > 0.9999);
    CHECK(std::abs(f.intercept) < 1e-3 * f.slope);
  }
  CHECK_THROWS_AS(current_sweep(no_gravity(), {0.5, 0.4}), InvalidArgument);
  CHECK_THROWS_AS(current_sweep(no_gravity(), {0.0, 0.4}), InvalidArgument);
}

TEST_CASE("gravity makes the low-current end nonlinear") {
  // 0.4 A and below cannot hold the particle against gravity at this gap
  CHECK_THROWS_AS(current_sweep(default_trap_config(), {0.4}), NoMinimumError);
  const std::vector<double> currents = {0.5, 0.7, 1.0};
  const auto g = current_sweep(default_trap_config(), currents);
  const auto z = current_sweep(no_gravity(), currents);
  std::vector<double> dev;
  for (std::size_t k = 0; k < currents.size(); ++k) {
    double d = 0.0;
    for (int i = 0; i < 3; ++i)
      d = std::max(d, oracle::rel(g.rows[k].result.frequencies[i], z.rows[k].result.frequencies[i]));
    dev.push_back(d);
  }
  MESSAGE("relative deviation with gravity at 0.5/0.7/1.0 A: " << dev[0] << " " << dev[1] << " " << dev[2]);
  CHECK(dev[0] > dev[1]);
  CHECK(dev[1] > dev[2]);
}

TEST_CASE("separation sweep: frequencies fall with separation, nonlinearly") {
  std::vector<double> d;
  for (int k = 0; k < 10; ++k) d.push_back(0.2e-3 + 0.2e-3 * k);
  const auto sweep = separation_sweep(no_gravity(), d);
  REQUIRE(sweep.rows.size() == d.size());
  for (std::size_t k = 1; k < d.size(); ++k)
    for (int i = 0; i < 3; ++i)
      CHECK(sweep.rows[k].result.frequencies[i] < sweep.rows[k - 1].result.frequencies[i]);
  // noise floor: f_z at d = 1.2 mm from Hessians at h and 2h
  TrapConfig cfg = no_gravity();
  const Assembly a = cfg.assembly();
  const auto& mid = sweep.rows[5].result;
  const Mat3 h1 = potential_hessian(cfg, a, mid.equilibrium, 1e-6);
  const Mat3 h2 = potential_hessian(cfg, a, mid.equilibrium, 2e-6);
  const double noise = std::max(0.5 * std::abs(h1(2, 2) - h2(2, 2)) / h1(2, 2), 1e-12) * mid.frequencies[2];
  for (std::size_t k = 1; k + 1 < d.size(); ++k) {
    const double d2 = sweep.rows[k + 1].result.frequencies[2] - 2 * sweep.rows[k].result.frequencies[2] +
                      sweep.rows[k - 1].result.frequencies[2];
    CHECK(std::abs(d2) > 5 * noise);
  }
  // with gravity, 1 A no longer levitates across the widest gaps
  CHECK_THROWS_AS(separation_sweep(default_trap_config(), {2.0e-3}), NoMinimumError);
}

TEST_CASE("breach current from the hotspot field") {
  CHECK(bc1_breach_current(0.350 / 1.7, 0.1735) == doctest::Approx(0.843).epsilon(0.001 / 0.843));
  CHECK(bc1_breach_current(0.350 / 1.7, 0.0) == 0.0);
  CHECK(bc1_breach_current(0.2, 0.2) == doctest::Approx(2 * bc1_breach_current(0.2, 0.1)).epsilon(1e-15));
  const double model = bc1_breach_current(default_trap_config(), 0.1735);
  CHECK(model > 0.0);
}

TEST_CASE("hotspot field at 1.7 A") {
  TrapConfig cfg = default_trap_config();
  cfg.current_top = cfg.current_bottom = 1.7;
  const double b = hot_field(cfg, cfg.assembly());
  MESSAGE("B_hot(1.7 A) = " << b << " T");
  CHECK(b == doctest::Approx(0.350).epsilon(0.40));
}

TEST_CASE("bore radius equal to the separation makes the x and y modes more alike") {
  const auto def = characterize(no_gravity());
  TrapConfig matched = no_gravity();
  matched.coil.core_r2 = matched.separation;
  const auto m = characterize(matched);
  const double split_def = std::abs(def.frequencies[0] - def.frequencies[1]) / def.frequencies[1];
  const double split_m = std::abs(m.frequencies[0] - m.frequencies[1]) / m.frequencies[1];
  MESSAGE("|fx - fy|/fy default " << split_def << ", r2 = d " << split_m);
  CHECK(split_m < split_def);
}

TEST_CASE("no trap without current") {
  TrapConfig cfg = default_trap_config();
  cfg.current_top = cfg.current_bottom = 0.0;
  CHECK_THROWS_AS(find_equilibrium(cfg), NoMinimumError);
}

#pragma once

#include "meissner/magnetics.hpp"
#include "meissner/vec.hpp"

#include <array>
#include <string>
#include <vector>

namespace meissner {

// Homogeneous superconducting sphere. Mass is density times volume.
class Particle {
 public:
  Particle() : Particle(25e-6, 8400.0) {}  // Sn63Pb37, 50 um diameter
  Particle(double radius, double density);

  double radius() const { return radius_; }
  double density() const { return density_; }
  double volume() const { return volume_; }
  double mass() const { return mass_; }

 private:
  double radius_;
  double density_;
  double volume_;
  double mass_;
};

// Two identical flux-concentrator coils facing each other across a gap,
// wired for opposite circulation. `coil` supplies geometry, turns and core
// state; placement, axis, slit orientation and current are set per side:
//   top:    axis -z, trap-facing face at z = +separation/2, slit = slit_direction
//   bottom: axis +z, trap-facing face at z = -separation/2,
//           slit = -slit_direction when anti-aligned, else slit_direction
// Equal positive currents on both sides give the anti-Helmholtz pair.
struct TrapConfig {
  FluxConcentratorCoil coil;
  double separation = 1.2e-3;
  bool anti_aligned_slits = true;
  double current_top = 1.0;
  double current_bottom = 1.0;
  double gravity = 9.81;  // m/s^2, acting along -z
  Particle particle;

  void validate() const;
  FluxConcentratorCoil top() const;
  FluxConcentratorCoil bottom() const;
  Assembly assembly() const;
  double mean_current() const { return 0.5 * (current_top + current_bottom); }
};

// Reference trap: Nb cores (l1 4.5 mm, l2 0.45 mm, r1 6.57 mm,
// r2 0.2 mm), 180-turn drive coils of 100 um wire, 1.2 mm gap, 1 A.
TrapConfig default_trap_config();
FluxConcentratorCoil default_concentrator();

// U(p) = 3 V |B(p)|^2 / (4 mu0) + m g p_z
double potential_energy(const TrapConfig& cfg, const Assembly& assembly, const Vec3& p);
double potential_energy(const TrapConfig& cfg, const Vec3& p);

struct EquilibriumResult {
  Vec3 position = Vec3::Zero();
  double energy = 0.0;
  int restarts_converged = 0;
};

EquilibriumResult find_equilibrium(const TrapConfig& cfg, const Assembly& assembly);
Vec3 find_equilibrium(const TrapConfig& cfg);

// Hessian of U by central differences at steps h and h/2 with one
// Richardson step.
Mat3 potential_hessian(const TrapConfig& cfg, const Assembly& assembly, const Vec3& p,
                       double h = 1e-6);

struct TrapCharacterization {
  Vec3 equilibrium = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();                 // J/m^2
  std::array<double, 3> frequencies{};          // Hz, labelled x, y, z
  std::array<Vec3, 3> mode_axes{};              // unit eigenvectors per label
  Mat3 field_jacobian = Mat3::Zero();           // dB_i/dx_j at r0, T/m
  std::array<double, 3> gradients{};            // |dB/dx_i| at r0, T/m
  std::array<double, 3> zeta{};                 // gradient * r2^2 / (mu0 N I)
  double hot_field = 0.0;                       // T, max over bore-edge probe rings
  double mean_current = 0.0;                    // A
  std::string zeta_definition;
};

TrapCharacterization characterize(const TrapConfig& cfg);

// Largest |B| on a 720-sample ring of radius r2 placed 10 um in front of each
// core's bore opening.
double hot_field(const TrapConfig& cfg, const Assembly& assembly);

struct SweepRow {
  double parameter = 0.0;  // current (A) or separation (m)
  TrapCharacterization result;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct SweepTable {
  std::vector<SweepRow> rows;
  std::array<LinearFit, 3> frequency_fits{};  // f_i against the swept parameter
};

// Both coils driven with each current in turn. `threads` = 0 uses the default.
SweepTable current_sweep(const TrapConfig& cfg, const std::vector<double>& currents,
                         unsigned threads = 0);
SweepTable separation_sweep(const TrapConfig& cfg, const std::vector<double>& separations,
                            unsigned threads = 0);

// Current at which the hotspot field reaches b_c1, using linearity in current.
double bc1_breach_current(double hot_field_per_ampere, double b_c1);
double bc1_breach_current(const TrapConfig& cfg, double b_c1);

// Key=value summary block.
std::string format_characterization(const TrapCharacterization& c);

}  // namespace meissner

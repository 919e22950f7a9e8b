#pragma once

#include "meissner/vec.hpp"

#include <span>
#include <variant>
#include <vector>

namespace meissner {

// Circular arc filament. Points are center + radius (cos t u + sin t v) with
// u = zero_direction, v = axis x u. Positive current flows toward increasing t,
// i.e. right-handed about `axis`.
struct CurrentArc {
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  Vec3 zero_direction = Vec3::UnitX();
  double radius = 1.0;
  double start_angle = 0.0;
  double end_angle = kTwoPi;
  double current = 0.0;

  bool is_full_circle() const;
  Vec3 point_at(double angle) const;
  void validate() const;
};

// Full loop about `axis` through `center`.
CurrentArc make_loop(const Vec3& center, const Vec3& axis, double radius, double current);

struct CurrentSegment {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::UnitZ();
  double current = 0.0;

  void validate() const;
};

using CurrentElement = std::variant<CurrentArc, CurrentSegment>;

// Multi-layer solenoid. Turns sit on a row-major lattice: axial positions fill
// a layer before moving to the next radial layer.
struct WoundCoil {
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double inner_radius = 1e-3;
  double outer_radius = 1e-3;
  double length = 1e-3;
  int turns = 1;
  double current = 0.0;

  void validate() const;
  // Number of radial layers and turns per layer of the winding lattice.
  int layers() const;
  int turns_per_layer() const;
  std::vector<CurrentArc> loops() const;
};

enum class CoreState { Normal, Superconducting };

// Drive coil wound on a slit superconducting core. The core is coaxial with
// and centered on the drive coil; its trap-facing face (where the narrow bore
// opens) lies at drive.center + core_l1/2 * drive.axis. The bore sheet spans
// core_l2 inward from that face and the outer sheet spans core_l1.
struct FluxConcentratorCoil {
  WoundCoil drive;
  double core_l1 = 4.5e-3;
  double core_l2 = 0.45e-3;
  double core_r1 = 6.57e-3;
  double core_r2 = 0.2e-3;
  Vec3 slit_direction = Vec3::UnitX();
  double slit_width = 0.2e-3;
  CoreState state = CoreState::Superconducting;
  int n_sheet = 16;

  void validate() const;
  Vec3 face_center() const;
  // Center of the inner bore sheet.
  Vec3 bore_center() const;
  double ampere_turns() const { return drive.turns * drive.current; }
};

using Source = std::variant<CurrentArc, CurrentSegment, WoundCoil, FluxConcentratorCoil>;

// Immutable collection of field sources. Construction expands coils and
// shielding paths into filaments once; evaluation is then read-only and safe
// to share across threads.
class Assembly {
 public:
  Assembly() = default;
  explicit Assembly(std::vector<Source> sources);

  const std::vector<Source>& sources() const { return sources_; }
  const std::vector<CurrentElement>& filaments() const { return filaments_; }
  bool empty() const { return filaments_.empty(); }

  // Same geometry with every current multiplied by `factor`.
  Assembly scaled(double factor) const;

 private:
  std::vector<Source> sources_;
  std::vector<CurrentElement> filaments_;
};

struct FieldJacobian {
  Mat3 dB_dx = Mat3::Zero();  // (i, j) = dB_i / dx_j in T/m
  Vec3 point = Vec3::Zero();
  double step = 0.0;
};

// Distance from p to the nearest point on the filament.
double distance_to(const CurrentSegment& seg, const Vec3& p);
double distance_to(const CurrentArc& arc, const Vec3& p);

Vec3 field_of_segment(const CurrentSegment& seg, const Vec3& p);
Vec3 field_of_arc(const CurrentArc& arc, const Vec3& p);
Vec3 field_of_element(const CurrentElement& element, const Vec3& p);

// Closed current loops equivalent to the superconducting core's shielding
// currents: per sheet filament, a bore arc carrying +N*I/n_sheet, an outer
// counter-circulating arc, and two slit legs joining them.
std::vector<CurrentElement> shielding_path(const FluxConcentratorCoil& fc);

Vec3 field_at(const Assembly& assembly, const Vec3& p);
Vec3 field_at(std::span<const CurrentElement> filaments, const Vec3& p);

inline constexpr double kDefaultJacobianStep = 1e-6;

// Central differences at steps h and h/2 combined by one Richardson step.
// Throws StepTooLargeError when the two estimates disagree by more than
// 1e-4 relative to the largest entry.
FieldJacobian field_jacobian(const Assembly& assembly, const Vec3& p,
                             double h = kDefaultJacobianStep);

// Solenoid-length estimate l1 / l2 of the amplification.
double length_ratio_estimate(double l1, double l2);

struct Amplification {
  double numerical = 0.0;     // |B_sc| / |B_normal| at the bore center
  double length_ratio = 0.0;  // core_l1 / core_l2
  double length_ratio_inverse = 0.0;  // core_l2 / core_l1
};

Amplification amplification_factor(const FluxConcentratorCoil& fc);

}  // namespace meissner

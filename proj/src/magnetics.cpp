#include "meissner/magnetics.hpp"

#include "meissner/errors.hpp"
#include "meissner/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace meissner {

namespace {

constexpr double kFilamentClearance = 1e-9;  // m
constexpr double kArcRelTol = 1e-10;
constexpr double kAxisSeriesThreshold = 1e-4;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_unit(const Vec3& v, double tol, const char* what) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > tol) {
    throw InvalidArgument(std::string(what) + " must be a unit vector");
  }
}

// Angle of `t` folded into [start, start + 2 pi).
double wrap_from(double t, double start) {
  double d = std::fmod(t - start, kTwoPi);
  if (d < 0.0) d += kTwoPi;
  return start + d;
}

// Field of a full loop in its local cylindrical frame: returns (B_rho, B_z).
std::pair<double, double> loop_field_local(double radius, double current, double rho,
                                           double z) {
  const double R = radius;
  const double s = R * R + z * z;
  if (rho < kAxisSeriesThreshold * std::sqrt(s)) {
    // Off-axis expansion of the on-axis field to fourth order in rho.
    const double C = 0.5 * kMu0 * current * R * R;
    const double bz = C * std::pow(s, -1.5) -
                      0.75 * rho * rho * C * std::pow(s, -3.5) * (4.0 * z * z - R * R);
    const double brho = 1.5 * C * rho * z * std::pow(s, -2.5) +
                        (15.0 / 16.0) * C * rho * rho * rho * z * std::pow(s, -4.5) *
                            (3.0 * R * R - 4.0 * z * z);
    return {brho, bz};
  }
  const double a2 = (R + rho) * (R + rho) + z * z;
  const double b2 = (R - rho) * (R - rho) + z * z;
  const double m = 4.0 * R * rho / a2;
  const auto [K, E] = elliptic_ke(m);
  const double pre = kMu0 * current / (2.0 * std::numbers::pi * std::sqrt(a2));
  const double bz = pre * (K + (R * R - rho * rho - z * z) / b2 * E);
  const double brho = pre * z / rho * (-K + (R * R + rho * rho + z * z) / b2 * E);
  return {brho, bz};
}

}  // namespace

// ---------------------------------------------------------------------------
// Element validation and geometry

bool CurrentArc::is_full_circle() const {
  return std::abs((end_angle - start_angle) - kTwoPi) <= 1e-12;
}

Vec3 CurrentArc::point_at(double angle) const {
  const Vec3 v = axis.cross(zero_direction);
  return center + radius * (std::cos(angle) * zero_direction + std::sin(angle) * v);
}

void CurrentArc::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("arc radius must be positive");
  }
  require_unit(axis, 1e-12, "arc axis");
  require_unit(zero_direction, 1e-12, "arc zero direction");
  if (std::abs(axis.dot(zero_direction)) > 1e-12) {
    throw InvalidArgument("arc zero direction must be perpendicular to the axis");
  }
  if (!(end_angle > start_angle) || end_angle - start_angle > kTwoPi + 1e-12) {
    throw InvalidArgument("arc angles must satisfy start < end <= start + 2 pi");
  }
  if (!center.allFinite() || !std::isfinite(current)) {
    throw InvalidArgument("arc center and current must be finite");
  }
}

CurrentArc make_loop(const Vec3& center, const Vec3& axis, double radius, double current) {
  CurrentArc arc;
  arc.center = center;
  arc.axis = axis.normalized();
  arc.zero_direction = perpendicular_to(arc.axis);
  arc.radius = radius;
  arc.start_angle = 0.0;
  arc.end_angle = kTwoPi;
  arc.current = current;
  return arc;
}

void CurrentSegment::validate() const {
  if (!start.allFinite() || !end.allFinite() || !std::isfinite(current)) {
    throw InvalidArgument("segment endpoints and current must be finite");
  }
  if ((end - start).norm() == 0.0) {
    throw InvalidArgument("segment start and end must differ");
  }
}

void WoundCoil::validate() const {
  require_unit(axis, 1e-9, "coil axis");
  if (!(inner_radius > 0.0) || !(outer_radius >= inner_radius)) {
    throw InvalidArgument("coil radii must satisfy outer >= inner > 0");
  }
  if (!(length > 0.0)) throw InvalidArgument("coil length must be positive");
  if (turns < 1) throw InvalidArgument("coil needs at least one turn");
}

int WoundCoil::layers() const {
  const double depth = outer_radius - inner_radius;
  if (depth <= 0.0) return 1;
  // Square wire pitch: layers / turns_per_layer ~ depth / length.
  const int n = static_cast<int>(std::lround(std::sqrt(turns * depth / length)));
  return std::clamp(n, 1, turns);
}

int WoundCoil::turns_per_layer() const {
  const int n = layers();
  return (turns + n - 1) / n;
}

std::vector<CurrentArc> WoundCoil::loops() const {
  validate();
  const int n_layers = layers();
  const int per_layer = turns_per_layer();
  const double dr = (outer_radius - inner_radius) / n_layers;
  const double dz = length / per_layer;
  const Vec3 n = axis.normalized();
  const Vec3 u = perpendicular_to(n);

  std::vector<CurrentArc> out;
  out.reserve(turns);
  for (int k = 0; k < turns; ++k) {
    const int layer = k / per_layer;
    const int row = k % per_layer;
    CurrentArc arc;
    arc.center = center + (-0.5 * length + (row + 0.5) * dz) * n;
    arc.axis = n;
    arc.zero_direction = u;
    arc.radius = inner_radius + (layer + 0.5) * dr;
    arc.current = current;
    out.push_back(arc);
  }
  return out;
}

void FluxConcentratorCoil::validate() const {
  drive.validate();
  if (!(core_l1 > core_l2 && core_l2 > 0.0)) {
    throw InvalidArgument("core lengths must satisfy l1 > l2 > 0");
  }
  if (!(core_r1 > core_r2 && core_r2 > 0.0)) {
    throw InvalidArgument("core radii must satisfy r1 > r2 > 0");
  }
  require_unit(slit_direction, 1e-9, "slit direction");
  if (std::abs(slit_direction.dot(drive.axis)) > 1e-9) {
    throw InvalidArgument("slit direction must be perpendicular to the coil axis");
  }
  if (!(slit_width >= 0.0 && slit_width < 2.0 * core_r2)) {
    throw InvalidArgument("slit width must lie in [0, 2 r2)");
  }
  if (n_sheet < 1) throw InvalidArgument("n_sheet must be at least 1");
}

Vec3 FluxConcentratorCoil::face_center() const {
  return drive.center + 0.5 * core_l1 * drive.axis.normalized();
}

Vec3 FluxConcentratorCoil::bore_center() const {
  return face_center() - 0.5 * core_l2 * drive.axis.normalized();
}

// ---------------------------------------------------------------------------
// Elementary fields

double distance_to(const CurrentSegment& seg, const Vec3& p) {
  const Vec3 d = seg.end - seg.start;
  const double t = std::clamp((p - seg.start).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (seg.start + t * d)).norm();
}

double distance_to(const CurrentArc& arc, const Vec3& p) {
  const Vec3 d = p - arc.center;
  const double z = d.dot(arc.axis);
  const Vec3 radial = d - z * arc.axis;
  const double rho = radial.norm();
  if (rho == 0.0) return std::hypot(arc.radius, z);
  const double circle = std::hypot(rho - arc.radius, z);
  if (arc.is_full_circle()) return circle;
  const Vec3 v = arc.axis.cross(arc.zero_direction);
  const double t = wrap_from(std::atan2(radial.dot(v), radial.dot(arc.zero_direction)),
                             arc.start_angle);
  if (t <= arc.end_angle) return circle;
  return std::min((p - arc.point_at(arc.start_angle)).norm(),
                  (p - arc.point_at(arc.end_angle)).norm());
}

Vec3 field_of_segment(const CurrentSegment& seg, const Vec3& p) {
  if (distance_to(seg, p) < kFilamentClearance) {
    throw SingularityError("field point lies on a straight current segment");
  }
  const Vec3 r1 = p - seg.start;
  const Vec3 r2 = p - seg.end;
  const double n1 = r1.norm();
  const double n2 = r2.norm();
  const Vec3 dl = seg.end - seg.start;
  const Vec3 c = dl.cross(r1);
  const double dot = r1.dot(r2);
  // n1 n2 + r1.r2 cancels beside the wire; use (n1 n2)^2 - (r1.r2)^2 = |r1 x r2|^2 there.
  const double sum = dot >= 0.0 ? n1 * n2 + dot : c.squaredNorm() / (n1 * n2 - dot);
  return (kMu0 * seg.current / (4.0 * std::numbers::pi) * (n1 + n2) / (n1 * n2 * sum)) * c;
}

Vec3 field_of_arc(const CurrentArc& arc, const Vec3& p) {
  if (distance_to(arc, p) < kFilamentClearance) {
    throw SingularityError("field point lies on a current arc");
  }
  if (arc.current == 0.0) return Vec3::Zero();

  if (arc.is_full_circle()) {
    const Vec3 d = p - arc.center;
    const double z = d.dot(arc.axis);
    const Vec3 radial = d - z * arc.axis;
    const double rho = radial.norm();
    const auto [brho, bz] = loop_field_local(arc.radius, arc.current, rho, z);
    Vec3 b = bz * arc.axis;
    if (rho > 0.0) b += brho * (radial / rho);
    return b;
  }

  const Vec3 u = arc.zero_direction;
  const Vec3 v = arc.axis.cross(u);
  const double R = arc.radius;
  auto integrand = [&](double t) -> Vec3 {
    const double c = std::cos(t);
    const double s = std::sin(t);
    const Vec3 q = arc.center + R * (c * u + s * v);
    const Vec3 dl = R * (-s * u + c * v);
    const Vec3 r = p - q;
    const double rn = r.norm();
    return dl.cross(r) / (rn * rn * rn);
  };
  const double scale = kMu0 * arc.current / (4.0 * std::numbers::pi);
  const double abs_floor = 1e-16 / R;
  const auto result = integrate_adaptive<Vec3>(integrand, arc.start_angle, arc.end_angle,
                                               kArcRelTol, abs_floor);
  return scale * result.value;
}

Vec3 field_of_element(const CurrentElement& element, const Vec3& p) {
  return std::visit(
      Overloaded{[&](const CurrentArc& a) { return field_of_arc(a, p); },
                 [&](const CurrentSegment& s) { return field_of_segment(s, p); }},
      element);
}

// ---------------------------------------------------------------------------
// Shielding currents

std::vector<CurrentElement> shielding_path(const FluxConcentratorCoil& fc) {
  fc.validate();
  const Vec3 n = fc.drive.axis.normalized();
  const Vec3 s = fc.slit_direction.normalized();
  const Vec3 face = fc.face_center();
  const double filament_current = fc.ampere_turns() / fc.n_sheet;
  const double inner_gap = std::asin(0.5 * fc.slit_width / fc.core_r2);
  const double outer_gap = std::asin(0.5 * fc.slit_width / fc.core_r1);

  std::vector<CurrentElement> out;
  out.reserve(4 * static_cast<std::size_t>(fc.n_sheet));
  for (int k = 0; k < fc.n_sheet; ++k) {
    const double frac = (k + 0.5) / fc.n_sheet;
    CurrentArc inner;
    inner.center = face - frac * fc.core_l2 * n;
    inner.axis = n;
    inner.zero_direction = s;
    inner.radius = fc.core_r2;
    inner.start_angle = inner_gap;
    inner.end_angle = kTwoPi - inner_gap;
    inner.current = filament_current;

    CurrentArc outer = inner;
    outer.center = face - frac * fc.core_l1 * n;
    outer.radius = fc.core_r1;
    outer.start_angle = outer_gap;
    outer.end_angle = kTwoPi - outer_gap;
    outer.current = -filament_current;

    // Leg out of the bore on the -slit-normal side, back in on the + side.
    const CurrentSegment leg_out{inner.point_at(-inner_gap), outer.point_at(-outer_gap),
                                 filament_current};
    const CurrentSegment leg_in{outer.point_at(outer_gap), inner.point_at(inner_gap),
                                filament_current};
    out.emplace_back(inner);
    out.emplace_back(leg_out);
    out.emplace_back(outer);
    out.emplace_back(leg_in);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assemblies

Assembly::Assembly(std::vector<Source> sources) : sources_(std::move(sources)) {
  for (const auto& source : sources_) {
    std::visit(Overloaded{
                   [&](const CurrentArc& a) {
                     a.validate();
                     filaments_.emplace_back(a);
                   },
                   [&](const CurrentSegment& s) {
                     s.validate();
                     filaments_.emplace_back(s);
                   },
                   [&](const WoundCoil& c) {
                     for (auto& loop : c.loops()) filaments_.emplace_back(loop);
                   },
                   [&](const FluxConcentratorCoil& fc) {
                     fc.validate();
                     for (auto& loop : fc.drive.loops()) filaments_.emplace_back(loop);
                     if (fc.state == CoreState::Superconducting) {
                       for (auto& e : shielding_path(fc)) filaments_.push_back(e);
                     }
                   }},
               source);
  }
}

Assembly Assembly::scaled(double factor) const {
  std::vector<Source> copy = sources_;
  for (auto& source : copy) {
    std::visit(Overloaded{[&](CurrentArc& a) { a.current *= factor; },
                          [&](CurrentSegment& s) { s.current *= factor; },
                          [&](WoundCoil& c) { c.current *= factor; },
                          [&](FluxConcentratorCoil& fc) { fc.drive.current *= factor; }},
               source);
  }
  return Assembly(std::move(copy));
}

Vec3 field_at(std::span<const CurrentElement> filaments, const Vec3& p) {
  Vec3 b = Vec3::Zero();
  for (const auto& f : filaments) b += field_of_element(f, p);
  return b;
}

Vec3 field_at(const Assembly& assembly, const Vec3& p) {
  return field_at(std::span<const CurrentElement>(assembly.filaments()), p);
}

FieldJacobian field_jacobian(const Assembly& assembly, const Vec3& p, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  for (const auto& f : assembly.filaments()) {
    const double d = std::visit([&](const auto& e) { return distance_to(e, p); }, f);
    if (d < 2.0 * h) {
      throw SingularityError("finite-difference stencil intersects a current filament");
    }
  }
  Mat3 coarse;
  Mat3 fine;
  for (int j = 0; j < 3; ++j) {
    const Vec3 e = Vec3::Unit(j);
    coarse.col(j) = (field_at(assembly, p + h * e) - field_at(assembly, p - h * e)) / (2.0 * h);
    fine.col(j) = (field_at(assembly, p + 0.5 * h * e) - field_at(assembly, p - 0.5 * h * e)) / h;
  }
  FieldJacobian out;
  out.dB_dx = (4.0 * fine - coarse) / 3.0;
  out.point = p;
  out.step = h;
  const double scale = out.dB_dx.cwiseAbs().maxCoeff();
  if (scale > 0.0 && (fine - coarse).cwiseAbs().maxCoeff() > 1e-4 * scale) {
    throw StepTooLargeError("Richardson estimates disagree; reduce the step");
  }
  return out;
}

double length_ratio_estimate(double l1, double l2) {
  if (!(l1 > 0.0) || !(l2 > 0.0)) throw InvalidArgument("core lengths must be positive");
  return l1 / l2;
}

Amplification amplification_factor(const FluxConcentratorCoil& fc) {
  fc.validate();
  FluxConcentratorCoil sc = fc;
  if (sc.drive.current == 0.0) sc.drive.current = 1.0;
  sc.state = CoreState::Superconducting;
  FluxConcentratorCoil normal = sc;
  normal.state = CoreState::Normal;
  const Vec3 probe = sc.bore_center();
  const double b_sc = field_at(Assembly({sc}), probe).norm();
  const double b_normal = field_at(Assembly({normal}), probe).norm();
  Amplification out;
  out.numerical = b_sc / b_normal;
  out.length_ratio = length_ratio_estimate(fc.core_l1, fc.core_l2);
  out.length_ratio_inverse = length_ratio_estimate(fc.core_l2, fc.core_l1);
  return out;
}

}  // namespace meissner

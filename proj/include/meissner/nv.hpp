#pragma once

#include "meissner/vec.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace meissner::nv {

using Mat3c = Eigen::Matrix3cd;

// Ground-state spin Hamiltonian parameters, in frequency units (H / h).
struct ZeemanModel {
  double D = 2.877e9;     // zero-field splitting, Hz
  double gamma = 2.8e10;  // gyromagnetic ratio, Hz/T

  void validate() const;
};

// Spin-1 matrices in the |+1>, |0>, |-1> basis.
struct SpinOperators {
  Mat3c Sx;
  Mat3c Sy;
  Mat3c Sz;
};

const SpinOperators& spin_one();

// H/h = D Sz^2 + gamma (Bx Sx + By Sy + Bz Sz), with B in the NV frame.
Mat3c hamiltonian(const ZeemanModel& zm, const Vec3& b_nv);

struct HermitianEigen {
  Eigen::Vector3d values;  // ascending
  Mat3c vectors;           // columns
  int sweeps = 0;
};

// Cyclic complex Jacobi rotations until the off-diagonal Frobenius norm is
// below rel_tol * ||H||_F.
HermitianEigen jacobi_eigen(const Mat3c& h, double rel_tol = 1e-12);

struct TransitionPair {
  double lower = 0.0;  // Hz
  double upper = 0.0;  // Hz
  double splitting() const { return upper - lower; }
};

// Transition frequencies out of the eigenstate with the largest |0>
// character, for a lab-frame field and an NV orientation (unit vector).
// Only the field magnitude and its angle to the NV axis enter.
TransitionPair transition_frequencies(const ZeemanModel& zm, const Vec3& b_lab,
                                      const Vec3& orientation);

// Four NV orientations of a (100)-cut crystal, lab z along the surface
// normal and lab x along [100]: the tetrahedral <111> bond directions.
struct DiamondCut100 {
  std::array<Vec3, 4> orientations;

  DiamondCut100();
};

// Equal-projection angle between a (100) surface normal and every NV axis.
double magic_angle();

struct ODMRSpectrum {
  std::vector<double> frequencies;  // Hz, strictly ascending
  std::vector<double> signal;       // normalized fluorescence
  double linewidth = 0.0;           // Hz FWHM used to synthesize (0 if unknown)
  double contrast = 0.0;

  void validate() const;
};

std::vector<double> linear_grid(double start, double stop, std::size_t count);

// signal(f) = 1 - sum over orientations and transitions of
// weight * contrast / 8 * L(f), L a unit-peak Lorentzian of FWHM linewidth.
// `weights` (one per orientation) default to 1.
ODMRSpectrum odmr_forward(const ZeemanModel& zm, const Vec3& b_lab, const DiamondCut100& cut,
                          double linewidth, double contrast, const std::vector<double>& grid,
                          const std::optional<std::array<double, 4>>& weights = std::nullopt);

ODMRSpectrum with_gaussian_noise(ODMRSpectrum spectrum, double sigma, std::uint64_t seed);

struct ODMRLine {
  double center = 0.0;  // Hz
  double fwhm = 0.0;    // Hz
  double depth = 0.0;   // fraction of baseline
  double center_err = 0.0;
  double fwhm_err = 0.0;
  double depth_err = 0.0;
};

struct DipCandidate {
  std::size_t index = 0;
  double prominence = 0.0;
};

// Local minima of the lightly smoothed signal lying more than 3 sigma below
// the baseline, ranked by prominence (largest first).
std::vector<DipCandidate> detect_dips(const ODMRSpectrum& spec);

// Sum-of-Lorentzians least-squares fit. Lines are returned sorted by center.
// Throws FewerDipsError when detection finds fewer than n_dips dips and
// FitError when the optimizer does not converge.
std::vector<ODMRLine> fit_lorentzians(const ODMRSpectrum& spec, int n_dips);

struct FieldEstimate {
  double magnitude = 0.0;             // T
  std::optional<Vec3> vector;         // T, representative with B_z >= 0
  std::vector<double> residuals;      // Hz, observed - model
  double uncertainty = 0.0;           // T
};

// Field magnitude B0 such that B0 (sin t, 0, cos t) reproduces f_upper - f_lower
// in an NV frame. Default angle is the (100)-cut equal-projection angle.
FieldEstimate invert_field_magnitude(const ZeemanModel& zm, double f_lower, double f_upper,
                                     double theta = magic_angle(), double splitting_sigma = 0.0);

struct ObservedTransition {
  double frequency = 0.0;  // Hz
  int orientation = 0;     // index into DiamondCut100::orientations
};

// Least-squares field vector from labelled transitions, multi-started from
// the eight octants. ODMR is even in B, so the returned vector has B_z >= 0.
FieldEstimate reconstruct_field_vector(const ZeemanModel& zm, const DiamondCut100& cut,
                                       const std::vector<ObservedTransition>& transitions);

double rabi_rate(const ZeemanModel& zm, double b1);

// Additive box-broadening: base + gamma |dB/dz| dz.
double gradient_broadened_linewidth(double base, double dbdz, double dz, double gamma);

// Confocal axial resolution 2 n lambda / NA^2.
double axial_resolution(double refractive_index, double wavelength, double numerical_aperture);

// Field magnitude from one spectrum: the outermost fitted dip pair inverted at
// `theta`. A spectrum with a single resolvable dip gives zero field.
FieldEstimate magnitude_from_spectrum(const ZeemanModel& zm, const ODMRSpectrum& spec,
                                      int max_dips = 2, double theta = magic_angle());

}  // namespace meissner::nv

#ifndef USC_PHANTOM_HPP
#define USC_PHANTOM_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "usc/signal.hpp"

namespace usc {

/// Linear array along x, centered at the origin, elements at z = 0.
struct ArrayGeometry {
  std::vector<double> element_x_m;  // strictly increasing
  double element_width_m = 2.2e-4;
  double c_mps = 1540.0;
  double fs_hz = 16.0e6;
  double f0_hz = 3.5e6;

  int n_elements() const { return static_cast<int>(element_x_m.size()); }
  double wavelength_m() const { return c_mps / f0_hz; }
  /// Active aperture width, outermost edge to edge.
  double aperture_m() const;
  std::uint64_t hash() const;

  static ArrayGeometry uniform(int n_elements, double pitch_m, double element_width_m,
                               double c_mps, double fs_hz, double f0_hz);
};

/// Optional per-scatterer corruption of the echo pulse.
struct PulseCorruption {
  double freq_shift_hz = 0.0;
  double phase_rad = 0.0;
};

struct Scatterer {
  double x_m = 0.0;
  double y_m = 0.0;
  double z_m = 0.0;
  double amplitude = 0.0;
  std::optional<PulseCorruption> corruption;
};

struct Phantom {
  std::vector<Scatterer> scatterers;
  // Index of the first strong reflector; scatterers before it are speckle.
  std::size_t first_reflector = 0;

  Phantom speckle_only() const;
  Phantom reflectors_only() const;
};

struct RegionBox {
  double x_half_m = 9.0e-3;
  double y_half_m = 5.0e-3;
  double z_center_m = 70.0e-3;
  double z_half_m = 14.0e-3;
};

struct ReflectorSpec {
  double x_m = 0.0;
  double y_m = 0.0;
  double z_m = 0.0;
  double gain = 50.0;  // amplitude = gain * speckle amplitude std
  std::optional<PulseCorruption> corruption;
};

struct PointPhantomConfig {
  int speckle_count = 100000;
  RegionBox box;
  double amplitude_std = 1.0;
  std::vector<ReflectorSpec> reflectors;
  std::uint64_t seed = 0;
};

struct CystPhantomConfig {
  int speckle_count = 100000;
  RegionBox box;
  double amplitude_std = 1.0;
  double cyst_center_x_m = 0.0;
  double cyst_center_z_m = 70.0e-3;
  double cyst_radius_m = 8.5e-3;
  std::vector<ReflectorSpec> reflectors{{8.6e-3, 0.0, 70.0e-3, 100.0, std::nullopt}};
  std::uint64_t seed = 0;
};

/// Speckle uniform in the box with Normal(0, std) amplitudes, strong
/// reflectors appended with amplitude gain * std.
Phantom make_point_phantom(const PointPhantomConfig& cfg);

/// Point phantom with a circular void (x-z plane) carved out of the speckle.
Phantom make_cyst_phantom(const CystPhantomConfig& cfg);

/// Per-line, per-element sampled channel data.
struct RawFrame {
  ArrayGeometry geometry;
  std::vector<double> line_angles_rad;
  int n_samples = 0;
  // [line][element][sample], row-major.
  std::vector<double> channels;

  int n_lines() const { return static_cast<int>(line_angles_rad.size()); }
  double* channel(int line, int element);
  const double* channel(int line, int element) const;
  SampledSignal channel_signal(int line, int element) const;
  Eigen::MatrixXd line_matrix(int line) const;  // M x N
};

/// Far-field |sinc| transmit beam profile at angle psi off the line axis.
double beam_profile(double psi_rad, double aperture_m, double wavelength_m);

/// Synthesizes receive channel data by superposing delayed, attenuated pulse
/// echoes: a scatterer at range r contributes a pulse at r/c + r_m/c on
/// element m, weighted by the transmit beam profile and 1/r spreading.
RawFrame simulate_rx(const Phantom& phantom, const ArrayGeometry& geometry,
                     const std::vector<double>& line_angles_rad,
                     const PulseModel& pulse, int n_samples);

}  // namespace usc

#endif

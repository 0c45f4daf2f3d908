#include "usc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace usc {

double ArrayGeometry::aperture_m() const {
  if (element_x_m.empty()) return 0.0;
  return element_x_m.back() - element_x_m.front() + element_width_m;
}

std::uint64_t ArrayGeometry::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = hash_combine(h, std::span<const double>(element_x_m));
  h = hash_combine(h, element_width_m);
  h = hash_combine(h, c_mps);
  h = hash_combine(h, fs_hz);
  h = hash_combine(h, f0_hz);
  return h;
}

ArrayGeometry ArrayGeometry::uniform(int n_elements, double pitch_m,
                                     double element_width_m, double c_mps,
                                     double fs_hz, double f0_hz) {
  if (n_elements < 1) throw InvalidParameter("ArrayGeometry: n_elements must be >= 1");
  if (pitch_m <= 0.0 || c_mps <= 0.0 || fs_hz <= 0.0 || f0_hz <= 0.0)
    throw InvalidParameter("ArrayGeometry: pitch, c, fs, f0 must be > 0");
  ArrayGeometry g;
  g.element_width_m = element_width_m;
  g.c_mps = c_mps;
  g.fs_hz = fs_hz;
  g.f0_hz = f0_hz;
  g.element_x_m.resize(static_cast<std::size_t>(n_elements));
  const double offset = 0.5 * (n_elements - 1) * pitch_m;
  for (int m = 0; m < n_elements; ++m)
    g.element_x_m[static_cast<std::size_t>(m)] = m * pitch_m - offset;
  return g;
}

Phantom Phantom::speckle_only() const {
  Phantom p;
  p.scatterers.assign(scatterers.begin(),
                      scatterers.begin() + static_cast<std::ptrdiff_t>(first_reflector));
  p.first_reflector = p.scatterers.size();
  return p;
}

Phantom Phantom::reflectors_only() const {
  Phantom p;
  p.scatterers.assign(scatterers.begin() + static_cast<std::ptrdiff_t>(first_reflector),
                      scatterers.end());
  p.first_reflector = 0;
  return p;
}

namespace {

void draw_speckle(Phantom& p, const RegionBox& box, int count, double amplitude_std,
                  std::mt19937_64& rng) {
  if (count > 0 && (box.x_half_m <= 0.0 || box.z_half_m <= 0.0))
    throw InvalidParameter("phantom: empty region box");
  std::uniform_real_distribution<double> ux(-box.x_half_m, box.x_half_m);
  std::uniform_real_distribution<double> uy(-box.y_half_m, box.y_half_m);
  std::uniform_real_distribution<double> uz(box.z_center_m - box.z_half_m,
                                            box.z_center_m + box.z_half_m);
  std::normal_distribution<double> amp(0.0, amplitude_std);
  for (int i = 0; i < count; ++i) {
    Scatterer s;
    s.x_m = ux(rng);
    s.y_m = box.y_half_m > 0.0 ? uy(rng) : 0.0;
    s.z_m = uz(rng);
    s.amplitude = amp(rng);
    p.scatterers.push_back(s);
  }
}

void append_reflectors(Phantom& p, const std::vector<ReflectorSpec>& specs,
                       double amplitude_std) {
  p.first_reflector = p.scatterers.size();
  for (const ReflectorSpec& r : specs) {
    Scatterer s;
    s.x_m = r.x_m;
    s.y_m = r.y_m;
    s.z_m = r.z_m;
    s.amplitude = r.gain * amplitude_std;
    s.corruption = r.corruption;
    p.scatterers.push_back(s);
  }
}

}  // namespace

Phantom make_point_phantom(const PointPhantomConfig& cfg) {
  Phantom p;
  std::mt19937_64 rng = substream_rng(cfg.seed, "phantom");
  draw_speckle(p, cfg.box, cfg.speckle_count, cfg.amplitude_std, rng);
  append_reflectors(p, cfg.reflectors, cfg.amplitude_std);
  for (const Scatterer& s : p.scatterers)
    if (s.z_m <= 0.0) throw InvalidParameter("phantom: scatterer z must be > 0");
  return p;
}

Phantom make_cyst_phantom(const CystPhantomConfig& cfg) {
  for (const ReflectorSpec& r : cfg.reflectors) {
    const double d = std::hypot(r.x_m - cfg.cyst_center_x_m, r.z_m - cfg.cyst_center_z_m);
    if (d < cfg.cyst_radius_m)
      throw InvalidParameter("make_cyst_phantom: reflector inside cyst");
  }
  Phantom p;
  std::mt19937_64 rng = substream_rng(cfg.seed, "phantom");
  draw_speckle(p, cfg.box, cfg.speckle_count, cfg.amplitude_std, rng);
  // Carve the cyst: drop speckle inside the disc (x-z plane).
  std::erase_if(p.scatterers, [&](const Scatterer& s) {
    return std::hypot(s.x_m - cfg.cyst_center_x_m, s.z_m - cfg.cyst_center_z_m) <
           cfg.cyst_radius_m;
  });
  append_reflectors(p, cfg.reflectors, cfg.amplitude_std);
  for (const Scatterer& s : p.scatterers)
    if (s.z_m <= 0.0) throw InvalidParameter("phantom: scatterer z must be > 0");
  return p;
}

double* RawFrame::channel(int line, int element) {
  const int m = geometry.n_elements();
  return channels.data() +
         (static_cast<std::size_t>(line) * m + element) * static_cast<std::size_t>(n_samples);
}

const double* RawFrame::channel(int line, int element) const {
  const int m = geometry.n_elements();
  return channels.data() +
         (static_cast<std::size_t>(line) * m + element) * static_cast<std::size_t>(n_samples);
}

SampledSignal RawFrame::channel_signal(int line, int element) const {
  const double* p = channel(line, element);
  SampledSignal s;
  s.samples.assign(p, p + n_samples);
  s.fs_hz = geometry.fs_hz;
  s.t0_s = 0.0;
  return s;
}

Eigen::MatrixXd RawFrame::line_matrix(int line) const {
  const int m = geometry.n_elements();
  Eigen::MatrixXd out(m, n_samples);
  for (int e = 0; e < m; ++e) {
    const double* p = channel(line, e);
    for (int n = 0; n < n_samples; ++n) out(e, n) = p[n];
  }
  return out;
}

double beam_profile(double psi_rad, double aperture_m, double wavelength_m) {
  const double x = std::numbers::pi * aperture_m * std::sin(psi_rad) / wavelength_m;
  if (std::abs(x) < 1e-12) return 1.0;
  return std::abs(std::sin(x) / x);
}

RawFrame simulate_rx(const Phantom& phantom, const ArrayGeometry& geometry,
                     const std::vector<double>& line_angles_rad,
                     const PulseModel& pulse, int n_samples) {
  if (n_samples < 1) throw InvalidParameter("simulate_rx: n_samples must be >= 1");
  for (const Scatterer& s : phantom.scatterers)
    if (s.z_m <= 0.0) throw InvalidParameter("simulate_rx: scatterer behind array (z <= 0)");

  const int n_lines = static_cast<int>(line_angles_rad.size());
  const int m_count = geometry.n_elements();

  RawFrame frame;
  frame.geometry = geometry;
  frame.line_angles_rad = line_angles_rad;
  frame.n_samples = n_samples;
  frame.channels.assign(
      static_cast<std::size_t>(n_lines) * m_count * static_cast<std::size_t>(n_samples), 0.0);

  const double aperture = geometry.aperture_m();
  const double lambda = geometry.wavelength_m();
  const SignalGrid grid{n_samples, geometry.fs_hz, 0.0};

#pragma omp parallel for collapse(2) schedule(dynamic)
  for (int l = 0; l < n_lines; ++l) {
    for (int m = 0; m < m_count; ++m) {
      std::vector<double> acc(static_cast<std::size_t>(n_samples), 0.0);
      const double theta = line_angles_rad[static_cast<std::size_t>(l)];
      const double dx = geometry.element_x_m[static_cast<std::size_t>(m)];
      for (const Scatterer& s : phantom.scatterers) {
        const double r = std::sqrt(s.x_m * s.x_m + s.y_m * s.y_m + s.z_m * s.z_m);
        const double psi = std::atan2(s.x_m, s.z_m) - theta;
        const double w = beam_profile(psi, aperture, lambda);
        if (w == 0.0) continue;
        const double rm = std::sqrt((s.x_m - dx) * (s.x_m - dx) + s.y_m * s.y_m +
                                    s.z_m * s.z_m);
        const double t_arrival = (r + rm) / geometry.c_mps;
        PulseModel echo = pulse;
        if (s.corruption) {
          echo.carrier_hz += s.corruption->freq_shift_hz;
          echo.phase_rad += s.corruption->phase_rad;
        }
        add_pulse(acc, grid, echo, t_arrival, s.amplitude * w / r);
      }
      double* dst = frame.channel(l, m);
      for (int n = 0; n < n_samples; ++n) dst[n] = acc[static_cast<std::size_t>(n)];
    }
  }
  return frame;
}

}  // namespace usc

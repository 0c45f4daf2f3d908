#ifndef USC_DECOMPOSE_HPP
#define USC_DECOMPOSE_HPP

#include <complex>
#include <vector>

#include "usc/phantom.hpp"
#include "usc/signal.hpp"

namespace usc {

/// One detected strong reflection. For the STFT path the subtracted pulse is
///   amp_cos * h(t - delay; f0 + shift, phase0) + amp_sin * h(..., phase0 - pi/2)
/// i.e. (amp_cos, amp_sin) is the quadrature decomposition of the complex
/// amplitude. For the IQ path they are the Gaussian-envelope amplitudes
/// (a_I, a_Q) and freq_shift_hz is zero.
struct ReflectorPulse {
  double amp_cos = 0.0;
  double amp_sin = 0.0;
  double delay_s = 0.0;
  double freq_shift_hz = 0.0;
  bool propagated = false;  // subtracted via cross-sensor/cross-line adjustment

  std::complex<double> amplitude() const { return {amp_cos, -amp_sin}; }
  double magnitude() const { return std::hypot(amp_cos, amp_sin); }
};

enum class DecomposeMethod { kStft, kIq };

struct DecompositionConfig {
  DecomposeMethod method = DecomposeMethod::kStft;
  int max_pulses = 20;         // L
  double amp_threshold = 0.0;  // epsilon0; <= 0 selects 4 x median(|envelope|)
  bool modified = false;
  int local_max_window = 3;    // samples, modified variant
  int window_len = 64;         // STFT analysis window (Hann)
  int hop = 16;
};

struct DecompositionResult {
  DecomposeMethod method = DecomposeMethod::kStft;
  std::vector<ReflectorPulse> reflectors;
  SampledSignal background_rf;   // STFT path
  BasebandSignal background_iq;  // IQ path
  int iterations_used = 0;
  double threshold_used = 0.0;
  // Residual sup norm before each accepted iteration plus the final one.
  std::vector<double> residual_history;
  int skipped_propagations = 0;  // degenerate range inversions (modified)

  int own_detections() const;
};

/// Greedy time-frequency separation: repeatedly locate the strongest
/// time-frequency peak, fit the pulse signature around it (sub-hop delay from
/// the phase slope, quadrature amplitudes by least squares) and subtract its
/// exact STFT. Background is the inverse STFT of the final residual.
DecompositionResult stft_decompose(const SampledSignal& y, const PulseModel& pulse,
                                   const DecompositionConfig& cfg);

/// Baseband variant: locate the envelope peak, least-squares fit a Gaussian
/// envelope on a +-3 sigma support to I and Q individually, subtract.
DecompositionResult iq_decompose(const BasebandSignal& y, const PulseModel& pulse,
                                 const DecompositionConfig& cfg);

/// Rebuilds the strong-reflector component subtracted by stft_decompose.
SampledSignal reconstruct_reflectors_rf(const std::vector<ReflectorPulse>& reflectors,
                                        const PulseModel& pulse, const SignalGrid& grid);

/// Rebuilds the strong-reflector component subtracted by iq_decompose.
BasebandSignal reconstruct_reflectors_iq(const std::vector<ReflectorPulse>& reflectors,
                                         const PulseModel& pulse, const BasebandSignal& like);

struct FrameDecomposition {
  int n_lines = 0;
  int n_elements = 0;
  std::vector<DecompositionResult> results;  // [line * M + element]

  DecompositionResult& at(int line, int element) {
    return results[static_cast<std::size_t>(line) * n_elements + element];
  }
  const DecompositionResult& at(int line, int element) const {
    return results[static_cast<std::size_t>(line) * n_elements + element];
  }
};

/// Cross-sensor/cross-line variant: per line, runs the base method per
/// sensor, then for every detected pulse adjusts its delay to all sensors of
/// the line and its neighbors and subtracts there whenever the residual
/// envelope has a local maximum at the expected arrival, regardless of the
/// threshold. Lines are swept in order; edge lines use available neighbors.
FrameDecomposition modified_decompose(const RawFrame& frame, const PulseModel& pulse,
                                      const DecompositionConfig& cfg);

/// Runs the configured variant over a whole frame (base methods per signal,
/// or the modified sweep when cfg.modified is set).
FrameDecomposition decompose_frame(const RawFrame& frame, const PulseModel& pulse,
                                   const DecompositionConfig& cfg);

/// Expected arrival time at a sensor of an echo from range r on direction
/// theta: t = r/c + sqrt((r cos)^2 + (r sin - dx)^2) / c.
double expected_arrival_s(double range_m, double theta_rad, double element_x_m,
                          double c_mps);

/// Inverts an arrival time back to a range along theta. Returns false when
/// the denominator c*t - dx*sin(theta) is degenerate (<= 0).
bool invert_arrival_to_range(double t_s, double theta_rad, double element_x_m,
                             double c_mps, double* range_m);

}  // namespace usc

#endif

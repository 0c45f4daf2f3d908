#ifndef USC_SIGNAL_HPP
#define USC_SIGNAL_HPP

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "usc/common.hpp"

namespace usc {

/// Known transmit pulse h(t): Gaussian-enveloped sinusoid.
struct PulseModel {
  double carrier_hz = 3.5e6;
  double envelope_sigma_s = 1.0 / 3.5e6;
  double phase_rad = 0.0;
  double amplitude = 1.0;  // dimensionless reference
};

/// Sampling layout of a real signal: N samples at fs starting at t0.
struct SignalGrid {
  int n_samples = 0;
  double fs_hz = 0.0;
  double t0_s = 0.0;

  double time_at(int n) const { return t0_s + n / fs_hz; }
};

/// Uniformly sampled real signal.
struct SampledSignal {
  std::vector<double> samples;
  double fs_hz = 0.0;
  double t0_s = 0.0;

  int size() const { return static_cast<int>(samples.size()); }
  double time_at(int n) const { return t0_s + n / fs_hz; }
  SignalGrid grid() const { return {size(), fs_hz, t0_s}; }
};

/// STFT coefficients, frames x bins, half spectrum (bins = window_len/2 + 1).
struct TfGrid {
  Eigen::MatrixXcd values;
  int window_len = 0;
  int hop = 0;
  double fs_hz = 0.0;
  // Inversion metadata: original sample count, left zero-pad, signal start time.
  int n_samples = 0;
  int pad_left = 0;
  double t0_s = 0.0;

  int n_frames() const { return static_cast<int>(values.rows()); }
  int n_bins() const { return static_cast<int>(values.cols()); }
  /// Time of the first sample of frame m, on the original signal's clock.
  double frame_start_s(int m) const {
    return t0_s + (m * hop - pad_left) / fs_hz;
  }
  /// Max |value| over the grid.
  double max_abs() const;
};

/// Complex baseband signal I(t) + jQ(t) demodulated at carrier_hz.
struct BasebandSignal {
  std::vector<double> i_samples;
  std::vector<double> q_samples;
  double fs_hz = 0.0;
  double carrier_hz = 0.0;
  double t0_s = 0.0;

  int size() const { return static_cast<int>(i_samples.size()); }
  double time_at(int n) const { return t0_s + n / fs_hz; }
  /// sqrt(I^2 + Q^2) per sample.
  std::vector<double> envelope() const;
};

// Pulses are rendered on a finite support; beyond this many sigmas the
// Gaussian tail is below 1e-14 and is truncated.
inline constexpr double kPulseSupportSigmas = 8.0;

/// h(t) = a * exp(-(t-d)^2 / (2 sigma^2)) * cos(2 pi f0 (t-d) + phase),
/// sampled on the grid. Truncated silently outside the grid.
SampledSignal render_pulse(const PulseModel& model, double delay_s,
                           double amplitude, const SignalGrid& grid);

/// Accumulating form of render_pulse, restricted to the pulse support.
void add_pulse(std::vector<double>& samples, const SignalGrid& grid,
               const PulseModel& model, double delay_s, double amplitude);

/// Gaussian envelope g(t - delay) with unit peak, accumulated over +-support.
void add_envelope(std::vector<double>& samples, const SignalGrid& grid,
                  double sigma_s, double delay_s, double amplitude,
                  double support_sigmas = kPulseSupportSigmas);

std::vector<double> hann_window(int len);

/// Hann-analysis STFT with zero padding of one window at each end.
/// Requires window_len % hop == 0 and window_len / hop >= 2 (COLA).
TfGrid stft(const SampledSignal& x, int window_len, int hop);

/// Overlap-add inverse; exact left-inverse of stft for every sample.
SampledSignal istft(const TfGrid& g);

/// Mixes to baseband and low-passes with a 63-tap linear-phase FIR at
/// 0.75 * carrier; group delay compensated so t0_s stays aligned.
BasebandSignal iq_demodulate(const SampledSignal& x, double carrier_hz);

/// y(t) = I(t) cos(w0 t) - Q(t) sin(w0 t).
SampledSignal iq_remodulate(const BasebandSignal& b);

}  // namespace usc

#endif

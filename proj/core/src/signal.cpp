#include "usc/signal.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace usc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_pulse(const PulseModel& model, double fs_hz) {
  if (model.envelope_sigma_s <= 0.0)
    throw InvalidParameter("render_pulse: envelope_sigma_s must be > 0");
  if (model.carrier_hz <= 0.0)
    throw InvalidParameter("render_pulse: carrier_hz must be > 0");
  if (fs_hz <= 0.0) throw InvalidParameter("render_pulse: fs_hz must be > 0");
}

}  // namespace

double TfGrid::max_abs() const {
  double m = 0.0;
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      m = std::max(m, std::abs(values(i, j)));
  return m;
}

std::vector<double> BasebandSignal::envelope() const {
  std::vector<double> e(i_samples.size());
  for (std::size_t n = 0; n < e.size(); ++n)
    e[n] = std::hypot(i_samples[n], q_samples[n]);
  return e;
}

SampledSignal render_pulse(const PulseModel& model, double delay_s,
                           double amplitude, const SignalGrid& grid) {
  check_pulse(model, grid.fs_hz);
  if (grid.n_samples < 1)
    throw InvalidParameter("render_pulse: n_samples must be >= 1");
  SampledSignal out;
  out.fs_hz = grid.fs_hz;
  out.t0_s = grid.t0_s;
  out.samples.assign(static_cast<std::size_t>(grid.n_samples), 0.0);
  add_pulse(out.samples, grid, model, delay_s, amplitude);
  return out;
}

void add_pulse(std::vector<double>& samples, const SignalGrid& grid,
               const PulseModel& model, double delay_s, double amplitude) {
  check_pulse(model, grid.fs_hz);
  if (amplitude == 0.0) return;
  const double sigma = model.envelope_sigma_s;
  const double half = kPulseSupportSigmas * sigma;
  const int n0 = std::max(
      0, static_cast<int>(std::ceil((delay_s - half - grid.t0_s) * grid.fs_hz)));
  const int n1 = std::min(
      grid.n_samples - 1,
      static_cast<int>(std::floor((delay_s + half - grid.t0_s) * grid.fs_hz)));
  const double a = amplitude * model.amplitude;
  for (int n = n0; n <= n1; ++n) {
    const double dt = grid.time_at(n) - delay_s;
    samples[static_cast<std::size_t>(n)] +=
        a * std::exp(-dt * dt / (2.0 * sigma * sigma)) *
        std::cos(kTwoPi * model.carrier_hz * dt + model.phase_rad);
  }
}

void add_envelope(std::vector<double>& samples, const SignalGrid& grid,
                  double sigma_s, double delay_s, double amplitude,
                  double support_sigmas) {
  if (sigma_s <= 0.0) throw InvalidParameter("add_envelope: sigma_s must be > 0");
  const double half = support_sigmas * sigma_s;
  const int n0 = std::max(
      0, static_cast<int>(std::ceil((delay_s - half - grid.t0_s) * grid.fs_hz)));
  const int n1 = std::min(
      grid.n_samples - 1,
      static_cast<int>(std::floor((delay_s + half - grid.t0_s) * grid.fs_hz)));
  for (int n = n0; n <= n1; ++n) {
    const double dt = grid.time_at(n) - delay_s;
    samples[static_cast<std::size_t>(n)] +=
        amplitude * std::exp(-dt * dt / (2.0 * sigma_s * sigma_s));
  }
}

std::vector<double> hann_window(int len) {
  std::vector<double> w(static_cast<std::size_t>(len));
  for (int n = 0; n < len; ++n)
    w[static_cast<std::size_t>(n)] = 0.5 * (1.0 - std::cos(kTwoPi * n / len));
  return w;
}

TfGrid stft(const SampledSignal& x, int window_len, int hop) {
  if (hop < 1) throw InvalidParameter("stft: hop must be >= 1");
  if (hop > window_len) throw InvalidParameter("stft: hop > window_len");
  if (window_len % hop != 0 || window_len / hop < 2)
    throw InvalidParameter("stft: Hann window needs hop | window_len and window_len/hop >= 2");
  if (x.size() < 1) throw InvalidParameter("stft: empty signal");
  if (x.fs_hz <= 0.0) throw InvalidParameter("stft: fs_hz must be > 0");

  const int n = x.size();
  const int w = window_len;
  // Pad one window at each end so every original sample has full window
  // coverage and the round trip is exact everywhere.
  const int n_frames = (w + n - 1) / hop + 1;
  const int padded = std::max(n + 2 * w, (n_frames - 1) * hop + w);

  std::vector<double> buf(static_cast<std::size_t>(padded), 0.0);
  std::copy(x.samples.begin(), x.samples.end(), buf.begin() + w);

  const std::vector<double> win = hann_window(w);
  const int bins = w / 2 + 1;

  TfGrid g;
  g.values.resize(n_frames, bins);
  g.window_len = w;
  g.hop = hop;
  g.fs_hz = x.fs_hz;
  g.n_samples = n;
  g.pad_left = w;
  g.t0_s = x.t0_s;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> frame(static_cast<std::size_t>(w));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(w));
  for (int m = 0; m < n_frames; ++m) {
    const int start = m * hop;
    for (int j = 0; j < w; ++j)
      frame[static_cast<std::size_t>(j)] =
          buf[static_cast<std::size_t>(start + j)] * win[static_cast<std::size_t>(j)];
    fft.fwd(spec, frame);
    for (int k = 0; k < bins; ++k) g.values(m, k) = spec[static_cast<std::size_t>(k)];
  }
  return g;
}

SampledSignal istft(const TfGrid& g) {
  const int w = g.window_len;
  const int hop = g.hop;
  if (w < 1 || hop < 1 || hop > w) throw InvalidParameter("istft: bad grid layout");
  if (g.n_bins() != w / 2 + 1) throw InvalidParameter("istft: bins != window_len/2 + 1");

  const int n_frames = g.n_frames();
  const int padded = (n_frames - 1) * hop + w;
  std::vector<double> acc(static_cast<std::size_t>(padded), 0.0);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(w));
  std::vector<std::complex<double>> frame(static_cast<std::size_t>(w));
  for (int m = 0; m < n_frames; ++m) {
    for (int k = 0; k <= w / 2; ++k) spec[static_cast<std::size_t>(k)] = g.values(m, k);
    for (int k = w / 2 + 1; k < w; ++k)
      spec[static_cast<std::size_t>(k)] = std::conj(g.values(m, w - k));
    fft.inv(frame, spec);
    const int start = m * hop;
    for (int j = 0; j < w; ++j)
      acc[static_cast<std::size_t>(start + j)] += frame[static_cast<std::size_t>(j)].real();
  }

  // COLA constant: sum of window shifts.
  const std::vector<double> win = hann_window(w);
  double cola = 0.0;
  for (double v : win) cola += v;
  cola /= hop;

  SampledSignal out;
  out.fs_hz = g.fs_hz;
  out.t0_s = g.t0_s;
  out.samples.resize(static_cast<std::size_t>(g.n_samples));
  for (int i = 0; i < g.n_samples; ++i)
    out.samples[static_cast<std::size_t>(i)] =
        acc[static_cast<std::size_t>(i + g.pad_left)] / cola;
  return out;
}

namespace {

// Hamming-windowed sinc low-pass, unit DC gain, odd length.
std::vector<double> design_lowpass(int taps, double cutoff_hz, double fs_hz) {
  std::vector<double> h(static_cast<std::size_t>(taps));
  const int mid = taps / 2;
  const double fc = cutoff_hz / fs_hz;  // cycles per sample
  double sum = 0.0;
  for (int k = 0; k < taps; ++k) {
    const int j = k - mid;
    const double x = kTwoPi * fc * j;
    double v = (j == 0) ? 2.0 * fc : std::sin(x) / (std::numbers::pi * j);
    v *= 0.54 - 0.46 * std::cos(kTwoPi * k / (taps - 1));
    h[static_cast<std::size_t>(k)] = v;
    sum += v;
  }
  for (double& v : h) v /= sum;
  return h;
}

// Zero-phase FIR application with zero-padded edges.
std::vector<double> filter_centered(const std::vector<double>& x,
                                    const std::vector<double>& h) {
  const int n = static_cast<int>(x.size());
  const int taps = static_cast<int>(h.size());
  const int mid = taps / 2;
  std::vector<double> y(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < taps; ++k) {
      const int j = i + mid - k;
      if (j >= 0 && j < n) acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

constexpr int kIqFilterTaps = 63;
// Wide enough that pulses up to 0.6 fractional bandwidth survive the round
// trip within 1 percent; the mixing images at 2 f0 stay far above it.
constexpr double kIqCutoffRatio = 0.75;

}  // namespace

BasebandSignal iq_demodulate(const SampledSignal& x, double carrier_hz) {
  if (carrier_hz <= 0.0) throw InvalidParameter("iq_demodulate: carrier_hz must be > 0");
  if (x.fs_hz <= 0.0) throw InvalidParameter("iq_demodulate: fs_hz must be > 0");
  if (carrier_hz >= x.fs_hz / 2.0)
    throw InvalidParameter("iq_demodulate: carrier_hz >= fs_hz/2");

  const int n = x.size();
  std::vector<double> i_raw(static_cast<std::size_t>(n));
  std::vector<double> q_raw(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double ph = kTwoPi * carrier_hz * x.time_at(k);
    i_raw[static_cast<std::size_t>(k)] = 2.0 * x.samples[static_cast<std::size_t>(k)] * std::cos(ph);
    q_raw[static_cast<std::size_t>(k)] = -2.0 * x.samples[static_cast<std::size_t>(k)] * std::sin(ph);
  }

  const std::vector<double> h =
      design_lowpass(kIqFilterTaps, kIqCutoffRatio * carrier_hz, x.fs_hz);
  BasebandSignal b;
  b.i_samples = filter_centered(i_raw, h);
  b.q_samples = filter_centered(q_raw, h);
  b.fs_hz = x.fs_hz;
  b.carrier_hz = carrier_hz;
  b.t0_s = x.t0_s;
  return b;
}

SampledSignal iq_remodulate(const BasebandSignal& b) {
  if (b.i_samples.size() != b.q_samples.size())
    throw InvalidParameter("iq_remodulate: I/Q length mismatch");
  if (b.carrier_hz <= 0.0) throw InvalidParameter("iq_remodulate: carrier_hz must be > 0");
  SampledSignal y;
  y.fs_hz = b.fs_hz;
  y.t0_s = b.t0_s;
  y.samples.resize(b.i_samples.size());
  for (int k = 0; k < b.size(); ++k) {
    const double ph = kTwoPi * b.carrier_hz * b.time_at(k);
    y.samples[static_cast<std::size_t>(k)] =
        b.i_samples[static_cast<std::size_t>(k)] * std::cos(ph) -
        b.q_samples[static_cast<std::size_t>(k)] * std::sin(ph);
  }
  return y;
}

}  // namespace usc

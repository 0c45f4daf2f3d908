#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "usc/signal.hpp"

using namespace usc;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double l2_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Independent oracle: composite Simpson quadrature of the continuous pulse
// energy over its rendered support.
double pulse_energy_quadrature(const PulseModel& m, double delay) {
  const double half = kPulseSupportSigmas * m.envelope_sigma_s;
  const int steps = 2000000;  // even
  const double a = delay - half, b = delay + half;
  const double h = (b - a) / steps;
  auto f = [&](double t) {
    const double dt = t - delay;
    const double v = m.amplitude * std::exp(-dt * dt / (2.0 * m.envelope_sigma_s * m.envelope_sigma_s)) *
                     std::cos(kTwoPi * m.carrier_hz * dt + m.phase_rad);
    return v * v;
  };
  double acc = f(a) + f(b);
  for (int i = 1; i < steps; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("render_pulse zero amplitude gives the zero signal") {
  PulseModel m;
  SampledSignal s = render_pulse(m, 20e-6, 0.0, {512, 16e6, 0.0});
  for (double v : s.samples) CHECK(v == 0.0);
}

TEST_CASE("render_pulse peaks at amplitude when sampled exactly at the delay") {
  PulseModel m;
  m.phase_rad = 0.0;
  const double fs = 16e6;
  const double delay = 128.0 / fs;
  SampledSignal s = render_pulse(m, delay, 2.5, {512, fs, 0.0});
  CHECK(s.samples[128] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("render_pulse discrete energy matches continuous quadrature") {
  PulseModel m;
  m.carrier_hz = 3.5e6;
  m.envelope_sigma_s = 1.0 / 3.5e6;
  m.phase_rad = 0.7;
  const double fs = 32e6;  // >= 8 f0
  const double delay = 1000.0 / fs;
  SampledSignal s = render_pulse(m, delay, 1.3, {2048, fs, 0.0});

  double discrete = 0.0;
  for (double v : s.samples) discrete += v * v;
  discrete /= fs;

  PulseModel scaled = m;
  scaled.amplitude = 1.3;
  const double continuous = pulse_energy_quadrature(scaled, delay);
  CHECK(std::abs(discrete - continuous) / continuous < 1e-3);

  // Closed form cross-check of the oracle itself.
  const double s2 = m.envelope_sigma_s;
  const double a2 = 1.3 * 1.3;
  const double analytic = a2 * s2 * std::sqrt(std::numbers::pi) / 2.0 *
                          (1.0 + std::exp(-std::pow(kTwoPi * m.carrier_hz * s2, 2.0)) *
                                     std::cos(2.0 * m.phase_rad));
  CHECK(std::abs(continuous - analytic) / analytic < 1e-6);
}

TEST_CASE("render_pulse rejects invalid parameters") {
  PulseModel m;
  m.envelope_sigma_s = 0.0;
  CHECK_THROWS_AS(render_pulse(m, 1e-6, 1.0, {64, 16e6, 0.0}), InvalidParameter);
  PulseModel m2;
  CHECK_THROWS_AS(render_pulse(m2, 1e-6, 1.0, {64, -1.0, 0.0}), InvalidParameter);
}

TEST_CASE("stft of zero is zero and inverts to zero") {
  SampledSignal x;
  x.fs_hz = 16e6;
  x.samples.assign(300, 0.0);
  TfGrid g = stft(x, 64, 16);
  CHECK(g.max_abs() == 0.0);
  SampledSignal y = istft(g);
  REQUIRE(y.size() == 300);
  for (double v : y.samples) CHECK(v == 0.0);
}

TEST_CASE("stft round trip is exact on random signals") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss;
  SampledSignal x;
  x.fs_hz = 16e6;
  x.samples.resize(500);
  for (double& v : x.samples) v = gauss(rng);

  SampledSignal y = istft(stft(x, 64, 16));
  REQUIRE(y.size() == x.size());
  CHECK(l2_diff(x.samples, y.samples) / l2(x.samples) < 1e-10);
}

TEST_CASE("stft of a bin-centered tone matches a direct windowed DFT") {
  const int w = 64, hop = 16, n = 640;
  const double fs = 16e6;
  const int bin = 8;
  SampledSignal x;
  x.fs_hz = fs;
  x.samples.resize(n);
  for (int i = 0; i < n; ++i) x.samples[i] = std::cos(kTwoPi * bin * i / w + 0.3);

  TfGrid g = stft(x, w, hop);
  const std::vector<double> win = hann_window(w);

  // Direct DFT oracle on an interior frame.
  const int frame = g.n_frames() / 2;
  for (int k = 0; k <= w / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int j = 0; j < w; ++j) {
      const int idx = frame * hop - w + j;  // frame start on the signal's clock
      const double v = (idx >= 0 && idx < n) ? x.samples[idx] : 0.0;
      acc += v * win[j] * std::polar(1.0, -kTwoPi * k * j / w);
    }
    CHECK(std::abs(acc - g.values(frame, k)) < 1e-9 * w);
  }

  // The tone's energy sits in the window main lobe around its bin.
  double total = 0.0, lobe = 0.0;
  for (int k = 0; k <= w / 2; ++k) {
    const double wk = (k == 0 || k == w / 2) ? 1.0 : 2.0;
    const double e = wk * std::norm(g.values(frame, k));
    total += e;
    if (std::abs(k - bin) <= 1) lobe += e;
  }
  CHECK(lobe / total >= 0.95);
}

TEST_CASE("stft rejects hop > window_len") {
  SampledSignal x;
  x.fs_hz = 1.0;
  x.samples.assign(64, 0.0);
  CHECK_THROWS_AS(stft(x, 16, 32), InvalidParameter);
}

TEST_CASE("stft is linear") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  SampledSignal x, y;
  x.fs_hz = y.fs_hz = 16e6;
  x.samples.resize(400);
  y.samples.resize(400);
  for (double& v : x.samples) v = gauss(rng);
  for (double& v : y.samples) v = gauss(rng);

  SampledSignal z = x;
  for (int i = 0; i < 400; ++i) z.samples[i] = 2.5 * x.samples[i] - 1.25 * y.samples[i];

  TfGrid gx = stft(x, 64, 16), gy = stft(y, 64, 16), gz = stft(z, 64, 16);
  const Eigen::MatrixXcd lhs = gz.values;
  const Eigen::MatrixXcd rhs = 2.5 * gx.values - 1.25 * gy.values;
  CHECK((lhs - rhs).norm() / lhs.norm() < 1e-12);
}

TEST_CASE("stft satisfies the window-compensated Parseval identity") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  SampledSignal x;
  x.fs_hz = 16e6;
  x.samples.resize(777);
  for (double& v : x.samples) v = gauss(rng);

  const int w = 64, hop = 16;
  TfGrid g = stft(x, w, hop);
  const std::vector<double> win = hann_window(w);
  double w2 = 0.0;
  for (double v : win) w2 += v * v;
  const double compensation = w * (w2 / hop);

  double grid_energy = 0.0;
  for (int m = 0; m < g.n_frames(); ++m)
    for (int k = 0; k <= w / 2; ++k)
      grid_energy += ((k == 0 || k == w / 2) ? 1.0 : 2.0) * std::norm(g.values(m, k));

  double sig_energy = 0.0;
  for (double v : x.samples) sig_energy += v * v;

  CHECK(std::abs(grid_energy / compensation - sig_energy) / sig_energy < 1e-9);
}

TEST_CASE("iq_demodulate maps cos to I=1 and -sin to Q=1") {
  const double fs = 16e6, f0 = 3.5e6;
  const int n = 1024;
  SampledSignal c, s;
  c.fs_hz = s.fs_hz = fs;
  c.samples.resize(n);
  s.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    c.samples[i] = std::cos(kTwoPi * f0 * i / fs);
    s.samples[i] = -std::sin(kTwoPi * f0 * i / fs);
  }
  BasebandSignal bc = iq_demodulate(c, f0);
  BasebandSignal bs = iq_demodulate(s, f0);
  for (int i = 100; i < n - 100; ++i) {
    CHECK(bc.i_samples[i] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(bc.q_samples[i]) < 1e-3);
    CHECK(std::abs(bs.i_samples[i]) < 1e-3);
    CHECK(bs.q_samples[i] == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("iq demodulate/remodulate round trip on a band-limited pulse") {
  const double fs = 16e6, f0 = 3.5e6;
  PulseModel m;
  m.carrier_hz = f0;
  // -6 dB full bandwidth 0.4 f0.
  m.envelope_sigma_s = std::sqrt(2.0 * std::log(2.0)) / (std::numbers::pi * 0.4 * f0);
  m.phase_rad = 0.4;
  SampledSignal x = render_pulse(m, 40e-6, 1.0, {1024, fs, 0.0});

  BasebandSignal b = iq_demodulate(x, f0);
  SampledSignal y = iq_remodulate(b);
  CHECK(l2_diff(x.samples, y.samples) / l2(x.samples) < 1e-2);

  // I stays low-pass: spectral energy above 0.6 f0 is under 1 percent.
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time(b.i_samples.begin(), b.i_samples.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, time);
  double total = 0.0, high = 0.0;
  for (int k = 0; k < static_cast<int>(spec.size()); ++k) {
    const double f = std::min(k, static_cast<int>(spec.size()) - k) * fs / spec.size();
    total += std::norm(spec[k]);
    if (f > 0.6 * f0) high += std::norm(spec[k]);
  }
  CHECK(high / total < 1e-2);
}

TEST_CASE("iq_demodulate rejects carrier at or above Nyquist") {
  SampledSignal x;
  x.fs_hz = 16e6;
  x.samples.assign(64, 0.0);
  CHECK_THROWS_AS(iq_demodulate(x, 8e6), InvalidParameter);
}

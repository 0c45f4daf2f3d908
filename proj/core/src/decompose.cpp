#include "usc/decompose.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace usc {

namespace {

constexpr double kPi = std::numbers::pi;

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

// 31-tap Hamming-windowed FIR Hilbert transformer; used for pointwise
// envelope evaluation of time-domain residuals.
struct HilbertFir {
  static constexpr int kHalf = 15;
  std::array<double, 2 * kHalf + 1> taps{};

  HilbertFir() {
    for (int j = -kHalf; j <= kHalf; ++j) {
      double v = 0.0;
      if (j % 2 != 0) v = 2.0 / (kPi * j);
      const double win =
          0.54 - 0.46 * std::cos(2.0 * kPi * (j + kHalf) / (2 * kHalf));
      taps[static_cast<std::size_t>(j + kHalf)] = v * win;
    }
  }

  double envelope_at(const std::vector<double>& x, int n) const {
    const int size = static_cast<int>(x.size());
    double q = 0.0;
    for (int j = -kHalf; j <= kHalf; ++j) {
      const int i = n - j;
      if (i >= 0 && i < size)
        q += taps[static_cast<std::size_t>(j + kHalf)] * x[static_cast<std::size_t>(i)];
    }
    return std::hypot(x[static_cast<std::size_t>(n)], q);
  }
};

const HilbertFir& hilbert_fir() {
  static const HilbertFir fir;
  return fir;
}

// STFT response of the known pulse, used to anchor the delay refinement and
// to express the amplitude threshold in grid units.
struct StftSignature {
  int peak_bin = 0;
  double peak_gain = 0.0;  // grid |peak| response to a unit-amplitude pulse
  int ref_offset = 0;      // pulse sample offset within the peak frame
};

StftSignature make_stft_signature(const PulseModel& pulse, double fs_hz, int w, int hop) {
  const int support = static_cast<int>(
      std::ceil(kPulseSupportSigmas * pulse.envelope_sigma_s * fs_hz));
  const int s_ref = hop * ((support + 2 * w) / hop + 1);
  const int n = 2 * s_ref;

  SampledSignal ref =
      render_pulse(pulse, s_ref / fs_hz, 1.0, SignalGrid{n, fs_hz, 0.0});
  const TfGrid grid = stft(ref, w, hop);

  int best_m = 0, best_k = 1;
  double best = -1.0;
  for (int m = 0; m < grid.n_frames(); ++m)
    for (int k = 1; k < w / 2; ++k)
      if (std::abs(grid.values(m, k)) > best) {
        best = std::abs(grid.values(m, k));
        best_m = m;
        best_k = k;
      }
  if (best <= 0.0)
    throw InvalidParameter("stft_decompose: pulse signature all-zero");

  StftSignature sig;
  sig.peak_bin = best_k;
  sig.peak_gain = best;
  sig.ref_offset = s_ref + w - best_m * hop;
  return sig;
}

// STFT of a short-support signal, restricted to the frames that touch
// [n0, n1]; frame indexing matches stft() on the same layout.
struct GridPatch {
  int frame_lo = 0;
  Eigen::MatrixXcd values;
};

GridPatch stft_patch(const std::vector<double>& x, int n, int w, int hop,
                     const std::vector<double>& win, int n0, int n1, int total_frames) {
  GridPatch patch;
  const int m_lo = std::clamp((n0 + hop) / hop, 0, total_frames - 1);
  const int m_hi = std::clamp((n1 + w) / hop, 0, total_frames - 1);
  patch.frame_lo = m_lo;
  const int bins = w / 2 + 1;
  patch.values.setZero(m_hi - m_lo + 1, bins);

  // Direct DFT per frame; the window is short and supports are narrow.
  std::vector<std::complex<double>> twiddle(static_cast<std::size_t>(w));
  for (int j = 0; j < w; ++j)
    twiddle[static_cast<std::size_t>(j)] =
        std::polar(1.0, -2.0 * kPi * j / static_cast<double>(w));

  std::vector<double> frame(static_cast<std::size_t>(w));
  for (int m = m_lo; m <= m_hi; ++m) {
    bool any = false;
    for (int j = 0; j < w; ++j) {
      const int idx = m * hop - w + j;
      double v = (idx >= 0 && idx < n) ? x[static_cast<std::size_t>(idx)] : 0.0;
      v *= win[static_cast<std::size_t>(j)];
      frame[static_cast<std::size_t>(j)] = v;
      any = any || v != 0.0;
    }
    if (!any) continue;
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (int j = 0; j < w; ++j)
        acc += frame[static_cast<std::size_t>(j)] *
               twiddle[static_cast<std::size_t>((static_cast<long long>(k) * j) % w)];
      patch.values(m - m_lo, k) = acc;
    }
  }
  return patch;
}

// Bins 0 and W/2 appear once in the half spectrum, the rest stand for a
// conjugate pair.
inline double bin_weight(int k, int w) { return (k == 0 || k == w / 2) ? 1.0 : 2.0; }

struct StftState {
  TfGrid grid;                  // residual grid
  std::vector<double> res_t;    // time-domain residual, kept in sync
  double fs_hz = 0.0;
  double t0_s = 0.0;
  int n = 0;
  int w = 0;
  int hop = 0;
  std::vector<double> win;

  void init(const SampledSignal& y, int window_len, int hop_len) {
    grid = stft(y, window_len, hop_len);
    res_t = y.samples;
    fs_hz = y.fs_hz;
    t0_s = y.t0_s;
    n = y.size();
    w = window_len;
    hop = hop_len;
    win = hann_window(window_len);
  }

  // Peak and sup norm over strictly positive sub-Nyquist bins.
  void peak(int* m_out, int* k_out, double* val) const {
    int bm = 0, bk = 1;
    double best = -1.0;
    for (int m = 0; m < grid.n_frames(); ++m)
      for (int k = 1; k < w / 2; ++k) {
        const double a = std::abs(grid.values(m, k));
        if (a > best) {
          best = a;
          bm = m;
          bk = k;
        }
      }
    *m_out = bm;
    *k_out = bk;
    *val = best;
  }

  double sup_norm() const {
    int m, k;
    double v;
    peak(&m, &k, &v);
    return v;
  }

  // Sub-hop delay: start from the peak frame's nominal pulse position, then
  // take the largest time-envelope local maximum nearby and refine it with a
  // log-parabolic vertex (exact for a Gaussian envelope).
  double refine_delay(const StftSignature& sig, int m_pk) const {
    const int coarse = m_pk * hop - w + sig.ref_offset;
    int best = std::clamp(coarse, 0, n - 1);
    double best_env = -1.0;
    for (int j = std::max(0, coarse - hop); j <= std::min(n - 1, coarse + hop); ++j) {
      const double e = local_envelope(j);
      if (e > best_env) {
        best_env = e;
        best = j;
      }
    }
    double frac = 0.0;
    if (best > 0 && best + 1 < n) {
      const double el = local_envelope(best - 1);
      const double ec = local_envelope(best);
      const double er = local_envelope(best + 1);
      if (el > 0.0 && ec > 0.0 && er > 0.0) {
        const double ll = std::log(el), lc = std::log(ec), lr = std::log(er);
        const double denom = ll - 2.0 * lc + lr;
        if (denom < -1e-12) frac = std::clamp(0.5 * (ll - lr) / denom, -1.0, 1.0);
      }
    }
    return t0_s + (best + frac) / fs_hz;
  }

  // Least-squares fit of the quadrature pulse pair at (delay, freq shift),
  // subtracted from both the grid and the time residual. A positive
  // sup_guard halves the step until the modified region stays at or below
  // the pre-subtraction sup norm, which keeps the residual monotone.
  ReflectorPulse subtract_pulse(const PulseModel& pulse, double delay_s,
                                double freq_shift_hz, double sup_guard = 0.0) {
    PulseModel pc = pulse;
    pc.amplitude = 1.0;
    pc.carrier_hz = pulse.carrier_hz + freq_shift_hz;
    PulseModel ps = pc;
    ps.phase_rad = pc.phase_rad - kPi / 2.0;

    const SignalGrid sg{n, fs_hz, t0_s};
    std::vector<double> vc(static_cast<std::size_t>(n), 0.0);
    std::vector<double> vs(static_cast<std::size_t>(n), 0.0);
    add_pulse(vc, sg, pc, delay_s, 1.0);
    add_pulse(vs, sg, ps, delay_s, 1.0);

    const double half = kPulseSupportSigmas * pulse.envelope_sigma_s;
    const int n0 = std::clamp(
        static_cast<int>(std::floor((delay_s - half - t0_s) * fs_hz)), 0, n - 1);
    const int n1 = std::clamp(
        static_cast<int>(std::ceil((delay_s + half - t0_s) * fs_hz)), 0, n - 1);

    const GridPatch gc = stft_patch(vc, n, w, hop, win, n0, n1, grid.n_frames());
    const GridPatch gs = stft_patch(vs, n, w, hop, win, n0, n1, grid.n_frames());

    double ccc = 0.0, ccs = 0.0, css = 0.0, rc = 0.0, rs = 0.0;
    const int rows = static_cast<int>(gc.values.rows());
    for (int i = 0; i < rows; ++i) {
      const int m = gc.frame_lo + i;
      for (int k = 0; k <= w / 2; ++k) {
        const double bw = bin_weight(k, w);
        const std::complex<double> c = gc.values(i, k);
        const std::complex<double> s = gs.values(i, k);
        const std::complex<double> r = grid.values(m, k);
        ccc += bw * std::norm(c);
        css += bw * std::norm(s);
        ccs += bw * (std::conj(c) * s).real();
        rc += bw * (std::conj(c) * r).real();
        rs += bw * (std::conj(s) * r).real();
      }
    }

    double alpha = 0.0, beta = 0.0;
    const double det = ccc * css - ccs * ccs;
    if (det > 1e-12 * std::max(ccc * css, 1e-300)) {
      alpha = (css * rc - ccs * rs) / det;
      beta = (ccc * rs - ccs * rc) / det;
    } else if (ccc > 0.0) {
      alpha = rc / ccc;
    }

    if (sup_guard > 0.0) {
      double gamma = 1.0;
      for (int halvings = 0; halvings < 60; ++halvings) {
        double local_post = 0.0;
        for (int i = 0; i < rows; ++i)
          for (int k = 0; k <= w / 2; ++k)
            local_post = std::max(
                local_post, std::abs(grid.values(gc.frame_lo + i, k) -
                                     gamma * (alpha * gc.values(i, k) + beta * gs.values(i, k))));
        if (local_post <= sup_guard) break;
        gamma *= 0.5;
      }
      alpha *= gamma;
      beta *= gamma;
    }

    for (int i = 0; i < rows; ++i)
      grid.values.row(gc.frame_lo + i) -=
          (alpha * gc.values.row(i) + beta * gs.values.row(i));
    for (int j = n0; j <= n1; ++j)
      res_t[static_cast<std::size_t>(j)] -=
          alpha * vc[static_cast<std::size_t>(j)] + beta * vs[static_cast<std::size_t>(j)];

    ReflectorPulse out;
    out.amp_cos = alpha;
    out.amp_sin = beta;
    out.delay_s = delay_s;
    out.freq_shift_hz = freq_shift_hz;
    return out;
  }

  double local_envelope(int sample) const {
    return hilbert_fir().envelope_at(res_t, sample);
  }

  SampledSignal background() const { return istft(grid); }
};

struct IqState {
  std::vector<double> res_i;
  std::vector<double> res_q;
  std::vector<double> env;
  double fs_hz = 0.0;
  double t0_s = 0.0;
  double carrier_hz = 0.0;
  int n = 0;

  void init(const BasebandSignal& y) {
    if (y.i_samples.size() != y.q_samples.size())
      throw InvalidParameter("iq_decompose: I/Q length mismatch");
    res_i = y.i_samples;
    res_q = y.q_samples;
    fs_hz = y.fs_hz;
    t0_s = y.t0_s;
    carrier_hz = y.carrier_hz;
    n = y.size();
    env.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) refresh_env(i);
  }

  void refresh_env(int i) {
    env[static_cast<std::size_t>(i)] = std::hypot(res_i[static_cast<std::size_t>(i)],
                                                  res_q[static_cast<std::size_t>(i)]);
  }

  double sup_norm() const {
    double m = 0.0;
    for (double v : env) m = std::max(m, v);
    return m;
  }

  int peak_index() const {
    return static_cast<int>(std::max_element(env.begin(), env.end()) - env.begin());
  }

  // Log-parabolic vertex around the envelope peak of a Gaussian pulse.
  double refine_delay(int n_pk) const {
    double frac = 0.0;
    if (n_pk > 0 && n_pk + 1 < n) {
      const double el = env[static_cast<std::size_t>(n_pk - 1)];
      const double ec = env[static_cast<std::size_t>(n_pk)];
      const double er = env[static_cast<std::size_t>(n_pk + 1)];
      if (el > 0.0 && ec > 0.0 && er > 0.0) {
        const double ll = std::log(el), lc = std::log(ec), lr = std::log(er);
        const double denom = ll - 2.0 * lc + lr;
        if (denom < -1e-12) frac = std::clamp(0.5 * (ll - lr) / denom, -1.0, 1.0);
      }
    }
    return t0_s + (n_pk + frac) / fs_hz;
  }

  ReflectorPulse subtract_pulse(double sigma_s, double delay_s, double sup_guard = 0.0) {
    const SignalGrid sg{n, fs_hz, t0_s};
    std::vector<double> tpl(static_cast<std::size_t>(n), 0.0);
    add_envelope(tpl, sg, sigma_s, delay_s, 1.0, 3.0);

    const int n0 = std::clamp(
        static_cast<int>(std::floor((delay_s - 3.0 * sigma_s - t0_s) * fs_hz)), 0, n - 1);
    const int n1 = std::clamp(
        static_cast<int>(std::ceil((delay_s + 3.0 * sigma_s - t0_s) * fs_hz)), 0, n - 1);

    double gg = 0.0, gi = 0.0, gq = 0.0;
    for (int j = n0; j <= n1; ++j) {
      const double g = tpl[static_cast<std::size_t>(j)];
      gg += g * g;
      gi += g * res_i[static_cast<std::size_t>(j)];
      gq += g * res_q[static_cast<std::size_t>(j)];
    }
    ReflectorPulse out;
    out.delay_s = delay_s;
    if (gg > 0.0) {
      out.amp_cos = gi / gg;  // a_I
      out.amp_sin = gq / gg;  // a_Q
    }

    if (sup_guard > 0.0) {
      double gamma = 1.0;
      for (int halvings = 0; halvings < 60; ++halvings) {
        double local_post = 0.0;
        for (int j = n0; j <= n1; ++j) {
          const double g = tpl[static_cast<std::size_t>(j)];
          local_post = std::max(
              local_post, std::hypot(res_i[static_cast<std::size_t>(j)] - gamma * out.amp_cos * g,
                                     res_q[static_cast<std::size_t>(j)] - gamma * out.amp_sin * g));
        }
        if (local_post <= sup_guard) break;
        gamma *= 0.5;
      }
      out.amp_cos *= gamma;
      out.amp_sin *= gamma;
    }

    for (int j = n0; j <= n1; ++j) {
      const double g = tpl[static_cast<std::size_t>(j)];
      res_i[static_cast<std::size_t>(j)] -= out.amp_cos * g;
      res_q[static_cast<std::size_t>(j)] -= out.amp_sin * g;
      refresh_env(j);
    }
    return out;
  }

  BasebandSignal background() const {
    BasebandSignal b;
    b.i_samples = res_i;
    b.q_samples = res_q;
    b.fs_hz = fs_hz;
    b.carrier_hz = carrier_hz;
    b.t0_s = t0_s;
    return b;
  }
};

double resolve_threshold_time(const std::vector<double>& envelope, double configured) {
  if (configured > 0.0) return configured;
  return 4.0 * median_of(envelope);
}

void check_config(const DecompositionConfig& cfg) {
  if (cfg.max_pulses < 0)
    throw InvalidParameter("decompose: max_pulses must be >= 0");
  if (cfg.local_max_window < 0)
    throw InvalidParameter("decompose: local_max_window must be >= 0");
}

void run_stft_base(StftState& state, const StftSignature& sig, const PulseModel& pulse,
                   const DecompositionConfig& cfg, double threshold_grid,
                   DecompositionResult& result) {
  double sup = state.sup_norm();
  result.residual_history.push_back(sup / sig.peak_gain);
  while (result.iterations_used < cfg.max_pulses) {
    if (sup < threshold_grid) break;
    int m_pk, b_pk;
    double val;
    state.peak(&m_pk, &b_pk, &val);
    const double delay = state.refine_delay(sig, m_pk);
    const double shift = (b_pk - sig.peak_bin) * state.fs_hz / state.w;
    result.reflectors.push_back(state.subtract_pulse(pulse, delay, shift, sup));
    ++result.iterations_used;
    sup = state.sup_norm();
    result.residual_history.push_back(sup / sig.peak_gain);
  }
}

void run_iq_base(IqState& state, const PulseModel& pulse, const DecompositionConfig& cfg,
                 double threshold, DecompositionResult& result) {
  double sup = state.sup_norm();
  result.residual_history.push_back(sup);
  while (result.iterations_used < cfg.max_pulses) {
    if (sup < threshold) break;
    const int n_pk = state.peak_index();
    const double delay = state.refine_delay(n_pk);
    result.reflectors.push_back(state.subtract_pulse(pulse.envelope_sigma_s, delay, sup));
    ++result.iterations_used;
    sup = state.sup_norm();
    result.residual_history.push_back(sup);
  }
}

// Largest envelope local maximum within +-window of the expected sample;
// a local maximum is a sample >= both neighbors. `floor` rejects residuals
// at numerical-noise level.
template <typename EnvFn>
bool find_local_max(EnvFn&& env_at, int n_samples, int center, int window, double floor,
                    int* found) {
  double best = -1.0;
  int best_n = -1;
  for (int m = std::max(0, center - window);
       m <= std::min(n_samples - 1, center + window); ++m) {
    const double e = env_at(m);
    const double left = m > 0 ? env_at(m - 1) : -1.0;
    const double right = m + 1 < n_samples ? env_at(m + 1) : -1.0;
    if (e >= left && e >= right && e > best) {
      best = e;
      best_n = m;
    }
  }
  if (best_n < 0 || best <= 0.0 || best < floor) return false;
  *found = best_n;
  return true;
}

}  // namespace

int DecompositionResult::own_detections() const {
  int c = 0;
  for (const ReflectorPulse& r : reflectors)
    if (!r.propagated) ++c;
  return c;
}

DecompositionResult stft_decompose(const SampledSignal& y, const PulseModel& pulse,
                                   const DecompositionConfig& cfg) {
  check_config(cfg);
  const StftSignature sig =
      make_stft_signature(pulse, y.fs_hz, cfg.window_len, cfg.hop);

  StftState state;
  state.init(y, cfg.window_len, cfg.hop);

  std::vector<double> env(static_cast<std::size_t>(y.size()));
  for (int i = 0; i < y.size(); ++i) env[static_cast<std::size_t>(i)] = state.local_envelope(i);
  const double threshold = resolve_threshold_time(env, cfg.amp_threshold);

  DecompositionResult result;
  result.method = DecomposeMethod::kStft;
  result.threshold_used = threshold;
  run_stft_base(state, sig, pulse, cfg, threshold * sig.peak_gain, result);
  result.background_rf = state.background();
  return result;
}

DecompositionResult iq_decompose(const BasebandSignal& y, const PulseModel& pulse,
                                 const DecompositionConfig& cfg) {
  check_config(cfg);
  IqState state;
  state.init(y);
  const double threshold = resolve_threshold_time(state.env, cfg.amp_threshold);

  DecompositionResult result;
  result.method = DecomposeMethod::kIq;
  result.threshold_used = threshold;
  run_iq_base(state, pulse, cfg, threshold, result);
  result.background_iq = state.background();
  return result;
}

SampledSignal reconstruct_reflectors_rf(const std::vector<ReflectorPulse>& reflectors,
                                        const PulseModel& pulse, const SignalGrid& grid) {
  SampledSignal out;
  out.fs_hz = grid.fs_hz;
  out.t0_s = grid.t0_s;
  out.samples.assign(static_cast<std::size_t>(grid.n_samples), 0.0);
  for (const ReflectorPulse& r : reflectors) {
    PulseModel pc = pulse;
    pc.amplitude = 1.0;
    pc.carrier_hz = pulse.carrier_hz + r.freq_shift_hz;
    PulseModel ps = pc;
    ps.phase_rad = pc.phase_rad - kPi / 2.0;
    add_pulse(out.samples, grid, pc, r.delay_s, r.amp_cos);
    add_pulse(out.samples, grid, ps, r.delay_s, r.amp_sin);
  }
  return out;
}

BasebandSignal reconstruct_reflectors_iq(const std::vector<ReflectorPulse>& reflectors,
                                         const PulseModel& pulse,
                                         const BasebandSignal& like) {
  BasebandSignal out;
  out.fs_hz = like.fs_hz;
  out.carrier_hz = like.carrier_hz;
  out.t0_s = like.t0_s;
  out.i_samples.assign(like.i_samples.size(), 0.0);
  out.q_samples.assign(like.q_samples.size(), 0.0);
  const SignalGrid grid{like.size(), like.fs_hz, like.t0_s};
  for (const ReflectorPulse& r : reflectors) {
    add_envelope(out.i_samples, grid, pulse.envelope_sigma_s, r.delay_s, r.amp_cos, 3.0);
    add_envelope(out.q_samples, grid, pulse.envelope_sigma_s, r.delay_s, r.amp_sin, 3.0);
  }
  return out;
}

double expected_arrival_s(double range_m, double theta_rad, double element_x_m,
                          double c_mps) {
  const double zx = range_m * std::cos(theta_rad);
  const double xx = range_m * std::sin(theta_rad) - element_x_m;
  return range_m / c_mps + std::sqrt(zx * zx + xx * xx) / c_mps;
}

bool invert_arrival_to_range(double t_s, double theta_rad, double element_x_m,
                             double c_mps, double* range_m) {
  const double denom = 2.0 * (c_mps * t_s - element_x_m * std::sin(theta_rad));
  if (denom <= 0.0) return false;
  const double r = (c_mps * c_mps * t_s * t_s - element_x_m * element_x_m) / denom;
  if (r <= 0.0) return false;
  *range_m = r;
  return true;
}

FrameDecomposition modified_decompose(const RawFrame& frame, const PulseModel& pulse,
                                      const DecompositionConfig& cfg) {
  check_config(cfg);
  const int n_lines = frame.n_lines();
  const int m_count = frame.geometry.n_elements();
  const int n = frame.n_samples;
  const double fs = frame.geometry.fs_hz;
  const double c = frame.geometry.c_mps;
  const bool use_stft = cfg.method == DecomposeMethod::kStft;

  FrameDecomposition out;
  out.n_lines = n_lines;
  out.n_elements = m_count;
  out.results.resize(static_cast<std::size_t>(n_lines) * m_count);

  StftSignature sig;
  if (use_stft) sig = make_stft_signature(pulse, fs, cfg.window_len, cfg.hop);

  std::vector<StftState> stft_states;
  std::vector<IqState> iq_states;
  std::vector<double> thresholds(out.results.size(), 0.0);
  std::vector<double> env_floor(out.results.size(), 0.0);
  if (use_stft)
    stft_states.resize(out.results.size());
  else
    iq_states.resize(out.results.size());

  const int total = n_lines * m_count;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) {
    const int l = i / m_count;
    const int m = i % m_count;
    const SampledSignal y = frame.channel_signal(l, m);
    if (use_stft) {
      stft_states[static_cast<std::size_t>(i)].init(y, cfg.window_len, cfg.hop);
      std::vector<double> env(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j)
        env[static_cast<std::size_t>(j)] =
            stft_states[static_cast<std::size_t>(i)].local_envelope(j);
      thresholds[static_cast<std::size_t>(i)] =
          resolve_threshold_time(env, cfg.amp_threshold);
      env_floor[static_cast<std::size_t>(i)] =
          1e-12 * *std::max_element(env.begin(), env.end());
    } else {
      iq_states[static_cast<std::size_t>(i)].init(iq_demodulate(y, pulse.carrier_hz));
      const std::vector<double>& env = iq_states[static_cast<std::size_t>(i)].env;
      thresholds[static_cast<std::size_t>(i)] = resolve_threshold_time(
          env, cfg.amp_threshold);
      env_floor[static_cast<std::size_t>(i)] =
          1e-12 * *std::max_element(env.begin(), env.end());
    }
    out.results[static_cast<std::size_t>(i)].method = cfg.method;
    out.results[static_cast<std::size_t>(i)].threshold_used =
        thresholds[static_cast<std::size_t>(i)];
  }

  // Sequential sweep over lines; cross-line subtractions mutate neighbor
  // residuals, including lines not yet swept.
  for (int l = 0; l < n_lines; ++l) {
    const double theta = frame.line_angles_rad[static_cast<std::size_t>(l)];

#pragma omp parallel for schedule(dynamic)
    for (int m = 0; m < m_count; ++m) {
      const std::size_t i = static_cast<std::size_t>(l) * m_count + static_cast<std::size_t>(m);
      if (use_stft)
        run_stft_base(stft_states[i], sig, pulse, cfg,
                      thresholds[i] * sig.peak_gain, out.results[i]);
      else
        run_iq_base(iq_states[i], pulse, cfg, thresholds[i], out.results[i]);
    }

    // Propagate each fresh detection to all sensors of l-1, l, l+1.
    for (int m = 0; m < m_count; ++m) {
      const std::size_t src = static_cast<std::size_t>(l) * m_count + static_cast<std::size_t>(m);
      const double dm = frame.geometry.element_x_m[static_cast<std::size_t>(m)];
      // Snapshot: propagated pulses appended below must not re-propagate.
      const std::vector<ReflectorPulse> own = out.results[src].reflectors;
      for (const ReflectorPulse& pj : own) {
        if (pj.propagated) continue;
        double range = 0.0;
        if (!invert_arrival_to_range(pj.delay_s, theta, dm, c, &range)) {
          ++out.results[src].skipped_propagations;
          continue;
        }
        for (int q = std::max(0, l - 1); q <= std::min(n_lines - 1, l + 1); ++q) {
          for (int s = 0; s < m_count; ++s) {
            const std::size_t dst =
                static_cast<std::size_t>(q) * m_count + static_cast<std::size_t>(s);
            const double ds = frame.geometry.element_x_m[static_cast<std::size_t>(s)];
            const double ts = expected_arrival_s(range, theta, ds, c);
            const int center = static_cast<int>(std::llround(ts * fs));
            if (center < 0 || center >= n) continue;

            int n_loc = 0;
            bool hit;
            if (use_stft) {
              const StftState& st = stft_states[dst];
              hit = find_local_max([&st](int j) { return st.local_envelope(j); }, n,
                                   center, cfg.local_max_window, env_floor[dst], &n_loc);
            } else {
              const IqState& st = iq_states[dst];
              hit = find_local_max(
                  [&st](int j) { return st.env[static_cast<std::size_t>(j)]; }, n,
                  center, cfg.local_max_window, env_floor[dst], &n_loc);
            }
            if (!hit) continue;

            ReflectorPulse sub;
            if (use_stft)
              sub = stft_states[dst].subtract_pulse(pulse, n_loc / fs, pj.freq_shift_hz);
            else
              sub = iq_states[dst].subtract_pulse(pulse.envelope_sigma_s, n_loc / fs);
            sub.propagated = true;
            out.results[dst].reflectors.push_back(sub);
          }
        }
      }
    }
  }

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) {
    if (use_stft)
      out.results[static_cast<std::size_t>(i)].background_rf =
          stft_states[static_cast<std::size_t>(i)].background();
    else
      out.results[static_cast<std::size_t>(i)].background_iq =
          iq_states[static_cast<std::size_t>(i)].background();
  }
  return out;
}

FrameDecomposition decompose_frame(const RawFrame& frame, const PulseModel& pulse,
                                   const DecompositionConfig& cfg) {
  if (cfg.modified) return modified_decompose(frame, pulse, cfg);

  FrameDecomposition out;
  out.n_lines = frame.n_lines();
  out.n_elements = frame.geometry.n_elements();
  out.results.resize(static_cast<std::size_t>(out.n_lines) * out.n_elements);

  const int total = out.n_lines * out.n_elements;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) {
    const int l = i / out.n_elements;
    const int m = i % out.n_elements;
    const SampledSignal y = frame.channel_signal(l, m);
    if (cfg.method == DecomposeMethod::kStft)
      out.results[static_cast<std::size_t>(i)] = stft_decompose(y, pulse, cfg);
    else
      out.results[static_cast<std::size_t>(i)] =
          iq_decompose(iq_demodulate(y, pulse.carrier_hz), pulse, cfg);
  }
  return out;
}

}  // namespace usc

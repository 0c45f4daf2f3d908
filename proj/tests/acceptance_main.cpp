// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits with the number of
// failed criteria. An optional argv[1] substring filters the criteria.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "usc/pipeline.hpp"

using namespace usc;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

Dictionary random_unit_dictionary(int q, int k, std::uint64_t seed) {
  Dictionary d;
  d.atoms.resize(q, k);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < q; ++i) d.atoms(i, j) = gauss(rng);
    d.atoms.col(j).normalize();
  }
  return d;
}

PulseModel default_pulse() {
  PulseModel p;
  p.carrier_hz = 3.5e6;
  p.envelope_sigma_s = 1.0 / 3.5e6;
  return p;
}

ArrayGeometry desk_geometry(int elements) {
  return ArrayGeometry::uniform(elements, 0.275e-3, 0.22e-3, 1540.0, 16e6, 3.5e6);
}

double psnr_signals(const std::vector<double>& a, const std::vector<double>& b,
                    double peak) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

// Per-signal RF background/strong estimates for either method.
struct SplitEstimate {
  std::vector<double> background;
  std::vector<double> strong;
};

SplitEstimate split_estimate(const DecompositionResult& r, const PulseModel& pulse,
                             const SignalGrid& grid) {
  SplitEstimate out;
  if (r.method == DecomposeMethod::kStft) {
    out.background = r.background_rf.samples;
    out.strong = reconstruct_reflectors_rf(r.reflectors, pulse, grid).samples;
  } else {
    out.background = iq_remodulate(r.background_iq).samples;
    out.strong =
        iq_remodulate(reconstruct_reflectors_iq(r.reflectors, pulse, r.background_iq)).samples;
  }
  return out;
}

BModeImage polar_image(const std::vector<SampledSignal>& lines, double dynamic_range_db) {
  const int n = lines.front().size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(lines.size()), n);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::vector<double> env = envelope(lines[l]);
    for (int i = 0; i < n; ++i)
      rows(static_cast<Eigen::Index>(l), i) = env[static_cast<std::size_t>(i)];
  }
  BModeImage img;
  img.pixels = log_compress(rows, dynamic_range_db);
  return img;
}

std::vector<SampledSignal> das_backgrounds(const FrameDecomposition& dec,
                                           const RawFrame& frame, const PulseModel& pulse) {
  const int m_count = frame.geometry.n_elements();
  const std::vector<double> w = uniform_weights(m_count);
  const SignalGrid grid{frame.n_samples, frame.geometry.fs_hz, 0.0};
  std::vector<SampledSignal> lines;
  for (int l = 0; l < frame.n_lines(); ++l) {
    Eigen::MatrixXd channels(m_count, frame.n_samples);
    for (int m = 0; m < m_count; ++m) {
      const SplitEstimate est = split_estimate(dec.at(l, m), pulse, grid);
      for (int i = 0; i < frame.n_samples; ++i) channels(m, i) = est.background[i];
    }
    lines.push_back(das_beamform(channels, frame.geometry,
                                 frame.line_angles_rad[static_cast<std::size_t>(l)], w));
  }
  return lines;
}

std::vector<SampledSignal> das_lines(const RawFrame& frame) {
  std::vector<SampledSignal> lines;
  const std::vector<double> w = uniform_weights(frame.geometry.n_elements());
  for (int l = 0; l < frame.n_lines(); ++l) lines.push_back(das_line(frame, l, w));
  return lines;
}

// ---------------------------------------------------------------------------
// A1  Representation-domain beamforming equivalence
// ---------------------------------------------------------------------------
Outcome a1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240801);
  std::uniform_int_distribution<int> m_pick(1, 8), p_pick(1, 4);
  std::uniform_int_distribution<int> q_pick(2, 16), k_pick(1, 32);
  std::uniform_real_distribution<double> ang(-0.5, 0.5), pos(-5e-3, 5e-3);
  std::uniform_int_distribution<int> nnz_pick(0, 4);
  std::normal_distribution<double> gauss;

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = m_pick(rng), p = p_pick(rng), q = q_pick(rng), k = k_pick(rng);

    ArrayGeometry g = desk_geometry(m);
    for (double& x : g.element_x_m) x = pos(rng);
    std::sort(g.element_x_m.begin(), g.element_x_m.end());
    for (int i = 1; i < m; ++i)
      if (g.element_x_m[i] <= g.element_x_m[i - 1])
        g.element_x_m[i] = g.element_x_m[i - 1] + 1e-5;

    auto dict = std::make_shared<Dictionary>(random_unit_dictionary(q, k, 7000 + trial));
    const double theta = ang(rng);
    const std::vector<double> w = trial % 2 ? hann_weights(m) : uniform_weights(m);

    LineCodes codes;
    codes.n_elements = m;
    codes.n_patches = p;
    codes.n_atoms = k;
    codes.patches.resize(static_cast<std::size_t>(m) * p);
    std::uniform_int_distribution<int> atom_pick(0, k - 1);
    for (SparseVec& patch : codes.patches) {
      const int nnz = nnz_pick(rng);
      for (int i = 0; i < nnz; ++i) {
        const int atom = atom_pick(rng);
        bool dup = false;
        for (const SparseEntry& e : patch) dup = dup || e.atom == atom;
        if (!dup) patch.push_back({atom, gauss(rng)});
      }
    }

    const RepOperator op = build_rep_operator(g, theta, dict, w, p * q);
    const SampledSignal fast = rep_beamform(op, codes);

    Eigen::MatrixXd channels = Eigen::MatrixXd::Zero(m, p * q);
    for (int mm = 0; mm < m; ++mm)
      for (int pp = 0; pp < p; ++pp) {
        const Eigen::VectorXd patch = reconstruct_patch(codes.at(mm, pp), *dict);
        channels.block(mm, pp * q, 1, q) = patch.transpose();
      }
    const SampledSignal oracle = das_beamform(channels, g, theta, w);

    double scale = 0.0, diff = 0.0;
    for (int i = 0; i < p * q; ++i) {
      scale = std::max(scale, std::abs(oracle.samples[i]));
      diff = std::max(diff, std::abs(fast.samples[i] - oracle.samples[i]));
    }
    if (scale > 0.0) worst = std::max(worst, diff / scale);
  }
  const double elapsed = seconds_since(t0);
  Outcome out;
  out.pass = worst <= 1e-9 && elapsed < 10.0;
  out.detail = fmt("max relative sup error %.3e over 100 draws, %.2f s", worst, elapsed);
  return out;
}

// ---------------------------------------------------------------------------
// A2  Decomposition recovery on the four-reflector point phantom
// ---------------------------------------------------------------------------
Outcome a2() {
  const auto t0 = std::chrono::steady_clock::now();
  const ArrayGeometry g = desk_geometry(32);
  const PulseModel pulse = default_pulse();
  const int n = 2048;

  PointPhantomConfig pc;
  pc.speckle_count = 10000;
  pc.seed = 11;
  for (double z : {65e-3, 70e-3, 75e-3, 80e-3})
    pc.reflectors.push_back({0.0, 0.0, z, 50.0, std::nullopt});
  const Phantom phantom = make_point_phantom(pc);

  const RawFrame full = simulate_rx(phantom, g, {0.0}, pulse, n);
  const RawFrame gt_bg = simulate_rx(phantom.speckle_only(), g, {0.0}, pulse, n);
  const RawFrame gt_strong = simulate_rx(phantom.reflectors_only(), g, {0.0}, pulse, n);

  // True arrival per element and reflector.
  std::vector<std::vector<double>> truth(32);
  for (int m = 0; m < 32; ++m)
    for (double z : {65e-3, 70e-3, 75e-3, 80e-3})
      truth[m].push_back((z + std::hypot(g.element_x_m[m], z)) / g.c_mps);

  double peak = 0.0;
  for (double v : full.channels) peak = std::max(peak, std::abs(v));
  const double baseline = psnr_signals(full.channels, gt_bg.channels, peak);

  Outcome out;
  out.pass = true;
  std::string detail = fmt("baseline %.2f dB", baseline);

  for (DecomposeMethod method : {DecomposeMethod::kStft, DecomposeMethod::kIq}) {
    DecompositionConfig cfg;
    cfg.method = method;
    FrameDecomposition dec = decompose_frame(full, pulse, cfg);

    const SignalGrid grid{n, g.fs_hz, 0.0};
    std::vector<double> est_bg, est_strong;
    int elements_ok = 0;
    for (int m = 0; m < 32; ++m) {
      const DecompositionResult& r = dec.at(0, m);
      int found = 0;
      for (double t : truth[m]) {
        bool hit = false;
        for (const ReflectorPulse& p : r.reflectors)
          hit = hit || std::abs(p.delay_s - t) * g.fs_hz <= 2.0;
        found += hit ? 1 : 0;
      }
      if (found == 4) ++elements_ok;

      const SplitEstimate est = split_estimate(r, pulse, grid);
      est_bg.insert(est_bg.end(), est.background.begin(), est.background.end());
      est_strong.insert(est_strong.end(), est.strong.begin(), est.strong.end());
    }

    const double bg_psnr = psnr_signals(est_bg, gt_bg.channels, peak);
    const double strong_psnr = psnr_signals(est_strong, gt_strong.channels, peak);
    const char* name = method == DecomposeMethod::kStft ? "stft" : "iq";
    detail += fmt("; %s: %d/32 elements, bg %+.2f dB, strong %+.2f dB", name, elements_ok,
                  bg_psnr - baseline, strong_psnr - baseline);
    out.pass = out.pass && elements_ok >= 29 && bg_psnr >= baseline + 6.0 &&
               strong_psnr >= baseline + 6.0;
  }

  const double elapsed = seconds_since(t0);
  detail += fmt(", %.1f s", elapsed);
  out.pass = out.pass && elapsed < 120.0;
  out.detail = detail;
  return out;
}

// ---------------------------------------------------------------------------
// A3  Side-lobe suppression ordering on the cyst phantom
// ---------------------------------------------------------------------------
Outcome a3() {
  const ArrayGeometry g = desk_geometry(32);
  const PulseModel pulse = default_pulse();
  const int n = 2048;

  std::vector<double> angles;
  for (int i = 0; i < 24; ++i) angles.push_back((i - 12) * kPi / 180.0);
  const int true_line = 19;  // 7 degrees

  CystPhantomConfig cc;
  cc.speckle_count = 3000;
  cc.seed = 21;
  const Phantom phantom = make_cyst_phantom(cc);

  const RawFrame full = simulate_rx(phantom, g, angles, pulse, n);
  const RawFrame gt_bg = simulate_rx(phantom.speckle_only(), g, angles, pulse, n);

  const double dr_db = 50.0;
  const BModeImage gt_img = polar_image(das_lines(gt_bg), dr_db);

  // Detection threshold chosen between the main-lobe echo and its side lobes
  // so the unmodified methods cannot detect the side-lobe reflections.
  const double eps0 = 700.0;

  Outcome out;
  out.pass = true;
  std::string detail;

  for (DecomposeMethod method : {DecomposeMethod::kStft, DecomposeMethod::kIq}) {
    double psnr_base = 0.0, psnr_mod = 0.0;
    for (bool modified : {false, true}) {
      DecompositionConfig cfg;
      cfg.method = method;
      cfg.modified = modified;
      cfg.amp_threshold = eps0;
      const FrameDecomposition dec = decompose_frame(full, pulse, cfg);
      const BModeImage img = polar_image(das_backgrounds(dec, full, pulse), dr_db);
      const double psnr = mse_psnr(img, gt_img).psnr_db;
      (modified ? psnr_mod : psnr_base) = psnr;

      if (modified) {
        // Combined image: injected reflector energy lands within one line of
        // the true direction.
        const std::vector<LocalizedReflector> locs =
            localize_from_results(dec, full, ImagingConfig{});
        int peak_line = -1;
        double peak_energy = -1.0;
        for (int l = 0; l < 24; ++l) {
          SampledSignal zero;
          zero.fs_hz = g.fs_hz;
          zero.samples.assign(n, 0.0);
          std::vector<LocalizedReflector> mine;
          for (const LocalizedReflector& r : locs) {
            int best = 0;
            for (int q = 1; q < 24; ++q)
              if (std::abs(angles[q] - r.angle_rad()) < std::abs(angles[best] - r.angle_rad()))
                best = q;
            if (best == l) mine.push_back(r);
          }
          const SampledSignal strong = inject_reflectors(zero, mine, pulse, g.c_mps);
          double energy = 0.0;
          for (double v : strong.samples) energy += v * v;
          if (energy > peak_energy) {
            peak_energy = energy;
            peak_line = l;
          }
        }
        const bool focused = peak_energy > 0.0 && std::abs(peak_line - true_line) <= 1;
        out.pass = out.pass && focused;
        detail += fmt("; %s reflector at line %d", method == DecomposeMethod::kStft ? "stft" : "iq",
                      peak_line);
      }
    }
    const char* name = method == DecomposeMethod::kStft ? "stft" : "iq";
    detail += fmt("; %s: %.2f -> %.2f dB", name, psnr_base, psnr_mod);
    out.pass = out.pass && psnr_mod >= psnr_base + 1.0;
  }
  out.detail = detail.substr(2);
  return out;
}

// ---------------------------------------------------------------------------
// A4  Compression advantage of decomposition
// ---------------------------------------------------------------------------
Outcome a4() {
  // Table pins first: the report reproduces the reference ratios exactly.
  {
    const CompressionReport r1 = compression_report(2456, 100, 0);
    const CompressionReport r2 = compression_report(2140, 70, 10);
    const CompressionReport r3 = compression_report(1099, 100, 0);
    auto close2 = [](double v, double want) { return std::abs(v - want) < 5e-3; };
    if (!close2(r1.compression_factor(), 24.56) || !close2(r1.percent_coeffs(), 4.07) ||
        !close2(r2.compression_factor(), 21.40) || !close2(r2.percent_coeffs(), 4.67) ||
        !close2(r3.compression_factor(), 10.99) || !close2(r3.percent_coeffs(), 9.10))
      return {false, "reference ratio table mismatch"};
  }

  const ArrayGeometry g = desk_geometry(32);
  const PulseModel pulse = default_pulse();
  const int n = 1024;
  const int q = 64, k = 128;

  std::vector<double> angles;
  for (int i = 0; i < 16; ++i) angles.push_back((-4.0 + i * 8.0 / 15.0) * kPi / 180.0);

  PointPhantomConfig pc;
  pc.speckle_count = 1200;
  pc.box.z_center_m = 32e-3;
  pc.box.z_half_m = 12e-3;
  pc.seed = 31;
  for (double z : {24e-3, 30e-3, 36e-3, 42e-3})
    pc.reflectors.push_back({0.0, 0.0, z, 50.0, std::nullopt});
  const Phantom phantom = make_point_phantom(pc);
  const RawFrame full = simulate_rx(phantom, g, angles, pulse, n);

  DecompositionConfig dcfg;
  dcfg.amp_threshold = 300.0;  // between the speckle peaks and the echo level
  dcfg.max_pulses = 6;
  const FrameDecomposition dec = decompose_frame(full, pulse, dcfg);

  // Background channels and the reflector count.
  RawFrame background = full;
  std::uint64_t n_reflectors = 0;
  const SignalGrid grid{n, g.fs_hz, 0.0};
  for (int l = 0; l < 16; ++l)
    for (int m = 0; m < 32; ++m) {
      const DecompositionResult& r = dec.at(l, m);
      n_reflectors += r.reflectors.size();
      const SplitEstimate est = split_estimate(r, pulse, grid);
      std::copy(est.background.begin(), est.background.end(), background.channel(l, m));
    }

  // Matched tolerance for both coding routes: a lossy operating point near
  // the reference coefficient shares.
  std::vector<double> norms;
  for (int l = 0; l < 16; ++l)
    for (int m = 0; m < 32; ++m) {
      const auto patches = patchify(background.channel_signal(l, m), q);
      for (const Eigen::VectorXd& p : patches) norms.push_back(p.norm());
    }
  std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(norms.size() / 2),
                   norms.end());
  const double tol = 0.8 * norms[norms.size() / 2];

  auto train_on = [&](const RawFrame& frame, std::uint64_t seed) {
    std::vector<SampledSignal> lines = das_lines(frame);
    std::mt19937_64 rng(seed);
    std::shuffle(lines.begin(), lines.end(), rng);
    lines.resize(10);
    KsvdOptions opts;
    opts.n_atoms = k;
    opts.n_iters = 8;
    opts.sparsity = 3;
    opts.seed = seed;
    return ksvd_train(training_set_from_lines(lines, q), opts);
  };
  auto code_count = [&](const RawFrame& frame, const Dictionary& dict) {
    std::uint64_t nnz = 0;
    for (int l = 0; l < frame.n_lines(); ++l)
      for (int m = 0; m < 32; ++m) {
        const auto patches = patchify(frame.channel_signal(l, m), q);
        for (const Eigen::VectorXd& p : patches)
          nnz += omp_encode(p, dict, tol, q / 2).size();
      }
    return nnz;
  };

  const Dictionary dict_bg = train_on(background, 41);
  const Dictionary dict_raw = train_on(full, 41);

  const std::uint64_t total = static_cast<std::uint64_t>(16) * 32 * n;
  const std::uint64_t nnz_bg = code_count(background, dict_bg);
  const std::uint64_t nnz_raw = code_count(full, dict_raw);

  const CompressionReport decomposed = compression_report(total, nnz_bg, n_reflectors);
  const CompressionReport direct = compression_report(total, nnz_raw, 0);

  Outcome out;
  out.pass = decomposed.compression_factor() >= 1.5 * direct.compression_factor();
  out.detail = fmt(
      "decomposed %.2f (bg %.2f%% + %llu reflectors) vs direct %.2f, ratio %.2fx",
      decomposed.compression_factor(), 100.0 * nnz_bg / static_cast<double>(total),
      static_cast<unsigned long long>(n_reflectors), direct.compression_factor(),
      decomposed.compression_factor() / direct.compression_factor());
  return out;
}

// ---------------------------------------------------------------------------
// A5  K-SVD descent
// ---------------------------------------------------------------------------
Outcome a5() {
  const auto t0 = std::chrono::steady_clock::now();
  const int q = 32, k = 64;
  const Dictionary gen = random_unit_dictionary(q, k, 51);

  TrainingSet train;
  train.patches.resize(q, 2000);
  std::mt19937_64 rng(52);
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(q);
    for (int s = 0; s < 3; ++s) v += gauss(rng) * gen.atoms.col(pick(rng));
    train.patches.col(i) = v;
  }

  KsvdOptions opts;
  opts.n_atoms = k;
  opts.n_iters = 10;
  opts.sparsity = 3;
  opts.seed = 53;
  KsvdReport report;
  ksvd_train(train, opts, &report);

  bool monotone = true;
  for (std::size_t i = 1; i < report.iteration_error.size(); ++i)
    monotone = monotone && report.iteration_error[i] <=
                               report.iteration_error[i - 1] +
                                   1e-9 * report.iteration_error.front();
  const double ratio = report.iteration_error.back() / report.iteration_error.front();
  const double elapsed = seconds_since(t0);

  Outcome out;
  out.pass = monotone && ratio <= 0.10 && elapsed < 60.0;
  out.detail = fmt("final/initial error %.3f, monotone %s, %.1f s", ratio,
                   monotone ? "yes" : "no", elapsed);
  return out;
}

// ---------------------------------------------------------------------------
// A6  Exact additive split
// ---------------------------------------------------------------------------
Outcome a6() {
  const PulseModel pulse = default_pulse();
  const int n = 512;
  double worst = 0.0;
  int cases = 0;

  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::mt19937_64 rng(9000 + seed);
    std::uniform_real_distribution<double> delay(4e-6, (n - 80) / 16e6);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::normal_distribution<double> amp(0.0, 1.0);
    std::uniform_int_distribution<int> n_pulses(0, 3);

    SampledSignal y;
    y.fs_hz = 16e6;
    y.samples.assign(n, 0.0);
    PulseModel p = pulse;
    for (int i = 0; i < n / 8; ++i) {
      p.phase_rad = phase(rng);
      add_pulse(y.samples, y.grid(), p, delay(rng), amp(rng));
    }
    const int strong = n_pulses(rng);
    for (int i = 0; i < strong; ++i) {
      p.phase_rad = phase(rng);
      add_pulse(y.samples, y.grid(), p, delay(rng), 20.0 * amp(rng));
    }

    double y_sup = 0.0;
    for (double v : y.samples) y_sup = std::max(y_sup, std::abs(v));
    if (y_sup == 0.0) continue;

    {
      DecompositionConfig cfg;
      const DecompositionResult r = stft_decompose(y, pulse, cfg);
      const SampledSignal rec = reconstruct_reflectors_rf(r.reflectors, pulse, y.grid());
      for (int i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(y.samples[i] - rec.samples[i] -
                                         r.background_rf.samples[i]) /
                                    y_sup);
      ++cases;
    }
    {
      DecompositionConfig cfg;
      cfg.method = DecomposeMethod::kIq;
      const BasebandSignal bb = iq_demodulate(y, pulse.carrier_hz);
      const DecompositionResult r = iq_decompose(bb, pulse, cfg);
      const BasebandSignal rec = reconstruct_reflectors_iq(r.reflectors, pulse, bb);
      double bb_sup = 0.0;
      for (int i = 0; i < n; ++i)
        bb_sup = std::max({bb_sup, std::abs(bb.i_samples[i]), std::abs(bb.q_samples[i])});
      if (bb_sup > 0.0)
        for (int i = 0; i < n; ++i) {
          worst = std::max(worst, std::abs(bb.i_samples[i] - rec.i_samples[i] -
                                           r.background_iq.i_samples[i]) /
                                      bb_sup);
          worst = std::max(worst, std::abs(bb.q_samples[i] - rec.q_samples[i] -
                                           r.background_iq.q_samples[i]) /
                                      bb_sup);
        }
      ++cases;
    }
  }

  Outcome out;
  out.pass = worst <= 1e-9 && cases >= 1000;
  out.detail = fmt("worst relative sup mismatch %.3e over %d decompositions", worst, cases);
  return out;
}

// ---------------------------------------------------------------------------
// A7  Transform round trips
// ---------------------------------------------------------------------------
Outcome a7() {
  double worst_stft = 0.0;
  std::mt19937_64 rng(61);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 20; ++trial) {
    SampledSignal x;
    x.fs_hz = 16e6;
    x.samples.resize(700 + 37 * trial);
    for (double& v : x.samples) v = gauss(rng);
    const SampledSignal y = istft(stft(x, 64, 16));
    double num = 0.0, den = 0.0;
    for (int i = 0; i < x.size(); ++i) {
      num += (x.samples[i] - y.samples[i]) * (x.samples[i] - y.samples[i]);
      den += x.samples[i] * x.samples[i];
    }
    worst_stft = std::max(worst_stft, std::sqrt(num / den));
  }

  // IQ round trip at fractional bandwidth 0.6.
  const double f0 = 3.5e6;
  double worst_iq = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    PulseModel m;
    m.carrier_hz = f0;
    m.envelope_sigma_s = std::sqrt(2.0 * std::log(2.0)) / (kPi * 0.6 * f0);
    m.phase_rad = 0.6 * trial;
    const SampledSignal x = render_pulse(m, 30e-6 + trial * 1.7e-6, 1.0, {1024, 16e6, 0.0});
    const SampledSignal y = iq_remodulate(iq_demodulate(x, f0));
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 1024; ++i) {
      num += (x.samples[i] - y.samples[i]) * (x.samples[i] - y.samples[i]);
      den += x.samples[i] * x.samples[i];
    }
    worst_iq = std::max(worst_iq, std::sqrt(num / den));
  }

  Outcome out;
  out.pass = worst_stft <= 1e-10 && worst_iq <= 1e-2;
  out.detail = fmt("stft %.3e (<=1e-10), iq %.3e (<=1e-2)", worst_stft, worst_iq);
  return out;
}

// ---------------------------------------------------------------------------
// A8  Geometry closed forms
// ---------------------------------------------------------------------------
Outcome a8() {
  double worst = 0.0;

  // tau(20us, theta=0, d/c=10us) = 24.142135...us
  {
    ArrayGeometry g;
    g.c_mps = 1540.0;
    g.fs_hz = 1e6;
    g.element_x_m = {1540.0 * 10e-6};
    const DelayTable t = delay_table(g, 0.0, 64);
    const double got = (t.tap(0, 20) + t.frac(0, 20)) / g.fs_hz;
    const double want = 10e-6 + 0.5 * std::sqrt(800e-12);
    worst = std::max(worst, std::abs(got - want) / want);
  }

  // Reference element: tau(t) = t.
  {
    ArrayGeometry g;
    g.element_x_m = {0.0};
    g.fs_hz = 16e6;
    const DelayTable t = delay_table(g, 0.2, 128);
    for (int n = 1; n < 128; ++n) {
      const double got = (t.tap(0, n) + t.frac(0, n));
      worst = std::max(worst, std::abs(got - n) / n);
    }
  }

  // Element on the reflector path: tau = t/2.
  {
    ArrayGeometry g;
    g.c_mps = 1000.0;
    g.fs_hz = 1e6;
    g.element_x_m = {1000.0 * 5e-6};
    const DelayTable t = delay_table(g, kPi / 2.0, 64);
    const double got = (t.tap(0, 10) + t.frac(0, 10)) / g.fs_hz;
    worst = std::max(worst, std::abs(got - 5e-6) / 5e-6);
  }

  // Expected arrival at the reference element: t = 2r/c.
  {
    const double got = expected_arrival_s(35e-3, 0.0, 0.0, 1540.0);
    const double want = 2.0 * 35e-3 / 1540.0;
    worst = std::max(worst, std::abs(got - want) / want);
  }

  Outcome out;
  out.pass = worst <= 1e-12;
  out.detail = fmt("max relative deviation %.3e", worst);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"A1", "representation-domain beamforming equivalence", a1},
      {"A2", "decomposition recovery on the point phantom", a2},
      {"A3", "side-lobe suppression ordering on the cyst phantom", a3},
      {"A4", "compression advantage of decomposition", a4},
      {"A5", "K-SVD descent", a5},
      {"A6", "exact additive split", a6},
      {"A7", "transform round trips", a7},
      {"A8", "geometry closed forms", a8},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!filter.empty() && filter != c.id) continue;
    const Outcome o = c.run();
    std::printf("[%s] %s %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures;
}

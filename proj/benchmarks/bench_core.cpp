#include <benchmark/benchmark.h>

#include <random>

#include "usc/beamform.hpp"
#include "usc/decompose.hpp"
#include "usc/phantom.hpp"
#include "usc/sparse_dict.hpp"

using namespace usc;

namespace {

PulseModel bench_pulse() {
  PulseModel p;
  p.carrier_hz = 3.5e6;
  p.envelope_sigma_s = 1.0 / 3.5e6;
  return p;
}

Dictionary random_dictionary(int q, int k) {
  Dictionary d;
  d.atoms.resize(q, k);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < q; ++i) d.atoms(i, j) = gauss(rng);
    d.atoms.col(j).normalize();
  }
  return d;
}

LineCodes random_codes(int m, int p, int k, int nnz) {
  LineCodes codes;
  codes.n_elements = m;
  codes.n_patches = p;
  codes.n_atoms = k;
  codes.patches.resize(static_cast<std::size_t>(m) * p);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> atom(0, k - 1);
  std::normal_distribution<double> gauss;
  for (SparseVec& patch : codes.patches)
    for (int i = 0; i < nnz; ++i) patch.push_back({atom(rng), gauss(rng)});
  return codes;
}

SampledSignal bench_signal(int n) {
  SampledSignal y;
  y.fs_hz = 16e6;
  y.samples.assign(static_cast<std::size_t>(n), 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> delay(5e-6, (n - 80) / 16e6);
  std::normal_distribution<double> amp(0.0, 1.0);
  PulseModel p = bench_pulse();
  for (int i = 0; i < n / 8; ++i) add_pulse(y.samples, y.grid(), p, delay(rng), amp(rng));
  add_pulse(y.samples, y.grid(), p, 40e-6, 30.0);
  add_pulse(y.samples, y.grid(), p, 70e-6, 22.0);
  return y;
}

}  // namespace

static void BM_Stft(benchmark::State& state) {
  const SampledSignal y = bench_signal(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    TfGrid g = stft(y, 64, 16);
    benchmark::DoNotOptimize(g.values.data());
  }
}
BENCHMARK(BM_Stft)->Arg(1024)->Arg(3328);

static void BM_StftDecompose(benchmark::State& state) {
  const SampledSignal y = bench_signal(2048);
  DecompositionConfig cfg;
  for (auto _ : state) {
    DecompositionResult r = stft_decompose(y, bench_pulse(), cfg);
    benchmark::DoNotOptimize(r.reflectors.data());
  }
}
BENCHMARK(BM_StftDecompose);

static void BM_IqDecompose(benchmark::State& state) {
  const SampledSignal y = bench_signal(2048);
  const BasebandSignal bb = iq_demodulate(y, 3.5e6);
  DecompositionConfig cfg;
  cfg.method = DecomposeMethod::kIq;
  for (auto _ : state) {
    DecompositionResult r = iq_decompose(bb, bench_pulse(), cfg);
    benchmark::DoNotOptimize(r.reflectors.data());
  }
}
BENCHMARK(BM_IqDecompose);

static void BM_OmpEncode(benchmark::State& state) {
  const int q = 100, k = 400;
  const Dictionary dict = random_dictionary(q, k);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd patch(q);
  for (int i = 0; i < q; ++i) patch(i) = gauss(rng);
  const double tol = 0.3 * patch.norm();
  for (auto _ : state) {
    SparseVec code = omp_encode(patch, dict, tol, q / 2);
    benchmark::DoNotOptimize(code.data());
  }
}
BENCHMARK(BM_OmpEncode);

static void BM_DasBeamform(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0)), n = 2048;
  const ArrayGeometry g = ArrayGeometry::uniform(m, 0.275e-3, 0.22e-3, 1540.0, 16e6, 3.5e6);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd channels(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) channels(i, j) = gauss(rng);
  const std::vector<double> w = uniform_weights(m);
  for (auto _ : state) {
    SampledSignal line = das_beamform(channels, g, 0.1, w);
    benchmark::DoNotOptimize(line.samples.data());
  }
}
BENCHMARK(BM_DasBeamform)->Arg(32)->Arg(64);

static void BM_RepBeamform(benchmark::State& state) {
  const int m = 64, q = 100, k = 400, p = 20;  // N = 2000
  const ArrayGeometry g = ArrayGeometry::uniform(m, 0.275e-3, 0.22e-3, 1540.0, 16e6, 3.5e6);
  auto dict = std::make_shared<Dictionary>(random_dictionary(q, k));
  const RepOperator op = build_rep_operator(g, 0.1, dict, uniform_weights(m), p * q);
  const LineCodes codes = random_codes(m, p, k, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    SampledSignal line = rep_beamform(op, codes);
    benchmark::DoNotOptimize(line.samples.data());
  }
  state.SetLabel("nnz/patch=" + std::to_string(state.range(0)));
}
BENCHMARK(BM_RepBeamform)->Arg(2)->Arg(4)->Arg(8);

static void BM_BuildRepOperator(benchmark::State& state) {
  const int m = 64, q = 100, k = 400, p = 20;
  const ArrayGeometry g = ArrayGeometry::uniform(m, 0.275e-3, 0.22e-3, 1540.0, 16e6, 3.5e6);
  auto dict = std::make_shared<Dictionary>(random_dictionary(q, k));
  for (auto _ : state) {
    RepOperator op = build_rep_operator(g, 0.1, dict, uniform_weights(m), p * q);
    benchmark::DoNotOptimize(op.segments.data());
  }
}
BENCHMARK(BM_BuildRepOperator);

static void BM_SimulateRx(benchmark::State& state) {
  const ArrayGeometry g = ArrayGeometry::uniform(32, 0.275e-3, 0.22e-3, 1540.0, 16e6, 3.5e6);
  PointPhantomConfig pc;
  pc.speckle_count = static_cast<int>(state.range(0));
  pc.box.z_center_m = 40e-3;
  pc.box.z_half_m = 10e-3;
  pc.seed = 6;
  const Phantom phantom = make_point_phantom(pc);
  for (auto _ : state) {
    RawFrame f = simulate_rx(phantom, g, {0.0}, bench_pulse(), 2048);
    benchmark::DoNotOptimize(f.channels.data());
  }
}
BENCHMARK(BM_SimulateRx)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();

#include "usc/beamform.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace usc {

DelayTable delay_table(const ArrayGeometry& geometry, double theta_rad, int n_samples) {
  if (n_samples < 1) throw InvalidParameter("delay_table: n_samples must be >= 1");
  const int m_count = geometry.n_elements();
  const double t_sample = 1.0 / geometry.fs_hz;
  const double sin_theta = std::sin(theta_rad);

  DelayTable table;
  table.theta_rad = theta_rad;
  table.tap.resize(m_count, n_samples);
  table.frac.resize(m_count, n_samples);
  table.valid0.resize(m_count, n_samples);
  table.valid1.resize(m_count, n_samples);

  for (int m = 0; m < m_count; ++m) {
    const double dc = geometry.element_x_m[static_cast<std::size_t>(m)] / geometry.c_mps;
    for (int n = 0; n < n_samples; ++n) {
      const double t = n * t_sample;
      // The discriminant is a perfect square analytically; clamp fp dust.
      const double disc = std::max(0.0, t * t + 4.0 * dc * dc - 4.0 * dc * t * sin_theta);
      const double tau = 0.5 * t + 0.5 * std::sqrt(disc);
      const double pos = tau / t_sample;
      const int idx = static_cast<int>(std::floor(pos));
      table.tap(m, n) = idx;
      table.frac(m, n) = pos - idx;
      table.valid0(m, n) = (idx >= 0 && idx < n_samples) ? 1 : 0;
      table.valid1(m, n) = (idx + 1 >= 0 && idx + 1 < n_samples) ? 1 : 0;
    }
  }
  return table;
}

std::vector<double> uniform_weights(int n_elements) {
  return std::vector<double>(static_cast<std::size_t>(n_elements), 1.0);
}

std::vector<double> hann_weights(int n_elements) {
  std::vector<double> w(static_cast<std::size_t>(n_elements));
  for (int m = 0; m < n_elements; ++m)
    w[static_cast<std::size_t>(m)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (m + 0.5) / n_elements));
  return w;
}

SampledSignal das_beamform(const Eigen::MatrixXd& channels, const ArrayGeometry& geometry,
                           double theta_rad, const std::vector<double>& weights) {
  const int m_count = geometry.n_elements();
  const int n = static_cast<int>(channels.cols());
  if (static_cast<int>(channels.rows()) != m_count)
    throw InvalidParameter("das_beamform: channel count != element count");
  if (static_cast<int>(weights.size()) != m_count)
    throw InvalidParameter("das_beamform: weight count != element count");

  const DelayTable table = delay_table(geometry, theta_rad, n);

  SampledSignal out;
  out.fs_hz = geometry.fs_hz;
  out.t0_s = 0.0;
  out.samples.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int m = 0; m < m_count; ++m) {
      const int tap = table.tap(m, i);
      const double a = table.frac(m, i);
      double v = 0.0;
      if (table.valid0(m, i)) v += (1.0 - a) * channels(m, tap);
      if (table.valid1(m, i)) v += a * channels(m, tap + 1);
      acc += weights[static_cast<std::size_t>(m)] * v;
    }
    out.samples[static_cast<std::size_t>(i)] = acc / m_count;
  }
  return out;
}

std::uint64_t RepOperator::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = hash_combine(h, geometry_hash);
  h = hash_combine(h, dict_hash);
  h = hash_combine(h, theta_rad);
  h = hash_combine(h, std::span<const double>(weights));
  h = hash_combine(h, static_cast<std::uint64_t>(n_out));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    for (int t = 0; t < 2; ++t) {
      if (!seg_valid[i][static_cast<std::size_t>(t)]) continue;
      const Segment& s = segments[i][static_cast<std::size_t>(t)];
      h = hash_combine(h, static_cast<std::uint64_t>(s.patch));
      h = hash_combine(h, static_cast<std::uint64_t>(s.row));
      h = hash_combine(h, s.weight);
    }
  }
  return h;
}

std::size_t RepOperator::row_nnz(int n) const {
  // Columns are (m, patch, atom); two taps of one element can share a patch.
  std::size_t count = 0;
  for (int m = 0; m < n_elements; ++m) {
    const std::size_t i = static_cast<std::size_t>(m) * n_out + static_cast<std::size_t>(n);
    const bool v0 = seg_valid[i][0], v1 = seg_valid[i][1];
    if (v0 && v1 && segments[i][0].patch == segments[i][1].patch &&
        segments[i][0].row == segments[i][1].row) {
      count += static_cast<std::size_t>(n_atoms);
    } else {
      if (v0) count += static_cast<std::size_t>(n_atoms);
      if (v1) count += static_cast<std::size_t>(n_atoms);
    }
  }
  return count;
}

RepOperator build_rep_operator(const ArrayGeometry& geometry, double theta_rad,
                               std::shared_ptr<const Dictionary> dict,
                               const std::vector<double>& weights, int n_samples) {
  if (!dict) throw InvalidParameter("build_rep_operator: null dictionary");
  const int q = dict->patch_len();
  if (q < 1 || n_samples % q != 0)
    throw InvalidParameter("build_rep_operator: n_samples must be a multiple of patch_len");
  const int m_count = geometry.n_elements();
  if (static_cast<int>(weights.size()) != m_count)
    throw InvalidParameter("build_rep_operator: weight count != element count");

  const DelayTable table = delay_table(geometry, theta_rad, n_samples);

  RepOperator op;
  op.n_out = n_samples;
  op.n_elements = m_count;
  op.n_patches = n_samples / q;
  op.n_atoms = dict->n_atoms();
  op.fs_hz = geometry.fs_hz;
  op.dict = std::move(dict);
  op.weights = weights;
  op.geometry_hash = geometry.hash();
  op.dict_hash = op.dict->hash();
  op.theta_rad = theta_rad;
  op.segments.resize(static_cast<std::size_t>(m_count) * n_samples);
  op.seg_valid.resize(op.segments.size());

  for (int m = 0; m < m_count; ++m) {
    const double wm = weights[static_cast<std::size_t>(m)] / m_count;
    for (int n = 0; n < n_samples; ++n) {
      const std::size_t i = static_cast<std::size_t>(m) * n_samples + static_cast<std::size_t>(n);
      const int tap = table.tap(m, n);
      const double a = table.frac(m, n);
      op.seg_valid[i] = {table.valid0(m, n), table.valid1(m, n)};
      if (table.valid0(m, n))
        op.segments[i][0] = {tap / q, tap % q, wm * (1.0 - a)};
      if (table.valid1(m, n))
        op.segments[i][1] = {(tap + 1) / q, (tap + 1) % q, wm * a};
    }
  }
  return op;
}

SampledSignal rep_beamform(const RepOperator& op, const LineCodes& codes) {
  if (codes.n_elements != op.n_elements)
    throw InvalidParameter("rep_beamform: missing element block");
  if (codes.n_patches != op.n_patches || codes.n_atoms != op.n_atoms)
    throw InvalidParameter("rep_beamform: code layout does not match operator");

  const Eigen::MatrixXd& d = op.dict->atoms;
  SampledSignal out;
  out.fs_hz = op.fs_hz;
  out.t0_s = 0.0;
  out.samples.assign(static_cast<std::size_t>(op.n_out), 0.0);

  for (int n = 0; n < op.n_out; ++n) {
    double acc = 0.0;
    for (int m = 0; m < op.n_elements; ++m) {
      const std::size_t i = static_cast<std::size_t>(m) * op.n_out + static_cast<std::size_t>(n);
      for (int t = 0; t < 2; ++t) {
        if (!op.seg_valid[i][static_cast<std::size_t>(t)]) continue;
        const RepOperator::Segment& s = op.segments[i][static_cast<std::size_t>(t)];
        const SparseVec& z = codes.at(m, s.patch);
        double dot = 0.0;
        for (const SparseEntry& e : z) dot += d(s.row, e.atom) * e.coef;
        acc += s.weight * dot;
      }
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

namespace {

struct OperatorCache {
  std::mutex mutex;
  std::map<std::uint64_t, std::shared_ptr<const RepOperator>> entries;
};

OperatorCache& operator_cache() {
  static OperatorCache cache;
  return cache;
}

}  // namespace

std::shared_ptr<const RepOperator> cached_rep_operator(
    const ArrayGeometry& geometry, double theta_rad,
    std::shared_ptr<const Dictionary> dict, const std::vector<double>& weights,
    int n_samples) {
  std::uint64_t key = 0xcbf29ce484222325ull;
  key = hash_combine(key, geometry.hash());
  key = hash_combine(key, theta_rad);
  key = hash_combine(key, dict->hash());
  key = hash_combine(key, std::span<const double>(weights));
  key = hash_combine(key, static_cast<std::uint64_t>(n_samples));

  OperatorCache& cache = operator_cache();
  {
    std::lock_guard<std::mutex> lock(cache.mutex);
    auto it = cache.entries.find(key);
    if (it != cache.entries.end()) return it->second;
  }
  auto op = std::make_shared<RepOperator>(
      build_rep_operator(geometry, theta_rad, std::move(dict), weights, n_samples));
  std::lock_guard<std::mutex> lock(cache.mutex);
  auto [it, inserted] = cache.entries.emplace(key, std::move(op));
  return it->second;
}

LocalizedReflector localize_reflector(const std::vector<double>& arrival_times_s,
                                      const ArrayGeometry& geometry, double theta_rad) {
  const int m_count = geometry.n_elements();
  if (static_cast<int>(arrival_times_s.size()) != m_count)
    throw InvalidParameter("localize_reflector: arrival count != element count");

  std::vector<int> valid;
  for (int m = 0; m < m_count; ++m)
    if (arrival_times_s[static_cast<std::size_t>(m)] > 0.0) valid.push_back(m);
  if (valid.size() < 2)
    throw InsufficientData("localize_reflector: need >= 2 valid arrival times");

  const double c = geometry.c_mps;

  // Initial guess: closed-form range inversion at the best-conditioned element.
  double r0 = 0.0;
  int used = 0;
  for (int m : valid) {
    const double tm = arrival_times_s[static_cast<std::size_t>(m)];
    const double dm = geometry.element_x_m[static_cast<std::size_t>(m)];
    const double denom = 2.0 * (c * tm - dm * std::sin(theta_rad));
    if (denom <= 1e-12) continue;
    r0 += (c * c * tm * tm - dm * dm) / denom;
    ++used;
  }
  if (used == 0) throw InsufficientData("localize_reflector: degenerate geometry");
  r0 /= used;

  double x = r0 * std::sin(theta_rad);
  double z = std::max(1e-6, r0 * std::cos(theta_rad));

  // Gauss-Newton on residual_m = |p - e_m| + |p| - c t_m.
  for (int it = 0; it < 30; ++it) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (int m : valid) {
      const double dm = geometry.element_x_m[static_cast<std::size_t>(m)];
      const double rm = std::hypot(x - dm, z);
      const double r = std::hypot(x, z);
      const double res = rm + r - c * arrival_times_s[static_cast<std::size_t>(m)];
      const Eigen::Vector2d grad((x - dm) / rm + x / r, z / rm + z / r);
      jtj += grad * grad.transpose();
      jtr += grad * res;
    }
    jtj += 1e-12 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d step = jtj.ldlt().solve(jtr);
    x -= step(0);
    z -= step(1);
    z = std::max(z, 1e-6);
    if (step.norm() < 1e-12) break;
  }

  LocalizedReflector out;
  out.x_m = x;
  out.z_m = z;
  double ss = 0.0;
  for (int m : valid) {
    const double dm = geometry.element_x_m[static_cast<std::size_t>(m)];
    const double res =
        std::hypot(x - dm, z) + std::hypot(x, z) - c * arrival_times_s[static_cast<std::size_t>(m)];
    ss += res * res;
  }
  out.residual_of_fit = std::sqrt(ss / static_cast<double>(valid.size()));
  return out;
}

SampledSignal inject_reflectors(const SampledSignal& line,
                                const std::vector<LocalizedReflector>& reflectors,
                                const PulseModel& pulse, double c_mps) {
  SampledSignal out = line;
  for (const LocalizedReflector& r : reflectors) {
    const double delay = 2.0 * r.range_m() / c_mps;
    add_pulse(out.samples, out.grid(), pulse, delay, r.amplitude);
  }
  return out;
}

}  // namespace usc

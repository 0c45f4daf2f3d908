#ifndef USC_BEAMFORM_HPP
#define USC_BEAMFORM_HPP

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "usc/phantom.hpp"
#include "usc/signal.hpp"
#include "usc/sparse_dict.hpp"

namespace usc {

/// Receive-delay lookup for one line angle: integer tap index and linear
/// interpolation fraction per (element, output sample). Taps that fall past
/// the end of the channel are masked and contribute zero.
struct DelayTable {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> tap;    // M x N
  Eigen::MatrixXd frac;                                      // M x N, in [0,1)
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> valid0;  // tap in range
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> valid1;  // tap+1 in range
  double theta_rad = 0.0;
};

/// tau(t) = t/2 + sqrt(t^2 + 4 (d/c)^2 - 4 (d/c) t sin(theta)) / 2 at t = n/fs.
DelayTable delay_table(const ArrayGeometry& geometry, double theta_rad, int n_samples);

/// Digital delay-and-sum with linear interpolation:
/// Phi[n] = (1/M) sum_m w_m [(1-a) phi_m[tau] + a phi_m[tau+1]].
SampledSignal das_beamform(const Eigen::MatrixXd& channels, const ArrayGeometry& geometry,
                           double theta_rad, const std::vector<double>& weights);

/// Uniform apodization helper.
std::vector<double> uniform_weights(int n_elements);
std::vector<double> hann_weights(int n_elements);

/// Precomputed representation-domain beamforming matrix H (N x M*P*K),
/// stored as per-(element, sample) weighted dictionary-row segments. Depends
/// only on (geometry, theta, dictionary, apodization) and is reusable across
/// frames.
struct RepOperator {
  struct Segment {
    int patch = 0;    // which patch block the tap falls in
    int row = 0;      // row of D within that patch
    double weight = 0.0;  // w_m / M times the interpolation weight
  };

  int n_out = 0;     // rows of H (= P * Q)
  int n_elements = 0;
  int n_patches = 0;
  int n_atoms = 0;
  double fs_hz = 0.0;
  std::shared_ptr<const Dictionary> dict;
  std::vector<double> weights;
  // segments[m * n_out + n] holds the (<= 2) taps of element m at sample n.
  std::vector<std::array<Segment, 2>> segments;
  std::vector<std::array<std::uint8_t, 2>> seg_valid;
  std::uint64_t geometry_hash = 0;
  std::uint64_t dict_hash = 0;
  double theta_rad = 0.0;

  std::uint64_t hash() const;
  /// Number of implied nonzero columns of row n (counting duplicates once).
  std::size_t row_nnz(int n) const;
};

/// Builds H for one line angle. n_samples must equal P * Q for some P.
RepOperator build_rep_operator(const ArrayGeometry& geometry, double theta_rad,
                               std::shared_ptr<const Dictionary> dict,
                               const std::vector<double>& weights, int n_samples);

/// Phi = H * Z evaluated over the nonzero code entries only.
SampledSignal rep_beamform(const RepOperator& op, const LineCodes& codes);

/// Process-wide cache of rep operators keyed by (geometry, theta, D, w) hashes.
std::shared_ptr<const RepOperator> cached_rep_operator(
    const ArrayGeometry& geometry, double theta_rad,
    std::shared_ptr<const Dictionary> dict, const std::vector<double>& weights,
    int n_samples);

struct LocalizedReflector {
  double x_m = 0.0;
  double z_m = 0.0;
  double amplitude = 0.0;
  double residual_of_fit = 0.0;  // RMS arrival-time mismatch, meters

  double range_m() const { return std::sqrt(x_m * x_m + z_m * z_m); }
  double angle_rad() const { return std::atan2(x_m, z_m); }
};

/// Solves for the point minimizing the total-path mismatch
/// sum_m (|p - e_m| + |p| - c t_m)^2 over elements with valid arrivals
/// (t_m <= 0 marks an element as missing). Needs >= 2 valid arrivals.
LocalizedReflector localize_reflector(const std::vector<double>& arrival_times_s,
                                      const ArrayGeometry& geometry, double theta_rad);

/// Adds a * h(t - 2r/c) per reflector on the line's own axis.
SampledSignal inject_reflectors(const SampledSignal& line,
                                const std::vector<LocalizedReflector>& reflectors,
                                const PulseModel& pulse, double c_mps);

}  // namespace usc

#endif

#ifndef USC_IMAGE_HPP
#define USC_IMAGE_HPP

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "usc/signal.hpp"

namespace usc {

/// Log-compressed image, values in [0, 255] (quantized only on file write).
struct BModeImage {
  Eigen::MatrixXd pixels;  // rows x cols
  // Geometry metadata (sector angles, depth span, pixel pitch); zero for
  /// plain polar images.
  double theta_min_rad = 0.0;
  double theta_max_rad = 0.0;
  double r_min_m = 0.0;
  double r_max_m = 0.0;
  double pixel_pitch_m = 0.0;

  int rows() const { return static_cast<int>(pixels.rows()); }
  int cols() const { return static_cast<int>(pixels.cols()); }
};

/// Storage accounting of one compressed frame.
struct CompressionReport {
  std::uint64_t n_samples_total = 0;
  std::uint64_t n_background_coeffs = 0;
  std::uint64_t n_reflector_params = 0;

  double compression_factor() const {
    const std::uint64_t stored = n_background_coeffs + n_reflector_params;
    return stored == 0 ? std::numeric_limits<double>::infinity()
                       : static_cast<double>(n_samples_total) / static_cast<double>(stored);
  }
  double percent_coeffs() const { return 100.0 / compression_factor(); }
};

/// Magnitude of the analytic signal (FFT Hilbert transform).
std::vector<double> envelope(const SampledSignal& line);
/// sqrt(I^2 + Q^2).
std::vector<double> envelope(const BasebandSignal& line);

/// 255 * clip(1 + 20 log10(env / env_max) / DR, 0, 1) per row; env_max taken
/// over the whole image. All-zero input maps to all-zero output.
Eigen::MatrixXd log_compress(const Eigen::MatrixXd& env_rows, double dynamic_range_db);

/// Bilinear scan conversion of polar data (lines x samples at the given
/// angles and ranges) onto a Cartesian pixel grid; out-of-sector pixels are 0.
/// When x/z extents are zero the bounding box of the sector is used.
BModeImage scan_convert(const Eigen::MatrixXd& polar, const std::vector<double>& line_angles_rad,
                        double r0_m, double dr_m, int out_w, int out_h,
                        double x_min_m = 0.0, double x_max_m = 0.0,
                        double z_min_m = 0.0, double z_max_m = 0.0);

struct MsePsnr {
  double mse = 0.0;
  double psnr_db = 0.0;  // +infinity for identical images
};

MsePsnr mse_psnr(const BModeImage& a, const BModeImage& b);

/// Mean SSIM with the standard 8-bit constants and an 11x11 Gaussian window
/// (sigma 1.5), evaluated over the fully covered interior.
double ssim(const BModeImage& a, const BModeImage& b);

CompressionReport compression_report(std::uint64_t n_samples_total,
                                     std::uint64_t n_background_coeffs,
                                     std::uint64_t n_reflectors);

/// 8-bit grayscale writers. PNG uses stored (uncompressed) deflate blocks.
void write_pgm(const BModeImage& image, const std::string& path);
void write_png(const BModeImage& image, const std::string& path);
BModeImage read_pgm(const std::string& path);

}  // namespace usc

#endif

#include "usc/image.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

namespace usc {

std::vector<double> envelope(const SampledSignal& line) {
  const int n = line.size();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (n == 0) return out;
  if (n == 1) {
    out[0] = std::abs(line.samples[0]);
    return out;
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time(line.samples.begin(), line.samples.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, time);

  // Analytic signal: keep DC and Nyquist, double positives, zero negatives.
  const int half = n / 2;
  for (int k = 1; k < half + (n % 2 ? 1 : 0); ++k) spec[static_cast<std::size_t>(k)] *= 2.0;
  for (int k = half + 1; k < n; ++k) spec[static_cast<std::size_t>(k)] = 0.0;
  if (n % 2 == 0) {
    // even length: bin n/2 is Nyquist, keep as is
  }

  std::vector<std::complex<double>> analytic;
  fft.inv(analytic, spec);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::abs(analytic[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<double> envelope(const BasebandSignal& line) { return line.envelope(); }

Eigen::MatrixXd log_compress(const Eigen::MatrixXd& env_rows, double dynamic_range_db) {
  if (dynamic_range_db <= 0.0)
    throw InvalidParameter("log_compress: dynamic_range_db must be > 0");
  const double env_max = env_rows.maxCoeff();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(env_rows.rows(), env_rows.cols());
  if (env_max <= 0.0) return out;
  for (Eigen::Index i = 0; i < env_rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < env_rows.cols(); ++j) {
      const double e = env_rows(i, j);
      if (e <= 0.0) continue;
      const double v = 1.0 + 20.0 * std::log10(e / env_max) / dynamic_range_db;
      out(i, j) = 255.0 * std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

BModeImage scan_convert(const Eigen::MatrixXd& polar, const std::vector<double>& line_angles_rad,
                        double r0_m, double dr_m, int out_w, int out_h,
                        double x_min_m, double x_max_m, double z_min_m, double z_max_m) {
  const int n_lines = static_cast<int>(polar.rows());
  const int n_samples = static_cast<int>(polar.cols());
  if (n_lines < 2) throw InvalidParameter("scan_convert: need >= 2 lines");
  if (static_cast<int>(line_angles_rad.size()) != n_lines)
    throw InvalidParameter("scan_convert: angle count != line count");
  if (out_w < 1 || out_h < 1) throw InvalidParameter("scan_convert: bad output size");

  const double theta_min = line_angles_rad.front();
  const double theta_max = line_angles_rad.back();
  const double r_max = r0_m + dr_m * (n_samples - 1);

  if (x_min_m == 0.0 && x_max_m == 0.0 && z_min_m == 0.0 && z_max_m == 0.0) {
    x_min_m = r_max * std::sin(std::min(theta_min, 0.0));
    x_max_m = r_max * std::sin(std::max(theta_max, 0.0));
    if (x_max_m <= x_min_m) x_max_m = x_min_m + 1e-6;
    z_min_m = r0_m * std::min(std::cos(theta_min), std::cos(theta_max));
    z_max_m = r_max;
  }

  BModeImage img;
  img.pixels.setZero(out_h, out_w);
  img.theta_min_rad = theta_min;
  img.theta_max_rad = theta_max;
  img.r_min_m = r0_m;
  img.r_max_m = r_max;
  img.pixel_pitch_m = (z_max_m - z_min_m) / out_h;

  for (int row = 0; row < out_h; ++row) {
    const double z = z_min_m + (row + 0.5) * (z_max_m - z_min_m) / out_h;
    for (int col = 0; col < out_w; ++col) {
      const double x = x_min_m + (col + 0.5) * (x_max_m - x_min_m) / out_w;
      const double r = std::hypot(x, z);
      const double theta = std::atan2(x, z);
      if (theta < theta_min || theta > theta_max) continue;
      const double rpos = (r - r0_m) / dr_m;
      if (rpos < 0.0 || rpos > n_samples - 1) continue;

      // Angle axis may be non-uniform; find the bracketing lines.
      int l1 = static_cast<int>(std::upper_bound(line_angles_rad.begin(), line_angles_rad.end(),
                                                 theta) -
                                line_angles_rad.begin());
      l1 = std::clamp(l1, 1, n_lines - 1);
      const int l0 = l1 - 1;
      const double span = line_angles_rad[static_cast<std::size_t>(l1)] -
                          line_angles_rad[static_cast<std::size_t>(l0)];
      const double ft = span > 0.0
                            ? std::clamp((theta - line_angles_rad[static_cast<std::size_t>(l0)]) / span,
                                         0.0, 1.0)
                            : 0.0;
      const int s0 = std::min(static_cast<int>(rpos), n_samples - 2);
      const double fr = rpos - s0;
      const double v = (1.0 - ft) * ((1.0 - fr) * polar(l0, s0) + fr * polar(l0, s0 + 1)) +
                       ft * ((1.0 - fr) * polar(l1, s0) + fr * polar(l1, s0 + 1));
      img.pixels(row, col) = v;
    }
  }
  return img;
}

MsePsnr mse_psnr(const BModeImage& a, const BModeImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidParameter("mse_psnr: dimension mismatch");
  const double n = static_cast<double>(a.pixels.size());
  const double mse = (a.pixels - b.pixels).squaredNorm() / n;
  MsePsnr out;
  out.mse = mse;
  out.psnr_db = mse == 0.0 ? std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10(255.0 * 255.0 / mse);
  return out;
}

double ssim(const BModeImage& a, const BModeImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidParameter("ssim: dimension mismatch");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

  if (a.rows() < kWin || a.cols() < kWin)
    throw InvalidParameter("ssim: image smaller than the 11x11 window");

  std::array<double, kWin> g{};
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    gsum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= gsum;

  const int rows = a.rows() - kWin + 1;
  const int cols = a.cols() - kWin + 1;
  double acc = 0.0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int u = 0; u < kWin; ++u) {
        for (int v = 0; v < kWin; ++v) {
          const double w = g[static_cast<std::size_t>(u)] * g[static_cast<std::size_t>(v)];
          const double pa = a.pixels(i + u, j + v);
          const double pb = b.pixels(i + u, j + v);
          mu_a += w * pa;
          mu_b += w * pb;
          aa += w * pa * pa;
          bb += w * pb * pb;
          ab += w * pa * pb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return acc / (static_cast<double>(rows) * cols);
}

CompressionReport compression_report(std::uint64_t n_samples_total,
                                     std::uint64_t n_background_coeffs,
                                     std::uint64_t n_reflectors) {
  CompressionReport r;
  r.n_samples_total = n_samples_total;
  r.n_background_coeffs = n_background_coeffs;
  // (a, t, w) for the STFT path, (a_I, a_Q, t) for the IQ path: 3 each.
  r.n_reflector_params = 3 * n_reflectors;
  return r;
}

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

// CRC32 (PNG polynomial).
std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0xffffffffu) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

void put_u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> buf;
  put_u32be(buf, static_cast<std::uint32_t>(data.size()));
  buf.insert(buf.end(), type, type + 4);
  buf.insert(buf.end(), data.begin(), data.end());
  const std::uint32_t crc =
      ~crc32(buf.data() + 4, buf.size() - 4);
  put_u32be(buf, crc);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_pgm(const BModeImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.cols()));
  for (int i = 0; i < image.rows(); ++i) {
    for (int j = 0; j < image.cols(); ++j) row[static_cast<std::size_t>(j)] = quantize(image.pixels(i, j));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_pgm: write failed for " + path);
}

BModeImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w < 1 || h < 1 || maxval != 255)
    throw IoError("read_pgm: unsupported PGM header in " + path);
  in.get();  // single whitespace after maxval
  BModeImage img;
  img.pixels.resize(h, w);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
  for (int i = 0; i < h; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw IoError("read_pgm: truncated payload in " + path);
    for (int j = 0; j < w; ++j) img.pixels(i, j) = row[static_cast<std::size_t>(j)];
  }
  return img;
}

void write_png(const BModeImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_png: cannot open " + path);
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(image.cols()));
  put_u32be(ihdr, static_cast<std::uint32_t>(image.rows()));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);

  // Raw scanlines with filter byte 0.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(image.rows()) * (image.cols() + 1));
  for (int i = 0; i < image.rows(); ++i) {
    raw.push_back(0);
    for (int j = 0; j < image.cols(); ++j) raw.push_back(quantize(image.pixels(i, j)));
  }

  // zlib stream made of stored (uncompressed) deflate blocks.
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
    const bool final = pos + len == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(len & 0xff));
    z.push_back(static_cast<std::uint8_t>(len >> 8));
    z.push_back(static_cast<std::uint8_t>(~len & 0xff));
    z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
             raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  std::uint32_t s1 = 1, s2 = 0;
  for (std::uint8_t b : raw) {
    s1 = (s1 + b) % 65521;
    s2 = (s2 + s1) % 65521;
  }
  put_u32be(z, (s2 << 16) | s1);
  write_chunk(out, "IDAT", z);
  write_chunk(out, "IEND", {});
  if (!out) throw IoError("write_png: write failed for " + path);
}

}  // namespace usc

#ifndef USC_PIPELINE_HPP
#define USC_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "usc/beamform.hpp"
#include "usc/decompose.hpp"
#include "usc/image.hpp"
#include "usc/io.hpp"
#include "usc/phantom.hpp"
#include "usc/sparse_dict.hpp"

namespace usc {

enum class PhantomKind { kPoint, kCyst };
enum class Apodization { kUniform, kHann };

struct DictionaryConfig {
  int patch_len = 100;
  int n_atoms = 400;
  int n_iters = 10;
  int train_lines = 10;
  int train_sparsity = 3;   // > 0: fixed-sparsity training sweeps
  double train_tol = 0.0;   // used when train_sparsity == 0
  double omp_tol = 0.0;     // <= 0: auto from the median patch norm
  int omp_max_nnz = 0;      // <= 0: patch_len / 2
};

struct ImagingConfig {
  double dynamic_range_db = 50.0;
  int out_px = 512;
  int min_cluster_sensors = 0;      // <= 0: max(3, M/4)
  double cluster_range_tol_m = 1.5e-3;
  double merge_distance_m = 1.0e-3;
};

/// One parsed run configuration. Strict schema: unknown keys are rejected.
struct RunConfig {
  ArrayGeometry geometry;
  std::vector<double> line_angles_rad;
  int n_samples = 2048;

  PhantomKind phantom_kind = PhantomKind::kPoint;
  PointPhantomConfig point;
  CystPhantomConfig cyst;

  PulseModel pulse;
  DecompositionConfig decomposition;
  DictionaryConfig dictionary;
  Apodization apodization = Apodization::kUniform;
  ImagingConfig imaging;

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  std::vector<double> apodization_weights() const;
  std::uint64_t dictionary_config_hash() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

// Fixed artifact names inside out_dir. The single-shot pipeline writes the
// same files as the stage commands, byte for byte.
namespace artifact {
inline constexpr const char* kFrame = "frame.usrf";
inline constexpr const char* kFrameBackground = "frame_background.usrf";
inline constexpr const char* kFrameReflectors = "frame_reflectors.usrf";
inline constexpr const char* kScatterers = "scatterers.json";
inline constexpr const char* kBackground = "background.usrf";
inline constexpr const char* kStrong = "strong.usrf";
inline constexpr const char* kReflectors = "reflectors.json";
inline constexpr const char* kDictionary = "dictionary.usdk";
inline constexpr const char* kCodes = "codes.ussc";
inline constexpr const char* kBeamformed = "bf_background.usrf";
inline constexpr const char* kLocalized = "localized_reflectors.json";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kCompression = "compression.csv";
inline constexpr const char* kSummary = "summary.json";
}  // namespace artifact

/// Phantom synthesis + ground-truth sidecar (per-component frames and the
/// scatterer list).
void run_simulate(const RunConfig& cfg);

/// Frame decomposition; writes the background frame (RF in both methods; the
/// IQ background is remodulated for the compression path), the strong
/// component frame and the reflector parameter list.
void run_decompose(const RunConfig& cfg);

/// K-SVD training on randomly chosen beamformed lines of the given frame.
void run_train(const RunConfig& cfg, const std::filesystem::path& frame_file,
               const std::filesystem::path& dict_file);

/// OMP coding of the background frame over the trained dictionary.
void run_encode(const RunConfig& cfg);

/// Representation-domain beamforming of the codes: Phi = H Z per line.
void run_beamform(const RunConfig& cfg);

/// Localizes reflectors from arrival times, injects them into the beamformed
/// lines, renders the background / strong-reflectors / combined images.
void run_render(const RunConfig& cfg);

/// Metrics against the ground-truth sidecar plus the compression accounting.
void run_evaluate(const RunConfig& cfg);

/// evaluate on an explicit image pair; appends one CSV row.
void evaluate_pair(const std::filesystem::path& image_a, const std::filesystem::path& image_b,
                   const std::filesystem::path& out_csv);

/// simulate -> decompose -> train -> encode -> beamform -> render -> evaluate.
void run_pipeline(const RunConfig& cfg);

// Shared helpers (also used by the stage implementations and tests).
SampledSignal das_line(const RawFrame& frame, int line, const std::vector<double>& weights);
double auto_omp_tol(const RawFrame& background, int patch_len);
std::vector<LocalizedReflector> localize_from_results(const FrameDecomposition& dec,
                                                      const RawFrame& frame,
                                                      const ImagingConfig& imaging);

}  // namespace usc

#endif

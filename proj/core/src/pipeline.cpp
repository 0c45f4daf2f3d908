#include "usc/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace usc {

using nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw InvalidParameter("config: " + path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) config_error(path + "/" + key, "unknown key");
  }
}

double get_num(const json& obj, const std::string& path, const char* key, double dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number()) config_error(path + "/" + key, "expected a number");
  return obj[key].get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key, int dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number_integer()) config_error(path + "/" + key, "expected an integer");
  return obj[key].get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_boolean()) config_error(path + "/" + key, "expected a boolean");
  return obj[key].get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_string()) config_error(path + "/" + key, "expected a string");
  return obj[key].get<std::string>();
}

RegionBox parse_box(const json& obj, const std::string& path, const RegionBox& dflt) {
  RegionBox box = dflt;
  reject_unknown(obj, path, {"x_half_m", "y_half_m", "z_center_m", "z_half_m"});
  box.x_half_m = get_num(obj, path, "x_half_m", box.x_half_m);
  box.y_half_m = get_num(obj, path, "y_half_m", box.y_half_m);
  box.z_center_m = get_num(obj, path, "z_center_m", box.z_center_m);
  box.z_half_m = get_num(obj, path, "z_half_m", box.z_half_m);
  return box;
}

std::vector<ReflectorSpec> parse_reflectors(const json& arr, const std::string& path) {
  std::vector<ReflectorSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const json& r = arr[i];
    if (!r.is_object()) config_error(p, "expected an object");
    reject_unknown(r, p, {"x_m", "y_m", "z_m", "gain", "freq_shift_hz", "phase_rad"});
    ReflectorSpec spec;
    spec.x_m = get_num(r, p, "x_m", 0.0);
    spec.y_m = get_num(r, p, "y_m", 0.0);
    spec.z_m = get_num(r, p, "z_m", 70e-3);
    spec.gain = get_num(r, p, "gain", 50.0);
    if (r.contains("freq_shift_hz") || r.contains("phase_rad")) {
      PulseCorruption c;
      c.freq_shift_hz = get_num(r, p, "freq_shift_hz", 0.0);
      c.phase_rad = get_num(r, p, "phase_rad", 0.0);
      spec.corruption = c;
    }
    out.push_back(spec);
  }
  return out;
}

std::filesystem::path in_dir(const RunConfig& cfg, const char* name) {
  return cfg.out_dir / name;
}

// reflectors.json (decomposition stage output)

json reflector_to_json(const ReflectorPulse& r) {
  return json{{"amp_cos", r.amp_cos},
              {"amp_sin", r.amp_sin},
              {"delay_s", r.delay_s},
              {"freq_shift_hz", r.freq_shift_hz},
              {"propagated", r.propagated}};
}

ReflectorPulse reflector_from_json(const json& j) {
  ReflectorPulse r;
  r.amp_cos = j.at("amp_cos").get<double>();
  r.amp_sin = j.at("amp_sin").get<double>();
  r.delay_s = j.at("delay_s").get<double>();
  r.freq_shift_hz = j.at("freq_shift_hz").get<double>();
  r.propagated = j.at("propagated").get<bool>();
  return r;
}

void write_reflectors(const FrameDecomposition& dec, DecomposeMethod method,
                      const std::filesystem::path& path) {
  json root;
  root["method"] = method == DecomposeMethod::kStft ? "stft" : "iq";
  root["n_lines"] = dec.n_lines;
  root["n_elements"] = dec.n_elements;
  json results = json::array();
  for (int l = 0; l < dec.n_lines; ++l) {
    for (int m = 0; m < dec.n_elements; ++m) {
      const DecompositionResult& r = dec.at(l, m);
      json pulses = json::array();
      for (const ReflectorPulse& p : r.reflectors) pulses.push_back(reflector_to_json(p));
      results.push_back(json{{"line", l},
                             {"element", m},
                             {"threshold", r.threshold_used},
                             {"iterations", r.iterations_used},
                             {"skipped_propagations", r.skipped_propagations},
                             {"pulses", std::move(pulses)}});
    }
  }
  root["results"] = std::move(results);
  atomic_write(path, root.dump(2) + "\n");
}

FrameDecomposition read_reflectors(const std::filesystem::path& path,
                                   DecomposeMethod* method) {
  json root = json::parse(read_file_bytes(path));
  FrameDecomposition dec;
  dec.n_lines = root.at("n_lines").get<int>();
  dec.n_elements = root.at("n_elements").get<int>();
  dec.results.resize(static_cast<std::size_t>(dec.n_lines) * dec.n_elements);
  if (method)
    *method = root.at("method").get<std::string>() == "iq" ? DecomposeMethod::kIq
                                                           : DecomposeMethod::kStft;
  for (const json& entry : root.at("results")) {
    const int l = entry.at("line").get<int>();
    const int m = entry.at("element").get<int>();
    DecompositionResult& r = dec.at(l, m);
    r.threshold_used = entry.at("threshold").get<double>();
    r.iterations_used = entry.at("iterations").get<int>();
    r.skipped_propagations = entry.at("skipped_propagations").get<int>();
    for (const json& p : entry.at("pulses")) r.reflectors.push_back(reflector_from_json(p));
  }
  return dec;
}

// Rendering helpers

Eigen::MatrixXd envelope_rows(const std::vector<SampledSignal>& lines) {
  const int n = lines.empty() ? 0 : lines.front().size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(lines.size()), n);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::vector<double> env = envelope(lines[l]);
    for (int i = 0; i < n; ++i)
      rows(static_cast<Eigen::Index>(l), i) = env[static_cast<std::size_t>(i)];
  }
  return rows;
}

BModeImage render_image(const Eigen::MatrixXd& env_rows, const std::vector<double>& angles,
                        double fs_hz, double c_mps, const ImagingConfig& imaging) {
  const Eigen::MatrixXd compressed = log_compress(env_rows, imaging.dynamic_range_db);
  if (angles.size() < 2) {
    // Single-line runs keep the polar rows; sector conversion needs a fan.
    BModeImage img;
    img.pixels = compressed;
    return img;
  }
  const double dr = c_mps / (2.0 * fs_hz);
  return scan_convert(compressed, angles, 0.0, dr, imaging.out_px, imaging.out_px);
}

double ssim_or_nan(const BModeImage& a, const BModeImage& b) {
  if (a.rows() < 11 || a.cols() < 11) return std::numeric_limits<double>::quiet_NaN();
  return ssim(a, b);
}

void write_image_pair(const BModeImage& img, const std::filesystem::path& base) {
  write_pgm(img, base.string() + ".pgm");
  write_png(img, base.string() + ".png");
}

}  // namespace

std::vector<double> RunConfig::apodization_weights() const {
  return apodization == Apodization::kHann ? hann_weights(geometry.n_elements())
                                           : uniform_weights(geometry.n_elements());
}

std::uint64_t RunConfig::dictionary_config_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = hash_combine(h, static_cast<std::uint64_t>(dictionary.patch_len));
  h = hash_combine(h, static_cast<std::uint64_t>(dictionary.n_atoms));
  h = hash_combine(h, static_cast<std::uint64_t>(dictionary.n_iters));
  h = hash_combine(h, static_cast<std::uint64_t>(dictionary.train_lines));
  h = hash_combine(h, static_cast<std::uint64_t>(dictionary.train_sparsity));
  h = hash_combine(h, dictionary.train_tol);
  h = hash_combine(h, seed);
  return h;
}

RunConfig parse_config(const std::string& json_text) {
  json root = json::parse(json_text);
  if (!root.is_object()) throw InvalidParameter("config: top level must be an object");
  reject_unknown(root, "", {"geometry", "pulse", "phantom", "decomposition", "dictionary",
                            "beamform", "imaging", "seeds", "paths"});
  RunConfig cfg;

  {
    const json g = root.value("geometry", json::object());
    const std::string p = "geometry";
    reject_unknown(g, p, {"n_elements", "pitch_m", "element_width_m", "c_mps", "fs_hz",
                          "f0_hz", "n_lines", "sector_deg", "line_angles_deg", "n_samples"});
    const int m = get_int(g, p, "n_elements", 64);
    const double pitch = get_num(g, p, "pitch_m", 0.275e-3);
    const double width = get_num(g, p, "element_width_m", 0.22e-3);
    const double c = get_num(g, p, "c_mps", 1540.0);
    const double fs = get_num(g, p, "fs_hz", 16e6);
    const double f0 = get_num(g, p, "f0_hz", 3.5e6);
    cfg.geometry = ArrayGeometry::uniform(m, pitch, width, c, fs, f0);
    cfg.n_samples = get_int(g, p, "n_samples", 2048);
    if (cfg.n_samples < 1) config_error(p + "/n_samples", "must be >= 1");

    if (g.contains("line_angles_deg")) {
      if (!g["line_angles_deg"].is_array())
        config_error(p + "/line_angles_deg", "expected an array");
      for (const json& a : g["line_angles_deg"])
        cfg.line_angles_rad.push_back(a.get<double>() * kDegToRad);
    } else {
      const int n_lines = get_int(g, p, "n_lines", 1);
      const double sector = get_num(g, p, "sector_deg", 0.0);
      if (n_lines < 1) config_error(p + "/n_lines", "must be >= 1");
      for (int i = 0; i < n_lines; ++i) {
        const double a = n_lines == 1 ? 0.0 : -sector / 2.0 + i * sector / (n_lines - 1);
        cfg.line_angles_rad.push_back(a * kDegToRad);
      }
    }
  }

  {
    const json u = root.value("pulse", json::object());
    const std::string p = "pulse";
    reject_unknown(u, p, {"carrier_hz", "envelope_sigma_s", "phase_rad"});
    cfg.pulse.carrier_hz = get_num(u, p, "carrier_hz", cfg.geometry.f0_hz);
    cfg.pulse.envelope_sigma_s = get_num(u, p, "envelope_sigma_s", 1.0 / cfg.pulse.carrier_hz);
    cfg.pulse.phase_rad = get_num(u, p, "phase_rad", 0.0);
    cfg.pulse.amplitude = 1.0;
  }

  {
    const json ph = root.value("phantom", json::object());
    const std::string p = "phantom";
    reject_unknown(ph, p, {"kind", "speckle_count", "amplitude_std", "box", "reflectors",
                           "cyst"});
    const std::string kind = get_str(ph, p, "kind", "point");
    if (kind == "point")
      cfg.phantom_kind = PhantomKind::kPoint;
    else if (kind == "cyst")
      cfg.phantom_kind = PhantomKind::kCyst;
    else
      config_error(p + "/kind", "expected point or cyst");

    const int speckle = get_int(ph, p, "speckle_count", 100000);
    const double std_dev = get_num(ph, p, "amplitude_std", 1.0);
    const RegionBox box =
        ph.contains("box") ? parse_box(ph["box"], p + "/box", RegionBox{}) : RegionBox{};
    cfg.point.speckle_count = speckle;
    cfg.point.amplitude_std = std_dev;
    cfg.point.box = box;
    cfg.cyst.speckle_count = speckle;
    cfg.cyst.amplitude_std = std_dev;
    cfg.cyst.box = box;
    if (ph.contains("reflectors")) {
      const auto reflectors = parse_reflectors(ph["reflectors"], p + "/reflectors");
      cfg.point.reflectors = reflectors;
      cfg.cyst.reflectors = reflectors;
    } else {
      cfg.point.reflectors.clear();  // the cyst default reflector stays
    }
    if (ph.contains("cyst")) {
      const json& cy = ph["cyst"];
      const std::string cp = p + "/cyst";
      reject_unknown(cy, cp, {"center_x_m", "center_z_m", "radius_m"});
      cfg.cyst.cyst_center_x_m = get_num(cy, cp, "center_x_m", 0.0);
      cfg.cyst.cyst_center_z_m = get_num(cy, cp, "center_z_m", 70e-3);
      cfg.cyst.cyst_radius_m = get_num(cy, cp, "radius_m", 8.5e-3);
    }
  }

  {
    const json d = root.value("decomposition", json::object());
    const std::string p = "decomposition";
    reject_unknown(d, p, {"method", "modified", "max_pulses", "epsilon0", "window_len",
                          "hop", "local_max_window"});
    const std::string method = get_str(d, p, "method", "stft");
    if (method == "stft")
      cfg.decomposition.method = DecomposeMethod::kStft;
    else if (method == "iq")
      cfg.decomposition.method = DecomposeMethod::kIq;
    else
      config_error(p + "/method", "expected stft or iq");
    cfg.decomposition.modified = get_bool(d, p, "modified", false);
    cfg.decomposition.max_pulses = get_int(d, p, "max_pulses", 20);
    cfg.decomposition.amp_threshold = get_num(d, p, "epsilon0", 0.0);
    cfg.decomposition.window_len = get_int(d, p, "window_len", 64);
    cfg.decomposition.hop = get_int(d, p, "hop", 16);
    cfg.decomposition.local_max_window = get_int(d, p, "local_max_window", 3);
  }

  {
    const json d = root.value("dictionary", json::object());
    const std::string p = "dictionary";
    reject_unknown(d, p, {"patch_len", "n_atoms", "n_iters", "train_lines", "train_sparsity",
                          "train_tol", "omp_tol", "omp_max_nnz"});
    cfg.dictionary.patch_len = get_int(d, p, "patch_len", 100);
    cfg.dictionary.n_atoms = get_int(d, p, "n_atoms", 400);
    cfg.dictionary.n_iters = get_int(d, p, "n_iters", 10);
    cfg.dictionary.train_lines = get_int(d, p, "train_lines", 10);
    cfg.dictionary.train_sparsity = get_int(d, p, "train_sparsity", 3);
    cfg.dictionary.train_tol = get_num(d, p, "train_tol", 0.0);
    cfg.dictionary.omp_tol = get_num(d, p, "omp_tol", 0.0);
    cfg.dictionary.omp_max_nnz = get_int(d, p, "omp_max_nnz", 0);
    if (cfg.dictionary.patch_len < 1) config_error(p + "/patch_len", "must be >= 1");
  }

  {
    const json b = root.value("beamform", json::object());
    reject_unknown(b, "beamform", {"apodization"});
    const std::string apo = get_str(b, "beamform", "apodization", "uniform");
    if (apo == "uniform")
      cfg.apodization = Apodization::kUniform;
    else if (apo == "hann")
      cfg.apodization = Apodization::kHann;
    else
      config_error("beamform/apodization", "expected uniform or hann");
  }

  {
    const json im = root.value("imaging", json::object());
    const std::string p = "imaging";
    reject_unknown(im, p, {"dynamic_range_db", "out_px", "min_cluster_sensors",
                           "cluster_range_tol_m", "merge_distance_m"});
    cfg.imaging.dynamic_range_db = get_num(im, p, "dynamic_range_db", 50.0);
    cfg.imaging.out_px = get_int(im, p, "out_px", 512);
    cfg.imaging.min_cluster_sensors = get_int(im, p, "min_cluster_sensors", 0);
    cfg.imaging.cluster_range_tol_m = get_num(im, p, "cluster_range_tol_m", 1.5e-3);
    cfg.imaging.merge_distance_m = get_num(im, p, "merge_distance_m", 1.0e-3);
  }

  {
    const json s = root.value("seeds", json::object());
    reject_unknown(s, "seeds", {"master"});
    if (s.contains("master")) {
      if (!s["master"].is_number_integer())
        config_error("seeds/master", "expected an integer");
      cfg.seed = s["master"].get<std::uint64_t>();
    }
    const json pa = root.value("paths", json::object());
    reject_unknown(pa, "paths", {"out_dir"});
    cfg.out_dir = get_str(pa, "paths", "out_dir", "out");
  }

  cfg.point.seed = cfg.seed;
  cfg.cyst.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file_bytes(path));
}

SampledSignal das_line(const RawFrame& frame, int line, const std::vector<double>& weights) {
  return das_beamform(frame.line_matrix(line), frame.geometry,
                      frame.line_angles_rad[static_cast<std::size_t>(line)], weights);
}

double auto_omp_tol(const RawFrame& background, int patch_len) {
  std::vector<double> norms;
  double max_norm = 0.0;
  for (int l = 0; l < background.n_lines(); ++l)
    for (int m = 0; m < background.geometry.n_elements(); ++m) {
      const auto patches = patchify(background.channel_signal(l, m), patch_len);
      for (const Eigen::VectorXd& p : patches) {
        norms.push_back(p.norm());
        max_norm = std::max(max_norm, norms.back());
      }
    }
  if (norms.empty() || max_norm == 0.0) return 0.0;
  // Median over the active patches only; silent stretches before the first
  // echo would otherwise pull the tolerance to zero.
  std::erase_if(norms, [&](double v) { return v < 1e-9 * max_norm; });
  const std::size_t mid = norms.size() / 2;
  std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(mid),
                   norms.end());
  return 0.3 * norms[mid];
}

void run_simulate(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const Phantom phantom = cfg.phantom_kind == PhantomKind::kPoint
                              ? make_point_phantom(cfg.point)
                              : make_cyst_phantom(cfg.cyst);

  const RawFrame frame =
      simulate_rx(phantom, cfg.geometry, cfg.line_angles_rad, cfg.pulse, cfg.n_samples);
  write_frame(frame, in_dir(cfg, artifact::kFrame));

  // Ground-truth sidecar: per-component frames plus the scatterer list.
  const bool has_reflectors = phantom.first_reflector < phantom.scatterers.size();
  if (has_reflectors) {
    const RawFrame bg = simulate_rx(phantom.speckle_only(), cfg.geometry,
                                    cfg.line_angles_rad, cfg.pulse, cfg.n_samples);
    write_frame(bg, in_dir(cfg, artifact::kFrameBackground));
    const RawFrame strong = simulate_rx(phantom.reflectors_only(), cfg.geometry,
                                        cfg.line_angles_rad, cfg.pulse, cfg.n_samples);
    write_frame(strong, in_dir(cfg, artifact::kFrameReflectors));
  }

  json scat = json::array();
  for (const Scatterer& s : phantom.scatterers) {
    json e{{"x_m", s.x_m}, {"y_m", s.y_m}, {"z_m", s.z_m}, {"amplitude", s.amplitude}};
    if (s.corruption) {
      e["freq_shift_hz"] = s.corruption->freq_shift_hz;
      e["phase_rad"] = s.corruption->phase_rad;
    }
    scat.push_back(std::move(e));
  }
  json root{{"first_reflector", phantom.first_reflector},
            {"seed", cfg.seed},
            {"scatterers", std::move(scat)}};
  atomic_write(in_dir(cfg, artifact::kScatterers), root.dump(2) + "\n");
}

void run_decompose(const RunConfig& cfg) {
  const RawFrame frame = read_frame(in_dir(cfg, artifact::kFrame));
  const FrameDecomposition dec = decompose_frame(frame, cfg.pulse, cfg.decomposition);

  RawFrame background = frame;
  RawFrame strong = frame;
  const SignalGrid grid{frame.n_samples, frame.geometry.fs_hz, 0.0};
  for (int l = 0; l < frame.n_lines(); ++l) {
    for (int m = 0; m < frame.geometry.n_elements(); ++m) {
      const DecompositionResult& r = dec.at(l, m);
      std::vector<double> bg, st;
      if (cfg.decomposition.method == DecomposeMethod::kStft) {
        bg = r.background_rf.samples;
        st = reconstruct_reflectors_rf(r.reflectors, cfg.pulse, grid).samples;
      } else {
        bg = iq_remodulate(r.background_iq).samples;
        st = iq_remodulate(reconstruct_reflectors_iq(r.reflectors, cfg.pulse, r.background_iq))
                 .samples;
      }
      std::copy(bg.begin(), bg.end(), background.channel(l, m));
      std::copy(st.begin(), st.end(), strong.channel(l, m));
    }
  }
  write_frame(background, in_dir(cfg, artifact::kBackground));
  write_frame(strong, in_dir(cfg, artifact::kStrong));
  write_reflectors(dec, cfg.decomposition.method, in_dir(cfg, artifact::kReflectors));
}

void run_train(const RunConfig& cfg, const std::filesystem::path& frame_file,
               const std::filesystem::path& dict_file) {
  const RawFrame frame = read_frame(frame_file);
  const std::vector<double> weights = cfg.apodization_weights();

  std::vector<int> order(static_cast<std::size_t>(frame.n_lines()));
  for (int i = 0; i < frame.n_lines(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng = substream_rng(cfg.seed, "train-lines");
  std::shuffle(order.begin(), order.end(), rng);
  const int take = std::min<int>(cfg.dictionary.train_lines, frame.n_lines());

  std::vector<SampledSignal> lines;
  for (int i = 0; i < take; ++i)
    lines.push_back(das_line(frame, order[static_cast<std::size_t>(i)], weights));

  const TrainingSet train = training_set_from_lines(lines, cfg.dictionary.patch_len);
  KsvdOptions opts;
  opts.n_atoms = cfg.dictionary.n_atoms;
  opts.n_iters = cfg.dictionary.n_iters;
  opts.sparsity = cfg.dictionary.train_sparsity;
  opts.tol = cfg.dictionary.train_tol;
  opts.seed = cfg.seed;

  DictionaryFile file;
  file.dict = ksvd_train(train, opts);
  file.training_tol = cfg.dictionary.train_tol;
  file.config_hash = cfg.dictionary_config_hash();
  write_dictionary(file, dict_file);
}

void run_encode(const RunConfig& cfg) {
  const RawFrame background = read_frame(in_dir(cfg, artifact::kBackground));
  const DictionaryFile dict_file = read_dictionary(in_dir(cfg, artifact::kDictionary));
  if (dict_file.dict.patch_len() != cfg.dictionary.patch_len ||
      dict_file.dict.n_atoms() != cfg.dictionary.n_atoms)
    throw IoError("encode: dictionary dimensions do not match the configuration");
  if (dict_file.config_hash != cfg.dictionary_config_hash())
    throw IoError("encode: dictionary was trained under a different configuration");

  const int q = dict_file.dict.patch_len();
  const double tol =
      cfg.dictionary.omp_tol > 0.0 ? cfg.dictionary.omp_tol : auto_omp_tol(background, q);
  const int max_nnz = cfg.dictionary.omp_max_nnz > 0 ? cfg.dictionary.omp_max_nnz : q / 2;

  const int m_count = background.geometry.n_elements();
  const int p_count = (background.n_samples + q - 1) / q;

  CodesFile codes;
  codes.dict_hash = dict_file.dict.hash();
  codes.lines.resize(static_cast<std::size_t>(background.n_lines()));
  for (int l = 0; l < background.n_lines(); ++l) {
    LineCodes& line = codes.lines[static_cast<std::size_t>(l)];
    line.n_elements = m_count;
    line.n_patches = p_count;
    line.n_atoms = dict_file.dict.n_atoms();
    line.patches.resize(static_cast<std::size_t>(m_count) * p_count);
#pragma omp parallel for schedule(dynamic)
    for (int m = 0; m < m_count; ++m) {
      const auto patches = patchify(background.channel_signal(l, m), q);
      for (int p = 0; p < p_count; ++p)
        line.at(m, p) =
            omp_encode(patches[static_cast<std::size_t>(p)], dict_file.dict, tol, max_nnz);
    }
  }
  write_codes(codes, in_dir(cfg, artifact::kCodes));
}

void run_beamform(const RunConfig& cfg) {
  const RawFrame background = read_frame(in_dir(cfg, artifact::kBackground));
  const DictionaryFile dict_file = read_dictionary(in_dir(cfg, artifact::kDictionary));
  const CodesFile codes = read_codes(in_dir(cfg, artifact::kCodes));
  auto dict = std::make_shared<Dictionary>(dict_file.dict);
  if (codes.dict_hash != dict->hash())
    throw IoError("beamform: codes were produced with a different dictionary");
  if (static_cast<int>(codes.lines.size()) != background.n_lines())
    throw IoError("beamform: code line count does not match the frame");

  const std::vector<double> weights = cfg.apodization_weights();
  const int q = dict->patch_len();
  const int p_count = codes.lines.front().n_patches;
  const int n_op = p_count * q;

  RawFrame out;
  out.geometry = background.geometry;
  out.geometry.element_x_m = {0.0};
  out.line_angles_rad = background.line_angles_rad;
  out.n_samples = background.n_samples;
  out.channels.assign(
      static_cast<std::size_t>(background.n_lines()) * background.n_samples, 0.0);

  for (int l = 0; l < background.n_lines(); ++l) {
    const double theta = background.line_angles_rad[static_cast<std::size_t>(l)];
    const auto op = cached_rep_operator(background.geometry, theta, dict, weights, n_op);
    const SampledSignal phi = rep_beamform(*op, codes.lines[static_cast<std::size_t>(l)]);
    double* dst = out.channel(l, 0);
    for (int i = 0; i < background.n_samples; ++i)
      dst[i] = phi.samples[static_cast<std::size_t>(i)];
  }
  write_frame(out, in_dir(cfg, artifact::kBeamformed));
}

std::vector<LocalizedReflector> localize_from_results(const FrameDecomposition& dec,
                                                      const RawFrame& frame,
                                                      const ImagingConfig& imaging) {
  const int m_count = frame.geometry.n_elements();
  const double c = frame.geometry.c_mps;
  const int min_sensors =
      imaging.min_cluster_sensors > 0 ? imaging.min_cluster_sensors : std::max(3, m_count / 4);

  struct Candidate {
    LocalizedReflector loc;
    int support = 0;
  };
  std::vector<Candidate> candidates;

  struct Hit {
    int sensor;
    double delay;
    double magnitude;
    double range;
  };
  for (int l = 0; l < dec.n_lines; ++l) {
    const double theta = frame.line_angles_rad[static_cast<std::size_t>(l)];
    std::vector<Hit> hits;
    for (int m = 0; m < m_count; ++m) {
      for (const ReflectorPulse& p : dec.at(l, m).reflectors) {
        if (p.propagated) continue;
        double range = 0.0;
        if (!invert_arrival_to_range(
                p.delay_s, theta, frame.geometry.element_x_m[static_cast<std::size_t>(m)], c,
                &range))
          continue;
        hits.push_back({m, p.delay_s, p.magnitude(), range});
      }
    }
    std::sort(hits.begin(), hits.end(),
              [](const Hit& a, const Hit& b) { return a.range < b.range; });

    std::size_t start = 0;
    while (start < hits.size()) {
      std::size_t stop = start + 1;
      while (stop < hits.size() &&
             hits[stop].range - hits[start].range <= imaging.cluster_range_tol_m)
        ++stop;

      // Strongest hit per sensor inside the cluster.
      std::vector<double> arrivals(static_cast<std::size_t>(m_count), 0.0);
      std::vector<double> magnitudes(static_cast<std::size_t>(m_count), 0.0);
      int support = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const Hit& h = hits[i];
        if (h.magnitude > magnitudes[static_cast<std::size_t>(h.sensor)]) {
          if (magnitudes[static_cast<std::size_t>(h.sensor)] == 0.0) ++support;
          magnitudes[static_cast<std::size_t>(h.sensor)] = h.magnitude;
          arrivals[static_cast<std::size_t>(h.sensor)] = h.delay;
        }
      }

      if (support >= std::max(2, min_sensors)) {
        LocalizedReflector loc = localize_reflector(arrivals, frame.geometry, theta);
        if (loc.z_m > 0.0) {
          // Amplitude convention: the estimate at the sensor nearest the
          // array center (the reference element).
          int ref = -1;
          for (int m = 0; m < m_count; ++m) {
            if (magnitudes[static_cast<std::size_t>(m)] == 0.0) continue;
            if (ref < 0 ||
                std::abs(frame.geometry.element_x_m[static_cast<std::size_t>(m)]) <
                    std::abs(frame.geometry.element_x_m[static_cast<std::size_t>(ref)]))
              ref = m;
          }
          loc.amplitude = ref >= 0 ? magnitudes[static_cast<std::size_t>(ref)] : 0.0;
          candidates.push_back({loc, support});
        }
      }
      start = stop;
    }
  }

  // Merge duplicates across lines, keeping the best-supported estimate.
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.support != b.support) return a.support > b.support;
              return a.loc.amplitude > b.loc.amplitude;
            });
  std::vector<LocalizedReflector> kept;
  for (const Candidate& cand : candidates) {
    bool duplicate = false;
    for (const LocalizedReflector& k : kept)
      duplicate = duplicate || std::hypot(cand.loc.x_m - k.x_m, cand.loc.z_m - k.z_m) <
                                   imaging.merge_distance_m;
    if (!duplicate) kept.push_back(cand.loc);
  }
  return kept;
}

void run_render(const RunConfig& cfg) {
  const RawFrame background = read_frame(in_dir(cfg, artifact::kBackground));
  const RawFrame beamformed = read_frame(in_dir(cfg, artifact::kBeamformed));
  DecomposeMethod method;
  const FrameDecomposition dec = read_reflectors(in_dir(cfg, artifact::kReflectors), &method);

  const std::vector<LocalizedReflector> reflectors =
      localize_from_results(dec, background, cfg.imaging);

  // Assign each reflector to the line nearest its direction.
  const int n_lines = beamformed.n_lines();
  std::vector<std::vector<LocalizedReflector>> per_line(static_cast<std::size_t>(n_lines));
  for (const LocalizedReflector& r : reflectors) {
    int best = 0;
    for (int l = 1; l < n_lines; ++l)
      if (std::abs(beamformed.line_angles_rad[static_cast<std::size_t>(l)] - r.angle_rad()) <
          std::abs(beamformed.line_angles_rad[static_cast<std::size_t>(best)] -
                   r.angle_rad()))
        best = l;
    per_line[static_cast<std::size_t>(best)].push_back(r);
  }

  std::vector<SampledSignal> bg_lines, strong_lines, combined_lines;
  for (int l = 0; l < n_lines; ++l) {
    SampledSignal bg = beamformed.channel_signal(l, 0);
    SampledSignal zero = bg;
    std::fill(zero.samples.begin(), zero.samples.end(), 0.0);
    const SampledSignal strong = inject_reflectors(
        zero, per_line[static_cast<std::size_t>(l)], cfg.pulse, beamformed.geometry.c_mps);
    const SampledSignal combined = inject_reflectors(
        bg, per_line[static_cast<std::size_t>(l)], cfg.pulse, beamformed.geometry.c_mps);
    bg_lines.push_back(std::move(bg));
    strong_lines.push_back(strong);
    combined_lines.push_back(combined);
  }

  const double fs = beamformed.geometry.fs_hz;
  const double c = beamformed.geometry.c_mps;
  write_image_pair(
      render_image(envelope_rows(bg_lines), beamformed.line_angles_rad, fs, c, cfg.imaging),
      cfg.out_dir / "background_image");
  write_image_pair(render_image(envelope_rows(strong_lines), beamformed.line_angles_rad, fs,
                                c, cfg.imaging),
                   cfg.out_dir / "strong_reflectors_image");
  write_image_pair(render_image(envelope_rows(combined_lines), beamformed.line_angles_rad,
                                fs, c, cfg.imaging),
                   cfg.out_dir / "combined_image");

  json out = json::array();
  for (const LocalizedReflector& r : reflectors)
    out.push_back(json{{"x_m", r.x_m},
                       {"z_m", r.z_m},
                       {"amplitude", r.amplitude},
                       {"residual_of_fit", r.residual_of_fit}});
  json root{{"amplitude_convention", "reference_element"}, {"reflectors", std::move(out)}};
  atomic_write(in_dir(cfg, artifact::kLocalized), root.dump(2) + "\n");
}

void evaluate_pair(const std::filesystem::path& image_a, const std::filesystem::path& image_b,
                   const std::filesystem::path& out_csv) {
  const BModeImage a = read_pgm(image_a.string());
  const BModeImage b = read_pgm(image_b.string());
  const MsePsnr mp = mse_psnr(a, b);
  const double s = ssim_or_nan(a, b);
  std::ostringstream csv;
  csv << "image_a,image_b,mse,psnr_db,ssim\n";
  csv << image_a.string() << "," << image_b.string() << "," << mp.mse << "," << mp.psnr_db
      << "," << s << "\n";
  atomic_write(out_csv, csv.str());
}

void run_evaluate(const RunConfig& cfg) {
  const char* method = cfg.decomposition.method == DecomposeMethod::kStft ? "stft" : "iq";

  // Compression accounting from the stored artifacts.
  {
    const RawFrame frame = read_frame(in_dir(cfg, artifact::kFrame));
    const CodesFile codes = read_codes(in_dir(cfg, artifact::kCodes));
    DecomposeMethod m;
    const FrameDecomposition dec = read_reflectors(in_dir(cfg, artifact::kReflectors), &m);

    const std::uint64_t total = static_cast<std::uint64_t>(frame.n_lines()) *
                                frame.geometry.n_elements() * frame.n_samples;
    std::uint64_t nnz = 0;
    for (const LineCodes& line : codes.lines) nnz += line.nnz();
    std::uint64_t n_reflectors = 0;
    for (const DecompositionResult& r : dec.results) n_reflectors += r.reflectors.size();

    const CompressionReport bg_only = compression_report(total, nnz, 0);
    const CompressionReport with_refl = compression_report(total, nnz, n_reflectors);

    std::ostringstream csv;
    csv << "scope,method,n_samples,n_coeffs,n_reflector_params,percent_coeffs,"
           "compression_factor\n";
    char line[256];
    std::snprintf(line, sizeof line, "background,%s,%llu,%llu,%llu,%.2f,%.2f\n", method,
                  static_cast<unsigned long long>(bg_only.n_samples_total),
                  static_cast<unsigned long long>(bg_only.n_background_coeffs),
                  static_cast<unsigned long long>(bg_only.n_reflector_params),
                  bg_only.percent_coeffs(), bg_only.compression_factor());
    csv << line;
    std::snprintf(line, sizeof line, "background+reflectors,%s,%llu,%llu,%llu,%.2f,%.2f\n",
                  method, static_cast<unsigned long long>(with_refl.n_samples_total),
                  static_cast<unsigned long long>(with_refl.n_background_coeffs),
                  static_cast<unsigned long long>(with_refl.n_reflector_params),
                  with_refl.percent_coeffs(), with_refl.compression_factor());
    csv << line;
    atomic_write(in_dir(cfg, artifact::kCompression), csv.str());
  }

  // Image metrics against the ground-truth sidecar, when present.
  std::ostringstream csv;
  csv << "image,method,mse,psnr_db,ssim\n";
  const std::vector<double> weights = cfg.apodization_weights();
  const auto gt_bg_path = in_dir(cfg, artifact::kFrameBackground);
  if (std::filesystem::exists(gt_bg_path)) {
    const RawFrame gt_bg = read_frame(gt_bg_path);
    const RawFrame original = read_frame(in_dir(cfg, artifact::kFrame));

    auto render_das = [&](const RawFrame& f) {
      std::vector<SampledSignal> lines;
      for (int l = 0; l < f.n_lines(); ++l) lines.push_back(das_line(f, l, weights));
      return render_image(envelope_rows(lines), f.line_angles_rad, f.geometry.fs_hz,
                          f.geometry.c_mps, cfg.imaging);
    };
    write_pgm(render_das(gt_bg), (cfg.out_dir / "gt_background_image.pgm").string());
    write_pgm(render_das(original), (cfg.out_dir / "original_image.pgm").string());

    const BModeImage est_bg = read_pgm((cfg.out_dir / "background_image.pgm").string());
    const BModeImage combined = read_pgm((cfg.out_dir / "combined_image.pgm").string());
    const BModeImage gt_bg_q = read_pgm((cfg.out_dir / "gt_background_image.pgm").string());
    const BModeImage original_q = read_pgm((cfg.out_dir / "original_image.pgm").string());

    const MsePsnr bg_mp = mse_psnr(est_bg, gt_bg_q);
    csv << "background," << method << "," << bg_mp.mse << "," << bg_mp.psnr_db << ","
        << ssim_or_nan(est_bg, gt_bg_q) << "\n";
    const MsePsnr cm_mp = mse_psnr(combined, original_q);
    csv << "combined," << method << "," << cm_mp.mse << "," << cm_mp.psnr_db << ","
        << ssim_or_nan(combined, original_q) << "\n";
  }
  atomic_write(in_dir(cfg, artifact::kMetrics), csv.str());
}

void run_pipeline(const RunConfig& cfg) {
  run_simulate(cfg);
  run_decompose(cfg);
  run_train(cfg, in_dir(cfg, artifact::kBackground), in_dir(cfg, artifact::kDictionary));
  run_encode(cfg);
  run_beamform(cfg);
  run_render(cfg);
  run_evaluate(cfg);

  const DictionaryFile dict = read_dictionary(in_dir(cfg, artifact::kDictionary));
  json summary{
      {"method", cfg.decomposition.method == DecomposeMethod::kStft ? "stft" : "iq"},
      {"modified", cfg.decomposition.modified},
      {"seed", cfg.seed},
      {"dictionary_hash", dict.dict.hash()},
      {"reflector_amplitude_convention", "reference_element"}};
  atomic_write(in_dir(cfg, artifact::kSummary), summary.dump(2) + "\n");
}

}  // namespace usc

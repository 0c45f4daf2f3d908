#include "usc/io.hpp"

#include <cstring>
#include <fstream>
#include <random>

namespace usc {

namespace {

class ByteWriter {
public:
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void magic(const char m[4]) { bytes_.append(m, 4); }
  const std::string& bytes() const { return bytes_; }

private:
  void raw(const void* p, std::size_t n) {
    bytes_.append(static_cast<const char*>(p), n);
  }
  std::string bytes_;
};

class ByteReader {
public:
  ByteReader(const std::string& bytes, std::string label)
      : bytes_(bytes), label_(std::move(label)) {}

  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }
  void expect_magic(const char m[4]) {
    if (bytes_.size() < pos_ + 4 || std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw IoError(label_ + ": bad magic");
    pos_ += 4;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

private:
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError(label_ + ": truncated file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const std::string& bytes_;
  std::string label_;
  std::size_t pos_ = 0;
};

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_frame(const RawFrame& frame, const std::filesystem::path& path) {
  ByteWriter w;
  w.magic("USRF");
  w.u16(1);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(frame.n_lines()));
  w.u32(static_cast<std::uint32_t>(frame.geometry.n_elements()));
  w.u32(static_cast<std::uint32_t>(frame.n_samples));
  w.f32(static_cast<float>(frame.geometry.fs_hz));
  w.f32(static_cast<float>(frame.geometry.f0_hz));
  w.f32(static_cast<float>(frame.geometry.c_mps));
  for (double x : frame.geometry.element_x_m) w.f32(static_cast<float>(x));
  for (double a : frame.line_angles_rad) w.f32(static_cast<float>(a));
  for (double v : frame.channels) w.f32(static_cast<float>(v));
  atomic_write(path, w.bytes());
}

RawFrame read_frame(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, "USRF " + path.string());
  r.expect_magic("USRF");
  if (r.u16() != 1) throw IoError("USRF: unsupported version in " + path.string());
  r.u16();  // flags
  const std::uint32_t lines = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint32_t n = r.u32();

  RawFrame frame;
  frame.geometry.fs_hz = r.f32();
  frame.geometry.f0_hz = r.f32();
  frame.geometry.c_mps = r.f32();
  frame.geometry.element_x_m.resize(m);
  for (std::uint32_t i = 0; i < m; ++i) frame.geometry.element_x_m[i] = r.f32();
  frame.line_angles_rad.resize(lines);
  for (std::uint32_t i = 0; i < lines; ++i) frame.line_angles_rad[i] = r.f32();
  frame.n_samples = static_cast<int>(n);
  frame.channels.resize(static_cast<std::size_t>(lines) * m * n);
  for (double& v : frame.channels) v = r.f32();
  if (!r.at_end()) throw IoError("USRF: trailing bytes in " + path.string());
  return frame;
}

void write_dictionary(const DictionaryFile& file, const std::filesystem::path& path) {
  ByteWriter w;
  w.magic("USDK");
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(file.dict.patch_len()));
  w.u32(static_cast<std::uint32_t>(file.dict.n_atoms()));
  w.f64(file.training_tol);
  w.u64(file.config_hash);
  for (int k = 0; k < file.dict.n_atoms(); ++k)
    for (int i = 0; i < file.dict.patch_len(); ++i)
      w.f32(static_cast<float>(file.dict.atoms(i, k)));
  atomic_write(path, w.bytes());
}

DictionaryFile read_dictionary(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, "USDK " + path.string());
  r.expect_magic("USDK");
  if (r.u16() != 1) throw IoError("USDK: unsupported version in " + path.string());
  const std::uint32_t q = r.u32();
  const std::uint32_t k = r.u32();
  DictionaryFile file;
  file.training_tol = r.f64();
  file.config_hash = r.u64();
  file.dict.atoms.resize(q, k);
  for (std::uint32_t col = 0; col < k; ++col)
    for (std::uint32_t row = 0; row < q; ++row) file.dict.atoms(row, col) = r.f32();
  if (!r.at_end()) throw IoError("USDK: trailing bytes in " + path.string());
  return file;
}

void write_codes(const CodesFile& codes, const std::filesystem::path& path) {
  if (codes.lines.empty()) throw InvalidParameter("write_codes: no lines");
  const LineCodes& first = codes.lines.front();
  ByteWriter w;
  w.magic("USSC");
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(codes.lines.size()));
  w.u32(static_cast<std::uint32_t>(first.n_elements));
  w.u32(static_cast<std::uint32_t>(first.n_patches));
  w.u32(static_cast<std::uint32_t>(first.n_atoms));
  w.u64(codes.dict_hash);
  for (const LineCodes& line : codes.lines) {
    if (line.n_elements != first.n_elements || line.n_patches != first.n_patches ||
        line.n_atoms != first.n_atoms)
      throw InvalidParameter("write_codes: inconsistent line layouts");
    for (const SparseVec& patch : line.patches) {
      w.u16(static_cast<std::uint16_t>(patch.size()));
      for (const SparseEntry& e : patch) {
        w.u32(static_cast<std::uint32_t>(e.atom));
        w.f32(static_cast<float>(e.coef));
      }
    }
  }
  atomic_write(path, w.bytes());
}

CodesFile read_codes(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, "USSC " + path.string());
  r.expect_magic("USSC");
  if (r.u16() != 1) throw IoError("USSC: unsupported version in " + path.string());
  const std::uint32_t lines = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint32_t p = r.u32();
  const std::uint32_t k = r.u32();
  CodesFile codes;
  codes.dict_hash = r.u64();
  codes.lines.resize(lines);
  for (LineCodes& line : codes.lines) {
    line.n_elements = static_cast<int>(m);
    line.n_patches = static_cast<int>(p);
    line.n_atoms = static_cast<int>(k);
    line.patches.resize(static_cast<std::size_t>(m) * p);
    for (SparseVec& patch : line.patches) {
      const std::uint16_t nnz = r.u16();
      patch.resize(nnz);
      for (SparseEntry& e : patch) {
        e.atom = static_cast<int>(r.u32());
        if (e.atom >= static_cast<int>(k))
          throw IoError("USSC: atom index out of range in " + path.string());
        e.coef = r.f32();
      }
    }
  }
  if (!r.at_end()) throw IoError("USSC: trailing bytes in " + path.string());
  return codes;
}

}  // namespace usc

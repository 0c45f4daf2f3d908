#ifndef USC_IO_HPP
#define USC_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "usc/phantom.hpp"
#include "usc/sparse_dict.hpp"

namespace usc {

// Binary containers, all little-endian:
//   USRF  raw/beamformed frame: magic, u16 version=1, u16 flags, u32 lines,
//         u32 M, u32 N, f32 fs_hz, f32 f0_hz, f32 c_mps, M x f32 element x,
//         lines x f32 angles, payload f32 [line][element][sample].
//   USDK  dictionary: magic, u16 version=1, u32 Q, u32 K, f64 training tol,
//         u64 config hash, Q*K f32 column-major atoms.
//   USSC  sparse codes: magic, u16 version=1, u32 lines, u32 M, u32 P, u32 K,
//         u64 dictionary hash, then per patch u16 nnz + nnz x (u32, f32),
//         patch order [line][element][patch].

void write_frame(const RawFrame& frame, const std::filesystem::path& path);
RawFrame read_frame(const std::filesystem::path& path);

struct DictionaryFile {
  Dictionary dict;
  double training_tol = 0.0;
  std::uint64_t config_hash = 0;
};

void write_dictionary(const DictionaryFile& file, const std::filesystem::path& path);
DictionaryFile read_dictionary(const std::filesystem::path& path);

struct CodesFile {
  std::vector<LineCodes> lines;
  std::uint64_t dict_hash = 0;
};

void write_codes(const CodesFile& codes, const std::filesystem::path& path);
CodesFile read_codes(const std::filesystem::path& path);

/// Write-to-temp-then-rename helper used by all writers.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace usc

#endif

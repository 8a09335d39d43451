#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "ctview/volume.hpp"

namespace ctview::nifti {

inline constexpr int kHeaderSize = 348;
inline constexpr int kSingleFileOffset = 352;
inline constexpr std::int16_t kIntentLabel = 1002;

enum Datatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
};

struct Header {
  std::int32_t sizeof_hdr = kHeaderSize;
  std::array<std::int16_t, 8> dim{};
  std::int16_t intent_code = 0;
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 0.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::uint8_t xyzt_units = 0;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0.0f, quatern_c = 0.0f, quatern_d = 0.0f;
  float qoffset_x = 0.0f, qoffset_y = 0.0f, qoffset_z = 0.0f;
  std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
  std::array<char, 4> magic{};
  bool big_endian = false;

  bool single_file() const;
};

enum class ErrorKind {
  BadHeaderSize,
  BadMagic,
  Truncated,
  UnsupportedDatatype,
  BadDim,
  Orientation,
  Io,
};

class NiftiError : public Error {
 public:
  NiftiError(ErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

using Volume = std::variant<ScalarVolume, LabelVolume>;

int bytes_per_voxel(std::int16_t datatype);

// Decodes the 348-byte header; endianness is detected from sizeof_hdr.
Header parse_header(std::span<const std::uint8_t> bytes);

// Single-file ("n+1") NIfTI-1, optionally gzip-compressed. uint8 data with
// the label intent loads as a LabelVolume, everything else as a
// ScalarVolume with scl_slope/scl_inter applied when the slope is non-zero.
Volume parse(std::span<const std::uint8_t> bytes);

// Header/image pair ("ni1"); either part may be gzip-compressed.
Volume parse_pair(std::span<const std::uint8_t> header_bytes,
                  std::span<const std::uint8_t> image_bytes);

// Little-endian single-file layout, vox_offset 352, slope 1, intercept 0.
// Scalars are written as float32, labels as uint8 with the label intent.
std::vector<std::uint8_t> write(const ScalarVolume& vol);
std::vector<std::uint8_t> write(const LabelVolume& vol);
std::vector<std::uint8_t> write(const Volume& vol);

// File helpers. `.nii.gz` paths are compressed/decompressed transparently,
// `.hdr` paths load their `.img` twin.
Volume read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Volume& vol);

// Mask files from external tools are often float or int16; any non-zero
// voxel becomes `label`.
LabelVolume to_mask(const Volume& vol, std::uint8_t label);
ScalarVolume to_scalar(const Volume& vol);

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> bytes);
bool is_gzip(std::span<const std::uint8_t> bytes);

}  // namespace ctview::nifti

namespace ctview {

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t value);

}  // namespace ctview

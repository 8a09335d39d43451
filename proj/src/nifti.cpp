#include "ctview/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ctview {

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nifti::NiftiError(nifti::ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw nifti::NiftiError(nifti::ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw nifti::NiftiError(nifti::ErrorKind::Io, "short write to " + path.string());
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kDigits[value & 0xf];
    value >>= 4;
  }
  return s;
}

}  // namespace ctview

namespace ctview::nifti {

namespace {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(std::size_t offset, T value) {
    static_assert(std::endian::native == std::endian::little);
    std::memcpy(out_.data() + offset, &value, sizeof(T));
  }

 private:
  std::vector<std::uint8_t>& out_;
};

constexpr bool kNativeLittle = std::endian::native == std::endian::little;

std::uint32_t swap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

bool axis_aligned(const std::array<float, 4>& rx, const std::array<float, 4>& ry,
                  const std::array<float, 4>& rz) {
  const float m[3][3] = {{rx[0], rx[1], rx[2]}, {ry[0], ry[1], ry[2]}, {rz[0], rz[1], rz[2]}};
  for (int r = 0; r < 3; ++r) {
    int nonzero = 0;
    float scale = 0.0f;
    for (int c = 0; c < 3; ++c) {
      scale = std::max(scale, std::abs(m[r][c]));
    }
    for (int c = 0; c < 3; ++c) {
      if (std::abs(m[r][c]) > 1e-6f * scale) ++nonzero;
    }
    if (nonzero != 1) return false;
  }
  return true;
}

bool quaternion_axis_aligned(float b, float c, float d) {
  const double bb = b, cc = c, dd = d;
  const double a2 = 1.0 - (bb * bb + cc * cc + dd * dd);
  const double a = a2 > 0 ? std::sqrt(a2) : 0.0;
  const double r[3][3] = {
      {a * a + bb * bb - cc * cc - dd * dd, 2 * (bb * cc - a * dd), 2 * (bb * dd + a * cc)},
      {2 * (bb * cc + a * dd), a * a + cc * cc - bb * bb - dd * dd, 2 * (cc * dd - a * bb)},
      {2 * (bb * dd - a * cc), 2 * (cc * dd + a * bb), a * a + dd * dd - cc * cc - bb * bb}};
  for (const auto& row : r) {
    int nonzero = 0;
    for (double v : row) {
      if (std::abs(v) > 1e-4) ++nonzero;
    }
    if (nonzero != 1) return false;
  }
  return true;
}

template <typename T>
void decode_values(std::span<const std::uint8_t> payload, std::size_t count, bool swap,
                   std::vector<double>& out) {
  Reader r(payload, swap);
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<double>(r.get<T>(i * sizeof(T)));
}

Volume decode(const Header& h, std::span<const std::uint8_t> payload) {
  Geometry g;
  g.dims = {h.dim[1], h.dim[2], h.dim[3]};
  for (int i = 0; i < 3; ++i) g.spacing[i] = std::abs(static_cast<double>(h.pixdim[i + 1]));
  if (h.sform_code > 0) {
    if (!axis_aligned(h.srow_x, h.srow_y, h.srow_z)) {
      throw NiftiError(ErrorKind::Orientation, "rotated sform orientations are not supported");
    }
    g.origin = {h.srow_x[3], h.srow_y[3], h.srow_z[3]};
  } else if (h.qform_code > 0) {
    if (!quaternion_axis_aligned(h.quatern_b, h.quatern_c, h.quatern_d)) {
      throw NiftiError(ErrorKind::Orientation, "rotated qform orientations are not supported");
    }
    g.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
  }

  const std::size_t count = g.dims.count();
  const std::size_t need = count * bytes_per_voxel(h.datatype);
  if (payload.size() < need) {
    throw NiftiError(ErrorKind::Truncated, "payload holds " + std::to_string(payload.size()) +
                                               " bytes but the header declares " +
                                               std::to_string(need));
  }

  if (h.datatype == kUint8 && h.intent_code == kIntentLabel) {
    std::vector<std::uint8_t> labels(payload.begin(), payload.begin() + count);
    return LabelVolume(g, std::move(labels));
  }

  std::vector<double> values;
  const bool swap = h.big_endian == kNativeLittle;
  switch (h.datatype) {
    case kUint8: decode_values<std::uint8_t>(payload, count, swap, values); break;
    case kInt16: decode_values<std::int16_t>(payload, count, swap, values); break;
    case kInt32: decode_values<std::int32_t>(payload, count, swap, values); break;
    case kFloat32: decode_values<float>(payload, count, swap, values); break;
    case kFloat64: decode_values<double>(payload, count, swap, values); break;
    default: break;
  }
  const bool scaled = h.scl_slope != 0.0f && std::isfinite(h.scl_slope) &&
                      !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = scaled ? values[i] * h.scl_slope + h.scl_inter : values[i];
    data[i] = static_cast<float>(v);
  }
  return ScalarVolume(g, std::move(data));
}

void check_header(const Header& h) {
  if (h.dim[0] != 3) {
    throw NiftiError(ErrorKind::BadDim, "dim[0] is " + std::to_string(h.dim[0]) + ", expected 3");
  }
  for (int i = 1; i <= 3; ++i) {
    if (h.dim[i] < 1) throw NiftiError(ErrorKind::BadDim, "non-positive dimension");
  }
  if (bytes_per_voxel(h.datatype) == 0) {
    throw NiftiError(ErrorKind::UnsupportedDatatype,
                     "unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
}

}  // namespace

bool Header::single_file() const { return std::memcmp(magic.data(), "n+1\0", 4) == 0; }

int bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUint8: return 1;
    case kInt16: return 2;
    case kInt32: return 4;
    case kFloat32: return 4;
    case kFloat64: return 8;
    default: return 0;
  }
}

bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw NiftiError(ErrorKind::Io, "zlib initialisation failed");
  }
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = chunk.size();
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw NiftiError(ErrorKind::Truncated, "corrupt or truncated gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw NiftiError(ErrorKind::Truncated, "gzip stream ended early");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK) {
    throw NiftiError(ErrorKind::Io, "zlib initialisation failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw NiftiError(ErrorKind::Io, "gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

Header parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) {
    throw NiftiError(ErrorKind::Truncated, "file shorter than the 348-byte NIfTI-1 header");
  }
  std::uint32_t raw;
  std::memcpy(&raw, bytes.data(), 4);
  bool swap = false;
  if (raw == static_cast<std::uint32_t>(kHeaderSize)) {
    swap = false;
  } else if (swap32(raw) == static_cast<std::uint32_t>(kHeaderSize)) {
    swap = true;
  } else {
    throw NiftiError(ErrorKind::BadHeaderSize, "sizeof_hdr is not 348 in either byte order");
  }
  Reader r(bytes, swap);
  Header h;
  h.big_endian = (swap == kNativeLittle);
  h.sizeof_hdr = kHeaderSize;
  for (int i = 0; i < 8; ++i) h.dim[i] = r.get<std::int16_t>(40 + 2 * i);
  h.intent_code = r.get<std::int16_t>(68);
  h.datatype = r.get<std::int16_t>(70);
  h.bitpix = r.get<std::int16_t>(72);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = r.get<float>(76 + 4 * i);
  h.vox_offset = r.get<float>(108);
  h.scl_slope = r.get<float>(112);
  h.scl_inter = r.get<float>(116);
  h.xyzt_units = bytes[123];
  h.qform_code = r.get<std::int16_t>(252);
  h.sform_code = r.get<std::int16_t>(254);
  h.quatern_b = r.get<float>(256);
  h.quatern_c = r.get<float>(260);
  h.quatern_d = r.get<float>(264);
  h.qoffset_x = r.get<float>(268);
  h.qoffset_y = r.get<float>(272);
  h.qoffset_z = r.get<float>(276);
  for (int i = 0; i < 4; ++i) {
    h.srow_x[i] = r.get<float>(280 + 4 * i);
    h.srow_y[i] = r.get<float>(296 + 4 * i);
    h.srow_z[i] = r.get<float>(312 + 4 * i);
  }
  std::memcpy(h.magic.data(), bytes.data() + 344, 4);
  if (std::memcmp(h.magic.data(), "n+1\0", 4) != 0 && std::memcmp(h.magic.data(), "ni1\0", 4) != 0) {
    throw NiftiError(ErrorKind::BadMagic, "bad NIfTI-1 magic");
  }
  return h;
}

Volume parse(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> inflated;
  if (is_gzip(bytes)) {
    inflated = gunzip(bytes);
    bytes = inflated;
  }
  const Header h = parse_header(bytes);
  if (!h.single_file()) {
    throw NiftiError(ErrorKind::BadMagic, "header declares a separate .img file (magic ni1)");
  }
  check_header(h);
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (h.vox_offset < kHeaderSize || offset > bytes.size()) {
    throw NiftiError(ErrorKind::Truncated, "vox_offset lies outside the file");
  }
  return decode(h, bytes.subspan(offset));
}

Volume parse_pair(std::span<const std::uint8_t> header_bytes,
                  std::span<const std::uint8_t> image_bytes) {
  std::vector<std::uint8_t> hdr_inflated, img_inflated;
  if (is_gzip(header_bytes)) {
    hdr_inflated = gunzip(header_bytes);
    header_bytes = hdr_inflated;
  }
  if (is_gzip(image_bytes)) {
    img_inflated = gunzip(image_bytes);
    image_bytes = img_inflated;
  }
  const Header h = parse_header(header_bytes);
  check_header(h);
  const auto offset = static_cast<std::size_t>(std::max(0.0f, h.vox_offset));
  if (offset > image_bytes.size()) throw NiftiError(ErrorKind::Truncated, "vox_offset beyond .img");
  return decode(h, image_bytes.subspan(offset));
}

namespace {

std::vector<std::uint8_t> write_common(const Geometry& g, std::int16_t datatype,
                                       std::int16_t intent, std::size_t payload_bytes) {
  std::vector<std::uint8_t> out(kSingleFileOffset + payload_bytes, 0);
  Writer w(out);
  w.put<std::int32_t>(0, kHeaderSize);
  w.put<char>(38, 'r');
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(g.dims.nx),
                                        static_cast<std::int16_t>(g.dims.ny),
                                        static_cast<std::int16_t>(g.dims.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) w.put<std::int16_t>(40 + 2 * i, dim[i]);
  w.put<std::int16_t>(68, intent);
  w.put<std::int16_t>(70, datatype);
  w.put<std::int16_t>(72, static_cast<std::int16_t>(8 * bytes_per_voxel(datatype)));
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(g.spacing.x),
                                    static_cast<float>(g.spacing.y),
                                    static_cast<float>(g.spacing.z), 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) w.put<float>(76 + 4 * i, pixdim[i]);
  w.put<float>(108, static_cast<float>(kSingleFileOffset));
  w.put<float>(112, 1.0f);
  w.put<float>(116, 0.0f);
  w.put<std::uint8_t>(123, 2);  // NIFTI_UNITS_MM
  w.put<std::int16_t>(252, 0);
  w.put<std::int16_t>(254, 1);  // NIFTI_XFORM_SCANNER_ANAT
  const std::array<float, 4> sx{static_cast<float>(g.spacing.x), 0, 0, static_cast<float>(g.origin.x)};
  const std::array<float, 4> sy{0, static_cast<float>(g.spacing.y), 0, static_cast<float>(g.origin.y)};
  const std::array<float, 4> sz{0, 0, static_cast<float>(g.spacing.z), static_cast<float>(g.origin.z)};
  for (int i = 0; i < 4; ++i) {
    w.put<float>(280 + 4 * i, sx[i]);
    w.put<float>(296 + 4 * i, sy[i]);
    w.put<float>(312 + 4 * i, sz[i]);
  }
  std::memcpy(out.data() + 344, "n+1\0", 4);
  return out;
}

void check_writable(const Geometry& g) {
  if (g.dims.nx > 32767 || g.dims.ny > 32767 || g.dims.nz > 32767) {
    throw InvalidArgument("NIfTI-1 dims are limited to 32767");
  }
}

}  // namespace

std::vector<std::uint8_t> write(const ScalarVolume& vol) {
  check_writable(vol.geometry());
  auto out = write_common(vol.geometry(), kFloat32, 0, vol.size() * sizeof(float));
  std::memcpy(out.data() + kSingleFileOffset, vol.data().data(), vol.size() * sizeof(float));
  return out;
}

std::vector<std::uint8_t> write(const LabelVolume& vol) {
  check_writable(vol.geometry());
  auto out = write_common(vol.geometry(), kUint8, kIntentLabel, vol.size());
  std::memcpy(out.data() + kSingleFileOffset, vol.data().data(), vol.size());
  return out;
}

std::vector<std::uint8_t> write(const Volume& vol) {
  return std::visit([](const auto& v) { return write(v); }, vol);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Volume read_file(const std::filesystem::path& path) {
  const std::string name = path.string();
  if (ends_with(name, ".hdr") || ends_with(name, ".hdr.gz")) {
    std::string img = name;
    img.replace(img.rfind(".hdr"), 4, ".img");
    std::filesystem::path img_path = img;
    if (!std::filesystem::exists(img_path) && ends_with(img, ".gz")) {
      img_path = img.substr(0, img.size() - 3);
    }
    const auto hdr_bytes = read_binary_file(path);
    const auto img_bytes = read_binary_file(img_path);
    return parse_pair(hdr_bytes, img_bytes);
  }
  const auto bytes = read_binary_file(path);
  return parse(bytes);
}

void write_file(const std::filesystem::path& path, const Volume& vol) {
  auto bytes = write(vol);
  if (ends_with(path.string(), ".gz")) bytes = gzip(bytes);
  write_binary_file(path, bytes);
}

LabelVolume to_mask(const Volume& vol, std::uint8_t label) {
  if (const auto* labels = std::get_if<LabelVolume>(&vol)) {
    std::vector<std::uint8_t> data(labels->data().begin(), labels->data().end());
    for (auto& v : data) v = v != 0 ? label : 0;
    return LabelVolume(labels->geometry(), std::move(data));
  }
  const auto& scalar = std::get<ScalarVolume>(vol);
  std::vector<std::uint8_t> data(scalar.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = scalar[i] != 0.0f ? label : 0;
  return LabelVolume(scalar.geometry(), std::move(data));
}

ScalarVolume to_scalar(const Volume& vol) {
  if (const auto* s = std::get_if<ScalarVolume>(&vol)) return *s;
  const auto& labels = std::get<LabelVolume>(vol);
  std::vector<float> data(labels.data().begin(), labels.data().end());
  return ScalarVolume(labels.geometry(), std::move(data));
}

}  // namespace ctview::nifti

#include "ctview/cache.hpp"

#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ctview/case.hpp"
#include "ctview/nifti.hpp"

namespace ctview {

namespace fs = std::filesystem;

namespace {

constexpr char kEntryMagic[4] = {'C', 'T', 'V', 'C'};
constexpr std::size_t kEntryHeader = 4 + 8 + 8;

std::uint64_t hash_string(const std::string& s, std::uint64_t seed) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, seed);
}

void put_u64(std::vector<std::uint8_t>& out, std::size_t offset, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return v;
}

std::uint64_t key_hash(const CacheKey& key) {
  std::uint64_t h = hash_string(key.case_id, 0xcbf29ce484222325ULL);
  std::array<std::uint8_t, 8> ih;
  for (int i = 0; i < 8; ++i) ih[i] = static_cast<std::uint8_t>(key.input_hash >> (8 * i));
  h = fnv1a64(ih, h);
  h = hash_string("|" + key.model_version, h);
  return hash_string("|" + key.kind, h);
}

// Writes through a temporary file and renames it into place so readers never
// observe a partial entry.
void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  const fs::path tmp = path.string() + ".tmp" + to_hex(rng()).substr(0, 8);
  try {
    write_binary_file(tmp, bytes);
    fs::rename(tmp, path);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw CacheError("cannot write cache entry " + path.string() + ": " + e.what());
  }
}

nlohmann::json read_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return nlohmann::json::object();
  try {
    nlohmann::json doc;
    in >> doc;
    if (doc.is_object()) return doc;
  } catch (const nlohmann::json::exception&) {
  }
  return nlohmann::json::object();
}

}  // namespace

std::string CacheKey::file_stem() const { return to_hex(key_hash(*this)); }

DerivedCache::DerivedCache(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) {
    throw CacheError("cannot create cache directory " + root_.string());
  }
  const fs::path probe = root_ / ".write-probe";
  std::ofstream out(probe);
  if (!out) throw CacheError("cache directory " + root_.string() + " is not writable");
  out.close();
  fs::remove(probe, ec);
}

std::mutex& DerivedCache::case_mutex(const std::string& case_id) const {
  std::lock_guard lock(table_mutex_);
  auto& slot = case_mutexes_[case_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void DerivedCache::store(const CacheKey& key, std::span<const std::uint8_t> payload) {
  if (!is_safe_case_id(key.case_id)) throw CacheError("invalid case id for cache");
  std::lock_guard lock(case_mutex(key.case_id));
  const fs::path dir = root_ / key.case_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CacheError("cannot create " + dir.string());

  std::vector<std::uint8_t> bytes(kEntryHeader + payload.size());
  std::memcpy(bytes.data(), kEntryMagic, 4);
  put_u64(bytes, 4, key_hash(key));
  put_u64(bytes, 12, fnv1a64(payload));
  std::memcpy(bytes.data() + kEntryHeader, payload.data(), payload.size());
  const std::string stem = key.file_stem();
  atomic_write(dir / (stem + ".bin"), bytes);

  nlohmann::json index = read_index(dir / "index.json");
  index[key.kind] = {{"key", stem},
                     {"input_hash", to_hex(key.input_hash)},
                     {"model_version", key.model_version}};
  const std::string text = index.dump(2);
  atomic_write(dir / "index.json",
               {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::optional<std::vector<std::uint8_t>> DerivedCache::load(
    const CacheKey& key, std::vector<std::string>* warnings) const {
  if (!is_safe_case_id(key.case_id)) return std::nullopt;
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  const fs::path dir = root_ / key.case_id;
  const std::string stem = key.file_stem();
  const nlohmann::json index = read_index(dir / "index.json");
  if (index.contains(key.kind) && index[key.kind].value("key", "") != stem) {
    warn("cached " + key.kind + " for case " + key.case_id +
         " was computed from different inputs or model; recomputing");
  }
  const fs::path file = dir / (stem + ".bin");
  if (!fs::exists(file)) return std::nullopt;
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_binary_file(file);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (bytes.size() < kEntryHeader || std::memcmp(bytes.data(), kEntryMagic, 4) != 0 ||
      get_u64(bytes, 4) != key_hash(key)) {
    warn("cache entry " + file.string() + " is malformed; recomputing");
    return std::nullopt;
  }
  std::vector<std::uint8_t> payload(bytes.begin() + kEntryHeader, bytes.end());
  if (fnv1a64(payload) != get_u64(bytes, 12)) {
    warn("cache entry " + file.string() + " failed its content hash; recomputing");
    return std::nullopt;
  }
  return payload;
}

void DerivedCache::clear_case(const std::string& case_id) {
  if (!is_safe_case_id(case_id)) return;
  std::lock_guard lock(case_mutex(case_id));
  std::error_code ec;
  fs::remove_all(root_ / case_id, ec);
}

}  // namespace ctview

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctview/error.hpp"

namespace ctview {

class CacheError : public Error {
 public:
  using Error::Error;
};

struct CacheKey {
  std::string case_id;
  std::uint64_t input_hash = 0;
  std::string model_version;
  std::string kind;  // "classification", "heatmap", "measurements", ...

  // File stem of the entry: FNV-1a over every field.
  std::string file_stem() const;
};

// On-disk store of derived results:
//   <root>/<case_id>/<key>.bin   payload with a small checksummed header
//   <root>/<case_id>/index.json  kind -> current key
// An entry is visible only under the exact key it was stored with, so
// results computed from different inputs or a different model never load.
class DerivedCache {
 public:
  // Creates `root` if needed; throws CacheError if it cannot be written.
  explicit DerivedCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  void store(const CacheKey& key, std::span<const std::uint8_t> payload);

  // Returns nullopt on a miss. A stale index entry or a corrupt payload is
  // reported through `warnings` and treated as a miss.
  std::optional<std::vector<std::uint8_t>> load(const CacheKey& key,
                                                std::vector<std::string>* warnings = nullptr) const;

  void clear_case(const std::string& case_id);

 private:
  std::mutex& case_mutex(const std::string& case_id) const;

  std::filesystem::path root_;
  mutable std::mutex table_mutex_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> case_mutexes_;
};

}  // namespace ctview

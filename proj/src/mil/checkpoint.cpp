#include "ctview/mil/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "ctview/nifti.hpp"

namespace ctview::mil {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw InvalidArgument("checkpoint is truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const MilModel& model) {
  const auto& cfg = model.config();
  std::vector<std::uint8_t> out{'M', 'I', 'L', 'M'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.extractor.feature_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.attention_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.extractor.input_side));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.extractor.input_pool));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.extractor.channels.size()));
  for (int c : cfg.extractor.channels) put<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  put<std::uint64_t>(out, model.num_params());
  for (double v : model.params()) put<double>(out, v);
  return out;
}

MilModel load_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MILM", 4) != 0) {
    throw InvalidArgument("not a MIL checkpoint (bad magic)");
  }
  Cursor c(bytes.subspan(4));
  const auto version = c.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw InvalidArgument("checkpoint version " + std::to_string(version) +
                          " does not match supported version " +
                          std::to_string(kCheckpointVersion));
  }
  ModelConfig cfg;
  cfg.extractor.feature_dim = static_cast<int>(c.get<std::uint32_t>());
  cfg.attention_dim = static_cast<int>(c.get<std::uint32_t>());
  cfg.extractor.input_side = static_cast<int>(c.get<std::uint32_t>());
  cfg.extractor.input_pool = static_cast<int>(c.get<std::uint32_t>());
  const auto blocks = c.get<std::uint32_t>();
  if (blocks == 0 || blocks > 64) throw InvalidArgument("checkpoint declares an invalid block count");
  cfg.extractor.channels.clear();
  for (std::uint32_t b = 0; b < blocks; ++b) {
    cfg.extractor.channels.push_back(static_cast<int>(c.get<std::uint32_t>()));
  }
  MilModel model(cfg);
  const auto n = c.get<std::uint64_t>();
  if (n != model.num_params() || c.remaining() != n * sizeof(double)) {
    throw InvalidArgument("checkpoint parameter count does not match its layer spec");
  }
  std::memcpy(model.params().data(), c.here(), n * sizeof(double));
  model.mark_initialized();
  return model;
}

void save_checkpoint_file(const MilModel& model, const std::filesystem::path& path) {
  write_binary_file(path, save_checkpoint(model));
}

MilModel load_checkpoint_file(const std::filesystem::path& path) {
  return load_checkpoint(read_binary_file(path));
}

}  // namespace ctview::mil

#include "ctview/mil/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "ctview/nifti.hpp"

namespace ctview::mil {

void ExtractorConfig::validate() const {
  if (input_side < 1 || input_pool < 1 || input_side % input_pool != 0) {
    throw InvalidArgument("input side must be a positive multiple of the stem pool");
  }
  if (channels.empty()) throw InvalidArgument("extractor needs at least one conv block");
  for (int c : channels) {
    if (c < 1) throw InvalidArgument("conv channel widths must be >= 1");
  }
  const int pools = static_cast<int>(channels.size()) - 1;
  if (stem_side() % (1 << pools) != 0 || last_side() < 1) {
    throw InvalidArgument("stem side must be divisible by 2^(blocks - 1)");
  }
  if (feature_dim < 1) throw InvalidArgument("feature dimension D must be >= 1");
}

ExtractorConfig ExtractorConfig::toy() { return {}; }

ExtractorConfig ExtractorConfig::resnet_scale() {
  ExtractorConfig c;
  c.input_pool = 2;
  c.channels = {64, 128, 256, 512};
  c.feature_dim = 512;
  return c;
}

void ModelConfig::validate() const {
  extractor.validate();
  if (attention_dim < 1) throw InvalidArgument("attention dimension L must be >= 1");
}

MilModel::MilModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ex = config_.extractor;
  int in_ch = 1;
  for (std::size_t b = 0; b < ex.channels.size(); ++b) {
    conv_w_.push_back(add_slot("conv" + std::to_string(b) + ".weight", ex.channels[b], in_ch * 9));
    conv_b_.push_back(add_slot("conv" + std::to_string(b) + ".bias", ex.channels[b], 1));
    in_ch = ex.channels[b];
  }
  proj_w_ = add_slot("proj.weight", ex.feature_dim, in_ch);
  proj_b_ = add_slot("proj.bias", ex.feature_dim, 1);
  att_v_ = add_slot("attention.V", config_.attention_dim, ex.feature_dim);
  att_w_ = add_slot("attention.w", config_.attention_dim, 1);
  head_w_ = add_slot("head.weight", 2, ex.feature_dim);
  head_b_ = add_slot("head.bias", 2, 1);
  std::size_t total = 0;
  for (const auto& s : slots_) total += s.size();
  params_.assign(total, 0.0);
}

std::size_t MilModel::add_slot(std::string name, int rows, int cols) {
  const std::size_t offset = slots_.empty() ? 0 : slots_.back().offset + slots_.back().size();
  slots_.push_back({std::move(name), offset, rows, cols});
  return slots_.size() - 1;
}

const ParamSlot& MilModel::slot(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("no parameter named " + name);
}

ConstMatrixMap MilModel::view(std::size_t s) const {
  const auto& sl = slots_[s];
  return ConstMatrixMap(params_.data() + sl.offset, sl.rows, sl.cols);
}
MatrixMap MilModel::view(std::size_t s) {
  const auto& sl = slots_[s];
  return MatrixMap(params_.data() + sl.offset, sl.rows, sl.cols);
}
ConstVectorMap MilModel::vec(std::size_t s) const {
  const auto& sl = slots_[s];
  return ConstVectorMap(params_.data() + sl.offset, static_cast<Eigen::Index>(sl.size()));
}
VectorMap MilModel::vec(std::size_t s) {
  const auto& sl = slots_[s];
  return VectorMap(params_.data() + sl.offset, static_cast<Eigen::Index>(sl.size()));
}

void MilModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::fill(params_.begin(), params_.end(), 0.0);
  auto he = [&](MatrixMap m) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(m.cols())));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  auto glorot = [&](MatrixMap m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  for (int b = 0; b < num_blocks(); ++b) he(conv_weight(b));
  glorot(proj_weight());
  glorot(attention_v());
  glorot(view(att_w_));
  glorot(head_weight());
  initialized_ = true;
}

bool MilModel::finite() const {
  for (double v : params_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string MilModel::version() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto& ex = config_.extractor;
  std::vector<std::int32_t> shape{ex.input_side, ex.input_pool, ex.feature_dim,
                                  config_.attention_dim};
  shape.insert(shape.end(), ex.channels.begin(), ex.channels.end());
  h = fnv1a64({reinterpret_cast<const std::uint8_t*>(shape.data()), shape.size() * 4}, h);
  h = fnv1a64({reinterpret_cast<const std::uint8_t*>(params_.data()), params_.size() * 8}, h);
  return to_hex(h);
}

}  // namespace ctview::mil

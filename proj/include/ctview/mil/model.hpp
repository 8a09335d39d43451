#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctview/error.hpp"

namespace ctview::mil {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

// Per-slice CNN: an average-pool stem, then 3x3 conv blocks (conv, ReLU,
// 2x2 max-pool; the last block skips the pool so Grad-CAM sees its full
// grid), global average pooling and a linear projection to D features.
struct ExtractorConfig {
  int input_side = 224;
  int input_pool = 8;
  std::vector<int> channels{8, 16, 32};
  int feature_dim = 64;

  int stem_side() const { return input_side / input_pool; }
  // Side of the grid seen by block `b`.
  int block_side(int b) const { return stem_side() >> b; }
  int last_side() const { return block_side(static_cast<int>(channels.size()) - 1); }
  void validate() const;

  static ExtractorConfig toy();
  // ResNet18-scale widths and D = 512.
  static ExtractorConfig resnet_scale();
};

struct ModelConfig {
  ExtractorConfig extractor;
  int attention_dim = 128;  // L

  void validate() const;
};

struct ParamSlot {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// All trainable parameters live in one flat buffer; slots give named
// matrix views into it. Gradient buffers share the same layout.
class MilModel {
 public:
  explicit MilModel(ModelConfig config = {});

  const ModelConfig& config() const { return config_; }
  int feature_dim() const { return config_.extractor.feature_dim; }
  int attention_dim() const { return config_.attention_dim; }
  int num_blocks() const { return static_cast<int>(config_.extractor.channels.size()); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<ParamSlot>& slots() const { return slots_; }

  // Conv weights are Cout x (Cin * 9), columns ordered (channel, ky, kx).
  ConstMatrixMap conv_weight(int block) const { return view(conv_w_[block]); }
  ConstVectorMap conv_bias(int block) const { return vec(conv_b_[block]); }
  ConstMatrixMap proj_weight() const { return view(proj_w_); }   // D x C_last
  ConstVectorMap proj_bias() const { return vec(proj_b_); }       // D
  ConstMatrixMap attention_v() const { return view(att_v_); }    // L x D
  ConstVectorMap attention_w() const { return vec(att_w_); }      // L
  ConstMatrixMap head_weight() const { return view(head_w_); }   // 2 x D
  ConstVectorMap head_bias() const { return vec(head_b_); }       // 2

  MatrixMap conv_weight(int block) { return view(conv_w_[block]); }
  VectorMap conv_bias(int block) { return vec(conv_b_[block]); }
  MatrixMap proj_weight() { return view(proj_w_); }
  VectorMap proj_bias() { return vec(proj_b_); }
  MatrixMap attention_v() { return view(att_v_); }
  VectorMap attention_w() { return vec(att_w_); }
  MatrixMap head_weight() { return view(head_w_); }
  VectorMap head_bias() { return vec(head_b_); }

  const ParamSlot& slot(const std::string& name) const;

  // He-normal conv weights, Glorot-uniform dense weights, zero biases.
  void initialize(std::uint64_t seed);
  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }
  bool finite() const;

  // Short hex digest of config and parameters; keys cached results.
  std::string version() const;

 private:
  std::size_t add_slot(std::string name, int rows, int cols);
  ConstMatrixMap view(std::size_t s) const;
  MatrixMap view(std::size_t s);
  ConstVectorMap vec(std::size_t s) const;
  VectorMap vec(std::size_t s);

  ModelConfig config_;
  std::vector<ParamSlot> slots_;
  std::vector<double> params_;
  std::vector<std::size_t> conv_w_, conv_b_;
  std::size_t proj_w_ = 0, proj_b_ = 0, att_v_ = 0, att_w_ = 0, head_w_ = 0, head_b_ = 0;
  bool initialized_ = false;
};

}  // namespace ctview::mil

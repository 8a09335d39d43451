#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ctview/mil/model.hpp"
#include "ctview/preprocess.hpp"

namespace ctview::mil {

// Intermediate values of one slice's trip through the feature extractor,
// kept for the backward pass.
struct SliceTrace {
  Matrix stem;                         // 1 x S^2
  std::vector<Matrix> cols;            // im2col input per block
  std::vector<Matrix> conv;            // post-ReLU conv output per block, C x side^2
  std::vector<Matrix> pooled;          // max-pooled output (blocks with a pool)
  std::vector<std::vector<int>> argmax;
  Vector gap;                          // C_last
};

// Attention pooling state for one bag.
struct AttentionOutput {
  Vector scores;  // w^T tanh(V h_k)
  Vector a;       // softmax(scores)
  Vector z;       // sum_k a_k h_k
  Matrix t;       // K x L, tanh(V h_k) per row
};

struct BagForward {
  Matrix features;  // K x D
  AttentionOutput attention;
  Vector logits;    // 2
  Vector probs;     // 2
  std::vector<SliceTrace> traces;  // empty unless requested
};

struct LossValues {
  double ce = 0.0;
  double aw = 0.0;
  double total = 0.0;
};

// How the attention smoothness penalty combines across a batch: per-bag sums averaged over the batch
// (default) or summed over the batch.
enum class AwAggregation { MeanOfBagSums, SumOverBatch };

inline constexpr double kProbClamp = 1e-7;

// Row k of the result is the feature vector of slice k. Throws
// InvalidArgument if the bag side does not match the extractor.
Matrix extract_features(const MilModel& model, const SliceStack& bag);
Vector slice_features(const MilModel& model, const float* slice, SliceTrace* trace);

AttentionOutput attention_pool(const Matrix& features, const ConstMatrixMap& v,
                               const ConstVectorMap& w);

// Softmax with max subtraction.
Vector softmax(const Vector& logits);
Vector classify_forward(const Vector& z, const ConstMatrixMap& weight, const ConstVectorMap& bias);

BagForward forward_bag(const MilModel& model, const SliceStack& bag, bool keep_traces);

// -sum_c p log q with q clipped to [1e-7, 1 - 1e-7].
double cross_entropy(const Vector& probs, int label);
// sum_{i>=2} (a_i - a_{i-1})^2
double adjacent_weight_penalty(const Vector& a);

LossValues loss_components(std::span<const Vector> probs, std::span<const int> labels,
                           std::span<const Vector> attention, double lambda,
                           AwAggregation aggregation = AwAggregation::MeanOfBagSums);

// Backpropagates dL/dlogits and an extra dL/da (may be empty) through the
// head, attention pooling and, when `grad` is given, every slice of the
// feature extractor. `forward` must hold traces when `grad` is non-null.
// Gradients are accumulated into `grad` (flat, model layout). If
// `last_conv_grad` is non-null it receives dL/dA for the last conv
// activation of each slice.
void backpropagate(const MilModel& model, const BagForward& forward, const Vector& dlogits,
                   const Vector& da_extra, std::span<double> grad,
                   std::vector<Matrix>* last_conv_grad = nullptr);

// L_CE + lambda * L_AW for one bag, with gradients scaled by `ce_scale` and
// `aw_scale` (1/N for batch means) accumulated into `grad`.
LossValues bag_gradient(const MilModel& model, const SliceStack& bag, int label, double lambda,
                        double ce_scale, double aw_scale, std::span<double> grad);

// Attention-MIL gradient of the cross-entropy alone, built without the
// regularizer path.
void plain_mil_gradient(const MilModel& model, const SliceStack& bag, int label,
                        std::span<double> grad);

// Loss of a batch evaluated without gradients; used by finite differences.
LossValues batch_loss(const MilModel& model, std::span<const SliceStack> bags,
                      std::span<const int> labels, double lambda,
                      AwAggregation aggregation = AwAggregation::MeanOfBagSums);

// Full analytic gradient of batch_loss.
LossValues batch_gradient(const MilModel& model, std::span<const SliceStack> bags,
                          std::span<const int> labels, double lambda, std::span<double> grad,
                          AwAggregation aggregation = AwAggregation::MeanOfBagSums);

}  // namespace ctview::mil

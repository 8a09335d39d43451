#include "ctview/mil/network.hpp"

#include <algorithm>
#include <cmath>

namespace ctview::mil {

namespace {

Matrix stem_pool(const float* slice, int input_side, int pool) {
  const int s = input_side / pool;
  Matrix out = Matrix::Zero(1, static_cast<Eigen::Index>(s) * s);
  const double norm = 1.0 / (static_cast<double>(pool) * pool);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < pool; ++dy) {
        const float* row = slice + static_cast<std::size_t>(y * pool + dy) * input_side + x * pool;
        for (int dx = 0; dx < pool; ++dx) acc += row[dx];
      }
      out(0, y * s + x) = acc * norm;
    }
  }
  return out;
}

// Rows ordered (channel, ky, kx); zero padding of one pixel.
Matrix im2col(const Matrix& in, int side) {
  const Eigen::Index channels = in.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(side) * side;
  Matrix col = Matrix::Zero(channels * 9, n);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double* src = in.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = col.row(c * 9 + ky * 3 + kx).data();
        for (int y = 0; y < side; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= side) continue;
          for (int x = 0; x < side; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= side) continue;
            dst[y * side + x] = src[sy * side + sx];
          }
        }
      }
    }
  }
  return col;
}

Matrix col2im(const Matrix& col, Eigen::Index channels, int side) {
  Matrix out = Matrix::Zero(channels, static_cast<Eigen::Index>(side) * side);
  for (Eigen::Index c = 0; c < channels; ++c) {
    double* dst = out.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = col.row(c * 9 + ky * 3 + kx).data();
        for (int y = 0; y < side; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= side) continue;
          for (int x = 0; x < side; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= side) continue;
            dst[sy * side + sx] += src[y * side + x];
          }
        }
      }
    }
  }
  return out;
}

Matrix max_pool(const Matrix& in, int side, std::vector<int>& argmax) {
  const int half = side / 2;
  Matrix out(in.rows(), static_cast<Eigen::Index>(half) * half);
  argmax.resize(static_cast<std::size_t>(out.size()));
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const double* src = in.row(c).data();
    for (int y = 0; y < half; ++y) {
      for (int x = 0; x < half; ++x) {
        int best = (2 * y) * side + 2 * x;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int i = (2 * y + dy) * side + 2 * x + dx;
            if (src[i] > src[best]) best = i;
          }
        }
        out(c, y * half + x) = src[best];
        argmax[static_cast<std::size_t>(c * half * half + y * half + x)] = best;
      }
    }
  }
  return out;
}

Matrix max_unpool(const Matrix& grad, int side, const std::vector<int>& argmax) {
  Matrix out = Matrix::Zero(grad.rows(), static_cast<Eigen::Index>(side) * side);
  const Eigen::Index per = grad.cols();
  for (Eigen::Index c = 0; c < grad.rows(); ++c) {
    for (Eigen::Index j = 0; j < per; ++j) {
      out(c, argmax[static_cast<std::size_t>(c * per + j)]) += grad(c, j);
    }
  }
  return out;
}

MatrixMap grad_view(const MilModel& model, std::span<double> grad, const std::string& name) {
  const ParamSlot& s = model.slot(name);
  return MatrixMap(grad.data() + s.offset, s.rows, s.cols);
}

struct GradViews {
  std::vector<MatrixMap> conv_w, conv_b;
  MatrixMap proj_w, proj_b, att_v, att_w, head_w, head_b;

  GradViews(const MilModel& m, std::span<double> g)
      : proj_w(grad_view(m, g, "proj.weight")),
        proj_b(grad_view(m, g, "proj.bias")),
        att_v(grad_view(m, g, "attention.V")),
        att_w(grad_view(m, g, "attention.w")),
        head_w(grad_view(m, g, "head.weight")),
        head_b(grad_view(m, g, "head.bias")) {
    for (int b = 0; b < m.num_blocks(); ++b) {
      conv_w.push_back(grad_view(m, g, "conv" + std::to_string(b) + ".weight"));
      conv_b.push_back(grad_view(m, g, "conv" + std::to_string(b) + ".bias"));
    }
  }
};

void backprop_slice(const MilModel& model, const SliceTrace& trace, const Vector& dh,
                    GradViews& g) {
  g.proj_w.noalias() += dh * trace.gap.transpose();
  g.proj_b += dh;
  const Vector dgap = model.proj_weight().transpose() * dh;

  const int blocks = model.num_blocks();
  const auto& ex = model.config().extractor;
  Matrix dx = dgap.replicate(1, trace.conv.back().cols()) /
              static_cast<double>(trace.conv.back().cols());
  for (int b = blocks - 1; b >= 0; --b) {
    const int side = ex.block_side(b);
    Matrix dconv = (b == blocks - 1) ? std::move(dx) : max_unpool(dx, side, trace.argmax[b]);
    dconv = dconv.cwiseProduct((trace.conv[b].array() > 0.0).cast<double>().matrix());
    g.conv_w[b].noalias() += dconv * trace.cols[b].transpose();
    g.conv_b[b] += dconv.rowwise().sum();
    if (b > 0) {
      const Matrix dcol = model.conv_weight(b).transpose() * dconv;
      dx = col2im(dcol, ex.channels[b - 1], side);
    }
  }
}

}  // namespace

Vector slice_features(const MilModel& model, const float* slice, SliceTrace* trace) {
  const auto& ex = model.config().extractor;
  const int blocks = model.num_blocks();
  Matrix x = stem_pool(slice, ex.input_side, ex.input_pool);
  if (trace) {
    trace->stem = x;
    trace->cols.clear();
    trace->conv.clear();
    trace->pooled.clear();
    trace->argmax.assign(blocks, {});
  }
  for (int b = 0; b < blocks; ++b) {
    const int side = ex.block_side(b);
    Matrix col = im2col(x, side);
    Matrix out = model.conv_weight(b) * col;
    out.colwise() += model.conv_bias(b);
    out = out.cwiseMax(0.0);
    if (b < blocks - 1) {
      std::vector<int> argmax;
      Matrix pooled = max_pool(out, side, argmax);
      if (trace) {
        trace->argmax[b] = std::move(argmax);
        trace->pooled.push_back(pooled);
      }
      x = std::move(pooled);
    } else {
      x = out;
    }
    if (trace) {
      trace->cols.push_back(std::move(col));
      trace->conv.push_back(std::move(out));
    }
  }
  Vector gap = x.rowwise().mean();
  Vector h = model.proj_weight() * gap + model.proj_bias();
  if (trace) trace->gap = std::move(gap);
  return h;
}

Matrix extract_features(const MilModel& model, const SliceStack& bag) {
  if (bag.side != model.config().extractor.input_side) {
    throw InvalidArgument("bag side " + std::to_string(bag.side) +
                          " does not match the extractor input side");
  }
  if (bag.depth < 1) throw InvalidArgument("bag must contain at least one slice");
  Matrix h(bag.depth, model.feature_dim());
  for (int k = 0; k < bag.depth; ++k) h.row(k) = slice_features(model, bag.slice(k), nullptr);
  return h;
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

AttentionOutput attention_pool(const Matrix& features, const ConstMatrixMap& v,
                               const ConstVectorMap& w) {
  if (features.cols() != v.cols() || v.rows() != w.size()) {
    throw InvalidArgument("attention parameter shapes do not match the features");
  }
  AttentionOutput out;
  out.t = (features * v.transpose()).array().tanh().matrix();
  out.scores = out.t * w;
  out.a = softmax(out.scores);
  out.z = features.transpose() * out.a;
  return out;
}

Vector classify_forward(const Vector& z, const ConstMatrixMap& weight, const ConstVectorMap& bias) {
  return softmax(weight * z + bias);
}

BagForward forward_bag(const MilModel& model, const SliceStack& bag, bool keep_traces) {
  if (bag.side != model.config().extractor.input_side) {
    throw InvalidArgument("bag side does not match the extractor input side");
  }
  if (bag.depth < 1) throw InvalidArgument("bag must contain at least one slice");
  BagForward f;
  f.features.resize(bag.depth, model.feature_dim());
  if (keep_traces) f.traces.resize(bag.depth);
  for (int k = 0; k < bag.depth; ++k) {
    f.features.row(k) =
        slice_features(model, bag.slice(k), keep_traces ? &f.traces[k] : nullptr);
  }
  f.attention = attention_pool(f.features, model.attention_v(), model.attention_w());
  f.logits = model.head_weight() * f.attention.z + model.head_bias();
  f.probs = softmax(f.logits);
  return f;
}

double cross_entropy(const Vector& probs, int label) {
  const double q = std::clamp(probs(label), kProbClamp, 1.0 - kProbClamp);
  return -std::log(q);
}

double adjacent_weight_penalty(const Vector& a) {
  double acc = 0.0;
  for (Eigen::Index i = 1; i < a.size(); ++i) {
    const double d = a(i) - a(i - 1);
    acc += d * d;
  }
  return acc;
}

LossValues loss_components(std::span<const Vector> probs, std::span<const int> labels,
                           std::span<const Vector> attention, double lambda,
                           AwAggregation aggregation) {
  if (probs.empty() || probs.size() != labels.size() || probs.size() != attention.size()) {
    throw InvalidArgument("loss needs matching, non-empty predictions, labels and weights");
  }
  if (lambda < 0.0) throw InvalidArgument("lambda must be non-negative");
  const double n = static_cast<double>(probs.size());
  LossValues l;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    l.ce += cross_entropy(probs[i], labels[i]);
    l.aw += adjacent_weight_penalty(attention[i]);
  }
  l.ce /= n;
  if (aggregation == AwAggregation::MeanOfBagSums) l.aw /= n;
  l.total = l.ce + lambda * l.aw;
  return l;
}

namespace {

Vector ce_logit_gradient(const Vector& probs, int label) {
  Vector dq = Vector::Zero(probs.size());
  const double q = probs(label);
  if (q > kProbClamp && q < 1.0 - kProbClamp) dq(label) = -1.0 / q;
  const double dot = probs.dot(dq);
  return probs.cwiseProduct((dq.array() - dot).matrix());
}

Vector aw_gradient(const Vector& a) {
  const Eigen::Index k = a.size();
  Vector g = Vector::Zero(k);
  for (Eigen::Index i = 1; i < k; ++i) {
    const double d = 2.0 * (a(i) - a(i - 1));
    g(i) += d;
    g(i - 1) -= d;
  }
  return g;
}

}  // namespace

void backpropagate(const MilModel& model, const BagForward& f, const Vector& dlogits,
                   const Vector& da_extra, std::span<double> grad,
                   std::vector<Matrix>* last_conv_grad) {
  const bool params = !grad.empty();
  if (params && f.traces.size() != static_cast<std::size_t>(f.features.rows())) {
    throw InvalidArgument("backpropagate needs a forward pass with traces");
  }
  const AttentionOutput& att = f.attention;
  const Vector dz = model.head_weight().transpose() * dlogits;

  Vector da = f.features * dz;
  if (da_extra.size() > 0) da += da_extra;
  const Vector ds = att.a.cwiseProduct((da.array() - att.a.dot(da)).matrix());
  const Matrix dt = ds * model.attention_w().transpose();
  const Matrix du = dt.cwiseProduct((1.0 - att.t.array().square()).matrix());
  Matrix dh = att.a * dz.transpose();
  dh.noalias() += du * model.attention_v();

  if (params) {
    GradViews g(model, grad);
    g.head_w.noalias() += dlogits * att.z.transpose();
    g.head_b += dlogits;
    g.att_w.noalias() += att.t.transpose() * ds;
    g.att_v.noalias() += du.transpose() * f.features;
    for (Eigen::Index k = 0; k < f.features.rows(); ++k) {
      backprop_slice(model, f.traces[k], dh.row(k).transpose(), g);
    }
  }
  if (last_conv_grad) {
    last_conv_grad->clear();
    const Matrix dgap = dh * model.proj_weight();  // K x C_last
    const auto& ex = model.config().extractor;
    const Eigen::Index n = static_cast<Eigen::Index>(ex.last_side()) * ex.last_side();
    for (Eigen::Index k = 0; k < dh.rows(); ++k) {
      last_conv_grad->push_back(dgap.row(k).transpose().replicate(1, n) / static_cast<double>(n));
    }
  }
}

LossValues bag_gradient(const MilModel& model, const SliceStack& bag, int label, double lambda,
                        double ce_scale, double aw_scale, std::span<double> grad) {
  if (label != 0 && label != 1) throw InvalidArgument("bag label must be 0 or 1");
  const BagForward f = forward_bag(model, bag, true);
  LossValues l;
  l.ce = cross_entropy(f.probs, label);
  l.aw = adjacent_weight_penalty(f.attention.a);
  l.total = l.ce + lambda * l.aw;
  const Vector dlogits = ce_scale * ce_logit_gradient(f.probs, label);
  const Vector da = (lambda * aw_scale) * aw_gradient(f.attention.a);
  backpropagate(model, f, dlogits, da, grad);
  return l;
}

void plain_mil_gradient(const MilModel& model, const SliceStack& bag, int label,
                        std::span<double> grad) {
  const BagForward f = forward_bag(model, bag, true);
  backpropagate(model, f, ce_logit_gradient(f.probs, label), Vector(), grad);
}

LossValues batch_loss(const MilModel& model, std::span<const SliceStack> bags,
                      std::span<const int> labels, double lambda, AwAggregation aggregation) {
  std::vector<Vector> probs, weights;
  for (const auto& bag : bags) {
    const BagForward f = forward_bag(model, bag, false);
    probs.push_back(f.probs);
    weights.push_back(f.attention.a);
  }
  return loss_components(probs, labels, weights, lambda, aggregation);
}

LossValues batch_gradient(const MilModel& model, std::span<const SliceStack> bags,
                          std::span<const int> labels, double lambda, std::span<double> grad,
                          AwAggregation aggregation) {
  if (bags.empty() || bags.size() != labels.size()) {
    throw InvalidArgument("batch needs matching, non-empty bags and labels");
  }
  if (grad.size() != model.num_params()) throw InvalidArgument("gradient buffer size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double n = static_cast<double>(bags.size());
  const double ce_scale = 1.0 / n;
  const double aw_scale = aggregation == AwAggregation::MeanOfBagSums ? 1.0 / n : 1.0;
  LossValues total;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const LossValues l = bag_gradient(model, bags[i], labels[i], lambda, ce_scale, aw_scale, grad);
    total.ce += l.ce * ce_scale;
    total.aw += l.aw * aw_scale;
  }
  total.total = total.ce + lambda * total.aw;
  return total;
}

}  // namespace ctview::mil

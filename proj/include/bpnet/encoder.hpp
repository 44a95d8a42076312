#pragma once

// Embedding encoder: per-modality input projection followed by a
// convolution / self-attention / feed-forward block, each sublayer in
// pre-norm residual form.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bpnet/autograd.hpp"
#include "bpnet/parameters.hpp"

namespace bpnet {

/// Training-time state threaded through forward passes. Dropout is a no-op
/// when rng is null or training is false.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

inline ad::Var dropout(const ad::Var& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.rng == nullptr || ctx.dropout <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - ctx.dropout);
  Matrix mask(x.rows(), x.cols());
  const double inv = 1.0 / (1.0 - ctx.dropout);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*ctx.rng) ? inv : 0.0;
  return ad::hadamard(x, ad::constant(std::move(mask)));
}

struct ConvLayerParams {
  ad::Var norm_gain, norm_bias;
  ad::Var depthwise;       // k x d
  ad::Var pointwise;       // d x d
  ad::Var pointwise_bias;  // 1 x d
};

struct AttentionParams {
  ad::Var norm_gain, norm_bias;
  ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  ad::Var norm_gain, norm_bias;
  ad::Var w1, b1, w2, b2;
};

struct EncoderBlockParams {
  std::vector<ConvLayerParams> convs;
  AttentionParams attention;
  FeedForwardParams feed_forward;
  int heads = 1;
};

struct EncoderParams {
  ad::Var video_proj, video_bias;  // d_v x d, 1 x d
  ad::Var query_proj, query_bias;  // d_q x d, 1 x d
  EncoderBlockParams video_block;
  EncoderBlockParams query_block;  // aliases video_block when shared
  std::optional<ad::Var> positional;  // T_max x d
};

struct EncoderShape {
  Index video_dim = 0;
  Index query_dim = 0;
  Index dim = 128;
  int heads = 4;
  int kernel = 7;
  int conv_blocks = 4;
  bool share = true;
  bool positional = false;
  Index max_frames = 128;
};

inline EncoderBlockParams make_block_params(ParameterSet& ps, const std::string& prefix, Index d,
                                            int heads, int kernel, int conv_blocks,
                                            std::mt19937_64& rng) {
  auto ones = [d] { return Matrix(Matrix::Ones(1, d)); };
  auto zeros = [d] { return Matrix(Matrix::Zero(1, d)); };
  EncoderBlockParams b;
  b.heads = heads;
  for (int i = 0; i < conv_blocks; ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    ConvLayerParams c;
    c.norm_gain = ps.add(p + ".norm_gain", ones());
    c.norm_bias = ps.add(p + ".norm_bias", zeros());
    c.depthwise = ps.add(p + ".depthwise", glorot(kernel, d, rng));
    c.pointwise = ps.add(p + ".pointwise", glorot(d, d, rng));
    c.pointwise_bias = ps.add(p + ".pointwise_bias", zeros());
    b.convs.push_back(c);
  }
  auto& a = b.attention;
  a.norm_gain = ps.add(prefix + ".attn.norm_gain", ones());
  a.norm_bias = ps.add(prefix + ".attn.norm_bias", zeros());
  a.wq = ps.add(prefix + ".attn.wq", glorot(d, d, rng));
  a.bq = ps.add(prefix + ".attn.bq", zeros());
  a.wk = ps.add(prefix + ".attn.wk", glorot(d, d, rng));
  a.bk = ps.add(prefix + ".attn.bk", zeros());
  a.wv = ps.add(prefix + ".attn.wv", glorot(d, d, rng));
  a.bv = ps.add(prefix + ".attn.bv", zeros());
  a.wo = ps.add(prefix + ".attn.wo", glorot(d, d, rng));
  a.bo = ps.add(prefix + ".attn.bo", zeros());
  auto& f = b.feed_forward;
  f.norm_gain = ps.add(prefix + ".ffn.norm_gain", ones());
  f.norm_bias = ps.add(prefix + ".ffn.norm_bias", zeros());
  f.w1 = ps.add(prefix + ".ffn.w1", glorot(d, d, rng));
  f.b1 = ps.add(prefix + ".ffn.b1", zeros());
  f.w2 = ps.add(prefix + ".ffn.w2", glorot(d, d, rng));
  f.b2 = ps.add(prefix + ".ffn.b2", zeros());
  return b;
}

inline EncoderParams make_encoder_params(ParameterSet& ps, const EncoderShape& shape,
                                         std::mt19937_64& rng) {
  require(shape.dim % shape.heads == 0, ErrorCode::kArgument, "encoder: d must divide by h");
  require(shape.kernel % 2 == 1, ErrorCode::kArgument, "encoder: kernel width must be odd");
  const Index d = shape.dim;
  EncoderParams e;
  e.video_proj = ps.add("encoder.video_proj", glorot(shape.video_dim, d, rng));
  e.video_bias = ps.add("encoder.video_bias", Matrix::Zero(1, d));
  e.query_proj = ps.add("encoder.query_proj", glorot(shape.query_dim, d, rng));
  e.query_bias = ps.add("encoder.query_bias", Matrix::Zero(1, d));
  if (shape.positional) {
    std::normal_distribution<double> normal(0.0, 0.02);
    Matrix pos(shape.max_frames, d);
    for (Index i = 0; i < pos.size(); ++i) pos.data()[i] = normal(rng);
    e.positional = ps.add("encoder.positional", std::move(pos));
  }
  if (shape.share) {
    e.video_block = make_block_params(ps, "encoder.block", d, shape.heads, shape.kernel,
                                      shape.conv_blocks, rng);
    e.query_block = e.video_block;
  } else {
    e.video_block = make_block_params(ps, "encoder.video_block", d, shape.heads, shape.kernel,
                                      shape.conv_blocks, rng);
    e.query_block = make_block_params(ps, "encoder.query_block", d, shape.heads, shape.kernel,
                                      shape.conv_blocks, rng);
  }
  return e;
}

/// X W + b.
inline ad::Var project(const ad::Var& x, const ad::Var& weight, const ad::Var& bias) {
  require(x.cols() == weight.rows(), ErrorCode::kShape,
          "project: input width " + std::to_string(x.cols()) + " vs weight rows " +
              std::to_string(weight.rows()));
  return ad::linear(x, weight, bias);
}

/// Multi-head scaled dot-product self-attention over rows of x. When
/// weights is non-null it receives one NxN row-stochastic matrix per head.
inline ad::Var multi_head_self_attention(const ad::Var& x, const AttentionParams& p, int heads,
                                         std::vector<Matrix>* weights = nullptr) {
  const Index d = x.cols();
  const Index head_dim = d / heads;
  const ad::Var q = ad::linear(x, p.wq, p.bq);
  const ad::Var k = ad::linear(x, p.wk, p.bk);
  const ad::Var v = ad::linear(x, p.wv, p.bv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    const ad::Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    const ad::Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    const ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    if (weights != nullptr) weights->push_back(attn.value());
    outs.push_back(ad::matmul(attn, vh));
  }
  const ad::Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return ad::linear(merged, p.wo, p.bo);
}

inline ad::Var encoder_block(const ad::Var& x, const EncoderBlockParams& p,
                             const ForwardContext& ctx = {},
                             std::vector<Matrix>* attention_weights = nullptr) {
  require(x.rows() >= 1, ErrorCode::kShape, "encoder_block: empty sequence");
  require(x.value().allFinite(), ErrorCode::kDomain, "encoder_block: non-finite input");
  ad::Var h = x;
  for (const ConvLayerParams& c : p.convs) {
    ad::Var y = ad::layer_norm_rows(h, c.norm_gain, c.norm_bias);
    y = ad::depthwise_conv1d(y, c.depthwise);
    y = ad::relu(ad::linear(y, c.pointwise, c.pointwise_bias));
    h = ad::add(h, y);
  }
  {
    ad::Var y = ad::layer_norm_rows(h, p.attention.norm_gain, p.attention.norm_bias);
    y = multi_head_self_attention(y, p.attention, p.heads, attention_weights);
    h = ad::add(h, dropout(y, ctx));
  }
  {
    const auto& f = p.feed_forward;
    ad::Var y = ad::layer_norm_rows(h, f.norm_gain, f.norm_bias);
    y = ad::linear(ad::relu(ad::linear(y, f.w1, f.b1)), f.w2, f.b2);
    h = ad::add(h, dropout(y, ctx));
  }
  return h;
}

struct EncodedPair {
  ad::Var video;  // V': T x d
  ad::Var query;  // Q': M x d
};

inline ad::Var add_positions(const ad::Var& x, const EncoderParams& p) {
  if (!p.positional) return x;
  require(x.rows() <= p.positional->rows(), ErrorCode::kShape,
          "sequence longer than positional table");
  return ad::add(x, ad::slice_rows(*p.positional, 0, x.rows()));
}

inline EncodedPair encode(const ad::Var& video, const ad::Var& query, const EncoderParams& p,
                          const ForwardContext& ctx = {}) {
  ad::Var v = add_positions(project(video, p.video_proj, p.video_bias), p);
  ad::Var q = add_positions(project(query, p.query_proj, p.query_bias), p);
  return {encoder_block(v, p.video_block, ctx), encoder_block(q, p.query_block, ctx)};
}

}  // namespace bpnet

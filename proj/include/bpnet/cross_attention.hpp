#pragma once

// Visual-language attention: frame/word similarity, both attention
// directions, and the query-guided visual feature V^q.

#include <cmath>
#include <random>
#include <utility>

#include "bpnet/autograd.hpp"
#include "bpnet/config.hpp"
#include "bpnet/parameters.hpp"

namespace bpnet {

struct CrossAttentionParams {
  // trilinear similarity S_ij = w_v.v_i + w_q.q_j + w_vq.(v_i * q_j)
  ad::Var w_video;    // d x 1
  ad::Var w_query;    // d x 1
  ad::Var w_product;  // 1 x d
  ad::Var fuse_weight;  // 4d x d
  ad::Var fuse_bias;    // 1 x d
  SimilarityMode mode = SimilarityMode::kTrilinear;
};

inline CrossAttentionParams make_cross_attention_params(ParameterSet& ps, Index d,
                                                        SimilarityMode mode,
                                                        std::mt19937_64& rng) {
  CrossAttentionParams p;
  p.mode = mode;
  if (mode == SimilarityMode::kTrilinear) {
    p.w_video = ps.add("cross.w_video", glorot(d, 1, rng));
    p.w_query = ps.add("cross.w_query", glorot(d, 1, rng));
    p.w_product = ps.add("cross.w_product", glorot(1, d, rng));
  }
  p.fuse_weight = ps.add("cross.fuse_weight", glorot(4 * d, d, rng));
  p.fuse_bias = ps.add("cross.fuse_bias", Matrix::Zero(1, d));
  return p;
}

struct SimilarityMatrix {
  ad::Var raw;  // S: T x M
  ad::Var row;  // softmax over each row (over words)
  ad::Var col;  // softmax over each column (over frames)
};

inline SimilarityMatrix similarity(const ad::Var& video, const ad::Var& query,
                                   const CrossAttentionParams& p) {
  require(video.cols() == query.cols(), ErrorCode::kShape, "similarity: feature widths differ");
  const Index t_len = video.rows();
  const Index m_len = query.rows();
  ad::Var s;
  if (p.mode == SimilarityMode::kTrilinear) {
    const ad::Var video_term =
        ad::matmul(ad::matmul(video, p.w_video), ad::constant(Matrix::Ones(1, m_len)));
    const ad::Var query_term = ad::matmul(ad::constant(Matrix::Ones(t_len, 1)),
                                          ad::transpose(ad::matmul(query, p.w_query)));
    const ad::Var product_term =
        ad::matmul(ad::mul_row(video, p.w_product), ad::transpose(query));
    s = ad::add(ad::add(video_term, query_term), product_term);
  } else {
    s = ad::scale(ad::matmul(video, ad::transpose(query)),
                  1.0 / std::sqrt(static_cast<double>(video.cols())));
  }
  return {s, ad::softmax_rows(s), ad::softmax_cols(s)};
}

/// A = S_row Q', B = S_row S_col^T V'.
inline std::pair<ad::Var, ad::Var> attend(const ad::Var& s_row, const ad::Var& s_col,
                                          const ad::Var& video, const ad::Var& query) {
  require(s_row.rows() == video.rows() && s_row.cols() == query.rows(), ErrorCode::kShape,
          "attend: similarity shape does not match features");
  ad::Var a = ad::matmul(s_row, query);
  ad::Var b = ad::matmul(ad::matmul(s_row, ad::transpose(s_col)), video);
  return {a, b};
}

/// V^q = [V'; A; V'*A; V'*B] W + b.
inline ad::Var fuse_vq(const ad::Var& video, const ad::Var& a, const ad::Var& b,
                       const ad::Var& weight, const ad::Var& bias) {
  const ad::Var cat =
      ad::concat_cols({video, a, ad::hadamard(video, a), ad::hadamard(video, b)});
  require(cat.cols() == weight.rows(), ErrorCode::kShape, "fuse_vq: weight must be 4d x d");
  return ad::linear(cat, weight, bias);
}

inline ad::Var query_guided_features(const ad::Var& video, const ad::Var& query,
                                     const CrossAttentionParams& p) {
  const SimilarityMatrix s = similarity(video, query, p);
  const auto [a, b] = attend(s.row, s.col, video, query);
  return fuse_vq(video, a, b, p.fuse_weight, p.fuse_bias);
}

}  // namespace bpnet

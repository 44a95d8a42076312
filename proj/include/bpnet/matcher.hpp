#pragma once

// Stage two: pool each candidate span and the query, fuse them, and regress
// a matching score in (0, 1).

#include <algorithm>
#include <random>
#include <vector>

#include "bpnet/autograd.hpp"
#include "bpnet/config.hpp"
#include "bpnet/parameters.hpp"
#include "bpnet/proposal.hpp"

namespace bpnet {

struct MatcherParams {
  ad::Var candidate_weight, candidate_bias;  // W_c: d x d
  ad::Var query_weight, query_bias;          // W_q: d x d
  ad::Var fuse_weight, fuse_bias;            // 2d x d
  ad::Var hidden_weight, hidden_bias;        // W_1: d x d
  ad::Var out_weight, out_bias;              // W_2: d x 1
  // learned attention pooling scores (PoolingMode::kAttention only)
  ad::Var candidate_attention;  // d x 1
  ad::Var query_attention;      // d x 1
  PoolingMode pooling = PoolingMode::kMean;
  bool fusion = true;
};

inline MatcherParams make_matcher_params(ParameterSet& ps, Index d, PoolingMode pooling,
                                         bool fusion, std::mt19937_64& rng) {
  MatcherParams p;
  p.pooling = pooling;
  p.fusion = fusion;
  p.candidate_weight = ps.add("matcher.candidate_weight", glorot(d, d, rng));
  p.candidate_bias = ps.add("matcher.candidate_bias", Matrix::Zero(1, d));
  if (fusion) {
    p.query_weight = ps.add("matcher.query_weight", glorot(d, d, rng));
    p.query_bias = ps.add("matcher.query_bias", Matrix::Zero(1, d));
    p.fuse_weight = ps.add("matcher.fuse_weight", glorot(2 * d, d, rng));
    p.fuse_bias = ps.add("matcher.fuse_bias", Matrix::Zero(1, d));
  }
  p.hidden_weight = ps.add("matcher.hidden_weight", glorot(d, d, rng));
  p.hidden_bias = ps.add("matcher.hidden_bias", Matrix::Zero(1, d));
  p.out_weight = ps.add("matcher.out_weight", glorot(d, 1, rng));
  p.out_bias = ps.add("matcher.out_bias", Matrix::Zero(1, 1));
  if (pooling == PoolingMode::kAttention) {
    p.candidate_attention = ps.add("matcher.candidate_attention", glorot(d, 1, rng));
    if (fusion) p.query_attention = ps.add("matcher.query_attention", glorot(d, 1, rng));
  }
  return p;
}

/// N x T row-stochastic matrix averaging frames i..j of each span.
inline Matrix span_average_matrix(const std::vector<TemporalSegment>& spans, Index frames) {
  Matrix p = Matrix::Zero(static_cast<Index>(spans.size()), frames);
  for (std::size_t n = 0; n < spans.size(); ++n) {
    const Index i = spans[n].first();
    const Index j = spans[n].last();
    require(spans[n].unit == TimeUnit::kFrames && 0 <= i && i <= j && j < frames,
            ErrorCode::kArgument,
            "span (" + std::to_string(i) + ", " + std::to_string(j) + ") outside [0, " +
                std::to_string(frames) + ")");
    p.row(static_cast<Index>(n)).segment(i, j - i + 1).setConstant(1.0 / static_cast<double>(j - i + 1));
  }
  return p;
}

namespace detail {

/// Pooling weights for each span: uniform, or a softmax of learned
/// per-frame scores restricted to the span.
inline ad::Var pooling_weights(const ad::Var& x, const std::vector<TemporalSegment>& spans,
                               PoolingMode mode, const ad::Var& attention) {
  Matrix uniform = span_average_matrix(spans, x.rows());
  if (mode == PoolingMode::kMean) return ad::constant(std::move(uniform));
  const Matrix inside = (uniform.array() > 0.0).cast<double>().matrix();
  const Matrix mask = (inside.array() - 1.0) * 1e30;
  const ad::Var scores = ad::matmul(ad::constant(Matrix::Ones(uniform.rows(), 1)),
                                    ad::transpose(ad::matmul(x, attention)));
  // exp() underflows to denormals rather than zero; the indicator clears them
  return ad::hadamard(ad::softmax_rows(ad::add(scores, ad::constant(mask))), ad::constant(inside));
}

}  // namespace detail

/// Pooled W_c-projections of frames i..j for each span: N x d. Mean pooling
/// commutes with the affine projection, so the pooled rows are projected.
inline ad::Var pool_candidates(const ad::Var& video, const std::vector<TemporalSegment>& spans,
                               const ad::Var& weight, const ad::Var& bias,
                               PoolingMode mode = PoolingMode::kMean,
                               const ad::Var& attention = {}) {
  const ad::Var w = detail::pooling_weights(video, spans, mode, attention);
  return ad::linear(ad::matmul(w, video), weight, bias);
}

inline ad::Var pool_query(const ad::Var& query, const ad::Var& weight, const ad::Var& bias,
                          PoolingMode mode = PoolingMode::kMean, const ad::Var& attention = {}) {
  const std::vector<TemporalSegment> all{TemporalSegment::frames(0, query.rows() - 1)};
  return pool_candidates(query, all, weight, bias, mode, attention);
}

/// sigmoid(W_2 relu(W_1 F)) with F = [C~, Q~] W_F + b for every candidate
/// row of pooled_candidates. Returns N x 1.
inline ad::Var fuse_and_score(const ad::Var& pooled_candidates, const ad::Var& pooled_query,
                              const MatcherParams& p) {
  ad::Var fused = pooled_candidates;
  if (p.fusion) {
    require(pooled_query.rows() == 1 && pooled_query.cols() == pooled_candidates.cols(),
            ErrorCode::kShape, "fuse_and_score: pooled query must be 1 x d");
    const ad::Var tiled =
        ad::matmul(ad::constant(Matrix::Ones(pooled_candidates.rows(), 1)), pooled_query);
    fused = ad::linear(ad::concat_cols({pooled_candidates, tiled}), p.fuse_weight, p.fuse_bias);
  }
  const ad::Var hidden = ad::relu(ad::linear(fused, p.hidden_weight, p.hidden_bias));
  return ad::sigmoid(ad::linear(hidden, p.out_weight, p.out_bias));
}

/// Matching scores for spans over `video` (V' normally, V^q for the
/// no-fusion variant or when slicing fused features).
inline ad::Var match_scores(const ad::Var& video, const ad::Var& query,
                            const std::vector<TemporalSegment>& spans, const MatcherParams& p) {
  require(!spans.empty(), ErrorCode::kArgument, "match_scores: no candidates");
  const ad::Var c = pool_candidates(video, spans, p.candidate_weight, p.candidate_bias, p.pooling,
                                    p.candidate_attention);
  if (!p.fusion) return fuse_and_score(c, {}, p);
  const ad::Var q = pool_query(query, p.query_weight, p.query_bias, p.pooling, p.query_attention);
  return fuse_and_score(c, q, p);
}

/// Attaches scores and sorts by match score descending; ties go to the
/// earlier start, then the shorter span.
inline std::vector<Candidate> rerank(std::vector<Candidate> candidates,
                                     const Eigen::VectorXd& scores) {
  require(!candidates.empty(), ErrorCode::kArgument, "rerank: empty candidate list");
  require(static_cast<Index>(candidates.size()) == scores.size(), ErrorCode::kArgument,
          "rerank: one score per candidate required");
  for (std::size_t n = 0; n < candidates.size(); ++n) candidates[n].match_score = scores(static_cast<Index>(n));
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (*a.match_score != *b.match_score) return *a.match_score > *b.match_score;
    if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
    return (a.segment.end - a.segment.start) < (b.segment.end - b.segment.start);
  });
  return candidates;
}

}  // namespace bpnet

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bpnet/matcher.hpp"
#include "testing.hpp"

namespace bpnet {
namespace {

using testing::random_matrix;

MatcherParams identity_matcher(Index d) {
  MatcherParams p;
  p.candidate_weight = ad::constant(Matrix::Identity(d, d));
  p.candidate_bias = ad::constant(Matrix::Zero(1, d));
  p.query_weight = ad::constant(Matrix::Identity(d, d));
  p.query_bias = ad::constant(Matrix::Zero(1, d));
  return p;
}

TEST(Pooling, MeanOfSpan) {
  Matrix v(4, 2);
  v << 0, 0, 1, 3, 3, 5, 9, 9;
  const auto p = identity_matcher(2);
  const auto pooled = pool_candidates(ad::constant(v), {TemporalSegment::frames(1, 2)},
                                      p.candidate_weight, p.candidate_bias);
  EXPECT_TRUE(pooled.value().isApprox((Matrix(1, 2) << 2, 4).finished()));

  Matrix q(2, 2);
  q << 0, 2, 4, 6;
  EXPECT_TRUE(pool_query(ad::constant(q), p.query_weight, p.query_bias)
                  .value()
                  .isApprox((Matrix(1, 2) << 2, 4).finished()));
}

TEST(Pooling, SpanAverageRowsAreStochastic) {
  const auto m = span_average_matrix(
      {TemporalSegment::frames(0, 0), TemporalSegment::frames(2, 5), TemporalSegment::frames(0, 7)}, 8);
  EXPECT_TRUE(m.rowwise().sum().isApprox(Eigen::VectorXd::Ones(3)));
  EXPECT_DOUBLE_EQ(m(1, 3), 0.25);
  EXPECT_DOUBLE_EQ(m(1, 6), 0.0);
  EXPECT_THROW(span_average_matrix({TemporalSegment::frames(2, 8)}, 8), Error);
  EXPECT_THROW(span_average_matrix({TemporalSegment::seconds(0, 1)}, 8), Error);
}

TEST(Pooling, MeanIsOrderInvariantWithinSpan) {
  std::mt19937_64 rng(1);
  Matrix v = random_matrix(6, 3, rng);
  const auto p = identity_matcher(3);
  const auto span = std::vector{TemporalSegment::frames(1, 4)};
  const Matrix a = pool_candidates(ad::constant(v), span, p.candidate_weight, p.candidate_bias).value();
  v.row(1).swap(v.row(4));
  v.row(2).swap(v.row(3));
  const Matrix b = pool_candidates(ad::constant(v), span, p.candidate_weight, p.candidate_bias).value();
  EXPECT_TRUE(a.isApprox(b, 1e-14));
}

TEST(Pooling, AttentionStaysInsideSpan) {
  std::mt19937_64 rng(2);
  Matrix v = random_matrix(6, 3, rng);
  const ad::Var att = ad::constant(random_matrix(3, 1, rng));
  const auto w = detail::pooling_weights(ad::constant(v), {TemporalSegment::frames(2, 3)},
                                         PoolingMode::kAttention, att);
  EXPECT_NEAR(w.value().row(0).sum(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(w.value()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(w.value()(0, 5), 0.0);
  // zero attention vector reduces to the mean
  const auto u = detail::pooling_weights(ad::constant(v), {TemporalSegment::frames(2, 3)},
                                         PoolingMode::kAttention, ad::constant(Matrix::Zero(3, 1)));
  EXPECT_NEAR(u.value()(0, 2), 0.5, 1e-12);
}

TEST(Scoring, ZeroWeightsGiveOneHalf) {
  std::mt19937_64 rng(3);
  ParameterSet ps;
  auto p = make_matcher_params(ps, 4, PoolingMode::kMean, true, rng);
  p.out_weight.mutable_value().setZero();
  const auto s = match_scores(ad::constant(random_matrix(6, 4, rng)), ad::constant(random_matrix(3, 4, rng)),
                              {TemporalSegment::frames(0, 2), TemporalSegment::frames(4, 5)}, p);
  EXPECT_TRUE(s.value().isApprox(Matrix::Constant(2, 1, 0.5)));
}

TEST(Scoring, HandExample) {
  MatcherParams p = identity_matcher(1);
  p.fuse_weight = ad::constant(Matrix::Ones(2, 1));
  p.fuse_bias = ad::constant(Matrix::Zero(1, 1));
  p.hidden_weight = ad::constant(Matrix::Ones(1, 1));
  p.hidden_bias = ad::constant(Matrix::Zero(1, 1));
  p.out_weight = ad::constant(Matrix::Ones(1, 1));
  p.out_bias = ad::constant(Matrix::Zero(1, 1));
  // C~ = 1, Q~ = 2, F = 3, sigmoid(relu(3)) = 0.9526
  const auto s = fuse_and_score(ad::constant(Matrix::Ones(1, 1)), ad::constant(Matrix::Constant(1, 1, 2.0)), p);
  EXPECT_NEAR(s.item(), 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(s.item(), 0.9526, 1e-4);

  p.out_weight = ad::constant(Matrix::Constant(1, 1, 1e3));
  EXPECT_NEAR(fuse_and_score(ad::constant(Matrix::Ones(1, 1)), ad::constant(Matrix::Ones(1, 1)), p).item(), 1.0,
              1e-12);
}

TEST(Scoring, StaysInOpenUnitInterval) {
  std::mt19937_64 rng(4);
  for (bool fusion : {true, false}) {
    ParameterSet ps;
    const auto p = make_matcher_params(ps, 5, PoolingMode::kMean, fusion, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const auto s = match_scores(ad::constant(random_matrix(8, 5, rng, 3.0)),
                                  ad::constant(random_matrix(2, 5, rng)),
                                  {TemporalSegment::frames(0, 7), TemporalSegment::frames(3, 3)}, p);
      EXPECT_GT(s.value().minCoeff(), 0.0);
      EXPECT_LT(s.value().maxCoeff(), 1.0);
    }
  }
}

TEST(Scoring, NoFusionSkipsQueryParameters) {
  std::mt19937_64 rng(5);
  ParameterSet with, without;
  make_matcher_params(with, 4, PoolingMode::kMean, true, rng);
  make_matcher_params(without, 4, PoolingMode::kMean, false, rng);
  EXPECT_TRUE(with.contains("matcher.fuse_weight"));
  EXPECT_FALSE(without.contains("matcher.fuse_weight"));
  EXPECT_FALSE(without.contains("matcher.query_weight"));
  EXPECT_THROW(match_scores(ad::constant(random_matrix(3, 4, rng)), ad::constant(random_matrix(3, 4, rng)),
                            {}, make_matcher_params(with, 4, PoolingMode::kMean, true, rng)),
               Error);
}

std::vector<Candidate> candidates(std::initializer_list<std::pair<Index, Index>> spans) {
  std::vector<Candidate> out;
  for (auto [i, j] : spans) out.push_back({TemporalSegment::frames(i, j), 0.0, std::nullopt});
  return out;
}

TEST(Rerank, SortsByMatchScore) {
  auto c = candidates({{0, 3}, {2, 5}, {1, 1}});
  const auto r = rerank(c, Eigen::Vector3d(0.2, 0.9, 0.5));
  EXPECT_EQ(r[0].segment, TemporalSegment::frames(2, 5));
  EXPECT_EQ(r[1].segment, TemporalSegment::frames(1, 1));
  EXPECT_EQ(r[2].segment, TemporalSegment::frames(0, 3));
  EXPECT_DOUBLE_EQ(*r[0].match_score, 0.9);
}

TEST(Rerank, TiesPreferEarlierThenShorter) {
  const auto r = rerank(candidates({{2, 4}, {1, 6}, {1, 2}}), Eigen::Vector3d(0.5, 0.5, 0.5));
  EXPECT_EQ(r[0].segment, TemporalSegment::frames(1, 2));
  EXPECT_EQ(r[1].segment, TemporalSegment::frames(1, 6));
  EXPECT_EQ(r[2].segment, TemporalSegment::frames(2, 4));
}

TEST(Rerank, IsAPermutationIndependentOfInputOrder) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> frame(0, 9);
  std::uniform_int_distribution<int> level(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Candidate> c;
    std::vector<double> s;
    for (int k = 0; k < 8; ++k) {
      const int a = frame(rng), b = frame(rng);
      c.push_back({TemporalSegment::frames(std::min(a, b), std::max(a, b)), 0.0, std::nullopt});
      s.push_back(level(rng) / 3.0);
    }
    const auto r1 = rerank(c, Eigen::Map<Eigen::VectorXd>(s.data(), 8));
    std::vector<std::size_t> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<Candidate> c2;
    Eigen::VectorXd s2(8);
    for (std::size_t k = 0; k < 8; ++k) {
      c2.push_back(c[idx[k]]);
      s2(static_cast<Index>(k)) = s[idx[k]];
    }
    const auto r2 = rerank(c2, s2);
    ASSERT_EQ(r1.size(), 8u);
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_EQ(r1[k].segment, r2[k].segment);
      EXPECT_EQ(*r1[k].match_score, *r2[k].match_score);
      if (k > 0) EXPECT_GE(*r1[k - 1].match_score, *r1[k].match_score);
    }
  }
}

TEST(Rerank, RejectsEmptyOrMismatched) {
  EXPECT_THROW(rerank({}, Eigen::VectorXd()), Error);
  EXPECT_THROW(rerank(candidates({{0, 1}}), Eigen::Vector2d(0.1, 0.2)), Error);
}

}  // namespace
}  // namespace bpnet

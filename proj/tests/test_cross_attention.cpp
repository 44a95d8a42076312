#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bpnet/cross_attention.hpp"
#include "testing.hpp"

namespace bpnet {
namespace {

using testing::random_matrix;

CrossAttentionParams trilinear_params(Index d, std::mt19937_64& rng, ParameterSet& ps) {
  return make_cross_attention_params(ps, d, SimilarityMode::kTrilinear, rng);
}

TEST(Similarity, ZeroWeightsGiveUniformRows) {
  std::mt19937_64 rng(1);
  ParameterSet ps;
  auto p = trilinear_params(4, rng, ps);
  p.w_video.mutable_value().setZero();
  p.w_query.mutable_value().setZero();
  p.w_product.mutable_value().setZero();
  const auto s = similarity(ad::constant(random_matrix(5, 4, rng)), ad::constant(random_matrix(3, 4, rng)), p);
  EXPECT_TRUE(s.raw.value().isZero());
  EXPECT_TRUE(s.row.value().isApprox(Matrix::Constant(5, 3, 1.0 / 3.0)));
}

TEST(Similarity, SingleFrameSingleWord) {
  std::mt19937_64 rng(2);
  ParameterSet ps;
  const auto p = trilinear_params(4, rng, ps);
  const auto s = similarity(ad::constant(random_matrix(1, 4, rng)), ad::constant(random_matrix(1, 4, rng)), p);
  EXPECT_DOUBLE_EQ(s.row.item(), 1.0);
  EXPECT_DOUBLE_EQ(s.col.item(), 1.0);
}

TEST(Similarity, ProductTermHandExample) {
  ParameterSet ps;
  std::mt19937_64 rng(3);
  auto p = trilinear_params(1, rng, ps);
  p.w_video.mutable_value().setZero();
  p.w_query.mutable_value().setZero();
  p.w_product.mutable_value().setOnes();
  Matrix v(2, 1);
  v << 1, 2;
  const auto s = similarity(ad::constant(v), ad::constant(Matrix::Ones(1, 1)), p);
  EXPECT_DOUBLE_EQ(s.raw.value()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.raw.value()(1, 0), 2.0);
  const double e = std::exp(1.0), e2 = std::exp(2.0);
  EXPECT_NEAR(s.col.value()(0, 0), e / (e + e2), 1e-15);
  EXPECT_NEAR(s.col.value()(1, 0), e2 / (e + e2), 1e-15);
}

TEST(Similarity, RowAndColumnStochastic) {
  std::mt19937_64 rng(4);
  ParameterSet ps;
  const auto tri = trilinear_params(6, rng, ps);
  CrossAttentionParams dot;
  dot.mode = SimilarityMode::kDot;
  for (int trial = 0; trial < 50; ++trial) {
    const Index t_len = 1 + trial % 9, m_len = 1 + trial % 4;
    const auto v = ad::constant(random_matrix(t_len, 6, rng, 4.0));
    const auto q = ad::constant(random_matrix(m_len, 6, rng, 4.0));
    for (const CrossAttentionParams* p : std::initializer_list<const CrossAttentionParams*>{&tri, &dot}) {
      const auto s = similarity(v, q, *p);
      EXPECT_TRUE(s.row.value().rowwise().sum().isApprox(Eigen::VectorXd::Ones(t_len), 1e-12));
      EXPECT_TRUE(s.col.value().colwise().sum().isApprox(Eigen::RowVectorXd::Ones(m_len), 1e-12));
    }
  }
}

TEST(Attend, UniformAttentionAveragesWords) {
  std::mt19937_64 rng(5);
  const Matrix q = random_matrix(3, 4, rng);
  const Matrix v = random_matrix(5, 4, rng);
  const auto [a, b] = attend(ad::constant(Matrix::Constant(5, 3, 1.0 / 3.0)),
                             ad::constant(Matrix::Constant(5, 3, 0.2)), ad::constant(v),
                             ad::constant(q));
  for (Index t = 0; t < 5; ++t) EXPECT_TRUE(a.value().row(t).isApprox(q.colwise().mean()));
  EXPECT_EQ(b.rows(), 5);
  EXPECT_EQ(b.cols(), 4);
}

TEST(Attend, SingleElementIdentity) {
  std::mt19937_64 rng(6);
  const Matrix q = random_matrix(1, 4, rng);
  const Matrix v = random_matrix(1, 4, rng);
  const auto [a, b] = attend(ad::constant(Matrix::Ones(1, 1)), ad::constant(Matrix::Ones(1, 1)),
                             ad::constant(v), ad::constant(q));
  EXPECT_EQ(a.value(), q);
  EXPECT_EQ(b.value(), v);
}

TEST(Attend, HandProduct) {
  Matrix v(2, 2);
  v << 1, 10, 3, 20;
  Matrix s_col(2, 1);
  s_col << 0.3, 0.7;
  const auto [a, b] = attend(ad::constant(Matrix::Ones(2, 1)), ad::constant(s_col), ad::constant(v),
                             ad::constant(Matrix::Ones(1, 2)));
  const Eigen::RowVector2d expected = 0.3 * v.row(0) + 0.7 * v.row(1);
  EXPECT_TRUE(b.value().row(0).isApprox(expected));
  EXPECT_TRUE(b.value().row(1).isApprox(expected));
}

TEST(Attend, WordPermutationLeavesContextUnchanged) {
  // Permuting words together with their similarity columns is a relabelling:
  // A and B do not change.
  std::mt19937_64 rng(7);
  ParameterSet ps;
  const auto p = trilinear_params(4, rng, ps);
  const Matrix v = random_matrix(3, 4, rng);
  const Matrix q = random_matrix(3, 4, rng);
  const auto s = similarity(ad::constant(v), ad::constant(q), p);
  const auto [a, b] = attend(s.row, s.col, ad::constant(v), ad::constant(q));
  std::vector<int> perm{0, 1, 2};
  while (std::next_permutation(perm.begin(), perm.end())) {
    Matrix pq(3, 4);
    for (int r = 0; r < 3; ++r) pq.row(r) = q.row(perm[r]);
    const auto ps2 = similarity(ad::constant(v), ad::constant(pq), p);
    for (int c = 0; c < 3; ++c) {
      EXPECT_TRUE(ps2.raw.value().col(c).isApprox(s.raw.value().col(perm[c]), 1e-12));
    }
    const auto [pa, pb] = attend(ps2.row, ps2.col, ad::constant(v), ad::constant(pq));
    EXPECT_TRUE(pa.value().isApprox(a.value(), 1e-12));
    EXPECT_TRUE(pb.value().isApprox(b.value(), 1e-12));
  }
}

TEST(FuseVq, Examples) {
  std::mt19937_64 rng(8);
  const Index d = 3;
  const Matrix v = random_matrix(4, d, rng), a = random_matrix(4, d, rng), b = random_matrix(4, d, rng);
  Matrix bias = random_matrix(1, d, rng);
  const auto zero = fuse_vq(ad::constant(v), ad::constant(a), ad::constant(b),
                            ad::constant(Matrix::Zero(4 * d, d)), ad::constant(bias));
  for (Index t = 0; t < 4; ++t) EXPECT_EQ(zero.value().row(t), bias.row(0));

  Matrix select = Matrix::Zero(4 * d, d);
  select.topRows(d).setIdentity();
  const auto picked = fuse_vq(ad::constant(v), ad::constant(a), ad::constant(b), ad::constant(select),
                              ad::constant(Matrix::Zero(1, d)));
  EXPECT_TRUE(picked.value().isApprox(v));

  const auto scalar = fuse_vq(ad::constant(Matrix::Constant(1, 1, 2)), ad::constant(Matrix::Constant(1, 1, 3)),
                              ad::constant(Matrix::Constant(1, 1, 4)), ad::constant(Matrix::Ones(4, 1)),
                              ad::constant(Matrix::Zero(1, 1)));
  EXPECT_DOUBLE_EQ(scalar.item(), 19.0);

  EXPECT_THROW(fuse_vq(ad::constant(v), ad::constant(a), ad::constant(b), ad::constant(Matrix::Zero(d, d)),
                       ad::constant(Matrix::Zero(1, d))),
               Error);
}

TEST(FuseVq, OutputShape) {
  std::mt19937_64 rng(9);
  ParameterSet ps;
  const auto p = trilinear_params(5, rng, ps);
  for (Index t_len : {1, 2, 7}) {
    for (Index m_len : {1, 4}) {
      const auto vq = query_guided_features(ad::constant(random_matrix(t_len, 5, rng)),
                                            ad::constant(random_matrix(m_len, 5, rng)), p);
      EXPECT_EQ(vq.rows(), t_len);
      EXPECT_EQ(vq.cols(), 5);
    }
  }
}

}  // namespace
}  // namespace bpnet

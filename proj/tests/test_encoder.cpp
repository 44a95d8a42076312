#include <gtest/gtest.h>

#include <limits>
#include <numeric>

#include "bpnet/encoder.hpp"
#include "testing.hpp"

namespace bpnet {
namespace {

using testing::random_matrix;

EncoderShape small_shape(Index d, int heads) {
  EncoderShape s;
  s.video_dim = 5;
  s.query_dim = 3;
  s.dim = d;
  s.heads = heads;
  s.kernel = 7;
  s.conv_blocks = 4;
  return s;
}

void zero_all_weights(ParameterSet& ps) {
  for (auto& e : ps.entries()) {
    const bool is_gain = e.name.find("norm_gain") != std::string::npos;
    e.var.mutable_value().setConstant(is_gain ? 1.0 : 0.0);
  }
}

TEST(Project, Examples) {
  const ad::Var eye = ad::constant(Matrix::Identity(3, 3));
  const ad::Var zero_bias = ad::constant(Matrix::Zero(1, 3));
  EXPECT_EQ(project(eye, eye, zero_bias).value(), Matrix(Matrix::Identity(3, 3)));
  EXPECT_TRUE(project(ad::constant(Matrix::Zero(2, 3)), eye, zero_bias).value().isZero());

  Matrix x(1, 2);
  x << 1, 2;
  const ad::Var out =
      project(ad::constant(x), ad::constant(Matrix::Ones(2, 1)), ad::constant(Matrix::Zero(1, 1)));
  EXPECT_DOUBLE_EQ(out.item(), 3.0);

  EXPECT_THROW(project(eye, ad::constant(Matrix::Ones(2, 2)), zero_bias), Error);
}

TEST(EncoderBlock, ZeroWeightsGiveResidualIdentity) {
  ParameterSet ps;
  std::mt19937_64 rng(1);
  const auto params = make_encoder_params(ps, small_shape(8, 4), rng);
  zero_all_weights(ps);
  for (Index n : {1, 3, 10}) {
    const Matrix x = random_matrix(n, 8, rng);
    EXPECT_TRUE(encoder_block(ad::constant(x), params.video_block).value().isApprox(x, 1e-12));
  }
  // end to end: with identity-like projections zeroed, outputs are the (zero) projections
  const auto enc = encode(ad::constant(random_matrix(6, 5, rng)),
                          ad::constant(random_matrix(2, 3, rng)), params);
  EXPECT_TRUE(enc.video.value().isZero());
  EXPECT_EQ(enc.video.rows(), 6);
  EXPECT_EQ(enc.query.rows(), 2);
}

TEST(EncoderBlock, SinglePositionAttentionIsOne) {
  ParameterSet ps;
  std::mt19937_64 rng(2);
  const auto params = make_encoder_params(ps, small_shape(8, 4), rng);
  std::vector<Matrix> weights;
  encoder_block(ad::constant(random_matrix(1, 8, rng)), params.video_block, {}, &weights);
  ASSERT_EQ(weights.size(), 4u);
  for (const auto& w : weights) {
    ASSERT_EQ(w.rows(), 1);
    EXPECT_DOUBLE_EQ(w(0, 0), 1.0);
  }
}

TEST(EncoderBlock, AttentionRowsSumToOne) {
  ParameterSet ps;
  std::mt19937_64 rng(3);
  const auto params = make_encoder_params(ps, small_shape(8, 2), rng);
  for (Index n : {1, 2, 16}) {
    std::vector<Matrix> weights;
    encoder_block(ad::constant(random_matrix(n, 8, rng, 3.0)), params.video_block, {}, &weights);
    for (const auto& w : weights) {
      EXPECT_TRUE(w.rowwise().sum().isApprox(Eigen::VectorXd::Ones(n), 1e-12));
      EXPECT_GE(w.minCoeff(), 0.0);
    }
  }
}

TEST(EncoderBlock, PermutationEquivariantWithoutConvolution) {
  // Zeroed convolution kernels leave only position-wise ops and attention,
  // so permuting the input rows permutes the output rows.
  ParameterSet ps;
  std::mt19937_64 rng(4);
  const auto params = make_encoder_params(ps, small_shape(8, 1), rng);
  for (const auto& c : params.video_block.convs) {
    auto dw = c.depthwise;
    dw.mutable_value().setZero();
  }
  const Matrix x = random_matrix(4, 8, rng);
  std::vector<int> perm(4);
  std::iota(perm.begin(), perm.end(), 0);
  const Matrix base = encoder_block(ad::constant(x), params.video_block).value();
  std::vector<Matrix> base_w;
  encoder_block(ad::constant(x), params.video_block, {}, &base_w);
  while (std::next_permutation(perm.begin(), perm.end())) {
    Matrix px(4, 8);
    for (int r = 0; r < 4; ++r) px.row(r) = x.row(perm[r]);
    std::vector<Matrix> w;
    const Matrix out = encoder_block(ad::constant(px), params.video_block, {}, &w).value();
    for (int r = 0; r < 4; ++r) {
      ASSERT_TRUE(out.row(r).isApprox(base.row(perm[r]), 1e-10));
      for (int c = 0; c < 4; ++c) ASSERT_NEAR(w[0](r, c), base_w[0](perm[r], perm[c]), 1e-12);
    }
  }
}

TEST(EncoderBlock, RejectsNonFiniteInput) {
  ParameterSet ps;
  std::mt19937_64 rng(5);
  const auto params = make_encoder_params(ps, small_shape(8, 2), rng);
  Matrix x = Matrix::Zero(3, 8);
  x(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(encoder_block(ad::constant(x), params.video_block), Error);
}

TEST(Encoder, ShapesAndSharing) {
  std::mt19937_64 rng(6);
  ParameterSet shared_ps;
  auto shape = small_shape(8, 2);
  const auto shared = make_encoder_params(shared_ps, shape, rng);
  ParameterSet split_ps;
  shape.share = false;
  const auto split = make_encoder_params(split_ps, shape, rng);
  EXPECT_GT(split_ps.scalar_count(), shared_ps.scalar_count());
  EXPECT_EQ(shared.video_block.attention.wq.node(), shared.query_block.attention.wq.node());
  EXPECT_NE(split.video_block.attention.wq.node(), split.query_block.attention.wq.node());

  const auto enc = encode(ad::constant(random_matrix(7, 5, rng)),
                          ad::constant(random_matrix(3, 3, rng)), split);
  EXPECT_EQ(enc.video.rows(), 7);
  EXPECT_EQ(enc.video.cols(), 8);
  EXPECT_EQ(enc.query.rows(), 3);
  EXPECT_EQ(enc.query.cols(), 8);
  EXPECT_TRUE(enc.video.value().allFinite());
}

TEST(Encoder, PositionalEmbeddingsAreOptIn) {
  std::mt19937_64 rng(7);
  ParameterSet ps;
  auto shape = small_shape(8, 2);
  shape.positional = true;
  shape.max_frames = 4;
  const auto params = make_encoder_params(ps, shape, rng);
  ASSERT_TRUE(params.positional.has_value());
  EXPECT_NO_THROW(encode(ad::constant(random_matrix(4, 5, rng)), ad::constant(random_matrix(2, 3, rng)), params));
  EXPECT_THROW(encode(ad::constant(random_matrix(5, 5, rng)), ad::constant(random_matrix(2, 3, rng)), params),
               Error);
}

TEST(Encoder, DropoutOnlyInTraining) {
  std::mt19937_64 rng(8);
  ParameterSet ps;
  const auto params = make_encoder_params(ps, small_shape(8, 2), rng);
  const Matrix x = random_matrix(5, 8, rng);
  const Matrix eval = encoder_block(ad::constant(x), params.video_block).value();
  std::mt19937_64 drop_rng(9);
  const Matrix eval_ctx =
      encoder_block(ad::constant(x), params.video_block, {false, 0.5, &drop_rng}).value();
  const Matrix train = encoder_block(ad::constant(x), params.video_block, {true, 0.5, &drop_rng}).value();
  EXPECT_EQ(eval, eval_ctx);
  EXPECT_FALSE(eval.isApprox(train));
}

}  // namespace
}  // namespace bpnet

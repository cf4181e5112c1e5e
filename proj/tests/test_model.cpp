#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "capqe/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace capqe;

namespace {

std::vector<double> random_doubles(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

double direct_bilinear(const std::vector<double>& x, const std::vector<double>& y, const Matrix& b) {
  double s = 0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    for (std::size_t c = 0; c < y.size(); ++c) s += x[a] * b(a, c) * y[c];
  }
  return s;
}

ModelConfig small_config(double dropout = 0.0) {
  ModelConfig c;
  c.proj_dim = 8;
  c.num_labels = 3;
  c.dropout_rate = dropout;
  return c;
}

}  // namespace

TEST(Bilinear, PicksOffDiagonalEntry) {
  Matrix b(2, 2);
  b(0, 1) = 1;
  b(1, 0) = 1;
  EXPECT_EQ(bilinear(std::vector<double>{1, 0}, std::vector<double>{0, 1}, b.view()), 1.0);
}

TEST(Bilinear, ZeroMatrix) {
  Rng rng(1);
  const auto x = random_doubles(rng, 5), y = random_doubles(rng, 7);
  EXPECT_EQ(bilinear(x, y, Matrix(5, 7).view()), 0.0);
}

TEST(Bilinear, DimensionMismatch) {
  try {
    bilinear(std::vector<double>{1, 2}, std::vector<double>{1, 2}, Matrix(3, 2).view());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Bilinear, MatchesDirectSumAndIsLinearInEachArgument) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_doubles(rng, 9), x2 = random_doubles(rng, 9), y = random_doubles(rng, 6),
               y2 = random_doubles(rng, 6);
    const auto b = random_matrix(rng, 9, 6);
    const double alpha = rng.normal(), beta = rng.normal();
    const double base = bilinear(x, y, b.view());
    EXPECT_NEAR(base, direct_bilinear(x, y, b), 1e-12 * (1 + std::abs(base)));

    std::vector<double> xs(9), ys(6), x_twice(9);
    for (std::size_t i = 0; i < 9; ++i) {
      xs[i] = alpha * x[i] + beta * x2[i];
      x_twice[i] = 2 * x[i];
    }
    for (std::size_t i = 0; i < 6; ++i) ys[i] = alpha * y[i] + beta * y2[i];
    const double lin_x = alpha * base + beta * bilinear(x2, y, b.view());
    const double lin_y = alpha * base + beta * bilinear(x, y2, b.view());
    EXPECT_NEAR(bilinear(xs, y, b.view()), lin_x, 1e-9 * (1 + std::abs(lin_x)));
    EXPECT_NEAR(bilinear(x, ys, b.view()), lin_y, 1e-9 * (1 + std::abs(lin_y)));
    EXPECT_NEAR(bilinear(x_twice, y, b.view()), 2 * base, 1e-12 * (1 + std::abs(base)));
  }
}

TEST(DenseForward, IdentityPassesPositiveInput) {
  const std::vector<double> x{0.5, 2.0, 3.0};
  const auto out = dense_forward(x, Matrix::identity(3).view(), std::vector<double>(3, 0.0), 0.01);
  EXPECT_EQ(out, x);
}

TEST(DenseForward, NegativeBranch) {
  const auto out = dense_forward(std::vector<double>{-1.0}, Matrix::identity(1).view(), std::vector<double>{0.0}, 0.01);
  EXPECT_DOUBLE_EQ(out[0], -0.01);
}

TEST(DenseForward, MatchesPerElementOracle) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto x = random_doubles(rng, 11), b = random_doubles(rng, 4);
    const auto w = random_matrix(rng, 4, 11);
    const auto out = dense_forward(x, w.view(), b, 0.2);
    for (std::size_t r = 0; r < 4; ++r) {
      double h = b[r];
      for (std::size_t c = 0; c < 11; ++c) h += w(r, c) * x[c];
      EXPECT_NEAR(out[r], h >= 0 ? h : 0.2 * h, 1e-12);
    }
  }
}

TEST(DenseForward, DimensionMismatch) {
  EXPECT_THROW(dense_forward(std::vector<double>{1, 2}, Matrix(2, 3).view(), std::vector<double>{0, 0}, 0.01), Error);
}

TEST(Forward, ZeroNetworkScoresHalf) {
  Rng rng(4);
  const ModelParams p(ModelConfig{});
  EXPECT_EQ(forward(p, testutil::random_sample(rng, "a", 5)), 0.5);
}

TEST(Forward, AbsentLabelSlotsAreZero) {
  Rng rng(5);
  ModelConfig cfg;
  cfg.proj_dim = 8;
  cfg.num_labels = 16;
  const auto p = init_params(cfg, 7);
  const auto s = testutil::random_sample(rng, "a", 0);
  const auto img = encode_image(p, s);
  const auto txt = encode_text(p, s);
  const auto h = head_forward(p, img, txt);
  ASSERT_EQ(h.z.size(), 33u);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(h.z[j], 0.0);
  EXPECT_NE(h.z[32], 0.0);
}

TEST(Forward, PaddedSlotWeightsDoNotMatter) {
  Rng rng(6);
  ModelConfig cfg;
  cfg.proj_dim = 8;
  cfg.num_labels = 5;
  auto p = init_params(cfg, 8);
  const auto s = testutil::random_sample(rng, "a", 2);
  const double base = forward(p, s);
  auto w_out = p.block(Block::OutW);
  for (std::size_t j : {2u, 3u, 4u, 7u, 8u, 9u}) w_out[j] += 10.0;
  EXPECT_EQ(forward(p, s), base);
  w_out[1] += 1.0;
  EXPECT_NE(forward(p, s), base);
}

TEST(Forward, OnlyFirstKLabelsAreUsed) {
  Rng rng(9);
  ModelConfig cfg = small_config();
  const auto p = init_params(cfg, 1);
  auto s = testutil::random_sample(rng, "a", 3);
  const double base = forward(p, s);
  s.labels.push_back(testutil::random_vector(rng, kLabelDim));
  EXPECT_EQ(forward(p, s), base);
}

TEST(Forward, SwappingLabelsSwapsBilinearPositions) {
  Rng rng(10);
  const auto p = init_params(small_config(), 2);
  auto s = testutil::random_sample(rng, "a", 3);
  const auto z = head_forward(p, encode_image(p, s), encode_text(p, s)).z;
  std::swap(s.labels[0], s.labels[2]);
  const auto zs = head_forward(p, encode_image(p, s), encode_text(p, s)).z;
  EXPECT_EQ(zs[0], z[2]);
  EXPECT_EQ(zs[2], z[0]);
  EXPECT_EQ(zs[1], z[1]);
  EXPECT_EQ(zs[3], z[5]);
  EXPECT_EQ(zs[5], z[3]);
  EXPECT_EQ(zs[6], z[6]);
}

TEST(Forward, InferIsDeterministicAndTrainIsSeeded) {
  Rng rng(11);
  const auto p = init_params(small_config(0.2), 3);
  const auto s = testutil::random_sample(rng, "a", 3);
  EXPECT_EQ(forward(p, s), forward(p, s));
  Rng a(99), b(99), c(100);
  const double ta = forward(p, s, &a);
  EXPECT_EQ(ta, forward(p, s, &b));
  EXPECT_NE(ta, forward(p, s, &c));
  EXPECT_NE(ta, forward(p, s));
}

TEST(Forward, ScoreStaysStrictlyInsideUnitInterval) {
  Rng rng(12);
  auto p = init_params(small_config(), 4);
  const auto s = testutil::random_sample(rng, "a", 3);
  p.block(Block::OutB)[0] = 1000.0;
  const double hi = forward(p, s);
  EXPECT_LT(hi, 1.0);
  EXPECT_GT(hi, 0.0);
  p.block(Block::OutB)[0] = -1000.0;
  const double lo = forward(p, s);
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(lo, 1.0);
}

TEST(Forward, NonFiniteIntermediateIsReported) {
  Rng rng(13);
  auto p = init_params(small_config(), 4);
  p.block(Block::OutB)[0] = std::numeric_limits<double>::infinity();
  try {
    forward(p, testutil::random_sample(rng, "a", 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteIntermediate);
  }
}

TEST(Backward, ExactFitHasZeroLossAndGradient) {
  Rng rng(14);
  ModelParams p(small_config());  // every score is exactly 0.5
  std::vector<Sample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(testutil::random_sample(rng, std::to_string(i), 2, 0.5f));
  const auto lg = backward(p, batch);
  EXPECT_EQ(lg.loss, 0.0);
  for (double g : lg.grads.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, MissingTarget) {
  Rng rng(15);
  const auto p = init_params(small_config(), 1);
  std::vector<Sample> batch{testutil::random_sample(rng, "a", 1)};
  try {
    backward(p, batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingTarget);
  }
}

TEST(Backward, MatchesFiniteDifferencesPerBlock) {
  Rng rng(16);
  const auto p = init_params(small_config(), 21);
  std::vector<Sample> batch;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(testutil::random_sample(rng, std::to_string(i), i % 4, testutil::random_target(rng)));
  }
  const auto lg = backward(p, batch);
  const auto numeric = oracle::finite_difference(p, [&](const ParamSet& q) { return backward(q, batch).loss; });
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const auto block = static_cast<Block>(b);
    const auto analytic = lg.grads.block(block);
    const std::size_t offset = static_cast<std::size_t>(analytic.data() - lg.grads.values().data());
    double worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      worst = std::max(worst, oracle::relative_error(analytic[i], numeric[offset + i]));
    }
    EXPECT_LT(worst, 1e-4) << kBlockNames[b];
  }
}

TEST(Backward, DroppedInputGivesZeroWeightColumn) {
  Rng rng(17);
  auto cfg = small_config(0.5);
  const auto p = init_params(cfg, 5);
  const auto s = testutil::random_sample(rng, "a", 1, 0.25f);
  const Sample* batch[] = {&s};
  // Replay the per-sample dropout stream that backward uses.
  Rng outer(1234);
  Rng replay_outer(1234);
  Rng sample_rng(replay_outer.next_u64());
  const auto img = encode_image(p, s, &sample_rng);
  const auto lg = backward(p, batch, &outer);
  const auto gw = lg.grads.matrix(Block::ImageW);
  std::size_t dropped = 0;
  for (std::size_t c = 0; c < kImageDim; ++c) {
    if (img.image.input[c] != 0.0) continue;
    ++dropped;
    for (std::size_t r = 0; r < gw.rows(); ++r) EXPECT_EQ(gw(r, c), 0.0);
  }
  EXPECT_GT(dropped, 0u);
}

TEST(Backward, IndependentOfWorkerCount) {
  Rng rng(18);
  const auto p = init_params(small_config(0.2), 6);
  std::vector<Sample> batch;
  for (int i = 0; i < 40; ++i) batch.push_back(testutil::random_sample(rng, std::to_string(i), 2, 0.125f));
  setenv("QE_THREADS", "1", 1);
  Rng a(5);
  const auto one = backward(p, batch, &a);
  setenv("QE_THREADS", "3", 1);
  Rng b(5);
  const auto three = backward(p, batch, &b);
  unsetenv("QE_THREADS");
  EXPECT_EQ(one.loss, three.loss);
  EXPECT_TRUE(one.grads == three.grads);
}

TEST(InitParams, Deterministic) {
  EXPECT_TRUE(init_params(small_config(), 1) == init_params(small_config(), 1));
  EXPECT_FALSE(init_params(small_config(), 1) == init_params(small_config(), 2));
}

TEST(InitParams, BoundedByFanInAndZeroBiases) {
  ModelConfig cfg;
  const auto p = init_params(cfg, 3);
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const auto block = static_cast<Block>(b);
    const auto shape = p.shape(block);
    const auto values = p.block(block);
    const bool is_bias = block == Block::ImageB || block == Block::LabelB || block == Block::SentenceB ||
                         block == Block::OutB;
    const double bound = is_bias ? 0.0 : 1.0 / std::sqrt(static_cast<double>(shape.cols));
    for (double v : values) EXPECT_LE(std::abs(v), bound) << kBlockNames[b];
  }
}

TEST(ParamSet, ShapesFollowConfig) {
  ModelConfig cfg;
  cfg.proj_dim = 8;
  cfg.num_labels = 3;
  const ParamSet p(cfg);
  EXPECT_EQ(p.shape(Block::ImageW).cols, 64u);
  EXPECT_EQ(p.shape(Block::LabelW).cols, 256u);
  EXPECT_EQ(p.shape(Block::SentenceW).cols, 512u);
  EXPECT_EQ(p.shape(Block::LabelImage).rows, 9u);
  EXPECT_EQ(p.shape(Block::OutW).cols, 7u);
  EXPECT_THROW(ParamSet(ModelConfig{0, 1, 0.01, 0.2}), Error);
  EXPECT_THROW(ParamSet(ModelConfig{4, 1, 0.01, 1.0}), Error);
}

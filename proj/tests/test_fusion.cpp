#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "medfocus/encoders/encoders.hpp"
#include "medfocus/encoders/model.hpp"
#include "medfocus/error.hpp"
#include "medfocus/fusion/heads.hpp"
#include "medfocus/fusion/loss_check.hpp"
#include "medfocus/numerics/ops.hpp"
#include "medfocus/numerics/rng.hpp"
#include "test_util.hpp"

namespace medfocus {
namespace {

using test::expect_error;

std::vector<double> random_values(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

// Rows normalized to unit length.
Tensor unit_rows(Rng& rng, std::size_t rows, std::size_t d) {
  auto v = random_values(rng, rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    double n = 0;
    for (std::size_t j = 0; j < d; ++j) n += v[i * d + j] * v[i * d + j];
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] /= std::sqrt(n);
  }
  return Tensor::from({rows, d}, v);
}

// Random orthogonal d x d matrix by Gram-Schmidt.
std::vector<double> random_rotation(Rng& rng, std::size_t d) {
  std::vector<double> q = random_values(rng, d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double proj = 0;
      for (std::size_t j = 0; j < d; ++j) proj += q[i * d + j] * q[k * d + j];
      for (std::size_t j = 0; j < d; ++j) q[i * d + j] -= proj * q[k * d + j];
    }
    double n = 0;
    for (std::size_t j = 0; j < d; ++j) n += q[i * d + j] * q[i * d + j];
    for (std::size_t j = 0; j < d; ++j) q[i * d + j] /= std::sqrt(n);
  }
  return q;
}

// ---------------------------------------------------------------- fuse

TEST(Fuse, ZeroWeightIsIdentity) {
  Rng rng(1);
  const Tensor tokens = Tensor::from({5, 4}, random_values(rng, 20));
  const Tensor m = fuse(tokens, Tensor::from({4}, random_values(rng, 4)), Tensor::zeros({4, 4}));
  EXPECT_TRUE(std::equal(m.data().begin(), m.data().end(), tokens.data().begin()));
}

TEST(Fuse, MatchesRowwiseOracle) {
  Rng rng(2);
  const std::size_t n = 3, d = 4;
  const auto tok = random_values(rng, n * d), t = random_values(rng, d), w = random_values(rng, d * d);
  const Tensor m = fuse(Tensor::from({n, d}, tok), Tensor::from({d}, t), Tensor::from({d, d}, w));
  const Tensor zero_tokens = fuse(Tensor::zeros({n, d}), Tensor::from({d}, t), Tensor::from({d, d}, w));
  for (std::size_t j = 0; j < d; ++j) {
    long double shift = 0;
    for (std::size_t k = 0; k < d; ++k) shift += t[k] * w[k * d + j];
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(m.at(i, j), static_cast<double>(tok[i * d + j] + shift), 1e-15);
      EXPECT_NEAR(zero_tokens.at(i, j), static_cast<double>(shift), 1e-15);
    }
  }
}

TEST(TextContext, IsTheMeanEmbedding) {
  const Tensor t = text_context(Tensor::from({2, 3}, {1, 2, 3, 3, 4, 5}));
  EXPECT_EQ(t.shape(), (Shape{3}));
  EXPECT_DOUBLE_EQ(t.at(0), 2.0);
  EXPECT_DOUBLE_EQ(t.at(2), 4.0);
}

// ---------------------------------------------------------------- classify

TEST(Classify, ZeroHeadIsUniform) {
  Rng rng(3);
  const Tensor y = classify(Tensor::from({4, 5}, random_values(rng, 20)), Tensor::zeros({5, 3}), Tensor::zeros({3}));
  const Tensor p = softmax(y, 0);
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Classify, HandBuiltTwoClassHead) {
  // Weights read the first feature for class 0 and the second for class 1.
  const Tensor w = Tensor::from({2, 2}, {1, 0, 0, 1}), b = Tensor::zeros({2});
  const Tensor a = Tensor::from({2, 2}, {3, 0, 1, 0});  // meanpool (2, 0)
  const Tensor c = Tensor::from({2, 2}, {0, 1, 0, 5});  // meanpool (0, 3)
  EXPECT_EQ(softmax(classify(a, w, b), 0).at(0) > 0.5, true);
  EXPECT_EQ(softmax(classify(c, w, b), 0).at(1) > 0.5, true);
  const Tensor y = classify(a, w, b);
  EXPECT_DOUBLE_EQ(y.at(0), 2.0);
  EXPECT_DOUBLE_EQ(y.at(1), 0.0);
}

TEST(Classify, SoftmaxShiftInvariance) {
  Rng rng(4);
  const auto v = random_values(rng, 5);
  std::vector<double> shifted = v;
  for (double& x : shifted) x += 17.25;
  const Tensor a = softmax(Tensor::from({5}, v), 0), b = softmax(Tensor::from({5}, shifted), 0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-15);
}

// ---------------------------------------------------------------- contrastive

TEST(Contrastive, SingleClassIsZero) {
  Rng rng(5);
  const std::vector<std::size_t> labels{0, 0};
  EXPECT_EQ(contrastive_loss(unit_rows(rng, 2, 4), unit_rows(rng, 1, 4), labels, 0.07).item(), 0.0);
}

TEST(Contrastive, OrthogonalGivesLogC) {
  const Tensor z = Tensor::from({1, 4}, {0, 0, 0, 1});
  const Tensor t = Tensor::from({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
  const std::vector<std::size_t> labels{2};
  EXPECT_NEAR(contrastive_loss(z, t, labels, 0.07).item(), std::log(3.0), 1e-15);
}

TEST(Contrastive, MatchesExtendedPrecisionEnumeration) {
  Rng rng(6);
  const std::size_t b = 2, c = 3, d = 5;
  const double tau = 0.1;
  const Tensor z = unit_rows(rng, b, d), t = unit_rows(rng, c, d);
  const std::vector<std::size_t> labels{2, 0};
  long double expect = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<long double> s(c, 0);
    long double total = 0;
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < d; ++j) s[k] += static_cast<long double>(z.at(i, j)) * t.at(k, j);
      s[k] /= tau;
      total += std::exp(s[k]);
    }
    expect += std::log(total) - s[labels[i]];
  }
  expect /= b;
  EXPECT_NEAR(contrastive_loss(z, t, labels, tau).item(), static_cast<double>(expect), 1e-14);
  const Tensor log_scale = Tensor::scalar(std::log(1.0 / tau));
  EXPECT_NEAR(contrastive_loss(z, t, labels, log_scale).item(), static_cast<double>(expect), 1e-13);
}

TEST(Contrastive, RotationInvariant) {
  Rng rng(7);
  const std::size_t d = 6;
  const Tensor z = unit_rows(rng, 3, d), t = unit_rows(rng, 4, d);
  const Tensor q = Tensor::from({d, d}, random_rotation(rng, d));
  const std::vector<std::size_t> labels{3, 1, 1};
  const double a = contrastive_loss(z, t, labels, 0.07).item();
  const double b = contrastive_loss(matmul(z, q), matmul(t, q), labels, 0.07).item();
  EXPECT_NEAR(a, b, 1e-9);
}

TEST(Contrastive, LearnedScaleIsClamped) {
  Rng rng(8);
  const Tensor z = unit_rows(rng, 2, 4), t = unit_rows(rng, 3, 4);
  const std::vector<std::size_t> labels{0, 2};
  const double at_cap = contrastive_loss(z, t, labels, 0.01).item();
  EXPECT_NEAR(contrastive_loss(z, t, labels, Tensor::scalar(50.0)).item(), at_cap, 1e-12);
  const double at_floor = contrastive_loss(z, t, labels, 100.0).item();
  EXPECT_NEAR(contrastive_loss(z, t, labels, Tensor::scalar(-50.0)).item(), at_floor, 1e-12);
}

TEST(Contrastive, RejectsUnnormalizedRows) {
  Rng rng(9);
  const std::vector<std::size_t> labels{0};
  const Tensor t = unit_rows(rng, 2, 3);
  expect_error(ErrorKind::NonNormalizedInput,
               [&] { contrastive_loss(Tensor::from({1, 3}, {1, 1, 0}), t, labels, 0.07); });
  expect_error(ErrorKind::LabelOutOfRange, [&] {
    const std::vector<std::size_t> bad{2};
    contrastive_loss(unit_rows(rng, 1, 3), t, bad, 0.07);
  });
}

TEST(CrossEntropyLoss, Cases) {
  EXPECT_NEAR(cross_entropy(Tensor::zeros({5}), 3).item(), std::log(5.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::from({2}, {1e3, -1e3}), 0).item(), 0.0, 1e-12);
}

// ---------------------------------------------------------------- composite

TEST(Composite, EndpointsAndArithmetic) {
  const LossBreakdown half = composite_loss(2.0, 4.0, 0.5);
  EXPECT_EQ(half.l_total, 3.0);
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const double lc = rng.uniform(0, 5), le = rng.uniform(0, 5);
    EXPECT_EQ(composite_loss(lc, le, 1.0).l_total, lc);
    EXPECT_EQ(composite_loss(lc, le, 0.0).l_total, le);
    const CompositeLoss one = composite_loss(Tensor::scalar(lc), Tensor::scalar(le), 1.0);
    EXPECT_EQ(one.total.item(), lc);
    EXPECT_EQ(composite_loss(Tensor::scalar(lc), Tensor::scalar(le), 0.0).total.item(), le);
  }
  expect_error(ErrorKind::LambdaOutOfRange, [] { composite_loss(1.0, 1.0, 1.5); });
  expect_error(ErrorKind::LambdaOutOfRange, [] { composite_loss(1.0, 1.0, -0.1); });
  expect_error(ErrorKind::LambdaOutOfRange,
               [] { composite_loss(Tensor::scalar(1.0), Tensor::scalar(1.0), std::nan("")); });
}

std::vector<Image> two_images(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> images(2, Image(size, size, 1));
  for (auto& img : images)
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return images;
}

TEST(Composite, FullModelEndpoints) {
  ArchConfig a;
  a.vocab = default_vocab(a.num_classes);
  const ModelParams p = init_params(a, 3);
  const auto images = two_images(64, 1);
  const std::vector<std::size_t> labels{1, 3};
  const CompositeLoss c1 = model_loss(p, images, labels, 1.0);
  const CompositeLoss c0 = model_loss(p, images, labels, 0.0);
  EXPECT_NEAR(c1.total.item(), c1.parts.l_contrastive, 1e-12);
  EXPECT_NEAR(c0.total.item(), c0.parts.l_ce, 1e-12);
  EXPECT_NEAR(c1.parts.l_ce, c0.parts.l_ce, 1e-12);
  const CompositeLoss mid = model_loss(p, images, labels, 0.25);
  EXPECT_NEAR(mid.total.item(), 0.25 * mid.parts.l_contrastive + 0.75 * mid.parts.l_ce, 1e-12);
}

TEST(Composite, FullModelGradientSmallArchitecture) {
  const LossCheckResult r = composite_loss_grad_check(small_check_arch(), 0, 0.5, 1e-4, 0);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
  EXPECT_GT(r.coordinates, 1000u);
}

TEST(Composite, FullModelGradientDefaultArchitecture) {
  ArchConfig a;
  a.vocab = default_vocab(a.num_classes);
  for (double lambda : {0.0, 0.5, 1.0}) {
    const LossCheckResult r = composite_loss_grad_check(a, 1, lambda, 1e-4, 2);
    EXPECT_LT(r.max_relative_error, 1e-4) << "lambda " << lambda << " " << r.worst_parameter;
  }
}

TEST(FusedFeature, ShapeAndNoGraph) {
  ArchConfig a;
  a.vocab = default_vocab(a.num_classes);
  const ModelParams p = init_params(a, 0);
  const Tensor f = fused_feature(p, two_images(64, 2)[0]);
  EXPECT_EQ(f.shape(), (Shape{64}));
  EXPECT_FALSE(f.requires_grad());
  double n = 0;
  for (double v : f.data()) n += v * v;
  EXPECT_LT(std::sqrt(n), 1e3);
}

}  // namespace
}  // namespace medfocus

#include <gtest/gtest.h>

#include <cmath>

#include "disco/dense.hpp"
#include "disco/full_loss.hpp"
#include "oracles.hpp"

namespace disco {
namespace {

using testing::max_rel;
using testing::random_unit_rows;

TEST(ClipLoss, MatchesScalarLoopOracle) {
  for (std::size_t b : {1, 3, 8, 17}) {
    for (double t : {1.0, 10.0, 100.0}) {
      const auto image = random_unit_rows(b, 5, b * 31 + 1);
      const auto text = random_unit_rows(b, 5, b * 31 + 2);
      const auto loss = clip_loss_full(image, text, t);
      const double expected = testing::loop_clip_loss(image, text, t);
      EXPECT_LE(std::abs(loss.total - expected), 1e-13 * std::max(1.0, std::abs(expected)))
          << "B=" << b << " t=" << t;
      EXPECT_DOUBLE_EQ(loss.total, (loss.image_to_text + loss.text_to_image) / 2);
      EXPECT_EQ(loss.temperature, t);
    }
  }
}

TEST(ClipLoss, SingletonBatchIsZero) {
  const auto v = random_unit_rows(1, 4, 3);
  EXPECT_EQ(clip_loss_full(v, v, 10.0).total, 0.0);
  const auto g = clip_grad_full(v, v, 10.0);
  EXPECT_EQ(max_abs(g.d_image), 0.0);
  EXPECT_EQ(max_abs(g.d_text), 0.0);
}

TEST(ClipLoss, OrthonormalPairsAtHighTemperatureApproachZero) {
  const DenseMatrix eye{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto loss = clip_loss_full(eye, eye, 100.0);
  EXPECT_LT(loss.total, 1e-40);
  EXPECT_GE(loss.total, 0.0);
}

TEST(ClipLoss, IdenticalFeaturesGiveLogB) {
  // All similarities equal → each row is a uniform softmax over B classes.
  DenseMatrix same(6, 2);
  for (std::size_t r = 0; r < 6; ++r) same(r, 0) = 1.0;
  EXPECT_NEAR(clip_loss_full(same, same, 7.0).total, std::log(6.0), 1e-14);
}

TEST(ClipLoss, SwappingModalitiesSwapsDirections) {
  const auto image = random_unit_rows(5, 3, 40);
  const auto text = random_unit_rows(5, 3, 41);
  const auto a = clip_loss_full(image, text, 5.0);
  const auto b = clip_loss_full(text, image, 5.0);
  EXPECT_DOUBLE_EQ(a.image_to_text, b.text_to_image);
  EXPECT_DOUBLE_EQ(a.text_to_image, b.image_to_text);
}

TEST(ClipLoss, RejectsBadInputs) {
  const auto a = random_unit_rows(4, 3, 1);
  EXPECT_THROW(clip_loss_full(a, random_unit_rows(5, 3, 2), 1.0), ShapeError);
  EXPECT_THROW(clip_loss_full(a, random_unit_rows(4, 2, 2), 1.0), ShapeError);
  EXPECT_THROW(clip_loss_full(a, a, 0.0), DomainError);
  EXPECT_THROW(clip_loss_full(a, a, -1.0), DomainError);
  EXPECT_THROW(clip_grad_full(a, a, std::nan("")), DomainError);
}

TEST(ClipGrad, LossAgreesWithLossOnlyPath) {
  const auto image = random_unit_rows(9, 4, 5);
  const auto text = random_unit_rows(9, 4, 6);
  EXPECT_DOUBLE_EQ(clip_grad_full(image, text, 10.0).loss.total,
                   clip_loss_full(image, text, 10.0).total);
}

TEST(ClipGrad, MatchesFiniteDifferencesOfScalarOracle) {
  for (std::size_t b : {2, 4, 8}) {
    for (std::size_t d : {2, 4, 8}) {
      for (double t : {1.0, 10.0}) {
        const auto image = random_unit_rows(b, d, b * 100 + d);
        const auto text = random_unit_rows(b, d, b * 100 + d + 50);
        const auto g = clip_grad_full(image, text, t);
        const auto fd_image = testing::central_differences(
            [&](const DenseMatrix& x) { return testing::loop_clip_loss(x, text, t); }, image,
            1e-6);
        const auto fd_text = testing::central_differences(
            [&](const DenseMatrix& x) { return testing::loop_clip_loss(image, x, t); }, text,
            1e-6);
        EXPECT_LT(max_rel(g.d_image, fd_image), 1e-6) << "B=" << b << " D=" << d << " t=" << t;
        EXPECT_LT(max_rel(g.d_text, fd_text), 1e-6) << "B=" << b << " D=" << d << " t=" << t;
      }
    }
  }
}

TEST(ClipGrad, LibraryFiniteDifferenceHelperAgrees) {
  const auto image = random_unit_rows(3, 3, 70);
  const auto text = random_unit_rows(3, 3, 71);
  auto loss = [&](const DenseMatrix& x) { return clip_loss_full(x, text, 3.0).total; };
  const auto ours = finite_diff_grad(loss, image, 1e-6);
  const auto theirs = testing::central_differences(loss, image, 1e-6);
  EXPECT_TRUE(bitwise_equal(ours, theirs));
  EXPECT_THROW(finite_diff_grad(loss, image, 0.0), DomainError);
}

TEST(ClipGrad, SwappingModalitiesSwapsGradients) {
  const auto image = random_unit_rows(6, 4, 80);
  const auto text = random_unit_rows(6, 4, 81);
  const auto a = clip_grad_full(image, text, 4.0);
  const auto b = clip_grad_full(text, image, 4.0);
  EXPECT_LT(relative_error(a.d_image, b.d_text), 1e-14);
  EXPECT_LT(relative_error(a.d_text, b.d_image), 1e-14);
}

TEST(ClipGrad, LossScopePeaksAtExactlyOneSquareBuffer) {
  for (std::size_t b : {1, 4, 16, 64}) {
    const auto image = random_unit_rows(b, 8, b);
    const auto text = random_unit_rows(b, 8, b + 1);
    LossScopeStats stats;
    (void)clip_grad_full(image, text, 10.0, &stats);
    EXPECT_EQ(stats.loss_scope.peak_live_elements, b * b);
    EXPECT_EQ(stats.loss_scope.live_elements, 0u);
    EXPECT_EQ(stats.similarity_flops, 2 * b * b * 8);
    // similarity + two gradient products
    EXPECT_EQ(stats.loss_scope.flops_accumulated, 3 * 2 * b * b * 8);
    EXPECT_EQ(stats.exchange_elements, 4 * b * 8);
  }
}

TEST(ClipGrad, FloatTracksDouble) {
  const auto image = random_unit_rows(16, 8, 90);
  const auto text = random_unit_rows(16, 8, 91);
  const auto g64 = clip_grad_full(image, text, 10.0);
  const auto g32 = clip_grad_full(convert<float>(image), convert<float>(text), 10.0f);
  EXPECT_LT(relative_error(convert<double>(g32.d_image), g64.d_image), 1e-5);
  EXPECT_LT(relative_error(convert<double>(g32.d_text), g64.d_text), 1e-5);
  EXPECT_NEAR(g32.loss.total, g64.loss.total, 1e-5);
}

TEST(FeatureBatch, RequiresUnitRows) {
  EXPECT_NO_THROW(FeatureBatch<double>(random_unit_rows(4, 3, 1), Modality::Image));
  // Norm 1 + 5e-9, outside the 1e-9 tolerance.
  DenseMatrix off{{1.0, 1e-4}};
  EXPECT_THROW(FeatureBatch<double>(off, Modality::Text), DomainError);
  DenseMatrixF near{{1.0f, 1e-3f}};
  EXPECT_NO_THROW(FeatureBatch<float>(near, Modality::Text));
  EXPECT_THROW(FeatureBatch<double>(DenseMatrix(0, 3), Modality::Image), ShapeError);
}

TEST(FeatureBatch, OverloadsForwardToMatrices) {
  const auto image = random_unit_rows(4, 3, 10);
  const auto text = random_unit_rows(4, 3, 11);
  const FeatureBatch<double> fi(image, Modality::Image);
  const FeatureBatch<double> ft(text, Modality::Text);
  EXPECT_EQ(fi.batch(), 4u);
  EXPECT_EQ(fi.dim(), 3u);
  EXPECT_EQ(clip_loss_full(fi, ft, 2.0).total, clip_loss_full(image, text, 2.0).total);
  EXPECT_TRUE(bitwise_equal(clip_grad_full(fi, ft, 2.0).d_image,
                            clip_grad_full(image, text, 2.0).d_image));
}

}  // namespace
}  // namespace disco

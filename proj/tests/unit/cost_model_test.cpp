#include <gtest/gtest.h>

#include <cstdint>

#include "disco/cost_model.hpp"

namespace disco {
namespace {

CostInputs inputs(std::uint64_t b, std::uint64_t n, std::uint64_t l, std::uint64_t d,
                  std::uint64_t bytes = 4) {
  return CostInputs{b, n, l, d, bytes};
}

TEST(Analytic, SixteenGibibyteSimilarityMatrix) {
  const auto r = analytic_footprint(inputs(65536, 1, 1, 1), Method::Clip);
  EXPECT_EQ(r.loss_elements * 4, 17'179'869'184ull);
}

TEST(Analytic, HandEvaluatedLargeConfiguration) {
  // B = 32768, N = 128, L = 12, D = 1024, 4-byte scalars, evaluated by hand:
  //   b = 256, backbone (CLIP) = 256·12·1024 = 3,145,728; (BASIC) = 262,144
  //   loss (CLIP) = 32768² = 1,073,741,824; (DisCo) = 2·32768²/128 = 16,777,216
  //   FLOPs (CLIP) = 32768²·1024 = 1,099,511,627,776; (DisCo) = 17,179,869,184
  const auto in = inputs(32768, 128, 12, 1024);
  const auto clip = analytic_footprint(in, Method::Clip);
  EXPECT_EQ(clip.backbone_elements, 3'145'728u);
  EXPECT_EQ(clip.loss_elements, 1'073'741'824u);
  EXPECT_EQ(clip.total_elements, 1'076'887'552u);
  EXPECT_EQ(clip.loss_flops, 1'099'511'627'776u);
  EXPECT_EQ(clip.bytes, 4'307'550'208u);

  const auto basic = analytic_footprint(in, Method::Basic);
  EXPECT_EQ(basic.backbone_elements, 262'144u);
  EXPECT_EQ(basic.loss_elements, 1'073'741'824u);

  const auto disco = analytic_footprint(in, Method::Disco);
  EXPECT_EQ(disco.backbone_elements, 3'145'728u);
  EXPECT_EQ(disco.loss_elements, 16'777'216u);
  EXPECT_EQ(disco.loss_flops, 17'179'869'184u);

  const auto star = analytic_footprint(in, Method::DiscoStar);
  EXPECT_EQ(star.backbone_elements, 262'144u);
  EXPECT_EQ(star.loss_elements, 16'777'216u);
  EXPECT_EQ(star.total_elements, 17'039'360u);
  EXPECT_EQ(star.bytes, 68'157'440u);

  for (const auto& r : {clip, basic, disco, star}) {
    EXPECT_EQ(r.global_batch, 32768u);
    EXPECT_EQ(r.world_size, 128u);
    EXPECT_EQ(r.layers, 12u);
    EXPECT_EQ(r.dim, 1024u);
  }
}

TEST(Analytic, SingleRankShardedLossIsTwoFullMatrices) {
  const auto r = analytic_footprint(inputs(256, 1, 1, 8), Method::Disco);
  EXPECT_EQ(r.loss_elements, 2u * 256 * 256);
}

TEST(Analytic, ShardedLossTimesWorldIsTwiceFull) {
  for (std::uint64_t n = 1; n <= 64; ++n) {
    const auto in = inputs(64 * 9 * 7 * 5 * 4, n, 3, 16, 8);
    if (in.global_batch % n != 0) continue;
    const auto clip = analytic_footprint(in, Method::Clip);
    const auto disco = analytic_footprint(in, Method::Disco);
    EXPECT_EQ(disco.loss_elements * n, 2 * clip.loss_elements) << "N=" << n;
    EXPECT_EQ(disco.loss_flops * n, 2 * clip.loss_flops) << "N=" << n;
  }
}

TEST(Analytic, ReportInvariants) {
  for (auto m : kAllMethods) {
    for (std::uint64_t bytes : {4, 8}) {
      const auto r = analytic_footprint(inputs(1024, 8, 6, 32, bytes), m);
      EXPECT_EQ(r.total_elements, r.backbone_elements + r.loss_elements);
      EXPECT_EQ(r.bytes, r.total_elements * bytes);
      EXPECT_EQ(r.method, m);
    }
  }
}

TEST(Analytic, RejectsInvalidInputs) {
  EXPECT_THROW(analytic_footprint(inputs(0, 1, 1, 1), Method::Clip), DomainError);
  EXPECT_THROW(analytic_footprint(inputs(10, 3, 1, 1), Method::Clip), DomainError);
  EXPECT_THROW(analytic_footprint(inputs(8, 2, 0, 1), Method::Clip), DomainError);
  EXPECT_THROW(analytic_footprint(inputs(8, 2, 1, 1, 2), Method::Clip), DomainError);
  EXPECT_THROW(analytic_footprint(inputs(1ull << 40, 1, 1, 1 << 20), Method::Clip), DomainError);
}

TEST(Analytic, MethodNames) {
  EXPECT_STREQ(to_string(Method::Clip), "CLIP");
  EXPECT_STREQ(to_string(Method::Basic), "BASIC");
  EXPECT_STREQ(to_string(Method::Disco), "DisCo");
  EXPECT_STREQ(to_string(Method::DiscoStar), "DisCo*");
}

TEST(Savings, PublishedFractions) {
  EXPECT_EQ(savings_fraction(16), (Fraction{7, 8}));
  EXPECT_EQ(savings_fraction(64), (Fraction{31, 32}));
  EXPECT_EQ(savings_fraction(16).str(), "7/8");
  EXPECT_EQ(savings_fraction(64).str(), "31/32");
}

TEST(Savings, ClampsAtSmallWorlds) {
  EXPECT_EQ(savings_fraction(1), (Fraction{0, 1}));
  EXPECT_EQ(savings_fraction(2), (Fraction{0, 1}));
  EXPECT_EQ(savings_fraction(2).str(), "0");
  EXPECT_EQ(savings_fraction(4), (Fraction{1, 2}));
  EXPECT_EQ(savings_fraction(3), (Fraction{1, 3}));
  EXPECT_THROW(savings_fraction(0), DomainError);
}

TEST(Savings, MonotoneAndLowestTerms) {
  for (std::uint64_t n = 1; n < 512; ++n) {
    const auto a = savings_fraction(n);
    const auto b = savings_fraction(n + 1);
    // a ≤ b  ⇔  a.num·b.den ≤ b.num·a.den
    EXPECT_LE(a.numerator * b.denominator, b.numerator * a.denominator) << "N=" << n;
    if (n > 2) {
      // Cross-check 1 − 2/N against the reduced form.
      EXPECT_EQ(a.numerator * n, (n - 2) * a.denominator);
    }
  }
}

TEST(BytesMoved, GatherAndReduceCostTheSame) {
  EXPECT_EQ(bytes_moved(CollectiveKind::AllGather, 16 * 8, 4), 4u * 16 * 8);
  EXPECT_EQ(bytes_moved(CollectiveKind::AllReduce, 16 * 8, 4),
            bytes_moved(CollectiveKind::AllGather, 16 * 8, 4));
  EXPECT_EQ(bytes_moved(CollectiveKind::AllReduce, 37, 1), 37u);
  EXPECT_EQ(bytes_moved(CollectiveKind::Barrier, 37, 8), 0u);
  EXPECT_THROW(bytes_moved(CollectiveKind::AllGather, 1, 0), DomainError);
}

TEST(Measured, ShardedPeakAtPublishedExample) {
  MeasureSizes sizes;
  sizes.global_batch = 256;
  sizes.world_size = 4;
  const auto m = measured_footprint(RunMode::Disco, sizes);
  EXPECT_EQ(m.report.loss_elements, 32'768u);
  EXPECT_EQ(m.report.method, Method::Disco);
  ASSERT_EQ(m.ranks.size(), 4u);
  for (const auto& r : m.ranks) EXPECT_EQ(r.loss_peak_elements, 32'768u);
}

TEST(Measured, SingleRankShardedPeakIsTwoFullMatrices) {
  MeasureSizes sizes;
  sizes.global_batch = 256;
  sizes.world_size = 1;
  EXPECT_EQ(measured_footprint(RunMode::Disco, sizes).report.loss_elements, 2u * 256 * 256);
}

TEST(Measured, MatchesAnalyticForGrid) {
  for (std::uint64_t b : {64, 256}) {
    for (std::uint64_t n : {1, 2, 4, 8}) {
      for (std::uint64_t bytes : {4, 8}) {
        MeasureSizes sizes;
        sizes.global_batch = b;
        sizes.world_size = n;
        sizes.dim = 4;
        sizes.bytes_per_scalar = bytes;
        const auto in = inputs(b, n, 1, 4, bytes);
        const auto naive = measured_footprint(RunMode::Naive, sizes);
        const auto disco = measured_footprint(RunMode::Disco, sizes);
        EXPECT_EQ(naive.report.loss_elements, analytic_footprint(in, Method::Clip).loss_elements);
        EXPECT_EQ(disco.report.loss_elements, analytic_footprint(in, Method::Disco).loss_elements);
        // Counters record 2 FLOPs per multiply-add; the analytic model counts multiply-adds.
        EXPECT_EQ(naive.report.loss_flops, 2 * analytic_footprint(in, Method::Clip).loss_flops);
        EXPECT_EQ(disco.report.loss_flops, 2 * analytic_footprint(in, Method::Disco).loss_flops);
        EXPECT_EQ(naive.report.bytes, naive.report.loss_elements * bytes);
      }
    }
  }
}

TEST(Measured, PeakRatioAtEightRanks) {
  MeasureSizes sizes;
  sizes.global_batch = 256;
  sizes.world_size = 8;
  const auto naive = measured_footprint(RunMode::Naive, sizes);
  const auto disco = measured_footprint(RunMode::Disco, sizes);
  EXPECT_EQ(naive.report.loss_elements, 4 * disco.report.loss_elements);
  EXPECT_EQ(naive.report.loss_flops, 4 * disco.report.loss_flops);
}

TEST(Measured, RefusesOversizedBatches) {
  MeasureSizes sizes;
  sizes.global_batch = kMaxMeasuredBatch * 2;
  EXPECT_THROW(measured_footprint(RunMode::Naive, sizes), DomainError);
  sizes.global_batch = 10;
  sizes.world_size = 4;
  EXPECT_THROW(measured_footprint(RunMode::Disco, sizes), LayoutError);
}

}  // namespace
}  // namespace disco

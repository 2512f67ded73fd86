#pragma once

// Per-rank memory and FLOP accounting for the contrastive loss.
//
// Analytic formulas (elements, per rank):
//
//   method   backbone      loss      loss FLOPs (multiply-adds)
//   CLIP     (B/N)·L·D     B²        B²·D
//   BASIC    (B/N)·D       B²        B²·D
//   DisCo    (B/N)·L·D     2B²/N     2B²·D/N
//   DisCo*   (B/N)·D       2B²/N     2B²·D/N
//
// BASIC and DisCo* keep one layer's worth of activations by accumulating
// gradients over micro-batches. Measured footprints come from running the
// instrumented loss paths on simulated ranks.

#include <cstdint>
#include <string>
#include <vector>

#include "disco/collective.hpp"

namespace disco {

enum class Method { Clip, Basic, Disco, DiscoStar };

inline constexpr Method kAllMethods[] = {Method::Clip, Method::Basic, Method::Disco,
                                         Method::DiscoStar};

/// "CLIP", "BASIC", "DisCo", "DisCo*"
const char* to_string(Method method) noexcept;

struct CostInputs {
  std::uint64_t global_batch = 1;
  std::uint64_t world_size = 1;
  std::uint64_t layers = 1;
  std::uint64_t dim = 1;
  std::uint64_t bytes_per_scalar = 4;

  /// Throws DomainError unless every field is ≥ 1, N | B and
  /// bytes_per_scalar ∈ {4, 8}.
  void validate() const;
};

struct CostReport {
  Method method = Method::Clip;
  std::uint64_t global_batch = 0;
  std::uint64_t world_size = 0;
  std::uint64_t layers = 0;
  std::uint64_t dim = 0;
  std::uint64_t backbone_elements = 0;
  std::uint64_t loss_elements = 0;
  std::uint64_t total_elements = 0;
  std::uint64_t loss_flops = 0;
  std::uint64_t bytes = 0;

  bool operator==(const CostReport&) const = default;
};

/// Throws DomainError on invalid inputs or if a count overflows 64 bits.
CostReport analytic_footprint(const CostInputs& inputs, Method method);

struct Fraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  bool operator==(const Fraction&) const = default;
  std::string str() const;  // "7/8", "0"
  double value() const noexcept {
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
};

/// Share of loss-scope memory saved by the sharded loss, max(0, 1 − 2/N) in
/// lowest terms. Throws DomainError for N = 0.
Fraction savings_fraction(std::uint64_t world_size);

/// Elements received per rank: N × buffer for both collectives, since an
/// all_reduce is costed the same as an all_gather of the same buffer.
std::uint64_t bytes_moved(CollectiveKind collective, std::uint64_t buffer_elements,
                          std::uint64_t world_size);

enum class RunMode { Naive, Disco };

struct MeasureSizes {
  std::uint64_t global_batch = 256;
  std::uint64_t world_size = 1;
  std::uint64_t dim = 8;
  std::uint64_t bytes_per_scalar = 8;  // 4 runs in float, 8 in double
  std::uint64_t seed = 0;
  SchedulerMode scheduler = SchedulerMode::Lockstep;
};

/// Largest global batch measured_footprint will execute.
inline constexpr std::uint64_t kMaxMeasuredBatch = 4096;

struct RankMeasurement {
  std::uint64_t loss_peak_elements = 0;
  std::uint64_t similarity_flops = 0;
  std::uint64_t loss_flops = 0;  // every FLOP inside the loss scope
  std::uint64_t exchange_elements = 0;
};

struct MeasuredFootprint {
  /// method CLIP (naive) or DisCo; layers and backbone are 0, loss_elements
  /// is the max per-rank loss-scope peak and loss_flops the max per-rank
  /// similarity FLOPs (2 per multiply-add).
  CostReport report;
  std::vector<RankMeasurement> ranks;
};

/// Runs the replicated full-batch path (naive) or the sharded path (disco)
/// once on random unit-norm features. Throws DomainError for B above
/// kMaxMeasuredBatch, LayoutError if N ∤ B.
MeasuredFootprint measured_footprint(RunMode mode, const MeasureSizes& sizes);

}  // namespace disco

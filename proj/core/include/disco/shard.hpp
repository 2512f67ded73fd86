#pragma once

// Per-rank decomposition of the contrastive loss.
//
// Rank n owns rows [n·b, (n+1)·b) of the global batch. After gathering every
// rank's features it forms only two b×B similarity blocks,
//
//   logits_i = t · I_n · Tᵀ        logits_t = t · T_n · Iᵀ
//
// and back-propagates its local loss (CE(logits_i) + CE(logits_t)) / 2 into
// full B×D gradient buffers. Rows of slice n receive the intra-rank terms;
// every row (including slice n) also receives this rank's inter-rank terms
// through logits_t (for images) and logits_i (for texts). Averaging those
// buffers across ranks reconstructs the exact full-batch gradient.

#include <cstddef>
#include <vector>

#include "disco/collective.hpp"
#include "disco/full_loss.hpp"
#include "disco/matrix.hpp"
#include "disco/task.hpp"

namespace disco {

struct ShardLayout {
  std::size_t world_size = 1;
  std::size_t global_batch = 0;
  std::size_t local_batch = 0;
  std::size_t rank = 0;

  /// Validates N ≥ 1, B mod N == 0, b ≥ 1 and 0 ≤ rank < N.
  static ShardLayout make(std::size_t global_batch, std::size_t world_size, std::size_t rank);

  std::size_t first_row() const noexcept { return rank * local_batch; }
};

template <typename T>
BasicMatrix<T> shard_slice(const ShardLayout& layout, const BasicMatrix<T>& full);

/// [n·b, n·b + 1, …, n·b + b − 1]
std::vector<std::size_t> local_labels(const ShardLayout& layout);

template <typename T>
struct LocalGradContribution {
  BasicMatrix<T> d_image_full;
  BasicMatrix<T> d_text_full;
  T local_loss = 0;
};

/// Test hooks that corrupt the decomposition on purpose.
struct FaultInjection {
  /// Negates this rank's contributions to rows outside its own slice.
  bool flip_inter_rank_sign = false;
};

template <typename T>
LocalGradContribution<T> local_loss_and_grads(const ShardLayout& layout,
                                              const BasicMatrix<T>& image_gathered,
                                              const BasicMatrix<T>& text_gathered, T temperature,
                                              LossScopeStats* stats = nullptr,
                                              FaultInjection faults = {});

template <typename T>
struct DiscoStepResult {
  BasicMatrix<T> d_image_local;
  BasicMatrix<T> d_text_local;
  T global_loss = 0;
};

struct DiscoStepOptions {
  LossScopeStats* stats = nullptr;
  FaultInjection faults;
};

/// One distributed loss step on this rank: gather both feature sets, compute
/// the local contribution, AVG-reduce both B×D gradient buffers and the loss,
/// and return this rank's b×D gradient slices with the averaged loss.
template <typename T>
Task<DiscoStepResult<T>> disco_step(RankEndpoint& endpoint, BasicMatrix<T> local_image,
                                    BasicMatrix<T> local_text, T temperature,
                                    DiscoStepOptions options = {});

/// Distributed baseline: every rank gathers the batch, runs the full-batch
/// reference on it and keeps its own slice of the gradients.
template <typename T>
Task<DiscoStepResult<T>> replicated_step(RankEndpoint& endpoint, BasicMatrix<T> local_image,
                                         BasicMatrix<T> local_text, T temperature,
                                         LossScopeStats* stats = nullptr);

}  // namespace disco

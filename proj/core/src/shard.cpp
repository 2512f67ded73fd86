#include "disco/shard.hpp"

#include <string>

#include "disco/dense.hpp"

namespace disco {

ShardLayout ShardLayout::make(std::size_t global_batch, std::size_t world_size, std::size_t rank) {
  if (world_size == 0) throw LayoutError("world size must be >= 1");
  if (global_batch == 0 || global_batch % world_size != 0) {
    throw LayoutError("global batch B=" + std::to_string(global_batch) +
                      " is not a positive multiple of world size N=" +
                      std::to_string(world_size));
  }
  if (rank >= world_size) {
    throw LayoutError("rank " + std::to_string(rank) + " outside [0, " +
                      std::to_string(world_size) + ")");
  }
  return {world_size, global_batch, global_batch / world_size, rank};
}

template <typename T>
BasicMatrix<T> shard_slice(const ShardLayout& layout, const BasicMatrix<T>& full) {
  if (full.rows() != layout.global_batch) {
    throw LayoutError("layout expects B=" + std::to_string(layout.global_batch) +
                      " rows, matrix has " + std::to_string(full.rows()));
  }
  return slice_rows(full, layout.first_row(), layout.local_batch);
}

std::vector<std::size_t> local_labels(const ShardLayout& layout) {
  std::vector<std::size_t> labels(layout.local_batch);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i + layout.local_batch * layout.rank;
  return labels;
}

template <typename T>
LocalGradContribution<T> local_loss_and_grads(const ShardLayout& layout,
                                              const BasicMatrix<T>& image_gathered,
                                              const BasicMatrix<T>& text_gathered, T temperature,
                                              LossScopeStats* stats, FaultInjection faults) {
  if (image_gathered.rows() != layout.global_batch ||
      text_gathered.rows() != layout.global_batch ||
      image_gathered.cols() != text_gathered.cols()) {
    throw ShapeError("gathered features " +
                     shape_string(image_gathered.rows(), image_gathered.cols()) + " / " +
                     shape_string(text_gathered.rows(), text_gathered.cols()) +
                     " do not match layout B=" + std::to_string(layout.global_batch));
  }
  if (!(temperature > 0)) throw DomainError("temperature must be positive");

  const std::size_t first = layout.first_row();
  const std::size_t b = layout.local_batch;
  const auto labels = local_labels(layout);
  const auto image_local = image_gathered.view().row_block(first, b);
  const auto text_local = text_gathered.view().row_block(first, b);

  LocalGradContribution<T> out{BasicMatrix<T>(layout.global_batch, image_gathered.cols()),
                               BasicMatrix<T>(layout.global_batch, text_gathered.cols()), T(0)};

  InstrumentScope scope;
  {
    auto logits_i = matmul(image_local, text_gathered, Transpose::Yes);
    auto logits_t = matmul(text_local, image_gathered, Transpose::Yes);
    const auto similarity_flops = scope.snapshot().flops_accumulated;
    for (auto& v : logits_i.values()) v *= temperature;
    for (auto& v : logits_t.values()) v *= temperature;

    // Both buffers become their ½-scaled logit gradients.
    const T loss_i = softmax_ce_inplace(logits_i.mutable_view(), labels, T(0.5));
    const T loss_t = softmax_ce_inplace(logits_t.mutable_view(), labels, T(0.5));
    out.local_loss = (loss_i + loss_t) / 2;

    auto d_image = out.d_image_full.mutable_view();
    auto d_text = out.d_text_full.mutable_view();
    // Intra-rank terms: only this rank's rows depend on I_n through logits_i.
    gemm_accumulate(d_image.row_block(first, b), temperature, logits_i, text_gathered);
    gemm_accumulate(d_text.row_block(first, b), temperature, logits_t, image_gathered);
    // Inter-rank terms: logits_t depends on every image row and logits_i on
    // every text row, so these land in all B rows of the buffers.
    gemm_accumulate(d_image, temperature, logits_t.t(), text_local);
    gemm_accumulate(d_text, temperature, logits_i.t(), image_local);

    if (stats != nullptr) stats->similarity_flops = similarity_flops;
  }
  if (stats != nullptr) {
    stats->loss_scope = scope.snapshot();
    stats->exchange_elements = image_gathered.size() + text_gathered.size() +
                               out.d_image_full.size() + out.d_text_full.size();
  }

  if (faults.flip_inter_rank_sign) {
    for (auto* buffer : {&out.d_image_full, &out.d_text_full}) {
      for (std::size_t r = 0; r < buffer->rows(); ++r) {
        if (r >= first && r < first + b) continue;
        for (auto& v : buffer->row(r)) v = -v;
      }
    }
  }
  return out;
}

template <typename T>
Task<DiscoStepResult<T>> disco_step(RankEndpoint& endpoint, BasicMatrix<T> local_image,
                                    BasicMatrix<T> local_text, T temperature,
                                    DiscoStepOptions options) {
  if (local_image.rows() != local_text.rows() || local_image.cols() != local_text.cols()) {
    throw ShapeError("local image " + shape_string(local_image.rows(), local_image.cols()) +
                     " and text " + shape_string(local_text.rows(), local_text.cols()) +
                     " features differ in shape");
  }
  const auto world = static_cast<std::size_t>(endpoint.world_size());
  const auto layout = ShardLayout::make(local_image.rows() * world, world,
                                        static_cast<std::size_t>(endpoint.rank()));

  const BasicMatrix<T> image_all = co_await endpoint.all_gather(local_image);
  const BasicMatrix<T> text_all = co_await endpoint.all_gather(local_text);

  auto contribution = local_loss_and_grads(layout, image_all, text_all, temperature,
                                           options.stats, options.faults);

  const BasicMatrix<T> d_image = co_await endpoint.all_reduce(contribution.d_image_full, ReduceOp::Avg);
  const BasicMatrix<T> d_text = co_await endpoint.all_reduce(contribution.d_text_full, ReduceOp::Avg);
  const T loss = co_await endpoint.all_reduce_scalar(contribution.local_loss, ReduceOp::Avg);

  DiscoStepResult<T> result;
  result.d_image_local = slice_rows(d_image, layout.first_row(), layout.local_batch);
  result.d_text_local = slice_rows(d_text, layout.first_row(), layout.local_batch);
  result.global_loss = loss;
  co_return result;
}

template <typename T>
Task<DiscoStepResult<T>> replicated_step(RankEndpoint& endpoint, BasicMatrix<T> local_image,
                                         BasicMatrix<T> local_text, T temperature,
                                         LossScopeStats* stats) {
  const auto world = static_cast<std::size_t>(endpoint.world_size());
  const auto layout = ShardLayout::make(local_image.rows() * world, world,
                                        static_cast<std::size_t>(endpoint.rank()));

  const BasicMatrix<T> image_all = co_await endpoint.all_gather(local_image);
  const BasicMatrix<T> text_all = co_await endpoint.all_gather(local_text);
  auto full = clip_grad_full(image_all, text_all, temperature, stats);

  DiscoStepResult<T> result;
  result.d_image_local = slice_rows(full.d_image, layout.first_row(), layout.local_batch);
  result.d_text_local = slice_rows(full.d_text, layout.first_row(), layout.local_batch);
  result.global_loss = full.loss.total;
  co_return result;
}

#define DISCO_INSTANTIATE_SHARD(T)                                                              \
  template BasicMatrix<T> shard_slice<T>(const ShardLayout&, const BasicMatrix<T>&);            \
  template LocalGradContribution<T> local_loss_and_grads<T>(                                    \
      const ShardLayout&, const BasicMatrix<T>&, const BasicMatrix<T>&, T, LossScopeStats*,     \
      FaultInjection);                                                                          \
  template Task<DiscoStepResult<T>> disco_step<T>(RankEndpoint&, BasicMatrix<T>,                \
                                                  BasicMatrix<T>, T, DiscoStepOptions);         \
  template Task<DiscoStepResult<T>> replicated_step<T>(RankEndpoint&, BasicMatrix<T>,           \
                                                       BasicMatrix<T>, T, LossScopeStats*);

DISCO_INSTANTIATE_SHARD(float)
DISCO_INSTANTIATE_SHARD(double)

#undef DISCO_INSTANTIATE_SHARD

}  // namespace disco

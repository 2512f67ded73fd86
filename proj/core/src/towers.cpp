#include "disco/towers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "disco/dense.hpp"
#include "disco/shard.hpp"

namespace disco {

namespace {

void fill_normal(DenseMatrix& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : m.values()) v = dist(rng);
}

const DenseMatrix& tower(const TowerParams& params, Modality which) {
  return which == Modality::Image ? params.w_image : params.w_text;
}

DenseMatrix take_rows(const DenseMatrix& source, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = source.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void require_finite_step(const DenseMatrix& m, const char* what, std::size_t step) {
  if (!m.all_finite()) {
    throw TrainingDivergenceError(std::string(what) + " became non-finite at step " +
                                      std::to_string(step),
                                  step);
  }
}

void require_finite_loss(double loss, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw TrainingDivergenceError("loss became non-finite at step " + std::to_string(step), step);
  }
}

void gradient_descent(TowerParams& params, const DenseMatrix& d_image, const DenseMatrix& d_text,
                      double learning_rate) {
  axpy(params.w_image.mutable_view(), -learning_rate, d_image);
  axpy(params.w_text.mutable_view(), -learning_rate, d_text);
}

struct RankTrainOutput {
  std::vector<TrajectoryPoint> trajectory;
  TowerParams params;
};

// One rank of the data-parallel trainer. Every rank keeps a full copy of the
// towers and applies the same summed parameter gradient, so the replicas stay
// bitwise identical.
Task<RankTrainOutput> disco_rank_program(RankEndpoint& endpoint, const TrainConfig& config,
                                         const PairedDataset& dataset,
                                         const std::vector<std::size_t>& order,
                                         TowerParams params) {
  const auto layout = ShardLayout::make(config.global_batch, config.world_size,
                                        static_cast<std::size_t>(endpoint.rank()));
  RankTrainOutput out;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = batch_indices(order, step, config.global_batch);
    const auto mine = std::span<const std::size_t>(batch).subspan(layout.first_row(),
                                                                  layout.local_batch);
    const auto image_x = take_rows(dataset.image_inputs, mine);
    const auto text_x = take_rows(dataset.text_inputs, mine);

    try {
      auto image_f = encode(params, image_x, Modality::Image);
      auto text_f = encode(params, text_x, Modality::Text);
      auto feature_grads = co_await disco_step<double>(endpoint, image_f.features(),
                                                       text_f.features(), params.temperature);
      require_finite_loss(feature_grads.global_loss, step);
      if (endpoint.rank() == 0) out.trajectory.push_back({step, feature_grads.global_loss});

      const auto d_image_local =
          encode_backward(params, image_x, Modality::Image, feature_grads.d_image_local);
      const auto d_text_local =
          encode_backward(params, text_x, Modality::Text, feature_grads.d_text_local);
      // Each rank holds the exact global gradient for its own rows only, so
      // the per-rank parameter gradients are partial sums of the full one.
      const DenseMatrix d_image = co_await endpoint.all_reduce(d_image_local, ReduceOp::Sum);
      const DenseMatrix d_text = co_await endpoint.all_reduce(d_text_local, ReduceOp::Sum);
      require_finite_step(d_image, "image tower gradient", step);
      require_finite_step(d_text, "text tower gradient", step);
      gradient_descent(params, d_image, d_text, config.learning_rate);
    } catch (const NonFiniteError& e) {
      throw TrainingDivergenceError(std::string(e.what()) + " at step " + std::to_string(step),
                                    step);
    }
  }
  out.params = std::move(params);
  co_return out;
}

}  // namespace

void TowerParams::validate() const {
  if (w_image.rows() != w_text.rows() || w_image.cols() != w_text.cols()) {
    throw ShapeError("tower shapes differ: image " + shape_string(w_image.rows(), w_image.cols()) +
                     ", text " + shape_string(w_text.rows(), w_text.cols()));
  }
  if (w_image.size() == 0) throw ShapeError("towers must be at least 1x1");
  if (!w_image.all_finite() || !w_text.all_finite()) {
    throw DomainError("tower weights must be finite");
  }
  if (!(temperature > 0) || !std::isfinite(temperature)) {
    throw DomainError("temperature must be positive and finite");
  }
}

TowerParams init_params(std::size_t input_dim, std::size_t feature_dim, std::uint64_t seed,
                        double temperature) {
  if (input_dim == 0 || feature_dim == 0) throw DomainError("tower dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  TowerParams params{DenseMatrix(input_dim, feature_dim), DenseMatrix(input_dim, feature_dim),
                     temperature};
  const double stddev = 1.0 / std::sqrt(static_cast<double>(input_dim));
  fill_normal(params.w_image, rng, stddev);
  fill_normal(params.w_text, rng, stddev);
  params.validate();
  return params;
}

PairedDataset generate_dataset(std::size_t size, std::size_t input_dim, std::size_t latent_dim,
                               double noise_scale, std::uint64_t seed, DatasetOptions options) {
  if (size == 0 || input_dim == 0 || latent_dim == 0) {
    throw DomainError("dataset dimensions must be >= 1");
  }
  if (!(noise_scale >= 0) || !std::isfinite(noise_scale)) {
    throw DomainError("noise scale must be finite and >= 0");
  }
  std::mt19937_64 rng(seed);
  const double mix_std = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  DenseMatrix mix_image(input_dim, latent_dim);
  DenseMatrix mix_text(input_dim, latent_dim);
  fill_normal(mix_image, rng, mix_std);
  if (options.shared_mixing) {
    mix_text = mix_image;
  } else {
    fill_normal(mix_text, rng, mix_std);
  }

  PairedDataset data{DenseMatrix(size, input_dim), DenseMatrix(size, input_dim), seed};
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> z(latent_dim);
  for (std::size_t i = 0; i < size; ++i) {
    for (auto& v : z) v = unit(rng);
    for (std::size_t r = 0; r < input_dim; ++r) {
      double a = 0;
      double c = 0;
      for (std::size_t k = 0; k < latent_dim; ++k) {
        a += mix_image(r, k) * z[k];
        c += mix_text(r, k) * z[k];
      }
      data.image_inputs(i, r) = a;
      data.text_inputs(i, r) = c;
    }
    if (noise_scale > 0) {
      for (auto& v : data.image_inputs.row(i)) v += noise_scale * unit(rng);
      for (auto& v : data.text_inputs.row(i)) v += noise_scale * unit(rng);
    }
  }
  return data;
}

DenseMatrix project(const TowerParams& params, const DenseMatrix& inputs, Modality which) {
  const auto& w = tower(params, which);
  if (inputs.cols() != w.rows()) {
    throw ShapeError("inputs " + shape_string(inputs.rows(), inputs.cols()) +
                     " do not match tower " + shape_string(w.rows(), w.cols()));
  }
  return matmul(inputs, w);
}

FeatureBatch<double> encode(const TowerParams& params, const DenseMatrix& inputs,
                            Modality which) {
  return FeatureBatch<double>(l2_normalize_rows(project(params, inputs, which)), which);
}

DenseMatrix encode_backward(const TowerParams& params, const DenseMatrix& inputs, Modality which,
                            const DenseMatrix& upstream) {
  const auto pre = project(params, inputs, which);
  const auto d_pre = l2_normalize_rows_backward(pre, upstream);
  return matmul(inputs.t(), d_pre);
}

ParamGrads naive_param_grads(const TowerParams& params, const DenseMatrix& image_inputs,
                             const DenseMatrix& text_inputs) {
  const auto image_f = encode(params, image_inputs, Modality::Image);
  const auto text_f = encode(params, text_inputs, Modality::Text);
  const auto grads = clip_grad_full(image_f, text_f, params.temperature);
  return {encode_backward(params, image_inputs, Modality::Image, grads.d_image),
          encode_backward(params, text_inputs, Modality::Text, grads.d_text), grads.loss.total};
}

const char* to_string(TrainMode mode) noexcept {
  return mode == TrainMode::Naive ? "naive" : "disco";
}

void TrainConfig::validate(std::size_t dataset_size) const {
  // Shape checks only; the rank index is irrelevant here.
  (void)ShardLayout::make(global_batch, world_size, 0);
  if (global_batch > dataset_size) {
    throw LayoutError("global batch B=" + std::to_string(global_batch) +
                      " exceeds dataset size " + std::to_string(dataset_size));
  }
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw DomainError("learning rate must be finite and >= 0");
  }
}

std::vector<std::size_t> batch_order(std::size_t dataset_size, std::uint64_t seed) {
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& order, std::size_t step,
                                       std::size_t global_batch) {
  if (order.empty()) throw DomainError("empty batch order");
  std::vector<std::size_t> rows(global_batch);
  const std::size_t start = (step * global_batch) % order.size();
  for (std::size_t i = 0; i < global_batch; ++i) rows[i] = order[(start + i) % order.size()];
  return rows;
}

TrainResult train_run(const TrainConfig& config, const PairedDataset& dataset,
                      const TowerParams& initial) {
  config.validate(dataset.size());
  initial.validate();
  if (dataset.input_dim() != initial.input_dim()) {
    throw ShapeError("dataset input dim " + std::to_string(dataset.input_dim()) +
                     " does not match towers " + std::to_string(initial.input_dim()));
  }
  const auto order = batch_order(dataset.size(), config.seed);

  if (config.mode == TrainMode::Disco) {
    RunOptions options;
    options.group.mode = config.scheduler;
    auto outputs = run_ranks(
        static_cast<int>(config.world_size),
        [&](RankEndpoint& endpoint) {
          return disco_rank_program(endpoint, config, dataset, order, initial);
        },
        options);
    return {std::move(outputs.front().trajectory), std::move(outputs.front().params)};
  }

  TrainResult result{{}, initial};
  result.trajectory.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = batch_indices(order, step, config.global_batch);
    const auto image_x = take_rows(dataset.image_inputs, batch);
    const auto text_x = take_rows(dataset.text_inputs, batch);
    try {
      const auto grads = naive_param_grads(result.final_params, image_x, text_x);
      require_finite_loss(grads.loss, step);
      require_finite_step(grads.d_image, "image tower gradient", step);
      require_finite_step(grads.d_text, "text tower gradient", step);
      result.trajectory.push_back({step, grads.loss});
      gradient_descent(result.final_params, grads.d_image, grads.d_text, config.learning_rate);
    } catch (const NonFiniteError& e) {
      throw TrainingDivergenceError(std::string(e.what()) + " at step " + std::to_string(step),
                                    step);
    }
  }
  return result;
}

}  // namespace disco

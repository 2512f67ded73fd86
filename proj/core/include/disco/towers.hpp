#pragma once

// Linear two-tower encoders on synthetic paired data, and a plain
// gradient-descent trainer that can compute feature gradients either with
// the full-batch reference or with the sharded step on simulated ranks.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "disco/collective.hpp"
#include "disco/full_loss.hpp"
#include "disco/matrix.hpp"

namespace disco {

inline constexpr double kDefaultTemperature = 20.0;

struct TowerParams {
  DenseMatrix w_image;  // D_in×D
  DenseMatrix w_text;   // D_in×D
  double temperature = kDefaultTemperature;

  /// Throws DomainError on non-finite weights or t ≤ 0, ShapeError on
  /// mismatched tower shapes.
  void validate() const;
  std::size_t input_dim() const noexcept { return w_image.rows(); }
  std::size_t feature_dim() const noexcept { return w_image.cols(); }
};

/// Small seeded N(0, 1/D_in) initialisation of both towers.
TowerParams init_params(std::size_t input_dim, std::size_t feature_dim, std::uint64_t seed,
                        double temperature = kDefaultTemperature);

struct PairedDataset {
  DenseMatrix image_inputs;  // M×D_in
  DenseMatrix text_inputs;   // M×D_in
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return image_inputs.rows(); }
  std::size_t input_dim() const noexcept { return image_inputs.cols(); }
};

struct DatasetOptions {
  /// Use the image mixing matrix for the text side too.
  bool shared_mixing = false;
};

/// image_i = A·z_i + ε, text_i = C·z_i + ε′ with z_i ~ N(0, I) and seeded
/// mixing matrices A, C (D_in×latent_dim) and noise ε ~ N(0, noise_scale²).
PairedDataset generate_dataset(std::size_t size, std::size_t input_dim, std::size_t latent_dim,
                               double noise_scale, std::uint64_t seed, DatasetOptions options = {});

/// Pre-normalization projection inputs·W.
DenseMatrix project(const TowerParams& params, const DenseMatrix& inputs, Modality which);

/// l2_normalize_rows(inputs·W).
FeatureBatch<double> encode(const TowerParams& params, const DenseMatrix& inputs,
                            Modality which);

/// Gradient of the loss w.r.t. W given the gradient w.r.t. the normalized
/// features: Xᵀ · normalize_backward(X·W, upstream).
DenseMatrix encode_backward(const TowerParams& params, const DenseMatrix& inputs, Modality which,
                            const DenseMatrix& upstream);

struct ParamGrads {
  DenseMatrix d_image;
  DenseMatrix d_text;
  double loss = 0;
};

/// Full-batch loss and parameter gradients on one batch of pairs.
ParamGrads naive_param_grads(const TowerParams& params, const DenseMatrix& image_inputs,
                             const DenseMatrix& text_inputs);

enum class TrainMode { Naive, Disco };

const char* to_string(TrainMode mode) noexcept;

struct TrainConfig {
  std::size_t global_batch = 16;
  std::size_t world_size = 1;
  std::size_t steps = 50;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Naive;
  SchedulerMode scheduler = SchedulerMode::Lockstep;

  /// Throws LayoutError on B mod N ≠ 0 or B > dataset size, DomainError on a
  /// negative or non-finite learning rate.
  void validate(std::size_t dataset_size) const;
};

struct TrajectoryPoint {
  std::size_t step = 0;
  double loss = 0;
};

struct TrainResult {
  std::vector<TrajectoryPoint> trajectory;
  TowerParams final_params;
};

/// Order in which the dataset is consumed: one seeded shuffle, then
/// sequential B-row slices (wrapping around at the end).
std::vector<std::size_t> batch_order(std::size_t dataset_size, std::uint64_t seed);

/// Step k uses rows order[(k·B + i) mod M] for i in [0, B).
std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& order, std::size_t step,
                                       std::size_t global_batch);

/// Runs `config.steps` steps of gradient descent from `initial`. The loss
/// recorded for step k is the loss of the parameters before update k.
/// Throws TrainingDivergenceError if the loss or any gradient turns non-finite.
TrainResult train_run(const TrainConfig& config, const PairedDataset& dataset,
                      const TowerParams& initial);

}  // namespace disco

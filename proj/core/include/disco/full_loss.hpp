#pragma once

// Single-worker reference for the bidirectional image/text contrastive loss
// and its closed-form feature gradients.
//
//   S  = t · I · Tᵀ                    (B×B, the only B×B buffer)
//   L₁ = CE(S,  diag),  L₂ = CE(Sᵀ, diag)   (Sᵀ read through a transposed view)
//   L  = (L₁ + L₂) / 2
//
// Gradients are with respect to the (already normalized) features.

#include <cstdint>
#include <functional>

#include "disco/matrix.hpp"

namespace disco {

enum class Modality { Image, Text };

/// B×D features with unit-norm rows (±1e-9 in f64, ±1e-5 in f32).
template <typename T>
class FeatureBatch {
 public:
  FeatureBatch(BasicMatrix<T> features, Modality modality);

  const BasicMatrix<T>& features() const noexcept { return features_; }
  Modality modality() const noexcept { return modality_; }
  std::size_t batch() const noexcept { return features_.rows(); }
  std::size_t dim() const noexcept { return features_.cols(); }

 private:
  BasicMatrix<T> features_;
  Modality modality_;
};

template <typename T>
struct LossBreakdown {
  T total = 0;
  T image_to_text = 0;
  T text_to_image = 0;
  T temperature = 1;
};

template <typename T>
struct GradPair {
  BasicMatrix<T> d_image;
  BasicMatrix<T> d_text;
  LossBreakdown<T> loss;
};

/// What the instrumented loss paths measured. `loss_scope` covers only the
/// similarity/logit-gradient buffers; `similarity_flops` only the matmuls
/// that form the similarity matrices; `exchange_elements` sums the feature
/// and B×D gradient buffers the path holds alongside.
struct LossScopeStats {
  InstrumentCounters loss_scope;
  std::uint64_t similarity_flops = 0;
  std::uint64_t exchange_elements = 0;
};

template <typename T>
LossBreakdown<T> clip_loss_full(const BasicMatrix<T>& image, const BasicMatrix<T>& text,
                                T temperature);

template <typename T>
LossBreakdown<T> clip_loss_full(const FeatureBatch<T>& image, const FeatureBatch<T>& text,
                                T temperature) {
  return clip_loss_full(image.features(), text.features(), temperature);
}

/// Loss and both feature gradients. The logits buffer is rewritten in place
/// into G₁ + G₂ᵀ, so the loss scope peaks at exactly B² elements:
///   d_image = t · (G₁ + G₂ᵀ) · T,   d_text = t · (G₁ + G₂ᵀ)ᵀ · I
/// with G₁, G₂ the (½-scaled) softmax-CE gradients of S and Sᵀ.
template <typename T>
GradPair<T> clip_grad_full(const BasicMatrix<T>& image, const BasicMatrix<T>& text,
                           T temperature, LossScopeStats* stats = nullptr);

template <typename T>
GradPair<T> clip_grad_full(const FeatureBatch<T>& image, const FeatureBatch<T>& text,
                           T temperature, LossScopeStats* stats = nullptr) {
  return clip_grad_full(image.features(), text.features(), temperature, stats);
}

/// Central differences (f(x + h·e) − f(x − h·e)) / 2h for every coordinate.
DenseMatrix finite_diff_grad(const std::function<double(const DenseMatrix&)>& loss_fn,
                             const DenseMatrix& point, double step);

}  // namespace disco

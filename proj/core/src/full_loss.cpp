#include "disco/full_loss.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "disco/dense.hpp"

namespace disco {

namespace {

template <typename T>
constexpr double unit_norm_tolerance() {
  return sizeof(T) >= sizeof(double) ? 1e-9 : 1e-5;
}

template <typename T>
void check_pair(const BasicMatrix<T>& image, const BasicMatrix<T>& text, T temperature) {
  if (image.rows() != text.rows() || image.cols() != text.cols()) {
    throw ShapeError("image features " + shape_string(image.rows(), image.cols()) +
                     " and text features " + shape_string(text.rows(), text.cols()) +
                     " must have the same shape");
  }
  if (image.rows() == 0 || image.cols() == 0) throw ShapeError("empty feature batch");
  if (!(temperature > 0)) {
    throw DomainError("temperature must be positive, got " +
                      std::to_string(static_cast<double>(temperature)));
  }
}

std::vector<std::size_t> diagonal_labels(std::size_t n) {
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  return labels;
}

template <typename T>
void scale_in_place(BasicMatrix<T>& m, T alpha) {
  for (auto& v : m.values()) v *= alpha;
}

}  // namespace

template <typename T>
FeatureBatch<T>::FeatureBatch(BasicMatrix<T> features, Modality modality)
    : features_(std::move(features)), modality_(modality) {
  if (features_.rows() == 0 || features_.cols() == 0) {
    throw ShapeError("feature batch must be at least 1x1, got " +
                     shape_string(features_.rows(), features_.cols()));
  }
  for (std::size_t r = 0; r < features_.rows(); ++r) {
    double sq = 0;
    for (T v : features_.row(r)) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (!(std::abs(norm - 1.0) <= unit_norm_tolerance<T>())) {
      throw DomainError("feature row " + std::to_string(r) + " has norm " +
                        std::to_string(norm) + ", expected unit norm");
    }
  }
}

template <typename T>
LossBreakdown<T> clip_loss_full(const BasicMatrix<T>& image, const BasicMatrix<T>& text,
                                T temperature) {
  check_pair(image, text, temperature);
  const auto labels = diagonal_labels(image.rows());
  auto logits = matmul(image, text, Transpose::Yes);
  scale_in_place(logits, temperature);

  LossBreakdown<T> out;
  out.temperature = temperature;
  out.image_to_text = cross_entropy_mean(logits, labels);
  out.text_to_image = cross_entropy_mean(logits.t(), labels);
  out.total = (out.image_to_text + out.text_to_image) / 2;
  return out;
}

template <typename T>
GradPair<T> clip_grad_full(const BasicMatrix<T>& image, const BasicMatrix<T>& text,
                           T temperature, LossScopeStats* stats) {
  check_pair(image, text, temperature);
  const std::size_t batch = image.rows();
  const auto labels = diagonal_labels(batch);

  GradPair<T> out{BasicMatrix<T>(batch, image.cols()), BasicMatrix<T>(batch, text.cols()), {}};
  out.loss.temperature = temperature;

  InstrumentScope scope;
  {
    auto logits = matmul(image, text, Transpose::Yes);
    const auto similarity_flops = scope.snapshot().flops_accumulated;
    scale_in_place(logits, temperature);

    out.loss.image_to_text = cross_entropy_mean(logits, labels);
    out.loss.text_to_image = cross_entropy_mean(logits.t(), labels);
    out.loss.total = (out.loss.image_to_text + out.loss.text_to_image) / 2;

    const auto row_lse = row_logsumexp(logits);
    const auto col_lse = row_logsumexp(logits.t());

    // Overwrite S with G₁ + G₂ᵀ; each half carries the ½ of the loss average.
    const T per_row = T(1) / (T(2) * static_cast<T>(batch));
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < batch; ++j) {
        const T s = logits(i, j);
        logits(i, j) = per_row * std::exp(s - row_lse[i]) + per_row * std::exp(s - col_lse[j]);
      }
      logits(i, i) -= per_row + per_row;
    }
    logits.require_finite("contrastive logit gradient");

    gemm_accumulate(out.d_image.mutable_view(), temperature, logits, text);
    gemm_accumulate(out.d_text.mutable_view(), temperature, logits.t(), image);

    if (stats != nullptr) stats->similarity_flops = similarity_flops;
  }
  if (stats != nullptr) {
    stats->loss_scope = scope.snapshot();
    stats->exchange_elements = image.size() + text.size() + out.d_image.size() + out.d_text.size();
  }
  return out;
}

DenseMatrix finite_diff_grad(const std::function<double(const DenseMatrix&)>& loss_fn,
                             const DenseMatrix& point, double step) {
  if (!(step > 0)) throw DomainError("finite-difference step must be positive");
  DenseMatrix grad(point.rows(), point.cols());
  DenseMatrix probe(point);
  for (std::size_t r = 0; r < point.rows(); ++r) {
    for (std::size_t c = 0; c < point.cols(); ++c) {
      const double x = point(r, c);
      probe(r, c) = x + step;
      const double up = loss_fn(probe);
      probe(r, c) = x - step;
      const double down = loss_fn(probe);
      probe(r, c) = x;
      grad(r, c) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

template class FeatureBatch<float>;
template class FeatureBatch<double>;
template LossBreakdown<float> clip_loss_full(const BasicMatrix<float>&, const BasicMatrix<float>&,
                                             float);
template LossBreakdown<double> clip_loss_full(const BasicMatrix<double>&,
                                              const BasicMatrix<double>&, double);
template GradPair<float> clip_grad_full(const BasicMatrix<float>&, const BasicMatrix<float>&,
                                        float, LossScopeStats*);
template GradPair<double> clip_grad_full(const BasicMatrix<double>&, const BasicMatrix<double>&,
                                         double, LossScopeStats*);

}  // namespace disco

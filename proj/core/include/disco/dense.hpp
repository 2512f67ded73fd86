#pragma once

// Dense kernels with closed-form backward rules. Every kernel is a pure
// function of its inputs; matmul-family kernels report FLOPs to the active
// InstrumentScope and outputs are checked for finiteness in verification mode.
//
// The kernels live in `disco::kernels` and take views; the inline wrappers in
// `disco` accept matrices or views interchangeably.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "disco/matrix.hpp"

namespace disco {

enum class Transpose { No, Yes };

inline constexpr double kNormEpsilon = 1e-12;

namespace kernels {

template <typename T>
BasicMatrix<T> matmul(ConstMatrixView<T> a, ConstMatrixView<T> b, Transpose transpose_b);
template <typename T>
void gemm_accumulate(MatrixView<T> c, T alpha, ConstMatrixView<T> a, ConstMatrixView<T> b);
template <typename T>
BasicMatrix<T> row_softmax(ConstMatrixView<T> m);
template <typename T>
std::vector<T> row_logsumexp(ConstMatrixView<T> m);
template <typename T>
T cross_entropy_mean(ConstMatrixView<T> logits, std::span<const std::size_t> labels);
template <typename T>
BasicMatrix<T> softmax_ce_grad(ConstMatrixView<T> logits, std::span<const std::size_t> labels,
                               T scale);
template <typename T>
T softmax_ce_inplace(MatrixView<T> logits, std::span<const std::size_t> labels, T scale);
template <typename T>
BasicMatrix<T> l2_normalize_rows(ConstMatrixView<T> m, double epsilon);
template <typename T>
BasicMatrix<T> l2_normalize_rows_backward(ConstMatrixView<T> input, ConstMatrixView<T> upstream,
                                          double epsilon);
template <typename T>
BasicMatrix<T> scaled(ConstMatrixView<T> m, T alpha);
template <typename T>
BasicMatrix<T> add(ConstMatrixView<T> a, ConstMatrixView<T> b);
template <typename T>
void axpy(MatrixView<T> y, T alpha, ConstMatrixView<T> x);
template <typename T>
T max_abs(ConstMatrixView<T> m);
template <typename T>
T max_abs_diff(ConstMatrixView<T> a, ConstMatrixView<T> b);
template <typename T>
double relative_error(ConstMatrixView<T> actual, ConstMatrixView<T> expected);
template <typename T>
bool bitwise_equal(ConstMatrixView<T> a, ConstMatrixView<T> b);

}  // namespace kernels

/// a (m×k) times b (k×n), or times bᵀ when `transpose_b` is set. Adds 2·m·k·n FLOPs.
template <MatrixSource A, MatrixSource B>
BasicMatrix<scalar_of<A>> matmul(const A& a, const B& b, Transpose transpose_b = Transpose::No) {
  return kernels::matmul<scalar_of<A>>(as_view(a), as_view(b), transpose_b);
}

/// c += alpha · a · b through a view, allocating nothing. Each output element is
/// the k-ordered dot product, scaled once, then added. Adds 2·m·k·n FLOPs.
template <typename T, MatrixSource A, MatrixSource B>
void gemm_accumulate(MatrixView<T> c, T alpha, const A& a, const B& b) {
  kernels::gemm_accumulate<T>(c, alpha, as_view(a), as_view(b));
}

/// Row-wise softmax with per-row max subtraction.
template <MatrixSource M>
BasicMatrix<scalar_of<M>> row_softmax(const M& m) {
  return kernels::row_softmax<scalar_of<M>>(as_view(m));
}

/// log Σ_j exp(m_ij) per row, max-shifted.
template <MatrixSource M>
std::vector<scalar_of<M>> row_logsumexp(const M& m) {
  return kernels::row_logsumexp<scalar_of<M>>(as_view(m));
}

/// (1/m) Σ_i −log softmax(logits_i)[labels_i].
template <MatrixSource M>
scalar_of<M> cross_entropy_mean(const M& logits, std::span<const std::size_t> labels) {
  return kernels::cross_entropy_mean<scalar_of<M>>(as_view(logits), labels);
}

/// scale · (P − Y)/m where P = row_softmax(logits), Y = one-hot(labels).
/// This is scale · ∂cross_entropy_mean/∂logits. Y is never materialized.
template <MatrixSource M>
BasicMatrix<scalar_of<M>> softmax_ce_grad(const M& logits, std::span<const std::size_t> labels,
                                          scalar_of<M> scale = 1) {
  return kernels::softmax_ce_grad<scalar_of<M>>(as_view(logits), labels, scale);
}

/// Fused forward/backward reusing the logits buffer: returns the mean cross
/// entropy and overwrites `logits` with the scaled gradient.
template <typename T>
T softmax_ce_inplace(MatrixView<T> logits, std::span<const std::size_t> labels, T scale = 1) {
  return kernels::softmax_ce_inplace<T>(logits, labels, scale);
}

template <MatrixSource M>
BasicMatrix<scalar_of<M>> l2_normalize_rows(const M& m, double epsilon = kNormEpsilon) {
  return kernels::l2_normalize_rows<scalar_of<M>>(as_view(m), epsilon);
}

/// Backward of l2_normalize_rows at `input`: per row (g − (x̂·g)x̂)/‖x‖.
template <MatrixSource M, MatrixSource G>
BasicMatrix<scalar_of<M>> l2_normalize_rows_backward(const M& input, const G& upstream,
                                                     double epsilon = kNormEpsilon) {
  return kernels::l2_normalize_rows_backward<scalar_of<M>>(as_view(input), as_view(upstream),
                                                           epsilon);
}

template <MatrixSource M>
BasicMatrix<scalar_of<M>> scaled(const M& m, scalar_of<M> alpha) {
  return kernels::scaled<scalar_of<M>>(as_view(m), alpha);
}

template <MatrixSource A, MatrixSource B>
BasicMatrix<scalar_of<A>> add(const A& a, const B& b) {
  return kernels::add<scalar_of<A>>(as_view(a), as_view(b));
}

/// y += alpha · x
template <typename T, MatrixSource X>
void axpy(MatrixView<T> y, T alpha, const X& x) {
  kernels::axpy<T>(y, alpha, as_view(x));
}

template <MatrixSource M>
BasicMatrix<scalar_of<M>> slice_rows(const M& m, std::size_t first, std::size_t count) {
  return BasicMatrix<scalar_of<M>>(as_view(m).row_block(first, count));
}

template <typename T>
BasicMatrix<T> concat_rows(std::span<const BasicMatrix<T>> blocks) {
  if (blocks.empty()) return {};
  const std::size_t cols = blocks.front().cols();
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + std::to_string(b.cols()) + " vs " +
                       std::to_string(cols));
    }
    rows += b.rows();
  }
  BasicMatrix<T> out(rows, cols);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < b.rows(); ++r, ++at) {
      auto src = b.row(r);
      std::copy(src.begin(), src.end(), out.row(at).begin());
    }
  }
  return out;
}

template <MatrixSource M>
BasicMatrix<scalar_of<M>> transpose(const M& m) {
  return BasicMatrix<scalar_of<M>>(as_view(m).transposed());
}

template <MatrixSource M>
scalar_of<M> max_abs(const M& m) {
  return kernels::max_abs<scalar_of<M>>(as_view(m));
}

template <MatrixSource A, MatrixSource B>
scalar_of<A> max_abs_diff(const A& a, const B& b) {
  return kernels::max_abs_diff<scalar_of<A>>(as_view(a), as_view(b));
}

/// ‖actual − expected‖∞ / ‖expected‖∞; the plain absolute difference when
/// expected is identically zero.
template <MatrixSource A, MatrixSource B>
double relative_error(const A& actual, const B& expected) {
  return kernels::relative_error<scalar_of<A>>(as_view(actual), as_view(expected));
}

double relative_error(double actual, double expected);

/// Same shape and identical bit patterns in every entry.
template <MatrixSource A, MatrixSource B>
bool bitwise_equal(const A& a, const B& b) {
  return kernels::bitwise_equal<scalar_of<A>>(as_view(a), as_view(b));
}

/// Element-type conversion (e.g. f64 fixtures into f32 benchmark inputs).
template <typename To, MatrixSource M>
BasicMatrix<To> convert(const M& m) {
  auto v = as_view(m);
  BasicMatrix<To> out(v.rows, v.cols);
  for (std::size_t r = 0; r < v.rows; ++r)
    for (std::size_t c = 0; c < v.cols; ++c) out(r, c) = static_cast<To>(v(r, c));
  return out;
}

}  // namespace disco

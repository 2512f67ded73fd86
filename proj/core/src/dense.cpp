#include "disco/dense.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace disco {

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

double relative_error(double actual, double expected) {
  const double diff = std::abs(actual - expected);
  const double scale = std::abs(expected);
  return scale > 0.0 ? diff / scale : diff;
}

namespace kernels {

namespace {

template <typename T>
void require_same_shape(ConstMatrixView<T> a, ConstMatrixView<T> b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.rows, a.cols) +
                     " vs " + shape_string(b.rows, b.cols));
  }
}

template <typename T>
void require_finite_view(ConstMatrixView<T> m, const char* op) {
  if (!verification_mode()) return;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (!std::isfinite(m(r, c))) {
        throw NonFiniteError(std::string(op) + ": non-finite entry at (" + std::to_string(r) +
                             ", " + std::to_string(c) + ")");
      }
    }
  }
}

void check_labels(std::size_t rows, std::size_t cols, std::span<const std::size_t> labels) {
  if (labels.size() != rows) {
    throw ShapeError("expected " + std::to_string(rows) + " labels, got " +
                     std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= cols) {
      throw IndexError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(cols) + ")");
    }
  }
}

template <typename T>
T row_max(ConstMatrixView<T> m, std::size_t r) {
  T best = -std::numeric_limits<T>::infinity();
  for (std::size_t c = 0; c < m.cols; ++c) best = std::max(best, m(r, c));
  return best;
}

template <typename T>
T logsumexp_row(ConstMatrixView<T> m, std::size_t r) {
  const T shift = row_max(m, r);
  T sum = 0;
  for (std::size_t c = 0; c < m.cols; ++c) sum += std::exp(m(r, c) - shift);
  return shift + std::log(sum);
}

template <typename T>
T dot(ConstMatrixView<T> a, std::size_t i, ConstMatrixView<T> b, std::size_t j) {
  T acc = 0;
  for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
  return acc;
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul(ConstMatrixView<T> a, ConstMatrixView<T> b, Transpose transpose_b) {
  const ConstMatrixView<T> rhs = transpose_b == Transpose::Yes ? b.transposed() : b;
  if (a.cols != rhs.rows) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.rows, a.cols) +
                     " x " + shape_string(rhs.rows, rhs.cols));
  }
  BasicMatrix<T> out(a.rows, rhs.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < rhs.cols; ++j) out(i, j) = dot(a, i, rhs, j);
  record_flops(2ULL * a.rows * a.cols * rhs.cols);
  out.require_finite("matmul");
  return out;
}

template <typename T>
void gemm_accumulate(MatrixView<T> c, T alpha, ConstMatrixView<T> a, ConstMatrixView<T> b) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
    throw ShapeError("gemm_accumulate: " + shape_string(c.rows, c.cols) +
                     " += " + shape_string(a.rows, a.cols) + " x " +
                     shape_string(b.rows, b.cols));
  }
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += alpha * dot(a, i, b, j);
  record_flops(2ULL * a.rows * a.cols * b.cols);
  require_finite_view<T>(c, "gemm_accumulate");
}

template <typename T>
BasicMatrix<T> row_softmax(ConstMatrixView<T> m) {
  require_finite_view(m, "row_softmax input");
  BasicMatrix<T> out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const T shift = row_max(m, r);
    T sum = 0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      out(r, c) = std::exp(m(r, c) - shift);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) /= sum;
  }
  return out;
}

template <typename T>
std::vector<T> row_logsumexp(ConstMatrixView<T> m) {
  require_finite_view(m, "row_logsumexp input");
  std::vector<T> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = logsumexp_row(m, r);
  return out;
}

template <typename T>
T cross_entropy_mean(ConstMatrixView<T> logits, std::span<const std::size_t> labels) {
  check_labels(logits.rows, logits.cols, labels);
  require_finite_view(logits, "cross_entropy_mean input");
  T total = 0;
  for (std::size_t r = 0; r < logits.rows; ++r)
    total += logsumexp_row(logits, r) - logits(r, labels[r]);
  return total / static_cast<T>(logits.rows);
}

template <typename T>
BasicMatrix<T> softmax_ce_grad(ConstMatrixView<T> logits, std::span<const std::size_t> labels,
                               T scale) {
  check_labels(logits.rows, logits.cols, labels);
  BasicMatrix<T> out(logits);
  kernels::softmax_ce_inplace<T>(out.mutable_view(), labels, scale);
  return out;
}

template <typename T>
T softmax_ce_inplace(MatrixView<T> logits, std::span<const std::size_t> labels, T scale) {
  check_labels(logits.rows, logits.cols, labels);
  require_finite_view<T>(logits, "softmax_ce input");
  const T per_row = scale / static_cast<T>(logits.rows);
  T total = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const T lse = logsumexp_row<T>(logits, r);
    total += lse - logits(r, labels[r]);
    for (std::size_t c = 0; c < logits.cols; ++c)
      logits(r, c) = per_row * std::exp(logits(r, c) - lse);
    logits(r, labels[r]) -= per_row;
  }
  return total / static_cast<T>(logits.rows);
}

template <typename T>
BasicMatrix<T> l2_normalize_rows(ConstMatrixView<T> m, double epsilon) {
  BasicMatrix<T> out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    T sq = 0;
    for (std::size_t c = 0; c < m.cols; ++c) sq += m(r, c) * m(r, c);
    const T norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw NonFiniteError("row " + std::to_string(r) + " has non-finite norm in l2_normalize_rows");
    }
    if (!(norm >= static_cast<T>(epsilon))) {
      throw DegenerateInputError("row " + std::to_string(r) + " has norm " +
                                 std::to_string(static_cast<double>(norm)) +
                                 " below the normalization epsilon");
    }
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = m(r, c) / norm;
  }
  out.require_finite("l2_normalize_rows");
  return out;
}

template <typename T>
BasicMatrix<T> l2_normalize_rows_backward(ConstMatrixView<T> input, ConstMatrixView<T> upstream,
                                          double epsilon) {
  require_same_shape(input, upstream, "l2_normalize_rows_backward");
  BasicMatrix<T> out(input.rows, input.cols);
  for (std::size_t r = 0; r < input.rows; ++r) {
    T sq = 0;
    for (std::size_t c = 0; c < input.cols; ++c) sq += input(r, c) * input(r, c);
    const T norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw NonFiniteError("row " + std::to_string(r) +
                           " has non-finite norm in normalization backward");
    }
    if (!(norm >= static_cast<T>(epsilon))) {
      throw DegenerateInputError("row " + std::to_string(r) +
                                 " has near-zero norm in normalization backward");
    }
    T proj = 0;
    for (std::size_t c = 0; c < input.cols; ++c) proj += (input(r, c) / norm) * upstream(r, c);
    for (std::size_t c = 0; c < input.cols; ++c)
      out(r, c) = (upstream(r, c) - proj * (input(r, c) / norm)) / norm;
  }
  out.require_finite("l2_normalize_rows_backward");
  return out;
}

template <typename T>
BasicMatrix<T> scaled(ConstMatrixView<T> m, T alpha) {
  BasicMatrix<T> out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = alpha * m(r, c);
  out.require_finite("scaled");
  return out;
}

template <typename T>
BasicMatrix<T> add(ConstMatrixView<T> a, ConstMatrixView<T> b) {
  require_same_shape(a, b, "add");
  BasicMatrix<T> out(a.rows, a.cols);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) out(r, c) = a(r, c) + b(r, c);
  out.require_finite("add");
  return out;
}

template <typename T>
void axpy(MatrixView<T> y, T alpha, ConstMatrixView<T> x) {
  require_same_shape<T>(y, x, "axpy");
  for (std::size_t r = 0; r < y.rows; ++r)
    for (std::size_t c = 0; c < y.cols; ++c) y(r, c) += alpha * x(r, c);
  require_finite_view<T>(y, "axpy");
}

template <typename T>
T max_abs(ConstMatrixView<T> m) {
  T best = 0;
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) best = std::max(best, std::abs(m(r, c)));
  return best;
}

template <typename T>
T max_abs_diff(ConstMatrixView<T> a, ConstMatrixView<T> b) {
  require_same_shape(a, b, "max_abs_diff");
  T best = 0;
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) best = std::max(best, std::abs(a(r, c) - b(r, c)));
  return best;
}

template <typename T>
double relative_error(ConstMatrixView<T> actual, ConstMatrixView<T> expected) {
  const double diff = static_cast<double>(max_abs_diff(actual, expected));
  const double scale = static_cast<double>(max_abs(expected));
  return scale > 0.0 ? diff / scale : diff;
}

template <typename T>
bool bitwise_equal(ConstMatrixView<T> a, ConstMatrixView<T> b) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) {
      if (std::memcmp(&a(r, c), &b(r, c), sizeof(T)) != 0) return false;
    }
  }
  return true;
}

#define DISCO_INSTANTIATE_KERNELS(T)                                                            \
  template BasicMatrix<T> matmul<T>(ConstMatrixView<T>, ConstMatrixView<T>, Transpose);         \
  template void gemm_accumulate<T>(MatrixView<T>, T, ConstMatrixView<T>, ConstMatrixView<T>);   \
  template BasicMatrix<T> row_softmax<T>(ConstMatrixView<T>);                                   \
  template std::vector<T> row_logsumexp<T>(ConstMatrixView<T>);                                 \
  template T cross_entropy_mean<T>(ConstMatrixView<T>, std::span<const std::size_t>);           \
  template BasicMatrix<T> softmax_ce_grad<T>(ConstMatrixView<T>, std::span<const std::size_t>,  \
                                             T);                                                \
  template T softmax_ce_inplace<T>(MatrixView<T>, std::span<const std::size_t>, T);             \
  template BasicMatrix<T> l2_normalize_rows<T>(ConstMatrixView<T>, double);                     \
  template BasicMatrix<T> l2_normalize_rows_backward<T>(ConstMatrixView<T>, ConstMatrixView<T>, \
                                                        double);                                \
  template BasicMatrix<T> scaled<T>(ConstMatrixView<T>, T);                                     \
  template BasicMatrix<T> add<T>(ConstMatrixView<T>, ConstMatrixView<T>);                       \
  template void axpy<T>(MatrixView<T>, T, ConstMatrixView<T>);                                  \
  template T max_abs<T>(ConstMatrixView<T>);                                                    \
  template T max_abs_diff<T>(ConstMatrixView<T>, ConstMatrixView<T>);                           \
  template double relative_error<T>(ConstMatrixView<T>, ConstMatrixView<T>);                    \
  template bool bitwise_equal<T>(ConstMatrixView<T>, ConstMatrixView<T>);

DISCO_INSTANTIATE_KERNELS(float)
DISCO_INSTANTIATE_KERNELS(double)

#undef DISCO_INSTANTIATE_KERNELS

}  // namespace kernels
}  // namespace disco

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "disco/errors.hpp"
#include "disco/instrument.hpp"

namespace disco {

std::string shape_string(std::size_t rows, std::size_t cols);

/// Read-only strided view over a row-major buffer. Transposition swaps strides.
template <typename T>
struct ConstMatrixView {
  using value_type = T;
  const T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::ptrdiff_t row_stride = 0;
  std::ptrdiff_t col_stride = 1;

  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data[static_cast<std::ptrdiff_t>(r) * row_stride +
                static_cast<std::ptrdiff_t>(c) * col_stride];
  }

  ConstMatrixView transposed() const noexcept {
    return {data, cols, rows, col_stride, row_stride};
  }

  ConstMatrixView row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows) {
      throw IndexError("row block [" + std::to_string(first) + ", " +
                       std::to_string(first + count) + ") exceeds " + std::to_string(rows) +
                       " rows");
    }
    return {data + static_cast<std::ptrdiff_t>(first) * row_stride, count, cols, row_stride,
            col_stride};
  }
};

template <typename T>
struct MatrixView {
  using value_type = T;
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::ptrdiff_t row_stride = 0;
  std::ptrdiff_t col_stride = 1;

  T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data[static_cast<std::ptrdiff_t>(r) * row_stride +
                static_cast<std::ptrdiff_t>(c) * col_stride];
  }

  operator ConstMatrixView<T>() const noexcept {  // NOLINT(google-explicit-constructor)
    return {data, rows, cols, row_stride, col_stride};
  }

  MatrixView row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows) {
      throw IndexError("row block [" + std::to_string(first) + ", " +
                       std::to_string(first + count) + ") exceeds " + std::to_string(rows) +
                       " rows");
    }
    return {data + static_cast<std::ptrdiff_t>(first) * row_stride, count, cols, row_stride,
            col_stride};
  }
};

/// Dense row-major matrix with value semantics.
///
/// Every allocation is charged to the thread's active InstrumentScope (if one
/// is installed) and released when the storage goes away, so peak live
/// element counts can be asserted exactly.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;

  BasicMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {
    charge();
  }

  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements cannot form a " +
                       shape_string(rows_, cols_) + " matrix");
    }
    require_finite("construction");
    charge();
  }

  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw ShapeError("ragged initializer rows");
      data_.insert(data_.end(), row.begin(), row.end());
    }
    require_finite("construction");
    charge();
  }

  /// Copies an arbitrary (possibly transposed) view into fresh storage.
  explicit BasicMatrix(ConstMatrixView<T> view) : BasicMatrix(view.rows, view.cols) {
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) data_[r * cols_ + c] = view(r, c);
  }

  BasicMatrix(const BasicMatrix& other)
      : rows_(other.rows_), cols_(other.cols_), data_(other.data_) {
    charge();
  }

  BasicMatrix(BasicMatrix&& other) noexcept
      : rows_(std::exchange(other.rows_, 0)),
        cols_(std::exchange(other.cols_, 0)),
        data_(std::move(other.data_)),
        lease_(std::move(other.lease_)) {
    other.data_.clear();
  }

  BasicMatrix& operator=(const BasicMatrix& other) {
    if (this != &other) {
      BasicMatrix copy(other);
      *this = std::move(copy);
    }
    return *this;
  }

  BasicMatrix& operator=(BasicMatrix&& other) noexcept {
    if (this != &other) {
      discharge();
      rows_ = std::exchange(other.rows_, 0);
      cols_ = std::exchange(other.cols_, 0);
      data_ = std::move(other.data_);
      other.data_.clear();
      lease_ = std::move(other.lease_);
    }
    return *this;
  }

  ~BasicMatrix() { discharge(); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  T& at(std::size_t r, std::size_t c) {
    check_index(r, c);
    return data_[r * cols_ + c];
  }
  const T& at(std::size_t r, std::size_t c) const {
    check_index(r, c);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  ConstMatrixView<T> view() const noexcept {
    return {data_.data(), rows_, cols_, static_cast<std::ptrdiff_t>(cols_), 1};
  }
  MatrixView<T> mutable_view() noexcept {
    return {data_.data(), rows_, cols_, static_cast<std::ptrdiff_t>(cols_), 1};
  }
  operator ConstMatrixView<T>() const noexcept { return view(); }  // NOLINT

  /// Transposed view sharing this matrix's storage.
  ConstMatrixView<T> t() const noexcept { return view().transposed(); }

  bool all_finite() const noexcept {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const char* where) const {
    if (!verification_mode()) return;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw NonFiniteError(std::string("non-finite entry at (") + std::to_string(i / cols_) +
                             ", " + std::to_string(i % cols_) + ") after " + where);
      }
    }
  }

  friend bool operator==(const BasicMatrix& a, const BasicMatrix& b) noexcept {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void charge() {
    lease_ = detail::active_state();
    if (lease_) lease_->acquire(data_.size());
  }

  void discharge() noexcept {
    if (lease_) {
      lease_->release(data_.size());
      lease_.reset();
    }
  }

  void check_index(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) {
      throw IndexError("index (" + std::to_string(r) + ", " + std::to_string(c) +
                       ") outside " + shape_string(rows_, cols_));
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
  std::shared_ptr<detail::CounterState> lease_;
};

template <typename T>
ConstMatrixView<T> as_view(const BasicMatrix<T>& m) noexcept {
  return m.view();
}
template <typename T>
ConstMatrixView<T> as_view(ConstMatrixView<T> v) noexcept {
  return v;
}
template <typename T>
ConstMatrixView<T> as_view(MatrixView<T> v) noexcept {
  return v;
}

/// Anything readable as a matrix: an owning matrix or a (mutable) view.
template <typename M>
concept MatrixSource = requires(const M& m) { as_view(m); };

template <MatrixSource M>
using scalar_of = typename decltype(as_view(std::declval<const M&>()))::value_type;

using DenseMatrix = BasicMatrix<double>;
using DenseMatrixF = BasicMatrix<float>;

}  // namespace disco

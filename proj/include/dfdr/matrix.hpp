#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace dfdr {

/// Read-only view over a set of equally long columns laid out with a fixed
/// stride (leading dimension). Used to window a panel by rows without copying.
template <class T>
class ColumnsView {
public:
  ColumnsView() = default;
  ColumnsView(const T* base, std::size_t rows, std::size_t cols, std::size_t stride)
      : base_(base), rows_(rows), cols_(cols), stride_(stride) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<const T> column(std::size_t j) const {
    assert(j < cols_);
    return {base_ + j * stride_, rows_};
  }

  const T& operator()(std::size_t i, std::size_t j) const { return base_[j * stride_ + i]; }

  /// Rows [begin, end) of every column.
  ColumnsView rows_between(std::size_t begin, std::size_t end) const {
    assert(begin <= end && end <= rows_);
    return {base_ + begin, end - begin, cols_, stride_};
  }

private:
  const T* base_ = nullptr;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
};

/// Dense column-major matrix. Column j is contiguous, which matches how every
/// computation here walks the data: one rule (or one replication) at a time.
template <class T>
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<T> column(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const T> column(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  ColumnsView<T> view() const { return {data_.data(), rows_, cols_, rows_}; }
  ColumnsView<T> rows_between(std::size_t begin, std::size_t end) const {
    return view().rows_between(begin, end);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

} // namespace dfdr

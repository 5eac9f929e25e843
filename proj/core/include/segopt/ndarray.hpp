#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace segopt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(std::span<const std::size_t> shape);

/// Dense row-major array of doubles with an explicit shape.
///
/// Every extent is positive and `size() == product(shape())`. There are no
/// strides or views; rows of a rank-2 array are exposed as spans.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape);
  NdArray(Shape shape, double fill);
  NdArray(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  /// Checked multi-index access.
  double at(std::span<const std::size_t> index) const;
  double at(std::initializer_list<std::size_t> index) const;
  void set(std::span<const std::size_t> index, double value);
  void set(std::initializer_list<std::size_t> index, double value);

  std::size_t flat_index(std::span<const std::size_t> index) const;

  /// Row `i` of a rank-2 array.
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;
  std::size_t rows() const;
  std::size_t cols() const;

  bool all_finite() const noexcept;

  friend bool operator==(const NdArray&, const NdArray&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace segopt

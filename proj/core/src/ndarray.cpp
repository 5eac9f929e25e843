#include "segopt/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "segopt/error.hpp"

namespace segopt {

std::size_t shape_size(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ConfigError("NdArray: shape must have rank >= 1");
  if (std::any_of(shape.begin(), shape.end(), [](std::size_t e) { return e == 0; })) {
    throw ConfigError("NdArray: extents must be positive");
  }
}

}  // namespace

NdArray::NdArray(Shape shape) : NdArray(std::move(shape), 0.0) {}

NdArray::NdArray(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ConfigError("NdArray: shape product " + std::to_string(shape_size(shape_)) +
                      " != data length " + std::to_string(data_.size()));
  }
}

std::size_t NdArray::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ConfigError("NdArray: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t a = 0; a < shape_.size(); ++a) {
    if (index[a] >= shape_[a]) throw ConfigError("NdArray: index out of range");
    flat = flat * shape_[a] + index[a];
  }
  return flat;
}

double NdArray::at(std::span<const std::size_t> index) const {
  return data_[flat_index(index)];
}

double NdArray::at(std::initializer_list<std::size_t> index) const {
  return at(std::span<const std::size_t>(index.begin(), index.size()));
}

void NdArray::set(std::span<const std::size_t> index, double value) {
  data_[flat_index(index)] = value;
}

void NdArray::set(std::initializer_list<std::size_t> index, double value) {
  set(std::span<const std::size_t>(index.begin(), index.size()), value);
}

std::size_t NdArray::rows() const {
  if (rank() != 2) throw ConfigError("NdArray: rows() requires rank 2");
  return shape_[0];
}

std::size_t NdArray::cols() const {
  if (rank() != 2) throw ConfigError("NdArray: cols() requires rank 2");
  return shape_[1];
}

std::span<double> NdArray::row(std::size_t i) {
  const std::size_t c = cols();
  if (i >= shape_[0]) throw ConfigError("NdArray: row out of range");
  return std::span<double>(data_).subspan(i * c, c);
}

std::span<const double> NdArray::row(std::size_t i) const {
  const std::size_t c = cols();
  if (i >= shape_[0]) throw ConfigError("NdArray: row out of range");
  return std::span<const double>(data_).subspan(i * c, c);
}

bool NdArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace segopt

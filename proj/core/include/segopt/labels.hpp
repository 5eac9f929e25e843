#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "segopt/ndarray.hpp"

namespace segopt {

/// Class indices used throughout: 0 background, 1 enhancing tumor, 2 edema,
/// 3 non-enhancing tumor.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kEnhancingTumor = 1;
inline constexpr std::uint8_t kEdema = 2;
inline constexpr std::uint8_t kNonEnhancingTumor = 3;
inline constexpr std::size_t kNumBratsClasses = 4;

/// Per-voxel class probabilities, shape [V, L]. Rows are probability vectors.
class ProbMap {
 public:
  /// Validates that every row is a probability vector (sum 1 within 1e-9).
  explicit ProbMap(NdArray probs);

  /// Wraps arbitrary finite values without the simplex check. Used when
  /// differentiating losses by perturbing single entries.
  static ProbMap unchecked(NdArray values);

  std::size_t voxels() const { return probs_.rows(); }
  std::size_t classes() const { return probs_.cols(); }
  std::span<const double> row(std::size_t i) const { return probs_.row(i); }
  const NdArray& array() const noexcept { return probs_; }

 private:
  struct Unchecked {};
  ProbMap(NdArray values, Unchecked);
  NdArray probs_;
};

/// Integer segmentation over a spatial grid, flattened row-major.
class LabelMap {
 public:
  LabelMap(std::vector<std::uint8_t> labels, std::size_t num_classes, Shape spatial_shape);
  /// 1-D grid of `labels.size()` voxels.
  LabelMap(std::vector<std::uint8_t> labels, std::size_t num_classes);

  std::size_t voxels() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const Shape& spatial_shape() const noexcept { return spatial_shape_; }
  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  std::uint8_t operator[](std::size_t i) const { return labels_[i]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::vector<std::uint8_t> labels_;
  std::size_t num_classes_;
  Shape spatial_shape_;
};

/// One-hot ProbMap of a label map.
ProbMap one_hot_map(const LabelMap& labels);

/// Per-voxel argmax of a probability map (lowest index wins ties).
LabelMap argmax_labels(const ProbMap& probs, const Shape& spatial_shape);

}  // namespace segopt

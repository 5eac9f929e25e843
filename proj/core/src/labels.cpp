#include "segopt/labels.hpp"

#include <cmath>
#include <string>

#include "segopt/error.hpp"

namespace segopt {

ProbMap::ProbMap(NdArray values, Unchecked) : probs_(std::move(values)) {
  if (probs_.rank() != 2) throw ConfigError("ProbMap: expected shape [V, L]");
  if (!probs_.all_finite()) throw ConfigError("ProbMap: non-finite entry");
}

ProbMap::ProbMap(NdArray probs) : ProbMap(std::move(probs), Unchecked{}) {
  for (std::size_t i = 0; i < voxels(); ++i) {
    double total = 0.0;
    for (double p : probs_.row(i)) {
      if (p < 0.0 || p > 1.0) {
        throw ConfigError("ProbMap: row " + std::to_string(i) + " has entry outside [0, 1]");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("ProbMap: row " + std::to_string(i) + " sums to " +
                        std::to_string(total));
    }
  }
}

ProbMap ProbMap::unchecked(NdArray values) { return ProbMap(std::move(values), Unchecked{}); }

LabelMap::LabelMap(std::vector<std::uint8_t> labels, std::size_t num_classes,
                   Shape spatial_shape)
    : labels_(std::move(labels)),
      num_classes_(num_classes),
      spatial_shape_(std::move(spatial_shape)) {
  if (num_classes_ == 0) throw ConfigError("LabelMap: num_classes must be positive");
  if (shape_size(spatial_shape_) != labels_.size()) {
    throw ConfigError("LabelMap: spatial shape does not match voxel count");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes_) {
      throw ConfigError("LabelMap: label " + std::to_string(labels_[i]) + " at voxel " +
                        std::to_string(i) + " out of range");
    }
  }
}

LabelMap::LabelMap(std::vector<std::uint8_t> labels, std::size_t num_classes)
    : LabelMap(labels, num_classes, Shape{labels.size()}) {}

ProbMap one_hot_map(const LabelMap& labels) {
  NdArray out({labels.voxels(), labels.num_classes()}, 0.0);
  for (std::size_t i = 0; i < labels.voxels(); ++i) {
    out[i * labels.num_classes() + labels[i]] = 1.0;
  }
  return ProbMap(std::move(out));
}

LabelMap argmax_labels(const ProbMap& probs, const Shape& spatial_shape) {
  std::vector<std::uint8_t> out(probs.voxels());
  for (std::size_t i = 0; i < probs.voxels(); ++i) {
    const auto row = probs.row(i);
    std::size_t best = 0;
    for (std::size_t l = 1; l < row.size(); ++l) {
      if (row[l] > row[best]) best = l;
    }
    out[i] = static_cast<std::uint8_t>(best);
  }
  return LabelMap(std::move(out), probs.classes(), spatial_shape);
}

}  // namespace segopt

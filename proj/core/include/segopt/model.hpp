#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "segopt/labels.hpp"
#include "segopt/losses.hpp"
#include "segopt/ndarray.hpp"

namespace segopt {

enum class ModelKind { kLinear, kMlp };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::kLinear;
  std::size_t input_features = 4;
  std::size_t hidden_width = 16;  // mlp only
  std::size_t num_classes = 4;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t param_count() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Per-voxel classifier h(x; theta).
///
/// Parameter layout, row-major:
///   linear: W [L x F], b [L]
///   mlp:    W1 [H x F], b1 [H], W2 [L x H], b2 [L]
struct Model {
  ModelSpec spec;
  std::vector<double> params;

  /// Weights uniform in [-0.1, 0.1] from `spec.seed`, biases zero.
  static Model initialize(const ModelSpec& spec);
};

/// Softmax class probabilities for every row of `features` ([V, F]).
ProbMap forward(const Model& model, const NdArray& features);

struct Gradient {
  LossValue loss;
  std::vector<double> params;  // d(loss)/d(theta)
};

/// Loss of `forward(model, features)` against `gt` and its gradient with
/// respect to the parameters.
Gradient backward(const Model& model, const NdArray& features, const LabelMap& gt,
                  LossKind kind, const DistanceMatrix* m);

/// Reverses the axes selected by bit `a` of `axis_mask` on the spatial grid
/// for every column of a [V, C] array. Involutive.
NdArray flip_grid(const NdArray& values, const Shape& spatial_shape, unsigned axis_mask);

/// Mean of forward probabilities over all 2^D axis-flip combinations of the
/// spatial grid.
ProbMap predict_tta(const Model& model, const NdArray& features, const Shape& spatial_shape);

/// Writes `<stem>.json` and the little-endian float64 sidecar `<stem>.bin`
/// into `dir`. Returns the JSON path.
std::filesystem::path save_model(const Model& model, const std::filesystem::path& dir,
                                 std::string_view stem = "model");
Model load_model(const std::filesystem::path& json_path);

}  // namespace segopt

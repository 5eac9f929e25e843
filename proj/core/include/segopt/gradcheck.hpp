#pragma once

#include <cstddef>
#include <cstdint>

#include "segopt/distance_matrix.hpp"
#include "segopt/losses.hpp"
#include "segopt/model.hpp"

namespace segopt {

struct GradCheckOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::size_t max_voxels = 32;
  /// Initial step of the extrapolated central difference; capped at half
  /// the probability for probability-space coordinates.
  double step = 1e-3;
  /// Initial step for parameter-space checks. The mlp needs a step well
  /// below the distance to the nearest ReLU kink.
  double param_step = 1e-3;
  double prob_tolerance = 1e-5;   // gradient w.r.t. probabilities
  double param_tolerance = 1e-4;  // gradient w.r.t. model parameters
  double ignore_below = 1e-8;     // skip coordinates with |analytic| below this
  ModelKind model = ModelKind::kLinear;
  std::size_t hidden_width = 8;
  /// Multiplies every analytic gradient by (1 + fault). Harness self-test only.
  double inject_fault = 0.0;
};

struct GradCheckReport {
  LossKind kind = LossKind::kCe;
  std::size_t trials = 0;
  std::size_t coords_checked = 0;
  double worst_prob_error = 0.0;
  double worst_param_error = 0.0;
  bool passed = false;
};

/// |a - b| / max(|a|, |b|), 0 when both are 0.
double relative_error(double a, double b);

/// Central finite-difference check of the loss gradient in probability space
/// and of the model-parameter gradient through the softmax head, on `trials`
/// random instances with L = m.num_classes().
GradCheckReport check_gradients(LossKind kind, const GradCheckOptions& options,
                                const DistanceMatrix& m);

}  // namespace segopt

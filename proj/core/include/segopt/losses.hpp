#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "segopt/distance_matrix.hpp"
#include "segopt/labels.hpp"
#include "segopt/ndarray.hpp"

namespace segopt {

/// Smoothing added to numerator and denominator of the Dice-style quotients.
inline constexpr double kDiceEpsilon = 1e-5;
/// Floor applied to probabilities inside the cross-entropy log.
inline constexpr double kProbabilityFloor = 1e-12;

struct LossValue {
  double value = 0.0;
  /// d(value)/d(pred), shape [V, L], when requested.
  std::optional<NdArray> gradient;
};

enum class LossKind { kCe, kDice, kGwdl, kDiceCe, kGwdlCe };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
bool uses_distance_matrix(LossKind kind);
/// Largest value a per-case loss of `kind` can take: 1 per Dice-style term,
/// -log(1e-12) for cross-entropy.
double loss_upper_bound(LossKind kind);

/// Wasserstein distance between `pred_row` and the one-hot distribution of
/// `gt_class` under ground distance `m`: sum over l' of m[gt, l'] * pred[l'].
double wasserstein_voxel(std::span<const double> pred_row, std::size_t gt_class,
                         const DistanceMatrix& m);

/// Generalized Wasserstein Dice loss, 1 - (2A + eps) / (2A + B + eps) with
/// A = sum over foreground voxels of (1 - W_i) and B = sum over all voxels of W_i.
LossValue gwdl(const ProbMap& pred, const LabelMap& gt, const DistanceMatrix& m,
               bool want_gradient = false);

/// Soft Dice loss averaged over foreground classes (background index 0).
LossValue dice_loss(const ProbMap& pred, const LabelMap& gt, bool want_gradient = false,
                    std::size_t background_index = 0);

/// Mean voxel cross-entropy with probabilities floored at 1e-12.
LossValue cross_entropy(const ProbMap& pred, const LabelMap& gt, bool want_gradient = false);

/// Sum of the constituent losses of `kind`. `m` is required for GWDL kinds.
LossValue composite_loss(LossKind kind, const ProbMap& pred, const LabelMap& gt,
                         const DistanceMatrix* m, bool want_gradient = false);

}  // namespace segopt

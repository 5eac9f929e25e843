#include "segopt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segopt/error.hpp"

namespace segopt {

namespace {

void check_dims(const ProbMap& pred, const LabelMap& gt, const char* who) {
  if (pred.voxels() != gt.voxels()) {
    throw ConfigError(std::string(who) + ": voxel count mismatch (" +
                      std::to_string(pred.voxels()) + " vs " + std::to_string(gt.voxels()) + ")");
  }
  if (pred.classes() != gt.num_classes()) {
    throw ConfigError(std::string(who) + ": class count mismatch");
  }
}

void add_into(LossValue& acc, const LossValue& term) {
  acc.value += term.value;
  if (acc.gradient && term.gradient) {
    auto dst = acc.gradient->data();
    const auto src = term.gradient->data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCe: return "ce";
    case LossKind::kDice: return "dice";
    case LossKind::kGwdl: return "gwdl";
    case LossKind::kDiceCe: return "dice_ce";
    case LossKind::kGwdlCe: return "gwdl_ce";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  for (auto k : {LossKind::kCe, LossKind::kDice, LossKind::kGwdl, LossKind::kDiceCe,
                 LossKind::kGwdlCe}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

bool uses_distance_matrix(LossKind kind) {
  return kind == LossKind::kGwdl || kind == LossKind::kGwdlCe;
}

double wasserstein_voxel(std::span<const double> pred_row, std::size_t gt_class,
                         const DistanceMatrix& m) {
  if (pred_row.size() != m.num_classes()) {
    throw ConfigError("wasserstein_voxel: prediction has " + std::to_string(pred_row.size()) +
                      " classes, distance matrix has " + std::to_string(m.num_classes()));
  }
  if (gt_class >= m.num_classes()) throw ConfigError("wasserstein_voxel: class out of range");
  const auto dist = m.row(gt_class);
  double w = 0.0;
  for (std::size_t l = 0; l < pred_row.size(); ++l) w += dist[l] * pred_row[l];
  return w;
}

LossValue gwdl(const ProbMap& pred, const LabelMap& gt, const DistanceMatrix& m,
               bool want_gradient) {
  check_dims(pred, gt, "gwdl");
  if (m.num_classes() != pred.classes()) {
    throw ConfigError("gwdl: distance matrix does not match class count");
  }
  const std::size_t nv = pred.voxels();
  const std::size_t b = m.background_index();

  std::vector<double> w(nv);
  double true_pos = 0.0;  // sum over foreground voxels of (1 - W_i)
  double total_w = 0.0;
  for (std::size_t i = 0; i < nv; ++i) {
    w[i] = wasserstein_voxel(pred.row(i), gt[i], m);
    total_w += w[i];
    if (gt[i] != b) true_pos += 1.0 - w[i];
  }
  const double num = 2.0 * true_pos + kDiceEpsilon;
  const double den = 2.0 * true_pos + total_w + kDiceEpsilon;

  LossValue out{1.0 - num / den, std::nullopt};
  if (!want_gradient) return out;

  NdArray grad({nv, pred.classes()}, 0.0);
  const double den2 = den * den;
  for (std::size_t i = 0; i < nv; ++i) {
    const double fg = gt[i] != b ? 1.0 : 0.0;
    const double dloss_dw = (2.0 * fg * den + num * (1.0 - 2.0 * fg)) / den2;
    const auto dist = m.row(gt[i]);
    auto g = grad.row(i);
    for (std::size_t l = 0; l < g.size(); ++l) g[l] = dloss_dw * dist[l];
  }
  out.gradient = std::move(grad);
  return out;
}

LossValue dice_loss(const ProbMap& pred, const LabelMap& gt, bool want_gradient,
                    std::size_t background_index) {
  check_dims(pred, gt, "dice_loss");
  const std::size_t nv = pred.voxels();
  const std::size_t nl = pred.classes();
  if (nl < 2) throw ConfigError("dice_loss: need at least one foreground class");
  if (background_index >= nl) throw ConfigError("dice_loss: background index out of range");

  std::vector<double> inter(nl, 0.0);
  std::vector<double> sum_pred(nl, 0.0);
  std::vector<double> sum_gt(nl, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto p = pred.row(i);
    for (std::size_t l = 0; l < nl; ++l) sum_pred[l] += p[l];
    inter[gt[i]] += p[gt[i]];
    sum_gt[gt[i]] += 1.0;
  }

  const double n_fg = static_cast<double>(nl - 1);
  double mean_dice = 0.0;
  std::vector<double> den(nl);
  std::vector<double> num(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    if (l == background_index) continue;
    num[l] = 2.0 * inter[l] + kDiceEpsilon;
    den[l] = sum_pred[l] + sum_gt[l] + kDiceEpsilon;
    mean_dice += num[l] / den[l];
  }
  mean_dice /= n_fg;

  LossValue out{1.0 - mean_dice, std::nullopt};
  if (!want_gradient) return out;

  NdArray grad({nv, nl}, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    auto g = grad.row(i);
    for (std::size_t l = 0; l < nl; ++l) {
      if (l == background_index) continue;
      const double onehot = gt[i] == l ? 1.0 : 0.0;
      const double dq = (2.0 * onehot * den[l] - num[l]) / (den[l] * den[l]);
      g[l] = -dq / n_fg;
    }
  }
  out.gradient = std::move(grad);
  return out;
}

LossValue cross_entropy(const ProbMap& pred, const LabelMap& gt, bool want_gradient) {
  check_dims(pred, gt, "cross_entropy");
  const std::size_t nv = pred.voxels();
  const double inv_v = 1.0 / static_cast<double>(nv);
  double total = 0.0;
  std::optional<NdArray> grad;
  if (want_gradient) grad.emplace(Shape{nv, pred.classes()}, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    const double p = pred.row(i)[gt[i]];
    const double clamped = std::max(p, kProbabilityFloor);
    total -= std::log(clamped);
    if (grad && p > kProbabilityFloor) grad->row(i)[gt[i]] = -inv_v / p;
  }
  return LossValue{total * inv_v, std::move(grad)};
}

double loss_upper_bound(LossKind kind) {
  const double ce = -std::log(kProbabilityFloor);
  switch (kind) {
    case LossKind::kCe: return ce;
    case LossKind::kDice:
    case LossKind::kGwdl: return 1.0;
    case LossKind::kDiceCe:
    case LossKind::kGwdlCe: return 1.0 + ce;
  }
  return 1.0 + ce;
}

LossValue composite_loss(LossKind kind, const ProbMap& pred, const LabelMap& gt,
                         const DistanceMatrix* m, bool want_gradient) {
  if (uses_distance_matrix(kind) && m == nullptr) {
    throw ConfigError("composite_loss: loss '" + std::string(to_string(kind)) +
                      "' requires a distance matrix");
  }
  const std::size_t b = m != nullptr ? m->background_index() : 0;
  switch (kind) {
    case LossKind::kCe: return cross_entropy(pred, gt, want_gradient);
    case LossKind::kDice: return dice_loss(pred, gt, want_gradient, b);
    case LossKind::kGwdl: return gwdl(pred, gt, *m, want_gradient);
    case LossKind::kDiceCe: {
      LossValue acc = dice_loss(pred, gt, want_gradient, b);
      add_into(acc, cross_entropy(pred, gt, want_gradient));
      return acc;
    }
    case LossKind::kGwdlCe: {
      LossValue acc = gwdl(pred, gt, *m, want_gradient);
      add_into(acc, cross_entropy(pred, gt, want_gradient));
      return acc;
    }
  }
  throw ConfigError("composite_loss: unhandled loss kind");
}

}  // namespace segopt

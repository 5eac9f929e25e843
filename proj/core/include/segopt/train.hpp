#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "segopt/dataset.hpp"
#include "segopt/distance_matrix.hpp"
#include "segopt/losses.hpp"
#include "segopt/model.hpp"
#include "segopt/optim.hpp"
#include "segopt/sampler.hpp"

namespace segopt {

enum class SamplerMode { kErmShuffle, kDro };

std::string_view to_string(SamplerMode mode);
SamplerMode parse_sampler_mode(std::string_view name);

struct TrainConfig {
  LossKind loss = LossKind::kDiceCe;
  std::optional<DistanceMatrix> distance_matrix;
  SamplerMode sampler = SamplerMode::kErmShuffle;
  double beta = kDefaultBeta;
  /// Initial sampler loss estimate. Unset means loss_upper_bound(loss), so
  /// every case outweighs the visited ones until it has been seen once.
  std::optional<double> init_loss;
  OptimizerConfig optimizer;
  std::size_t epochs = 1000;
  std::size_t batch_size = 2;
  ModelKind model = ModelKind::kLinear;
  std::size_t hidden_width = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double sampler_entropy = 0.0;
};

struct TrainedModel {
  Model model;
  std::vector<EpochRecord> log;
  /// Hardness-weighted sampling distribution at the end of training (DRO only).
  std::vector<double> sampler_probabilities;
  std::vector<double> sampler_losses;
  std::optional<HardnessWeightedSampler> sampler;
};

/// Minimizes the mean per-case loss (ERM) or the hardness-weighted objective
/// (DRO). One epoch draws n cases: a fresh permutation under ERM, n draws from
/// the sampler under DRO. The learning rate follows the poly schedule per
/// epoch. Deterministic given `config.seed`. Throws NumericalError naming the
/// epoch when a loss is non-finite or exceeds 1e6.
TrainedModel train(std::span<const Case> dataset, const TrainConfig& config);

/// CSV with header `epoch,loss,lr,sampler_entropy`.
void write_training_log(std::ostream& out, std::span<const EpochRecord> log);

/// Per-case loss of `model` (no gradient).
double case_loss(const Model& model, const Case& c, LossKind kind, const DistanceMatrix* m);

}  // namespace segopt

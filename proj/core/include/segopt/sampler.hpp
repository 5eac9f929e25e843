#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "segopt/rng.hpp"

namespace segopt {

/// Value used for the paper's hardness-weighted runs.
inline constexpr double kDefaultBeta = 100.0;

/// Hardness-weighted sampler over `n` training samples.
///
/// Keeps the most recent loss seen for every sample and draws indices i.i.d.
/// from q_i proportional to exp(beta * loss_i), the closed-form maximizer of
/// the KL-regularized inner problem. Loss estimates go stale between visits;
/// there is no decay.
class HardnessWeightedSampler {
 public:
  HardnessWeightedSampler(std::size_t n, double beta, double init_loss = 1.0,
                          std::uint64_t seed = 0);

  std::size_t size() const noexcept { return losses_.size(); }
  double beta() const noexcept { return beta_; }
  const std::vector<double>& loss_estimates() const noexcept { return losses_; }
  const std::vector<bool>& initialized_mask() const noexcept { return initialized_; }
  const Rng& rng() const noexcept { return rng_; }

  /// Sampling distribution q; sums to 1.
  std::vector<double> probabilities() const;
  /// Shannon entropy of q in nats.
  double entropy() const;

  void update_loss(std::size_t index, double new_loss);
  std::vector<std::size_t> sample_batch(std::size_t batch_size);

  /// {"beta", "loss_estimates", "seed", "rng_counter", "initialized"}.
  std::string to_json() const;
  static HardnessWeightedSampler from_json(const std::string& text);

 private:
  std::vector<double> losses_;
  std::vector<bool> initialized_;
  double beta_;
  Rng rng_;
};

}  // namespace segopt

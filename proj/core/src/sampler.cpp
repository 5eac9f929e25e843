#include "segopt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "segopt/error.hpp"

namespace segopt {

HardnessWeightedSampler::HardnessWeightedSampler(std::size_t n, double beta, double init_loss,
                                                 std::uint64_t seed)
    : losses_(n, init_loss), initialized_(n, false), beta_(beta), rng_(seed) {
  if (n == 0) throw ConfigError("sampler: sample count must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("sampler: beta must be > 0");
  if (!std::isfinite(init_loss)) throw ConfigError("sampler: initial loss must be finite");
}

std::vector<double> HardnessWeightedSampler::probabilities() const {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : losses_) top = std::max(top, beta_ * l);
  std::vector<double> q(losses_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = std::exp(beta_ * losses_[i] - top);
    total += q[i];
  }
  for (double& x : q) x /= total;
  return q;
}

double HardnessWeightedSampler::entropy() const {
  double h = 0.0;
  for (double p : probabilities()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void HardnessWeightedSampler::update_loss(std::size_t index, double new_loss) {
  if (index >= losses_.size()) {
    throw ConfigError("sampler: index " + std::to_string(index) + " out of range");
  }
  if (!std::isfinite(new_loss)) throw NumericalError("sampler: non-finite loss update");
  losses_[index] = new_loss;
  initialized_[index] = true;
}

std::vector<std::size_t> HardnessWeightedSampler::sample_batch(std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("sampler: batch size must be >= 1");
  const auto q = probabilities();
  std::vector<double> cdf(q.size());
  double run = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    run += q[i];
    cdf[i] = run;
  }
  std::vector<std::size_t> out(batch_size);
  for (auto& idx : out) {
    const double u = rng_.uniform() * run;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    idx = std::min(static_cast<std::size_t>(it - cdf.begin()), q.size() - 1);
  }
  return out;
}

std::string HardnessWeightedSampler::to_json() const {
  nlohmann::json doc{{"beta", beta_},
                     {"loss_estimates", losses_},
                     {"seed", rng_.seed()},
                     {"rng_counter", rng_.counter()},
                     {"initialized", std::vector<bool>(initialized_)}};
  return doc.dump();
}

HardnessWeightedSampler HardnessWeightedSampler::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    const auto losses = doc.at("loss_estimates").get<std::vector<double>>();
    HardnessWeightedSampler s(losses.size(), doc.at("beta").get<double>(), 0.0,
                              doc.at("seed").get<std::uint64_t>());
    s.losses_ = losses;
    s.rng_ = Rng(s.rng_.seed(), doc.value("rng_counter", std::uint64_t{0}));
    if (doc.contains("initialized")) {
      s.initialized_ = doc["initialized"].get<std::vector<bool>>();
      if (s.initialized_.size() != losses.size()) {
        throw ConfigError("sampler: initialized mask length mismatch");
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("sampler: invalid state JSON: ") + e.what());
  }
}

}  // namespace segopt

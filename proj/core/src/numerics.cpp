#include "segopt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segopt/error.hpp"

namespace segopt {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("softmax: empty input");
  for (double x : logits) {
    if (!std::isfinite(x)) throw ConfigError("softmax: non-finite input");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw ConfigError("one_hot: label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(num_classes) + ")");
  }
  std::vector<double> out(num_classes, 0.0);
  out[label] = 1.0;
  return out;
}

std::vector<double> rng_uniform(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& x : out) x = rng.uniform();
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile: empty input");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile: q outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace segopt

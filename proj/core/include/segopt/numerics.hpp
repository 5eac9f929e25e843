#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "segopt/ndarray.hpp"
#include "segopt/rng.hpp"

namespace segopt {

/// Numerically stable softmax (max-subtracted). Throws ConfigError on empty
/// or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> one_hot(std::size_t label, std::size_t num_classes);

/// `n` uniform draws in [0, 1).
std::vector<double> rng_uniform(Rng& rng, std::size_t n);

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

}  // namespace segopt

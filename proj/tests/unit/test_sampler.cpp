#include <doctest.h>

#include <cmath>
#include <numeric>

#include "segopt/error.hpp"
#include "segopt/sampler.hpp"

using namespace segopt;

namespace {

std::vector<double> frequencies(HardnessWeightedSampler& s, std::size_t draws) {
  std::vector<double> f(s.size(), 0.0);
  for (std::size_t idx : s.sample_batch(draws)) f[idx] += 1.0;
  for (double& x : f) x /= static_cast<double>(draws);
  return f;
}

}  // namespace

TEST_CASE("new sampler is uniform") {
  HardnessWeightedSampler s(4, 100.0, 1.0);
  for (double q : s.probabilities()) CHECK(q == 0.25);
  HardnessWeightedSampler one(1, 3.0);
  CHECK(one.probabilities() == std::vector<double>{1.0});
  for (std::size_t idx : one.sample_batch(100)) CHECK(idx == 0);
  CHECK(s.entropy() == doctest::Approx(std::log(4.0)));
}

TEST_CASE("sampler rejects invalid construction and updates") {
  CHECK_THROWS_AS(HardnessWeightedSampler(0, 100.0), ConfigError);
  CHECK_THROWS_AS(HardnessWeightedSampler(4, 0.0), ConfigError);
  CHECK_THROWS_AS(HardnessWeightedSampler(4, -1.0), ConfigError);
  HardnessWeightedSampler s(4, 100.0);
  CHECK_THROWS_AS(s.update_loss(4, 0.5), ConfigError);
  CHECK_THROWS_AS(s.update_loss(0, NAN), NumericalError);
  CHECK_THROWS_AS(s.sample_batch(0), ConfigError);
}

TEST_CASE("Gibbs probabilities for losses [0.01, 0.02] at beta 100") {
  HardnessWeightedSampler s(2, 100.0);
  s.update_loss(0, 0.01);
  s.update_loss(1, 0.02);
  const auto q = s.probabilities();
  const double e = std::exp(1.0);
  CHECK(std::abs(q[0] - 1.0 / (1.0 + e)) < 1e-15);
  CHECK(std::abs(q[1] - e / (1.0 + e)) < 1e-15);
  CHECK(q[0] == doctest::Approx(0.2689).epsilon(1e-4));

  const auto f = frequencies(s, 100000);
  CHECK(std::abs(f[0] - 0.2689) <= 0.01);
  CHECK(std::abs(f[1] - 0.7311) <= 0.01);
}

TEST_CASE("updates are reflected exactly and last write wins") {
  HardnessWeightedSampler s(3, 2.0);
  s.update_loss(1, 0.7);
  s.update_loss(1, 0.3);
  CHECK(s.loss_estimates()[1] == 0.3);
  CHECK(s.initialized_mask()[1]);
  CHECK_FALSE(s.initialized_mask()[0]);
  const auto q = s.probabilities();
  const double z = 2.0 * std::exp(2.0 * 1.0) + std::exp(2.0 * 0.3);
  CHECK(q[1] == doctest::Approx(std::exp(0.6) / z).epsilon(1e-14));
  for (std::size_t i = 0; i < 3; ++i) s.update_loss(i, 0.42);
  for (double x : s.probabilities()) CHECK(std::abs(x - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("large beta concentrates on the hardest sample") {
  HardnessWeightedSampler s(3, 1e6);
  s.update_loss(0, 0.1);
  s.update_loss(1, 0.2);
  s.update_loss(2, 0.1999);
  CHECK(s.probabilities()[1] > 0.999);
}

TEST_CASE("tiny beta degenerates to uniform") {
  HardnessWeightedSampler s(5, 1e-9);
  for (std::size_t i = 0; i < 5; ++i) s.update_loss(i, 0.3 * static_cast<double>(i));
  for (double q : s.probabilities()) CHECK(std::abs(q - 0.2) < 1e-6);
  const auto f = frequencies(s, 100000);
  for (double x : f) CHECK(std::abs(x - 0.2) <= 0.01);
}

TEST_CASE("uniform sampler frequencies") {
  HardnessWeightedSampler s(4, 100.0, 1.0, 123);
  const auto f = frequencies(s, 100000);
  for (double x : f) CHECK(std::abs(x - 0.25) <= 0.01);
}

TEST_CASE("probabilities are shift invariant and monotone") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    const double beta = std::exp(rng.uniform(-3.0, 5.0));
    const double shift = rng.uniform(-5.0, 5.0);
    HardnessWeightedSampler a(n, beta), b(n, beta);
    std::vector<double> losses(n);
    for (std::size_t i = 0; i < n; ++i) {
      losses[i] = rng.uniform(0.0, 2.0);
      a.update_loss(i, losses[i]);
      b.update_loss(i, losses[i] + shift);
    }
    const auto qa = a.probabilities();
    const auto qb = b.probabilities();
    CHECK(std::abs(std::accumulate(qa.begin(), qa.end(), 0.0) - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(qa[i] >= 0.0);
      CHECK(std::abs(qa[i] - qb[i]) <= 1e-12);
    }
    if (n > 1) {
      const std::size_t j = rng.below(n);
      a.update_loss(j, losses[j] + 0.1);
      const double raised = a.probabilities()[j];
      CHECK(raised >= qa[j]);
      // Strict once the old value is not already saturated at 1.
      if (qa[j] < 1.0 - 1e-9) CHECK(raised > qa[j]);
    }
  }
}

TEST_CASE("empirical frequencies converge in L1") {
  HardnessWeightedSampler s(6, 3.0, 1.0, 9);
  for (std::size_t i = 0; i < 6; ++i) s.update_loss(i, 0.1 * static_cast<double>(i));
  const auto q = s.probabilities();
  const auto f = frequencies(s, 100000);
  double l1 = 0.0;
  for (std::size_t i = 0; i < 6; ++i) l1 += std::abs(q[i] - f[i]);
  CHECK(l1 < 0.02);
}

TEST_CASE("sampling is deterministic and resumable through JSON") {
  HardnessWeightedSampler a(5, 10.0, 1.0, 77), b(5, 10.0, 1.0, 77);
  a.update_loss(2, 0.3);
  b.update_loss(2, 0.3);
  CHECK(a.sample_batch(50) == b.sample_batch(50));

  auto restored = HardnessWeightedSampler::from_json(a.to_json());
  CHECK(restored.loss_estimates() == a.loss_estimates());
  CHECK(restored.initialized_mask() == a.initialized_mask());
  CHECK(restored.beta() == a.beta());
  CHECK(restored.sample_batch(50) == a.sample_batch(50));
  CHECK_THROWS_AS(HardnessWeightedSampler::from_json("[1,2"), IoError);
}

#include "segopt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "segopt/error.hpp"
#include "segopt/rng.hpp"

namespace segopt {

namespace {

constexpr double kDivergenceThreshold = 1e6;

// Independent RNG streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kOrderStream = 2;
constexpr std::uint64_t kSamplerStream = 3;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(SamplerMode mode) {
  return mode == SamplerMode::kDro ? "dro" : "erm";
}

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "erm" || name == "erm_shuffle") return SamplerMode::kErmShuffle;
  if (name == "dro") return SamplerMode::kDro;
  throw ConfigError("unknown population loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
  if (uses_distance_matrix(loss) && !distance_matrix) {
    throw ConfigError("train: loss '" + std::string(to_string(loss)) +
                      "' requires a distance matrix");
  }
  if (sampler == SamplerMode::kDro && !(beta > 0.0)) {
    throw ConfigError("train: beta must be > 0");
  }
  if (!is_known_optimizer(optimizer.name)) {
    throw ConfigError("train: unknown optimizer '" + optimizer.name + "'");
  }
  if (!(optimizer.hyper.lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
}

double case_loss(const Model& model, const Case& c, LossKind kind, const DistanceMatrix* m) {
  return composite_loss(kind, forward(model, c.features), c.labels, m, false).value;
}

TrainedModel train(std::span<const Case> dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  const std::size_t n = dataset.size();
  const std::size_t num_classes = dataset.front().labels.num_classes();
  for (const auto& c : dataset) {
    validate_case(c, num_classes);
    if (c.features.cols() != dataset.front().features.cols()) {
      throw ConfigError("train: inconsistent feature width in case '" + c.id + "'");
    }
  }

  const Rng root(config.seed);
  ModelSpec spec;
  spec.kind = config.model;
  spec.input_features = dataset.front().features.cols();
  spec.hidden_width = config.hidden_width;
  spec.num_classes = num_classes;
  spec.seed = root.fork(kInitStream).seed();

  TrainedModel out{Model::initialize(spec), {}, {}, {}};
  auto& params = out.model.params;
  const DistanceMatrix* m = config.distance_matrix ? &*config.distance_matrix : nullptr;

  Optimizer optimizer(config.optimizer);
  Rng order_rng = root.fork(kOrderStream);
  std::optional<HardnessWeightedSampler> sampler;
  if (config.sampler == SamplerMode::kDro) {
    sampler.emplace(n, config.beta, config.init_loss.value_or(loss_upper_bound(config.loss)),
                    root.fork(kSamplerStream).seed());
  }
  const LrSchedule schedule{config.optimizer.hyper.lr, config.epochs, 0.9};
  const double uniform_entropy = std::log(static_cast<double>(n));

  std::vector<double> grad(params.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = poly_lr(schedule, epoch);
    const std::vector<std::size_t> perm =
        sampler ? std::vector<std::size_t>{} : order_rng.permutation(n);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      const std::vector<std::size_t> batch =
          sampler ? sampler->sample_batch(count)
                  : std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                             perm.begin() +
                                                 static_cast<std::ptrdiff_t>(start + count));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t idx : batch) {
        const Case& c = dataset[idx];
        Gradient g;
        try {
          g = backward(out.model, c.features, c.labels, config.loss, m);
        } catch (const NumericalError& e) {
          throw NumericalError("train: divergence at epoch " + std::to_string(epoch) +
                               " (case '" + c.id + "': " + e.what() + ")");
        }
        const double value = g.loss.value;
        if (!std::isfinite(value) || std::abs(value) > kDivergenceThreshold) {
          throw NumericalError("train: divergence at epoch " + std::to_string(epoch) +
                               " (case '" + c.id + "', loss " + fmt_double(value) + ")");
        }
        if (sampler) sampler->update_loss(idx, value);
        epoch_loss += value;
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g.params[k];
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (double& v : grad) v *= inv;
      optimizer.step(params, grad, lr);
      if (!std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); })) {
        throw NumericalError("train: divergence at epoch " + std::to_string(epoch) +
                             " (non-finite parameters)");
      }
    }
    out.log.push_back({epoch, epoch_loss / static_cast<double>(n), lr,
                       sampler ? sampler->entropy() : uniform_entropy});
  }

  if (sampler) {
    out.sampler_probabilities = sampler->probabilities();
    out.sampler_losses = sampler->loss_estimates();
    out.sampler = std::move(sampler);
  }
  return out;
}

void write_training_log(std::ostream& out, std::span<const EpochRecord> log) {
  out << "epoch,loss,lr,sampler_entropy\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << fmt_double(r.mean_loss) << ',' << fmt_double(r.lr) << ','
        << fmt_double(r.sampler_entropy) << '\n';
  }
}

}  // namespace segopt

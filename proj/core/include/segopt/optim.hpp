#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace segopt {

/// Polynomial decay lambda0 * (1 - t / t_max)^exponent, stepped once per epoch.
struct LrSchedule {
  double initial = 1e-2;
  std::size_t t_max = 1000;
  double exponent = 0.9;
};

double poly_lr(const LrSchedule& schedule, std::size_t t);

enum class OptimizerKind { kSgdNesterov, kAdam, kRAdam };

struct OptimizerHyper {
  double lr = 1e-2;
  double momentum = 0.99;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Buffers are sized on the first step and must keep that length afterwards.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgdNesterov;
  OptimizerHyper hyper;
  std::uint64_t step_count = 0;
  std::vector<double> first_moment;   // momentum buffer for SGD
  std::vector<double> second_moment;  // unused by SGD
};

OptimizerState make_optimizer_state(OptimizerKind kind, OptimizerHyper hyper = {});

/// v <- mu v + g; theta <- theta - lr (g + mu v).
void sgd_nesterov_step(OptimizerState& state, std::span<double> params,
                       std::span<const double> grad, double lr);
void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grad,
               double lr);
void radam_step(OptimizerState& state, std::span<double> params, std::span<const double> grad,
                double lr);

/// Variance rectification terms of RAdam at step t (1-based).
struct Rectification {
  double rho_inf = 0.0;
  double rho_t = 0.0;
  bool adaptive = false;  // rho_t > 4
  double factor = 0.0;    // r_t when adaptive, otherwise 0
};

Rectification radam_rectification(double beta2, std::uint64_t t);

/// Dispatches on `state.kind`.
void optimizer_step(OptimizerState& state, std::span<double> params,
                    std::span<const double> grad, double lr);

struct LookaheadState {
  OptimizerState inner;
  std::vector<double> slow_weights;
  std::size_t sync_period = 6;
  double slow_step = 0.5;
  std::size_t inner_counter = 0;
};

LookaheadState make_lookahead(OptimizerState inner, std::size_t sync_period, double slow_step);

/// One fast-weight step; every `sync_period` steps the slow weights move
/// toward the fast weights by `slow_step` and the fast weights are reset to
/// them. Slow weights are taken from `params` on the first call.
void lookahead_step(LookaheadState& state, std::span<double> params,
                    std::span<const double> grad, double lr);

inline constexpr double kRangerDefaultLr = 3e-3;

/// Lookahead around RAdam.
LookaheadState ranger_new(double lr = kRangerDefaultLr, std::size_t sync_period = 6,
                          double slow_step = 0.5);

/// Optimizer selected on the command line.
struct OptimizerConfig {
  std::string name = "sgd";  // sgd | adam | radam | ranger
  OptimizerHyper hyper;
  std::size_t lookahead_k = 6;
  double lookahead_alpha = 0.5;
};

/// Owns either a bare optimizer state or a Lookahead wrapper.
class Optimizer {
 public:
  explicit Optimizer(const OptimizerConfig& config);
  explicit Optimizer(OptimizerState state) : state_(std::move(state)) {}
  explicit Optimizer(LookaheadState state) : state_(std::move(state)) {}

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::uint64_t step_count() const;
  double base_lr() const;

 private:
  std::variant<OptimizerState, LookaheadState> state_;
};

/// Default learning rate for an optimizer name: 1e-2 for sgd, 3e-3 for the
/// adaptive family.
double default_lr(std::string_view optimizer_name);
bool is_known_optimizer(std::string_view optimizer_name);

}  // namespace segopt

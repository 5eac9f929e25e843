#include "segopt/optim.hpp"

#include <cmath>
#include <string>

#include "segopt/error.hpp"

namespace segopt {

namespace {

void prepare(OptimizerState& state, std::span<double> params, std::span<const double> grad,
             const char* who) {
  if (params.size() != grad.size()) {
    throw ConfigError(std::string(who) + ": gradient length " + std::to_string(grad.size()) +
                      " != parameter length " + std::to_string(params.size()));
  }
  if (state.first_moment.empty() && state.step_count == 0) {
    state.first_moment.assign(params.size(), 0.0);
    if (state.kind != OptimizerKind::kSgdNesterov) state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size()) {
    throw ConfigError(std::string(who) + ": parameter length changed between steps");
  }
}

void update_moments(OptimizerState& state, std::span<const double> grad) {
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    state.first_moment[k] = b1 * state.first_moment[k] + (1.0 - b1) * grad[k];
    state.second_moment[k] = b2 * state.second_moment[k] + (1.0 - b2) * grad[k] * grad[k];
  }
}

}  // namespace

double poly_lr(const LrSchedule& schedule, std::size_t t) {
  if (schedule.t_max == 0) throw ConfigError("poly_lr: t_max must be positive");
  if (t > schedule.t_max) {
    throw ConfigError("poly_lr: epoch " + std::to_string(t) + " beyond t_max " +
                      std::to_string(schedule.t_max));
  }
  const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(schedule.t_max);
  return schedule.initial * std::pow(frac, schedule.exponent);
}

OptimizerState make_optimizer_state(OptimizerKind kind, OptimizerHyper hyper) {
  if (!(hyper.lr > 0.0)) throw ConfigError("optimizer: learning rate must be > 0");
  if (hyper.momentum < 0.0 || hyper.momentum >= 1.0) {
    throw ConfigError("optimizer: momentum must be in [0, 1)");
  }
  if (hyper.beta1 < 0.0 || hyper.beta1 >= 1.0 || hyper.beta2 <= 0.0 || hyper.beta2 >= 1.0) {
    throw ConfigError("optimizer: betas must be in [0, 1)");
  }
  OptimizerState s;
  s.kind = kind;
  s.hyper = hyper;
  return s;
}

void sgd_nesterov_step(OptimizerState& state, std::span<double> params,
                       std::span<const double> grad, double lr) {
  prepare(state, params, grad, "sgd_nesterov_step");
  const double mu = state.hyper.momentum;
  auto& v = state.first_moment;
  for (std::size_t k = 0; k < params.size(); ++k) {
    v[k] = mu * v[k] + grad[k];
    params[k] -= lr * (grad[k] + mu * v[k]);
  }
  ++state.step_count;
}

void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grad,
               double lr) {
  prepare(state, params, grad, "adam_step");
  update_moments(state, grad);
  const auto t = static_cast<double>(++state.step_count);
  const double c1 = 1.0 - std::pow(state.hyper.beta1, t);
  const double c2 = 1.0 - std::pow(state.hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double m_hat = state.first_moment[k] / c1;
    const double v_hat = state.second_moment[k] / c2;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + state.hyper.eps);
  }
}

Rectification radam_rectification(double beta2, std::uint64_t t) {
  Rectification r;
  r.rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(t));
  r.rho_t = r.rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
  r.adaptive = r.rho_t > 4.0;
  if (r.adaptive) {
    r.factor = std::sqrt(((r.rho_t - 4.0) * (r.rho_t - 2.0) * r.rho_inf) /
                         ((r.rho_inf - 4.0) * (r.rho_inf - 2.0) * r.rho_t));
  }
  return r;
}

void radam_step(OptimizerState& state, std::span<double> params, std::span<const double> grad,
                double lr) {
  prepare(state, params, grad, "radam_step");
  update_moments(state, grad);
  const std::uint64_t t = ++state.step_count;
  const double c1 = 1.0 - std::pow(state.hyper.beta1, static_cast<double>(t));
  const Rectification rect = radam_rectification(state.hyper.beta2, t);
  if (!rect.adaptive) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      params[k] -= lr * state.first_moment[k] / c1;
    }
    return;
  }
  const double c2 = 1.0 - std::pow(state.hyper.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double m_hat = state.first_moment[k] / c1;
    const double v_hat = state.second_moment[k] / c2;
    params[k] -= lr * rect.factor * m_hat / (std::sqrt(v_hat) + state.hyper.eps);
  }
}

void optimizer_step(OptimizerState& state, std::span<double> params,
                    std::span<const double> grad, double lr) {
  switch (state.kind) {
    case OptimizerKind::kSgdNesterov: sgd_nesterov_step(state, params, grad, lr); return;
    case OptimizerKind::kAdam: adam_step(state, params, grad, lr); return;
    case OptimizerKind::kRAdam: radam_step(state, params, grad, lr); return;
  }
}

LookaheadState make_lookahead(OptimizerState inner, std::size_t sync_period, double slow_step) {
  if (sync_period == 0) throw ConfigError("lookahead: sync period k must be >= 1");
  if (!(slow_step >= 0.0 && slow_step <= 1.0)) {
    throw ConfigError("lookahead: slow step alpha must be in [0, 1]");
  }
  LookaheadState s;
  s.inner = std::move(inner);
  s.sync_period = sync_period;
  s.slow_step = slow_step;
  return s;
}

void lookahead_step(LookaheadState& state, std::span<double> params,
                    std::span<const double> grad, double lr) {
  if (state.slow_weights.empty()) state.slow_weights.assign(params.begin(), params.end());
  if (state.slow_weights.size() != params.size()) {
    throw ConfigError("lookahead_step: parameter length changed between steps");
  }
  optimizer_step(state.inner, params, grad, lr);
  if (++state.inner_counter < state.sync_period) return;

  state.inner_counter = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    // lerp is exact at both endpoints, so alpha = 1 copies the fast weights.
    state.slow_weights[k] = std::lerp(state.slow_weights[k], params[k], state.slow_step);
    params[k] = state.slow_weights[k];
  }
}

LookaheadState ranger_new(double lr, std::size_t sync_period, double slow_step) {
  if (!(slow_step > 0.0)) throw ConfigError("ranger: slow step alpha must be in (0, 1]");
  OptimizerHyper hyper;
  hyper.lr = lr;
  return make_lookahead(make_optimizer_state(OptimizerKind::kRAdam, hyper), sync_period,
                        slow_step);
}

double default_lr(std::string_view optimizer_name) {
  return optimizer_name == "sgd" ? 1e-2 : kRangerDefaultLr;
}

bool is_known_optimizer(std::string_view name) {
  return name == "sgd" || name == "adam" || name == "radam" || name == "ranger";
}

Optimizer::Optimizer(const OptimizerConfig& config) {
  if (config.name == "sgd") {
    state_ = make_optimizer_state(OptimizerKind::kSgdNesterov, config.hyper);
  } else if (config.name == "adam") {
    state_ = make_optimizer_state(OptimizerKind::kAdam, config.hyper);
  } else if (config.name == "radam") {
    state_ = make_optimizer_state(OptimizerKind::kRAdam, config.hyper);
  } else if (config.name == "ranger") {
    LookaheadState la = ranger_new(config.hyper.lr, config.lookahead_k, config.lookahead_alpha);
    la.inner.hyper = config.hyper;
    state_ = std::move(la);
  } else {
    throw ConfigError("unknown optimizer '" + config.name + "'");
  }
}

void Optimizer::step(std::span<double> params, std::span<const double> grad, double lr) {
  std::visit(
      [&](auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, LookaheadState>) {
          lookahead_step(s, params, grad, lr);
        } else {
          optimizer_step(s, params, grad, lr);
        }
      },
      state_);
}

std::uint64_t Optimizer::step_count() const {
  if (const auto* la = std::get_if<LookaheadState>(&state_)) return la->inner.step_count;
  return std::get<OptimizerState>(state_).step_count;
}

double Optimizer::base_lr() const {
  if (const auto* la = std::get_if<LookaheadState>(&state_)) return la->inner.hyper.lr;
  return std::get<OptimizerState>(state_).hyper.lr;
}

}  // namespace segopt

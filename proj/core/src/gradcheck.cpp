#include "segopt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "segopt/numerics.hpp"
#include "segopt/rng.hpp"

namespace segopt {

namespace {

struct Instance {
  NdArray probs;
  NdArray features;
  LabelMap labels;
};

Instance random_instance(Rng& rng, std::size_t max_voxels, std::size_t nl, std::size_t nf) {
  const std::size_t nv = 1 + rng.below(max_voxels);
  NdArray probs({nv, nl});
  NdArray features({nv, nf});
  std::vector<std::uint8_t> labels(nv);
  std::vector<double> logits(nl);
  for (std::size_t i = 0; i < nv; ++i) {
    for (double& z : logits) z = rng.normal();
    const auto p = softmax(logits);
    std::copy(p.begin(), p.end(), probs.row(i).begin());
    for (double& x : features.row(i)) x = rng.normal();
    labels[i] = static_cast<std::uint8_t>(rng.below(nl));
  }
  return {std::move(probs), std::move(features), LabelMap(std::move(labels), nl)};
}

/// Ridders' extrapolation of central differences: starts at step `h` and
/// shrinks it geometrically, extrapolating the tableau to zero step and
/// keeping the estimate with the smallest error. Avoids both the truncation
/// error of a large step and the cancellation error of a tiny one.
template <typename F>
double central_difference(F&& f, double& x, double h) {
  constexpr int kTab = 10;
  constexpr double kShrink = 1.4;
  constexpr double kShrink2 = kShrink * kShrink;
  constexpr double kSafe = 2.0;
  const double saved = x;
  auto diff = [&](double step) {
    x = saved + step;
    const double up = f();
    x = saved - step;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * step);
  };
  double a[kTab][kTab];
  a[0][0] = diff(h);
  double best = a[0][0];
  double err = std::numeric_limits<double>::max();
  for (int i = 1; i < kTab; ++i) {
    h /= kShrink;
    a[0][i] = diff(h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]),
                                std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

/// Largest perturbation of each mlp parameter that keeps every hidden
/// pre-activation on the same side of zero (infinite for the output layer and
/// for the linear model). Uses the layout documented on Model.
std::vector<double> kink_distances(const Model& model, const NdArray& features) {
  const auto& s = model.spec;
  std::vector<double> dist(model.params.size(), std::numeric_limits<double>::infinity());
  if (s.kind != ModelKind::kMlp) return dist;
  const std::size_t nf = s.input_features;
  const std::size_t b1 = s.hidden_width * nf;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto x = features.row(i);
    for (std::size_t h = 0; h < s.hidden_width; ++h) {
      double pre = model.params[b1 + h];
      for (std::size_t f = 0; f < nf; ++f) pre += model.params[h * nf + f] * x[f];
      const double margin = std::abs(pre);
      dist[b1 + h] = std::min(dist[b1 + h], margin);
      for (std::size_t f = 0; f < nf; ++f) {
        if (x[f] != 0.0) dist[h * nf + f] = std::min(dist[h * nf + f], margin / std::abs(x[f]));
      }
    }
  }
  return dist;
}

}  // namespace

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

GradCheckReport check_gradients(LossKind kind, const GradCheckOptions& options,
                                const DistanceMatrix& m) {
  GradCheckReport report;
  report.kind = kind;
  const std::size_t nl = m.num_classes();
  constexpr std::size_t kFeatures = 4;
  Rng rng(options.seed);
  const double h = options.step;
  const double scale = 1.0 + options.inject_fault;

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    Instance inst = random_instance(rng, options.max_voxels, nl, kFeatures);

    // Probability space.
    const LossValue lv = composite_loss(kind, ProbMap(inst.probs), inst.labels, &m, true);
    NdArray probe = inst.probs;
    for (std::size_t k = 0; k < probe.size(); ++k) {
      const double analytic = (*lv.gradient)[k] * scale;
      if (std::abs(analytic) < options.ignore_below) continue;
      const double numeric = central_difference(
          [&] { return composite_loss(kind, ProbMap::unchecked(probe), inst.labels, &m).value; },
          probe[k], std::min(h, 0.5 * probe[k]));
      report.worst_prob_error =
          std::max(report.worst_prob_error, relative_error(analytic, numeric));
      ++report.coords_checked;
    }

    // Parameter space through the softmax head.
    ModelSpec spec{options.model, kFeatures, options.hidden_width, nl, rng.next_u64()};
    Model model = Model::initialize(spec);
    for (double& p : model.params) p = 0.5 * rng.normal();
    const Gradient g = backward(model, inst.features, inst.labels, kind, &m);
    const auto kinks = kink_distances(model, inst.features);
    for (std::size_t k = 0; k < model.params.size(); ++k) {
      const double analytic = g.params[k] * scale;
      if (std::abs(analytic) < options.ignore_below) continue;
      // The loss is not differentiable at a ReLU kink.
      const double start = std::min(options.param_step, 0.5 * kinks[k]);
      if (start < 1e-7) continue;
      const double numeric = central_difference(
          [&] { return composite_loss(kind, forward(model, inst.features), inst.labels, &m).value; },
          model.params[k], start);
      report.worst_param_error =
          std::max(report.worst_param_error, relative_error(analytic, numeric));
      ++report.coords_checked;
    }
    ++report.trials;
  }
  report.passed = report.worst_prob_error <= options.prob_tolerance &&
                  report.worst_param_error <= options.param_tolerance;
  return report;
}

}  // namespace segopt

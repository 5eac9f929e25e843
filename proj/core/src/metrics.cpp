#include "segopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "segopt/error.hpp"
#include "segopt/numerics.hpp"

namespace segopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t a = shape.size(); a-- > 1;) strides[a - 1] = strides[a] * shape[a];
  return strides;
}

/// In-place 1-D squared distance transform (lower envelope of parabolas) of
/// `f` sampled at positions k * step.
void edt_1d(std::vector<double>& f, double step, std::vector<std::size_t>& v,
            std::vector<double>& z, std::vector<double>& out) {
  const std::size_t n = f.size();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  out.assign(n, kInf);
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (!any) {
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      any = true;
      continue;
    }
    const double xq = step * static_cast<double>(q);
    while (true) {
      const double xv = step * static_cast<double>(v[k]);
      const double s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  if (!any) return;
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double xq = step * static_cast<double>(q);
    while (z[k + 1] < xq) ++k;
    const double d = xq - step * static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
  f.swap(out);
}

/// Squared Euclidean distance (mm^2) from every voxel to the nearest nonzero
/// voxel of `seeds`.
std::vector<double> squared_distance_field(std::span<const std::uint8_t> seeds,
                                           const Shape& shape, std::span<const double> spacing) {
  std::vector<double> field(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) field[i] = seeds[i] ? 0.0 : kInf;
  const auto strides = strides_of(shape);
  std::vector<double> line, out, z;
  std::vector<std::size_t> v;
  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    const std::size_t len = shape[axis];
    const std::size_t stride = strides[axis];
    line.resize(len);
    for (std::size_t base = 0; base < field.size(); ++base) {
      // `base` is a line start iff its coordinate on `axis` is zero.
      if ((base / stride) % len != 0) continue;
      for (std::size_t k = 0; k < len; ++k) line[k] = field[base + k * stride];
      edt_1d(line, spacing[axis], v, z, out);
      for (std::size_t k = 0; k < len; ++k) field[base + k * stride] = line[k];
    }
  }
  return field;
}

std::vector<double> directed_surface_distances(std::span<const std::uint8_t> from_surface,
                                               std::span<const double> to_field) {
  std::vector<double> d;
  for (std::size_t i = 0; i < from_surface.size(); ++i) {
    if (from_surface[i]) d.push_back(std::sqrt(to_field[i]));
  }
  return d;
}

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

RegionSpec region_spec(Region region) {
  switch (region) {
    case Region::kEt: return {region, "ET", {kEnhancingTumor}};
    case Region::kWt: return {region, "WT", {kEnhancingTumor, kEdema, kNonEnhancingTumor}};
    case Region::kTc: return {region, "TC", {kEnhancingTumor, kNonEnhancingTumor}};
  }
  throw ConfigError("region_spec: unknown region");
}

std::string_view to_string(Region region) { return region_spec(region).name; }

Mask region_mask(const LabelMap& labels, Region region) {
  const RegionSpec spec = region_spec(region);
  Mask out(labels.voxels(), 0);
  for (std::size_t i = 0; i < labels.voxels(); ++i) {
    out[i] = std::find(spec.label_set.begin(), spec.label_set.end(), labels[i]) !=
             spec.label_set.end();
  }
  return out;
}

double dice_score(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw ConfigError("dice_score: mask length mismatch");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    inter += (a[i] != 0) && (b[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

Mask boundary(std::span<const std::uint8_t> mask, const Shape& spatial_shape) {
  if (shape_size(spatial_shape) != mask.size()) {
    throw ConfigError("boundary: mask does not match spatial shape");
  }
  const auto strides = strides_of(spatial_shape);
  Mask out(mask.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t a = 0; a < spatial_shape.size() && !out[i]; ++a) {
      const std::size_t coord = (i / strides[a]) % spatial_shape[a];
      if (coord == 0 || coord + 1 == spatial_shape[a] || !mask[i - strides[a]] ||
          !mask[i + strides[a]]) {
        out[i] = 1;
      }
    }
  }
  return out;
}

std::optional<double> hd95(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                           const Shape& spatial_shape, std::span<const double> spacing_mm) {
  if (a.size() != b.size() || shape_size(spatial_shape) != a.size()) {
    throw ConfigError("hd95: masks do not match the spatial shape");
  }
  if (spacing_mm.size() != spatial_shape.size()) {
    throw ConfigError("hd95: spacing must have one entry per spatial axis");
  }
  const bool a_empty = std::none_of(a.begin(), a.end(), [](auto x) { return x != 0; });
  const bool b_empty = std::none_of(b.begin(), b.end(), [](auto x) { return x != 0; });
  if (a_empty && b_empty) return 0.0;
  if (a_empty || b_empty) return std::nullopt;

  const Mask surf_a = boundary(a, spatial_shape);
  const Mask surf_b = boundary(b, spatial_shape);
  const auto field_a = squared_distance_field(surf_a, spatial_shape, spacing_mm);
  const auto field_b = squared_distance_field(surf_b, spatial_shape, spacing_mm);
  const double ab = percentile(directed_surface_distances(surf_a, field_b), 95.0);
  const double ba = percentile(directed_surface_distances(surf_b, field_a), 95.0);
  return std::max(ab, ba);
}

CaseMetrics evaluate_case(const LabelMap& pred, const LabelMap& gt,
                          std::span<const double> spacing_mm, std::string case_id) {
  if (pred.spatial_shape() != gt.spatial_shape()) {
    throw ConfigError("evaluate_case: prediction and ground truth grids differ");
  }
  CaseMetrics out{std::move(case_id), {}};
  for (Region r : kRegions) {
    const Mask p = region_mask(pred, r);
    const Mask g = region_mask(gt, r);
    auto& rm = out.regions[static_cast<int>(r)];
    rm.dice = dice_score(p, g);
    rm.hd95 = hd95(p, g, gt.spatial_shape(), spacing_mm);
  }
  return out;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  const std::vector<double> v(values.begin(), values.end());
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(v.size()));
  s.median = percentile(v, 50.0);
  s.q25 = percentile(v, 25.0);
  s.q75 = percentile(v, 75.0);
  s.iqr = s.q75 - s.q25;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

AggregateStats aggregate(std::span<const CaseMetrics> metrics) {
  if (metrics.empty()) throw ConfigError("aggregate: no cases");
  AggregateStats out;
  for (Region r : kRegions) {
    std::vector<double> dice, dist;
    std::size_t excluded = 0;
    for (const auto& m : metrics) {
      dice.push_back(m[r].dice);
      if (m[r].hd95) {
        dist.push_back(*m[r].hd95);
      } else {
        ++excluded;
      }
    }
    const auto idx = static_cast<int>(r);
    out.dice[idx] = summarize(dice);
    out.hd95[idx] = summarize(dist);
    out.hd95[idx].excluded = excluded;
  }
  return out;
}

ProbMap ensemble_mean_softmax(std::span<const ProbMap> preds) {
  if (preds.empty()) throw ConfigError("ensemble_mean_softmax: no predictions");
  const Shape& shape = preds.front().array().shape();
  NdArray acc(shape, 0.0);
  for (const auto& p : preds) {
    if (p.array().shape() != shape) throw ConfigError("ensemble_mean_softmax: shape mismatch");
    const auto src = p.array().data();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += src[k];
  }
  const double inv = 1.0 / static_cast<double>(preds.size());
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] *= inv;
  return ProbMap(std::move(acc));
}

LabelMap postprocess_et(const LabelMap& labels, std::size_t min_et_voxels) {
  const auto src = labels.labels();
  const auto et = static_cast<std::size_t>(std::count(src.begin(), src.end(), kEnhancingTumor));
  if (et == 0 || et >= min_et_voxels) return labels;
  std::vector<std::uint8_t> out(src.begin(), src.end());
  for (auto& l : out) {
    if (l == kEnhancingTumor) l = kNonEnhancingTumor;
  }
  return LabelMap(std::move(out), labels.num_classes(), labels.spatial_shape());
}

void write_case_metrics_csv(std::ostream& out, std::span<const CaseMetrics> metrics) {
  out << "case_id,region,dice,hd95,hd95_defined\n";
  for (const auto& m : metrics) {
    for (Region r : kRegions) {
      out << m.case_id << ',' << to_string(r) << ',' << fmt(m[r].dice) << ','
          << (m[r].hd95 ? fmt(*m[r].hd95) : std::string("nan")) << ','
          << (m[r].hd95 ? 1 : 0) << '\n';
    }
  }
}

void write_aggregate_csv(std::ostream& out, const AggregateStats& stats) {
  out << "metric,region,count,excluded,mean,std,median,iqr\n";
  auto emit = [&](const char* metric, const std::array<Summary, 3>& table) {
    for (Region r : kRegions) {
      const Summary& s = table[static_cast<int>(r)];
      out << metric << ',' << to_string(r) << ',' << s.count << ',' << s.excluded << ',';
      if (s.count == 0) {
        out << "nan,nan,nan,nan\n";
      } else {
        out << fmt(s.mean) << ',' << fmt(s.std) << ',' << fmt(s.median) << ',' << fmt(s.iqr)
            << '\n';
      }
    }
  };
  emit("dice", stats.dice);
  emit("hd95", stats.hd95);
}

std::string format_aggregate_table(const AggregateStats& stats) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-26s %-26s\n", "", "Dice Score (%)",
                "Hausdorff 95% (mm)");
  os << line;
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %8s %8s\n", "", "ET", "WT", "TC", "ET",
                "WT", "TC");
  os << line;
  const char* names[] = {"Mean", "Std", "Median", "IQR"};
  for (int row = 0; row < 4; ++row) {
    std::snprintf(line, sizeof line, "%-8s", names[row]);
    std::string text = line;
    auto cell = [&](const Summary& s, double scale) {
      if (s.count == 0) return std::string("     n/a");
      const double v[] = {s.mean, s.std, s.median, s.iqr};
      return fmt(v[row] * scale, "%8.2f");
    };
    for (Region r : kRegions) text += " " + cell(stats.dice[static_cast<int>(r)], 100.0);
    for (Region r : kRegions) text += " " + cell(stats.hd95[static_cast<int>(r)], 1.0);
    os << text << '\n';
  }
  std::size_t excluded = 0;
  for (const auto& s : stats.hd95) excluded += s.excluded;
  if (excluded > 0) os << "(" << excluded << " undefined HD95 values excluded)\n";
  return os.str();
}

}  // namespace segopt

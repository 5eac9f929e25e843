#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segopt/labels.hpp"
#include "segopt/ndarray.hpp"

namespace segopt {

using Mask = std::vector<std::uint8_t>;

/// Evaluation regions in report order.
enum class Region { kEt = 0, kWt = 1, kTc = 2 };
inline constexpr std::array<Region, 3> kRegions{Region::kEt, Region::kWt, Region::kTc};

struct RegionSpec {
  Region region;
  std::string_view name;
  std::vector<std::uint8_t> label_set;
};

/// ET = {1}, WT = {1, 2, 3}, TC = {1, 3}.
RegionSpec region_spec(Region region);
std::string_view to_string(Region region);

Mask region_mask(const LabelMap& labels, Region region);

/// 2|a & b| / (|a| + |b|); 1 when both masks are empty.
double dice_score(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Voxels of `mask` with at least one face neighbour outside the mask or
/// outside the grid.
Mask boundary(std::span<const std::uint8_t> mask, const Shape& spatial_shape);

/// 95th-percentile symmetric Hausdorff distance in mm between mask surfaces.
/// Returns 0 when both masks are empty and nullopt when exactly one is.
std::optional<double> hd95(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                           const Shape& spatial_shape, std::span<const double> spacing_mm);

struct RegionMetrics {
  double dice = 0.0;
  std::optional<double> hd95;
};

struct CaseMetrics {
  std::string case_id;
  std::array<RegionMetrics, 3> regions;  // indexed by Region

  const RegionMetrics& operator[](Region r) const { return regions[static_cast<int>(r)]; }
};

CaseMetrics evaluate_case(const LabelMap& pred, const LabelMap& gt,
                          std::span<const double> spacing_mm, std::string case_id = {});

struct Summary {
  std::size_t count = 0;     // values included
  std::size_t excluded = 0;  // undefined hd95 values left out
  double mean = 0.0;
  double std = 0.0;  // population
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double iqr = 0.0;
  double min = 0.0;
  double max = 0.0;
};

Summary summarize(std::span<const double> values);

struct AggregateStats {
  std::array<Summary, 3> dice;  // indexed by Region
  std::array<Summary, 3> hd95;
};

AggregateStats aggregate(std::span<const CaseMetrics> metrics);

/// Element-wise mean of M probability maps of identical shape.
ProbMap ensemble_mean_softmax(std::span<const ProbMap> preds);

/// Relabels enhancing tumor as non-enhancing tumor when fewer than
/// `min_et_voxels` voxels are predicted as enhancing tumor.
LabelMap postprocess_et(const LabelMap& labels, std::size_t min_et_voxels = 50);

/// `case_id,region,dice,hd95,hd95_defined`
void write_case_metrics_csv(std::ostream& out, std::span<const CaseMetrics> metrics);
/// `metric,region,count,excluded,mean,std,median,iqr`
void write_aggregate_csv(std::ostream& out, const AggregateStats& stats);
/// Aligned text table: rows Mean/Std/Median/IQR, Dice (%) then HD95 (mm)
/// columns for ET/WT/TC.
std::string format_aggregate_table(const AggregateStats& stats);

}  // namespace segopt

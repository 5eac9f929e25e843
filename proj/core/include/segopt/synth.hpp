#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segopt/dataset.hpp"
#include "segopt/ndarray.hpp"

namespace segopt {

inline constexpr std::size_t kFeatureWidth = 4;
inline constexpr int kManifestVersion = 1;
inline constexpr std::string_view kManifestFormat = "segopt-dataset";

struct SubgroupSpec {
  std::string name;
  std::size_t count = 0;
};

struct SynthConfig {
  Shape grid{16, 16};
  std::vector<SubgroupSpec> subgroups{{"common", 40}, {"rare", 4}};
  double sigma = 0.3;
  double no_et_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Defaults to 1 mm per axis when empty.
  std::vector<double> spacing_mm;

  void validate() const;
  std::size_t total_cases() const;
  std::vector<double> resolved_spacing() const;
};

/// "16x16" or "16x16x8".
Shape parse_grid(std::string_view text);
/// "common:40,rare:4".
std::vector<SubgroupSpec> parse_subgroups(std::string_view text);

/// Mean feature vector of class `label` in subgroup `subgroup_index`. The
/// first subgroup uses full-contrast templates; later subgroups have reduced
/// contrast and an intensity offset.
std::array<double, kFeatureWidth> intensity_template(std::size_t subgroup_index,
                                                     std::uint8_t label);

/// Label whose template is nearest (Euclidean) to `features`.
std::uint8_t nearest_template(std::size_t subgroup_index, std::span<const double> features);

/// Synthesizes cases in memory. Features are rounded to float32 so that the
/// result equals what `load_dataset` returns after `write_dataset`.
std::vector<Case> generate_cases(const SynthConfig& config);

struct ManifestEntry {
  std::string id;
  std::string subgroup;
  std::string feature_file;  // relative to the manifest directory
  std::string label_file;
  Shape grid_shape;
  std::vector<double> spacing_mm;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::size_t num_classes = 4;
  std::size_t feature_width = kFeatureWidth;
  std::vector<double> spacing_mm;
  std::vector<ManifestEntry> cases;
};

/// Writes `manifest.json` plus per-case `cases/<id>.f32` (little-endian
/// float32, [V, F]) and `cases/<id>.u8` label files under `dir`.
DatasetManifest write_dataset(std::span<const Case> cases, const std::filesystem::path& dir);

/// generate_cases followed by write_dataset.
DatasetManifest generate(const SynthConfig& config, const std::filesystem::path& dir);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
std::vector<Case> load_dataset(const std::filesystem::path& manifest_path);

}  // namespace segopt

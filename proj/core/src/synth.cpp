#include "segopt/synth.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "segopt/error.hpp"
#include "segopt/labels.hpp"
#include "segopt/rng.hpp"

namespace segopt {

namespace {

constexpr std::size_t kMinExtent = 8;
constexpr std::size_t kMaxExtent = 32;

// Whole-tumor radius as a fraction of the grid extent, then nested shrink
// factors for tumor core and enhancing tumor.
constexpr double kWtRadiusLo = 0.2;
constexpr double kWtRadiusHi = 0.35;
constexpr double kTcShrinkLo = 0.5;
constexpr double kTcShrinkHi = 0.7;
constexpr double kEtShrinkLo = 0.4;
constexpr double kEtShrinkHi = 0.6;

// Channel templates per class: background, ET, edema, NET.
constexpr std::array<std::array<double, kFeatureWidth>, 4> kBaseTemplates{{
    {0.0, 0.0, 0.0, 0.0},
    {0.5, 1.0, 0.4, 0.5},
    {0.1, 0.2, 0.8, 1.0},
    {0.3, 0.3, 1.0, 0.4},
}};

constexpr double kMinorityContrast = 0.6;
constexpr std::array<double, kFeatureWidth> kMinorityOffset{0.35, -0.2, 0.45, 0.3};

std::size_t parse_size(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("cannot parse " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

void put_le32(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  char bytes[4];
  for (int k = 0; k < 4; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
  out.write(bytes, 4);
}

float get_le32(const unsigned char* bytes) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dataset: missing file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Shape parse_grid(std::string_view text) {
  Shape out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find('x', start);
    out.push_back(parse_size(text.substr(start, pos - start), "grid extent"));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<SubgroupSpec> parse_subgroups(std::string_view text) {
  std::vector<SubgroupSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = std::min(text.find(',', start), text.size());
    const auto item = text.substr(start, pos - start);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw ConfigError("cannot parse subgroup '" + std::string(item) + "' (want name:count)");
    }
    out.push_back({std::string(item.substr(0, colon)),
                   parse_size(item.substr(colon + 1), "subgroup count")});
    start = pos + 1;
  }
  return out;
}

void SynthConfig::validate() const {
  if (grid.size() != 2 && grid.size() != 3) throw ConfigError("synth: grid must be 2-D or 3-D");
  for (std::size_t e : grid) {
    if (e > kMaxExtent) throw ConfigError("synth: grid extents must be <= 32");
    if (e < kMinExtent) {
      throw ConfigError("synth: grid extent " + std::to_string(e) +
                        " too small for nested tumor regions (need >= 8)");
    }
  }
  if (subgroups.empty()) throw ConfigError("synth: at least one subgroup required");
  std::set<std::string> names;
  for (const auto& s : subgroups) {
    if (s.name.empty() || !names.insert(s.name).second) {
      throw ConfigError("synth: subgroup names must be unique and non-empty");
    }
  }
  if (total_cases() == 0) throw ConfigError("synth: total cases must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("synth: sigma must be >= 0");
  if (!(no_et_fraction >= 0.0 && no_et_fraction <= 1.0)) {
    throw ConfigError("synth: no-ET fraction must be in [0, 1]");
  }
  if (!spacing_mm.empty()) {
    if (spacing_mm.size() != grid.size()) throw ConfigError("synth: one spacing per axis");
    for (double s : spacing_mm) {
      if (!(s > 0.0)) throw ConfigError("synth: spacing must be > 0");
    }
  }
}

std::size_t SynthConfig::total_cases() const {
  std::size_t n = 0;
  for (const auto& s : subgroups) n += s.count;
  return n;
}

std::vector<double> SynthConfig::resolved_spacing() const {
  return spacing_mm.empty() ? std::vector<double>(grid.size(), 1.0) : spacing_mm;
}

std::array<double, kFeatureWidth> intensity_template(std::size_t subgroup_index,
                                                     std::uint8_t label) {
  if (label >= kBaseTemplates.size()) throw ConfigError("intensity_template: bad label");
  auto t = kBaseTemplates[label];
  if (subgroup_index == 0) return t;
  for (std::size_t c = 0; c < kFeatureWidth; ++c) {
    t[c] = kMinorityOffset[c] + kMinorityContrast * t[c];
  }
  return t;
}

std::uint8_t nearest_template(std::size_t subgroup_index, std::span<const double> features) {
  std::uint8_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint8_t l = 0; l < kBaseTemplates.size(); ++l) {
    const auto t = intensity_template(subgroup_index, l);
    double d = 0.0;
    for (std::size_t c = 0; c < kFeatureWidth; ++c) d += (features[c] - t[c]) * (features[c] - t[c]);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

std::vector<Case> generate_cases(const SynthConfig& config) {
  config.validate();
  const Shape& grid = config.grid;
  const std::size_t dims = grid.size();
  const std::size_t nv = shape_size(grid);
  const std::size_t total = config.total_cases();
  const auto spacing = config.resolved_spacing();

  Rng rng(config.seed);
  // Exactly round(fraction * total) cases omit the enhancing tumor.
  const auto no_et_count =
      static_cast<std::size_t>(std::llround(config.no_et_fraction * static_cast<double>(total)));
  const auto order = rng.permutation(total);
  std::vector<bool> omit_et(total, false);
  for (std::size_t k = 0; k < no_et_count; ++k) omit_et[order[k]] = true;

  std::vector<Case> cases;
  cases.reserve(total);
  std::size_t case_index = 0;
  for (std::size_t g = 0; g < config.subgroups.size(); ++g) {
    const auto& sub = config.subgroups[g];
    for (std::size_t k = 0; k < sub.count; ++k, ++case_index) {
      std::vector<double> center(dims), r_wt(dims), r_tc(dims), r_et(dims);
      const double tc_shrink = rng.uniform(kTcShrinkLo, kTcShrinkHi);
      const double et_shrink = rng.uniform(kEtShrinkLo, kEtShrinkHi);
      for (std::size_t a = 0; a < dims; ++a) {
        const auto extent = static_cast<double>(grid[a]);
        r_wt[a] = extent * rng.uniform(kWtRadiusLo, kWtRadiusHi);
        center[a] = rng.uniform(r_wt[a], extent - 1.0 - r_wt[a]);
        r_tc[a] = r_wt[a] * tc_shrink;
        r_et[a] = r_tc[a] * et_shrink;
      }

      std::vector<std::uint8_t> labels(nv, kBackground);
      NdArray features({nv, kFeatureWidth});
      std::vector<std::size_t> idx(dims, 0);
      for (std::size_t v = 0; v < nv; ++v) {
        double q_wt = 0.0, q_tc = 0.0, q_et = 0.0;
        for (std::size_t a = 0; a < dims; ++a) {
          const double d = static_cast<double>(idx[a]) - center[a];
          q_wt += (d / r_wt[a]) * (d / r_wt[a]);
          q_tc += (d / r_tc[a]) * (d / r_tc[a]);
          q_et += (d / r_et[a]) * (d / r_et[a]);
        }
        std::uint8_t l = kBackground;
        if (q_wt <= 1.0) l = kEdema;
        if (q_tc <= 1.0) l = kNonEnhancingTumor;
        if (q_et <= 1.0 && !omit_et[case_index]) l = kEnhancingTumor;
        labels[v] = l;

        const auto t = intensity_template(g, l);
        auto row = features.row(v);
        for (std::size_t c = 0; c < kFeatureWidth; ++c) {
          const double noisy = config.sigma > 0.0 ? t[c] + config.sigma * rng.normal() : t[c];
          row[c] = static_cast<double>(static_cast<float>(noisy));
        }
        for (std::size_t a = dims; a-- > 0;) {
          if (++idx[a] < grid[a]) break;
          idx[a] = 0;
        }
      }

      char id[64];
      std::snprintf(id, sizeof id, "%s_%03zu", sub.name.c_str(), k);
      cases.push_back(Case{id, std::move(features),
                           LabelMap(std::move(labels), kNumBratsClasses, grid), sub.name,
                           spacing});
    }
  }
  return cases;
}

DatasetManifest write_dataset(std::span<const Case> cases, const std::filesystem::path& dir) {
  if (cases.empty()) throw ConfigError("write_dataset: no cases");
  std::filesystem::create_directories(dir / "cases");
  DatasetManifest manifest;
  manifest.num_classes = cases.front().labels.num_classes();
  manifest.feature_width = cases.front().features.cols();
  manifest.spacing_mm = cases.front().spacing_mm;

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& c : cases) {
    validate_case(c, manifest.num_classes);
    ManifestEntry e{c.id,
                    c.subgroup,
                    "cases/" + c.id + ".f32",
                    "cases/" + c.id + ".u8",
                    c.labels.spatial_shape(),
                    c.spacing_mm};
    {
      std::ofstream out(dir / e.feature_file, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("write_dataset: cannot write " + (dir / e.feature_file).string());
      for (double v : c.features.values()) put_le32(out, static_cast<float>(v));
    }
    {
      std::ofstream out(dir / e.label_file, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("write_dataset: cannot write " + (dir / e.label_file).string());
      const auto l = c.labels.labels();
      out.write(reinterpret_cast<const char*>(l.data()), static_cast<std::streamsize>(l.size()));
    }
    entries.push_back({{"id", e.id},
                       {"subgroup", e.subgroup},
                       {"feature_file", e.feature_file},
                       {"label_file", e.label_file},
                       {"grid_shape", e.grid_shape},
                       {"spacing_mm", e.spacing_mm}});
    manifest.cases.push_back(std::move(e));
  }

  const nlohmann::json doc{{"format", kManifestFormat},
                           {"version", manifest.version},
                           {"num_classes", manifest.num_classes},
                           {"feature_width", manifest.feature_width},
                           {"spacing_mm", manifest.spacing_mm},
                           {"cases", entries}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("write_dataset: cannot write manifest");
  out << doc.dump(2) << '\n';
  return manifest;
}

DatasetManifest generate(const SynthConfig& config, const std::filesystem::path& dir) {
  const auto cases = generate_cases(config);
  return write_dataset(cases, dir);
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("dataset: missing manifest " + manifest_path.string());
  DatasetManifest m;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.value("format", std::string{}) != kManifestFormat) {
      throw IoError("dataset: bad magic in " + manifest_path.string() +
                    " (expected format \"" + std::string(kManifestFormat) + "\")");
    }
    m.version = doc.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw IoError("dataset: unsupported manifest version " + std::to_string(m.version));
    }
    m.num_classes = doc.at("num_classes").get<std::size_t>();
    m.feature_width = doc.at("feature_width").get<std::size_t>();
    m.spacing_mm = doc.at("spacing_mm").get<std::vector<double>>();
    for (const auto& e : doc.at("cases")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.subgroup = e.at("subgroup").get<std::string>();
      entry.feature_file = e.at("feature_file").get<std::string>();
      entry.label_file = e.at("label_file").get<std::string>();
      entry.grid_shape = e.at("grid_shape").get<Shape>();
      entry.spacing_mm = e.value("spacing_mm", m.spacing_mm);
      m.cases.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("dataset: malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (m.num_classes == 0 || m.num_classes > 256 || m.feature_width == 0) {
    throw IoError("dataset: invalid num_classes / feature_width in manifest");
  }
  return m;
}

std::vector<Case> load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  std::vector<Case> cases;
  cases.reserve(m.cases.size());
  for (const auto& e : m.cases) {
    const std::size_t nv = shape_size(e.grid_shape);
    const auto fpath = root / e.feature_file;
    const auto lpath = root / e.label_file;
    const auto fbytes = read_bytes(fpath);
    if (fbytes.size() != nv * m.feature_width * 4) {
      throw IoError("dataset: size mismatch in " + fpath.string() + " (expected " +
                    std::to_string(nv * m.feature_width * 4) + " bytes, found " +
                    std::to_string(fbytes.size()) + ")");
    }
    auto lbytes = read_bytes(lpath);
    if (lbytes.size() != nv) {
      throw IoError("dataset: size mismatch in " + lpath.string() + " (expected " +
                    std::to_string(nv) + " bytes, found " + std::to_string(lbytes.size()) +
                    ")");
    }
    std::vector<double> values(nv * m.feature_width);
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = get_le32(fbytes.data() + 4 * k);
    std::vector<std::uint8_t> labels(lbytes.begin(), lbytes.end());
    Case c{e.id, NdArray({nv, m.feature_width}, std::move(values)),
           LabelMap(std::move(labels), m.num_classes, e.grid_shape), e.subgroup, e.spacing_mm};
    validate_case(c, m.num_classes);
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace segopt

#include "segopt/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "segopt/error.hpp"
#include "segopt/numerics.hpp"
#include "segopt/rng.hpp"

namespace segopt {

namespace {

struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;  // offsets into params
};

Layout layout_of(const ModelSpec& s) {
  Layout l;
  if (s.kind == ModelKind::kLinear) {
    l.w1 = 0;
    l.b1 = s.num_classes * s.input_features;
  } else {
    l.w1 = 0;
    l.b1 = s.hidden_width * s.input_features;
    l.w2 = l.b1 + s.hidden_width;
    l.b2 = l.w2 + s.num_classes * s.hidden_width;
  }
  return l;
}

void check_features(const Model& model, const NdArray& features) {
  if (features.rank() != 2 || features.cols() != model.spec.input_features) {
    throw ConfigError("model: expected features of width " +
                      std::to_string(model.spec.input_features));
  }
  if (model.params.size() != model.spec.param_count()) {
    throw ConfigError("model: parameter count does not match spec");
  }
}

/// Logits for one voxel; `hidden` receives pre-activations for the mlp.
void voxel_logits(const Model& model, const Layout& lay, std::span<const double> x,
                  std::span<double> hidden_pre, std::span<double> logits) {
  const auto& s = model.spec;
  const auto& p = model.params;
  if (s.kind == ModelKind::kLinear) {
    for (std::size_t l = 0; l < s.num_classes; ++l) {
      double z = p[lay.b1 + l];
      for (std::size_t f = 0; f < s.input_features; ++f) {
        z += p[lay.w1 + l * s.input_features + f] * x[f];
      }
      logits[l] = z;
    }
    return;
  }
  for (std::size_t h = 0; h < s.hidden_width; ++h) {
    double a = p[lay.b1 + h];
    for (std::size_t f = 0; f < s.input_features; ++f) {
      a += p[lay.w1 + h * s.input_features + f] * x[f];
    }
    hidden_pre[h] = a;
  }
  for (std::size_t l = 0; l < s.num_classes; ++l) {
    double z = p[lay.b2 + l];
    for (std::size_t h = 0; h < s.hidden_width; ++h) {
      z += p[lay.w2 + l * s.hidden_width + h] * std::max(hidden_pre[h], 0.0);
    }
    logits[l] = z;
  }
}

void check_logits(std::span<const double> logits, std::size_t voxel) {
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw NumericalError("model: non-finite logit at voxel " + std::to_string(voxel));
    }
  }
}

void put_le64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
  out.write(bytes, 8);
}

double get_le64(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::kLinear ? "linear" : "mlp";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear") return ModelKind::kLinear;
  if (name == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  if (input_features == 0 || num_classes == 0) {
    throw ConfigError("model spec: features and classes must be >= 1");
  }
  if (kind == ModelKind::kMlp && hidden_width == 0) {
    throw ConfigError("model spec: hidden width must be >= 1");
  }
}

std::size_t ModelSpec::param_count() const {
  if (kind == ModelKind::kLinear) return num_classes * (input_features + 1);
  return hidden_width * (input_features + 1) + num_classes * (hidden_width + 1);
}

Model Model::initialize(const ModelSpec& spec) {
  spec.validate();
  Model m{spec, std::vector<double>(spec.param_count(), 0.0)};
  const Layout lay = layout_of(spec);
  Rng rng(spec.seed);
  auto fill = [&](std::size_t offset, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) m.params[offset + k] = rng.uniform(-0.1, 0.1);
  };
  if (spec.kind == ModelKind::kLinear) {
    fill(lay.w1, spec.num_classes * spec.input_features);
  } else {
    fill(lay.w1, spec.hidden_width * spec.input_features);
    fill(lay.w2, spec.num_classes * spec.hidden_width);
  }
  return m;
}

ProbMap forward(const Model& model, const NdArray& features) {
  check_features(model, features);
  const auto& s = model.spec;
  const Layout lay = layout_of(s);
  const std::size_t nv = features.rows();
  NdArray probs({nv, s.num_classes});
  std::vector<double> hidden(s.kind == ModelKind::kMlp ? s.hidden_width : 0);
  std::vector<double> logits(s.num_classes);
  for (std::size_t i = 0; i < nv; ++i) {
    voxel_logits(model, lay, features.row(i), hidden, logits);
    check_logits(logits, i);
    const auto p = softmax(logits);
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }
  return ProbMap(std::move(probs));
}

Gradient backward(const Model& model, const NdArray& features, const LabelMap& gt,
                  LossKind kind, const DistanceMatrix* m) {
  check_features(model, features);
  const auto& s = model.spec;
  const Layout lay = layout_of(s);
  const std::size_t nv = features.rows();
  const std::size_t nl = s.num_classes;
  const std::size_t nh = s.kind == ModelKind::kMlp ? s.hidden_width : 0;

  NdArray hidden_pre({nv, std::max<std::size_t>(nh, 1)});
  NdArray probs({nv, nl});
  std::vector<double> logits(nl);
  for (std::size_t i = 0; i < nv; ++i) {
    voxel_logits(model, lay, features.row(i), hidden_pre.row(i).first(nh), logits);
    check_logits(logits, i);
    const auto p = softmax(logits);
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }

  const ProbMap pmap(std::move(probs));
  Gradient out{composite_loss(kind, pmap, gt, m, true),
               std::vector<double>(model.params.size(), 0.0)};
  const NdArray& dloss_dp = *out.loss.gradient;
  const auto& p = model.params;
  auto& g = out.params;

  std::vector<double> dz(nl);
  std::vector<double> dhidden(nh);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto prow = pmap.row(i);
    const auto grow = dloss_dp.row(i);
    double dot = 0.0;
    for (std::size_t l = 0; l < nl; ++l) dot += prow[l] * grow[l];
    for (std::size_t l = 0; l < nl; ++l) dz[l] = prow[l] * (grow[l] - dot);

    const auto x = features.row(i);
    if (s.kind == ModelKind::kLinear) {
      for (std::size_t l = 0; l < nl; ++l) {
        for (std::size_t f = 0; f < s.input_features; ++f) {
          g[lay.w1 + l * s.input_features + f] += dz[l] * x[f];
        }
        g[lay.b1 + l] += dz[l];
      }
      continue;
    }
    const auto pre = hidden_pre.row(i);
    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (std::size_t l = 0; l < nl; ++l) {
      for (std::size_t h = 0; h < nh; ++h) {
        g[lay.w2 + l * nh + h] += dz[l] * std::max(pre[h], 0.0);
        dhidden[h] += p[lay.w2 + l * nh + h] * dz[l];
      }
      g[lay.b2 + l] += dz[l];
    }
    for (std::size_t h = 0; h < nh; ++h) {
      if (pre[h] <= 0.0) continue;
      for (std::size_t f = 0; f < s.input_features; ++f) {
        g[lay.w1 + h * s.input_features + f] += dhidden[h] * x[f];
      }
      g[lay.b1 + h] += dhidden[h];
    }
  }
  return out;
}

NdArray flip_grid(const NdArray& values, const Shape& spatial_shape, unsigned axis_mask) {
  if (values.rank() != 2 || values.rows() != shape_size(spatial_shape)) {
    throw ConfigError("flip_grid: spatial shape does not match voxel count");
  }
  const std::size_t dims = spatial_shape.size();
  NdArray out(values.shape());
  std::vector<std::size_t> idx(dims, 0);
  for (std::size_t v = 0; v < values.rows(); ++v) {
    std::size_t target = 0;
    for (std::size_t a = 0; a < dims; ++a) {
      const std::size_t coord =
          (axis_mask >> a) & 1U ? spatial_shape[a] - 1 - idx[a] : idx[a];
      target = target * spatial_shape[a] + coord;
    }
    const auto src = values.row(v);
    std::copy(src.begin(), src.end(), out.row(target).begin());
    for (std::size_t a = dims; a-- > 0;) {
      if (++idx[a] < spatial_shape[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

ProbMap predict_tta(const Model& model, const NdArray& features, const Shape& spatial_shape) {
  check_features(model, features);
  if (spatial_shape.empty() || shape_size(spatial_shape) != features.rows()) {
    throw ConfigError("predict_tta: spatial shape does not match voxel count");
  }
  const unsigned variants = 1U << spatial_shape.size();
  NdArray acc({features.rows(), model.spec.num_classes}, 0.0);
  for (unsigned mask = 0; mask < variants; ++mask) {
    const ProbMap p = forward(model, flip_grid(features, spatial_shape, mask));
    const NdArray back = flip_grid(p.array(), spatial_shape, mask);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += back[k];
  }
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] /= static_cast<double>(variants);
  return ProbMap(std::move(acc));
}

std::filesystem::path save_model(const Model& model, const std::filesystem::path& dir,
                                 std::string_view stem) {
  std::filesystem::create_directories(dir);
  const std::string bin_name = std::string(stem) + ".bin";
  const auto json_path = dir / (std::string(stem) + ".json");
  {
    std::ofstream bin(dir / bin_name, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("save_model: cannot write " + (dir / bin_name).string());
    for (double v : model.params) put_le64(bin, v);
  }
  const auto& s = model.spec;
  nlohmann::json doc{
      {"spec",
       {{"kind", to_string(s.kind)},
        {"input_features", s.input_features},
        {"hidden_width", s.hidden_width},
        {"num_classes", s.num_classes},
        {"seed", s.seed}}},
      {"param_file", bin_name},
      {"param_count", model.params.size()}};
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("save_model: cannot write " + json_path.string());
  out << doc.dump(2) << '\n';
  return json_path;
}

Model load_model(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("load_model: cannot open " + json_path.string());
  Model m;
  std::string param_file;
  std::size_t count = 0;
  try {
    const auto doc = nlohmann::json::parse(in);
    const auto& s = doc.at("spec");
    m.spec.kind = parse_model_kind(s.at("kind").get<std::string>());
    m.spec.input_features = s.at("input_features").get<std::size_t>();
    m.spec.hidden_width = s.at("hidden_width").get<std::size_t>();
    m.spec.num_classes = s.at("num_classes").get<std::size_t>();
    m.spec.seed = s.at("seed").get<std::uint64_t>();
    param_file = doc.at("param_file").get<std::string>();
    count = doc.at("param_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_model: malformed " + json_path.string() + ": " + e.what());
  }
  m.spec.validate();
  if (count != m.spec.param_count()) {
    throw IoError("load_model: param_count does not match spec in " + json_path.string());
  }
  const auto bin_path = json_path.parent_path() / param_file;
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("load_model: cannot open " + bin_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != count * 8) {
    throw IoError("load_model: size mismatch in " + bin_path.string());
  }
  m.params.resize(count);
  for (std::size_t k = 0; k < count; ++k) m.params[k] = get_le64(bytes.data() + 8 * k);
  return m;
}

}  // namespace segopt

#include "segopt/distance_matrix.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "segopt/error.hpp"

namespace segopt {

namespace {

std::string pair_name(std::size_t a, std::size_t b) {
  return "(" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

}  // namespace

void validate_distance_matrix(const NdArray& m, std::size_t background_index) {
  if (m.rank() != 2 || m.rows() != m.cols()) {
    throw ConfigError("distance matrix: must be square");
  }
  const std::size_t n = m.rows();
  if (background_index >= n) throw ConfigError("distance matrix: background index out of range");
  for (std::size_t a = 0; a < n; ++a) {
    if (m.at({a, a}) != 0.0) {
      throw ConfigError("distance matrix: nonzero diagonal at " + pair_name(a, a));
    }
    for (std::size_t b = 0; b < n; ++b) {
      const double v = m.at({a, b});
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw ConfigError("distance matrix: entry out of range [0, 1] at " + pair_name(a, b));
      }
      if (v != m.at({b, a})) {
        throw ConfigError("distance matrix: asymmetric at " + pair_name(a, b));
      }
      if (a != b && (a == background_index || b == background_index) && v != 1.0) {
        throw ConfigError("distance matrix: background distance must be 1 at " +
                          pair_name(a, b));
      }
    }
  }
}

DistanceMatrix::DistanceMatrix(NdArray m, std::size_t background_index)
    : m_(std::move(m)), background_(background_index) {
  validate_distance_matrix(m_, background_);
}

DistanceMatrix DistanceMatrix::brats() {
  return DistanceMatrix(NdArray({4, 4}, {0.0, 1.0, 1.0, 1.0,  //
                                         1.0, 0.0, 0.6, 0.5,  //
                                         1.0, 0.6, 0.0, 0.7,  //
                                         1.0, 0.5, 0.7, 0.0}),
                        0);
}

DistanceMatrix DistanceMatrix::identity_complement(std::size_t num_classes,
                                                   std::size_t background_index) {
  NdArray m({num_classes, num_classes}, 1.0);
  for (std::size_t l = 0; l < num_classes; ++l) m.set({l, l}, 0.0);
  return DistanceMatrix(std::move(m), background_index);
}

DistanceMatrix DistanceMatrix::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("distance matrix: invalid JSON: ") + e.what());
  }
  if (!doc.contains("matrix") || !doc["matrix"].is_array()) {
    throw ConfigError("distance matrix: missing \"matrix\" array");
  }
  const auto& rows = doc["matrix"];
  const std::size_t n = rows.size();
  if (n == 0) throw ConfigError("distance matrix: empty matrix");
  std::vector<double> values;
  values.reserve(n * n);
  for (const auto& r : rows) {
    if (!r.is_array() || r.size() != n) throw ConfigError("distance matrix: must be square");
    for (const auto& v : r) {
      if (!v.is_number()) throw ConfigError("distance matrix: non-numeric entry");
      values.push_back(v.get<double>());
    }
  }
  const std::size_t b = doc.value("background_index", std::size_t{0});
  return DistanceMatrix(NdArray({n, n}, std::move(values)), b);
}

DistanceMatrix DistanceMatrix::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("distance matrix: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string DistanceMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t a = 0; a < num_classes(); ++a) {
    rows.push_back(std::vector<double>(m_.row(a).begin(), m_.row(a).end()));
  }
  return nlohmann::json{{"background_index", background_}, {"matrix", rows}}.dump();
}

}  // namespace segopt

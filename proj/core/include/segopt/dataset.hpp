#pragma once

#include <string>
#include <vector>

#include "segopt/labels.hpp"
#include "segopt/ndarray.hpp"

namespace segopt {

/// One training or evaluation volume.
struct Case {
  std::string id;
  NdArray features;  // [V, F]
  LabelMap labels;
  std::string subgroup;
  std::vector<double> spacing_mm;
};

/// Throws ConfigError when features and labels disagree.
void validate_case(const Case& c, std::size_t num_classes);

}  // namespace segopt

#include "segopt/dataset.hpp"

#include <string>

#include "segopt/error.hpp"

namespace segopt {

void validate_case(const Case& c, std::size_t num_classes) {
  if (c.features.rank() != 2 || c.features.rows() != c.labels.voxels()) {
    throw ConfigError("case '" + c.id + "': feature rows do not match label voxels");
  }
  if (c.labels.num_classes() != num_classes) {
    throw ConfigError("case '" + c.id + "': class count mismatch");
  }
  if (!c.features.all_finite()) throw ConfigError("case '" + c.id + "': non-finite features");
}

}  // namespace segopt

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "segopt/ndarray.hpp"

namespace segopt {

/// Checks that `m` is a square, symmetric, zero-diagonal matrix with entries in
/// [0, 1] whose background row and column are 1 off the diagonal. Throws
/// ConfigError naming the offending pair.
void validate_distance_matrix(const NdArray& m, std::size_t background_index);

/// Ground distances between classes.
class DistanceMatrix {
 public:
  DistanceMatrix(NdArray m, std::size_t background_index);

  /// The 4x4 matrix for background / enhancing tumor / edema / non-enhancing
  /// tumor.
  static DistanceMatrix brats();
  /// 1 everywhere off the diagonal; reduces GWDL to a soft Dice over
  /// foreground.
  static DistanceMatrix identity_complement(std::size_t num_classes,
                                            std::size_t background_index = 0);

  static DistanceMatrix from_json(const std::string& text);
  static DistanceMatrix load(const std::filesystem::path& path);
  std::string to_json() const;

  std::size_t num_classes() const noexcept { return m_.rows(); }
  std::size_t background_index() const noexcept { return background_; }
  double operator()(std::size_t l, std::size_t lp) const { return m_[l * m_.cols() + lp]; }
  std::span<const double> row(std::size_t l) const { return m_.row(l); }
  const NdArray& matrix() const noexcept { return m_; }

 private:
  NdArray m_;
  std::size_t background_;
};

}  // namespace segopt

#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "volnorm/tensor.hpp"

namespace volnorm::tk {

/// One named array in a parameter checkpoint.
struct NamedArray {
  std::string name;
  Shape shape;
  Eigen::ArrayXf values;
};

// Parameter container: 8-byte magic "VOLNORM1", then per-array records of
//   u32 name length | name bytes | u32 rank | u32 dims[rank] |
//   little-endian 32-bit real payload
// repeated to end of file. Round trips are bit-exact.

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedArray>& arrays);

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

}  // namespace volnorm::tk

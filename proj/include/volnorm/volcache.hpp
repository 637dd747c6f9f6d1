#pragma once

#include <filesystem>

#include "volnorm/volume.hpp"

namespace volnorm {

// Binary array container for cached volumes: 8-byte magic "VOLCACHE",
// one version byte (1), one rank byte (3 for volumes), little-endian u32
// dims, then the 32-bit real payload. Bit-exact round trip. Spacing,
// orientation and modality are pipeline metadata carried by the manifest,
// not the container; loads default them.

void save_volcache(const std::filesystem::path& path, const Volume3D& vol);

Volume3D load_volcache(const std::filesystem::path& path);

}  // namespace volnorm

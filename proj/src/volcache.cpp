#include "volnorm/volcache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "volnorm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "volcache serialization assumes a little-endian host");

namespace volnorm {

namespace {
constexpr char kMagic[8] = {'V', 'O', 'L', 'C', 'A', 'C', 'H', 'E'};
constexpr unsigned char kVersion = 1;
}  // namespace

void save_volcache(const std::filesystem::path& path, const Volume3D& vol) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 8);
  out.put(static_cast<char>(kVersion));
  out.put(3);  // rank
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(vol.slices()),
                                 static_cast<std::uint32_t>(vol.rows()),
                                 static_cast<std::uint32_t>(vol.cols())};
  out.write(reinterpret_cast<const char*>(dims), 12);
  out.write(reinterpret_cast<const char*>(vol.values().data()),
            static_cast<std::streamsize>(vol.numel() * 4));
  if (!out) throw IoError("failed writing " + path.string());
}

Volume3D load_volcache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw MalformedHeader("not a VOLCACHE file: " + path.string());
  }
  const int version = in.get();
  if (version != kVersion) {
    throw MalformedHeader("unsupported VOLCACHE version");
  }
  const int rank = in.get();
  if (rank != 3) throw MalformedHeader("VOLCACHE rank must be 3 for volumes");
  std::uint32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), 12);
  if (in.gcount() != 12) throw TruncatedData("VOLCACHE dims cut short");
  for (auto d : dims) {
    if (d == 0) throw MalformedHeader("zero VOLCACHE dimension");
  }
  Volume3D vol(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
               static_cast<int>(dims[2]), Orientation::Coronal,
               {1.0f, 1.0f, 1.0f});
  in.read(reinterpret_cast<char*>(vol.values().data()), vol.numel() * 4);
  if (in.gcount() != static_cast<std::streamsize>(vol.numel() * 4)) {
    throw TruncatedData("VOLCACHE payload cut short");
  }
  return vol;
}

}  // namespace volnorm

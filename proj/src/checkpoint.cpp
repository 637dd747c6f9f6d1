#include "volnorm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "volnorm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace volnorm::tk {

namespace {

constexpr char kMagic[8] = {'V', 'O', 'L', 'N', 'O', 'R', 'M', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (in.gcount() != 4) throw TruncatedData("checkpoint record cut short");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 8);
  for (const auto& a : arrays) {
    write_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    write_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * 4));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw MalformedHeader("not a VOLNORM1 checkpoint: " + path.string());
  }
  std::vector<NamedArray> arrays;
  while (true) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    if (in.gcount() == 0) break;  // clean EOF between records
    if (in.gcount() != 4) throw TruncatedData("checkpoint record cut short");
    NamedArray a;
    a.name.resize(name_len);
    in.read(a.name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) {
      throw TruncatedData("checkpoint name cut short");
    }
    const std::uint32_t rank = read_u32(in);
    if (rank > 8) throw MalformedHeader("implausible checkpoint rank");
    long numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_u32(in);
      if (dim == 0) throw MalformedHeader("zero checkpoint dimension");
      a.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    a.values.resize(numel);
    in.read(reinterpret_cast<char*>(a.values.data()), numel * 4);
    if (in.gcount() != static_cast<std::streamsize>(numel * 4)) {
      throw TruncatedData("checkpoint payload cut short");
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

}  // namespace volnorm::tk

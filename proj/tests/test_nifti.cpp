#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "volnorm/errors.hpp"
#include "volnorm/nifti.hpp"
#include "volnorm/rng.hpp"

using namespace volnorm;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  auto dir = fs::temp_directory_path() / "volnorm_nifti_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<unsigned char> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

// Independent header encoder used as the read oracle: lays the bytes out
// from the public NIfTI-1 field table, sharing nothing with the writer.
void craft_nifti(const fs::path& p, short datatype, short bitpix,
                 const std::vector<short>& dims, float slope, float inter,
                 const char* magic, const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> bytes(352, 0);
  auto put32 = [&](int off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes[off + i] = (v >> (8 * i)) & 0xff;
  };
  auto putf = [&](int off, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put32(off, v);
  };
  put32(0, 348);
  // dims holds the full dim[] array beginning with dim[0] = ndim.
  for (size_t d = 0; d < dims.size(); ++d) {
    bytes[40 + 2 * d] = dims[d] & 0xff;
    bytes[41 + 2 * d] = (dims[d] >> 8) & 0xff;
  }
  bytes[70] = datatype & 0xff;
  bytes[71] = (datatype >> 8) & 0xff;
  bytes[72] = bitpix & 0xff;
  bytes[73] = (bitpix >> 8) & 0xff;
  for (int i = 1; i <= 3; ++i) putf(76 + 4 * i, 1.0f);
  putf(108, 352.0f);
  putf(112, slope);
  putf(116, inter);
  std::memcpy(bytes.data() + 344, magic, 4);
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("nifti round trip preserves data, spacing and tags") {
  Volume3D v(4, 4, 4, Orientation::Axial, {2.5f, 1.5f, 0.5f}, "FLAIR");
  for (long i = 0; i < v.numel(); ++i) v.values()[i] = static_cast<float>(i) * 0.31f;
  const auto path = temp_file("roundtrip.nii");
  write_nifti(v, path);
  Volume3D w = read_nifti(path);
  CHECK(w.slices() == 4);
  CHECK(w.rows() == 4);
  CHECK(w.cols() == 4);
  CHECK((w.values() == v.values()).all());
  CHECK(w.spacing() == v.spacing());
  CHECK(w.modality() == "FLAIR");
  CHECK(w.orientation() == Orientation::Axial);
}

TEST_CASE("nifti write-read-write is byte identical") {
  Rng rng(9);
  Volume3D v(3, 5, 7, Orientation::Coronal, {1, 1, 1}, "T2w");
  for (long i = 0; i < v.numel(); ++i) v.values()[i] = rng.uniform_float();
  const auto p1 = temp_file("bytes1.nii");
  const auto p2 = temp_file("bytes2.nii");
  write_nifti(v, p1);
  write_nifti(read_nifti(p1), p2);
  CHECK(read_all(p1) == read_all(p2));
}

TEST_CASE("nifti integer datatypes round trip integer volumes") {
  Volume3D v(2, 3, 4, Orientation::Coronal, {1, 1, 1});
  for (long i = 0; i < v.numel(); ++i) v.values()[i] = static_cast<float>(i % 200);
  for (auto dt : {NiftiDatatype::U8, NiftiDatatype::I16}) {
    const auto path = temp_file("ints.nii");
    write_nifti(v, path, dt);
    Volume3D w = read_nifti(path);
    CHECK((w.values() == v.values()).all());
  }
}

TEST_CASE("detached-header magic is rejected") {
  const auto path = temp_file("detached.nii");
  craft_nifti(path, 2, 8, {3, 2, 2, 2}, 1.0f, 0.0f, "ni1\0",
              std::vector<unsigned char>(8, 1));
  CHECK_THROWS_AS(read_nifti(path), MalformedHeader);
}

TEST_CASE("wrong sizeof_hdr is rejected") {
  const auto path = temp_file("badsize.nii");
  craft_nifti(path, 2, 8, {3, 2, 2, 2}, 1.0f, 0.0f, "n+1\0",
              std::vector<unsigned char>(8, 1));
  // Corrupt sizeof_hdr in place.
  auto bytes = read_all(path);
  bytes[0] = 0x11;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_AS(read_nifti(path), MalformedHeader);
}

TEST_CASE("scl_slope and scl_inter are applied on read") {
  // 16-bit file with slope 2.0: raw 3 must load as 6.0.
  const auto path = temp_file("slope.nii");
  std::vector<unsigned char> payload;
  for (short raw : {3, 5, 0, 7}) {
    payload.push_back(raw & 0xff);
    payload.push_back((raw >> 8) & 0xff);
  }
  craft_nifti(path, 4, 16, {3, 4, 1, 1}, 2.0f, 0.0f, "n+1\0", payload);
  Volume3D v = read_nifti(path);
  CHECK(v.at(0, 0, 0) == 6.0f);
  CHECK(v.at(0, 0, 1) == 10.0f);
  CHECK(v.at(0, 0, 2) == 0.0f);
  CHECK(v.at(0, 0, 3) == 14.0f);
}

TEST_CASE("unsupported datatype raises UnsupportedDatatype") {
  const auto path = temp_file("dtype.nii");
  craft_nifti(path, 8 /* DT_INT32 */, 32, {3, 2, 1, 1}, 1.0f, 0.0f, "n+1\0",
              std::vector<unsigned char>(8, 0));
  CHECK_THROWS_AS(read_nifti(path), UnsupportedDatatype);
}

TEST_CASE("truncated payload raises TruncatedData") {
  const auto path = temp_file("trunc.nii");
  craft_nifti(path, 2, 8, {3, 4, 4, 4}, 1.0f, 0.0f, "n+1\0",
              std::vector<unsigned char>(10, 1));  // 64 expected
  CHECK_THROWS_AS(read_nifti(path), TruncatedData);
}

TEST_CASE("negative intensities are rejected on load") {
  const auto path = temp_file("negative.nii");
  std::vector<unsigned char> payload = {0xff, 0xff};  // int16 -1
  craft_nifti(path, 4, 16, {3, 1, 1, 1}, 1.0f, 0.0f, "n+1\0", payload);
  CHECK_THROWS_AS(read_nifti(path), InvalidVolume);
}

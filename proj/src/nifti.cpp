#include "volnorm/nifti.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "volnorm/errors.hpp"

namespace volnorm {

namespace {

constexpr int kHeaderSize = 348;
constexpr long kDataOffset = 352;

// Header field offsets (NIfTI-1 layout).
constexpr int kOffSizeofHdr = 0;
constexpr int kOffDim = 40;        // short dim[8]
constexpr int kOffDatatype = 70;   // short
constexpr int kOffBitpix = 72;     // short
constexpr int kOffPixdim = 76;     // float pixdim[8]
constexpr int kOffVoxOffset = 108; // float
constexpr int kOffSclSlope = 112;  // float
constexpr int kOffSclInter = 116;  // float
constexpr int kOffDescrip = 148;   // char[80]
constexpr int kOffMagic = 344;     // char[4]

void put_i16(std::vector<unsigned char>& buf, int off, short v) {
  buf[off] = static_cast<unsigned char>(v & 0xff);
  buf[off + 1] = static_cast<unsigned char>((v >> 8) & 0xff);
}

void put_i32(std::vector<unsigned char>& buf, int off, int v) {
  for (int i = 0; i < 4; ++i)
    buf[off + i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

void put_f32(std::vector<unsigned char>& buf, int off, float v) {
  unsigned int bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i)
    buf[off + i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
}

short get_i16(const std::vector<unsigned char>& buf, int off) {
  return static_cast<short>(buf[off] | (buf[off + 1] << 8));
}

int get_i32(const std::vector<unsigned char>& buf, int off) {
  return static_cast<int>(buf[off] | (buf[off + 1] << 8) |
                          (buf[off + 2] << 16) | (buf[off + 3] << 24));
}

float get_f32(const std::vector<unsigned char>& buf, int off) {
  unsigned int bits = static_cast<unsigned int>(buf[off]) |
                      (static_cast<unsigned int>(buf[off + 1]) << 8) |
                      (static_cast<unsigned int>(buf[off + 2]) << 16) |
                      (static_cast<unsigned int>(buf[off + 3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string parse_descrip_tag(const std::string& descrip, const std::string& key) {
  const std::string needle = key + "=";
  const std::size_t pos = descrip.find(needle);
  if (pos == std::string::npos) return {};
  const std::size_t start = pos + needle.size();
  const std::size_t end = descrip.find(';', start);
  return descrip.substr(start, end == std::string::npos ? std::string::npos
                                                        : end - start);
}

}  // namespace

Volume3D read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> hdr(kHeaderSize);
  in.read(reinterpret_cast<char*>(hdr.data()), kHeaderSize);
  if (in.gcount() != kHeaderSize) {
    throw MalformedHeader("file shorter than the 348-byte NIfTI-1 header");
  }

  const int sizeof_hdr = get_i32(hdr, kOffSizeofHdr);
  if (sizeof_hdr != kHeaderSize) {
    if (sizeof_hdr == 1543569408) {  // 348 with swapped bytes
      throw MalformedHeader("big-endian NIfTI-1 files are not supported");
    }
    throw MalformedHeader("sizeof_hdr is " + std::to_string(sizeof_hdr) +
                          ", expected 348");
  }
  const char* magic = reinterpret_cast<const char*>(hdr.data() + kOffMagic);
  if (std::memcmp(magic, "n+1\0", 4) != 0) {
    if (std::memcmp(magic, "ni1\0", 4) == 0) {
      throw MalformedHeader("detached header/data (magic ni1) not supported");
    }
    throw MalformedHeader("bad magic bytes at offset 344");
  }

  const short ndim = get_i16(hdr, kOffDim);
  if (ndim < 1 || ndim > 7) {
    throw MalformedHeader("dim[0] out of range: " + std::to_string(ndim));
  }
  std::array<int, 3> dims{1, 1, 1};
  for (int d = 1; d <= ndim; ++d) {
    const short v = get_i16(hdr, kOffDim + 2 * d);
    if (d <= 3) {
      if (v < 1) throw MalformedHeader("non-positive spatial dimension");
      dims[d - 1] = v;
    } else if (v > 1) {
      throw UnsupportedDatatype("only 3D volumes are supported");
    }
  }

  const short datatype = get_i16(hdr, kOffDatatype);
  int sample_bytes = 0;
  switch (datatype) {
    case static_cast<short>(NiftiDatatype::U8):
      sample_bytes = 1;
      break;
    case static_cast<short>(NiftiDatatype::I16):
      sample_bytes = 2;
      break;
    case static_cast<short>(NiftiDatatype::F32):
      sample_bytes = 4;
      break;
    default:
      throw UnsupportedDatatype("NIfTI datatype code " +
                                std::to_string(datatype));
  }

  float slope = get_f32(hdr, kOffSclSlope);
  const float inter = get_f32(hdr, kOffSclInter);
  if (slope == 0.0f) slope = 1.0f;

  long vox_offset = static_cast<long>(get_f32(hdr, kOffVoxOffset));
  if (vox_offset < kHeaderSize) vox_offset = kDataOffset;

  // File axis 1 varies fastest and maps to columns.
  const int nc = dims[0], nr = dims[1], ns = dims[2];
  std::array<float, 3> spacing{get_f32(hdr, kOffPixdim + 4 * 3),
                               get_f32(hdr, kOffPixdim + 4 * 2),
                               get_f32(hdr, kOffPixdim + 4 * 1)};
  for (auto& sp : spacing) {
    if (!(sp > 0.0f) || !std::isfinite(sp)) sp = 1.0f;
  }

  std::string descrip(reinterpret_cast<const char*>(hdr.data() + kOffDescrip),
                      80);
  descrip = descrip.c_str();  // stop at first NUL
  std::string modality = parse_descrip_tag(descrip, "modality");
  if (modality.empty()) modality = "synthetic";
  Orientation orientation = Orientation::Coronal;
  const std::string otag = parse_descrip_tag(descrip, "orientation");
  if (!otag.empty()) orientation = orientation_from_string(otag);

  const long n = static_cast<long>(ns) * nr * nc;
  std::vector<unsigned char> raw(static_cast<std::size_t>(n) * sample_bytes);
  in.seekg(vox_offset, std::ios::beg);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw TruncatedData("payload shorter than declared dimensions");
  }

  Volume3D vol(ns, nr, nc, orientation, spacing, modality);
  // Our (s, r, c) layout has c fastest, matching the file order directly.
  float* dst = vol.values().data();
  switch (datatype) {
    case static_cast<short>(NiftiDatatype::U8):
      for (long i = 0; i < n; ++i) dst[i] = raw[i] * slope + inter;
      break;
    case static_cast<short>(NiftiDatatype::I16):
      for (long i = 0; i < n; ++i) {
        const short v =
            static_cast<short>(raw[2 * i] | (raw[2 * i + 1] << 8));
        dst[i] = v * slope + inter;
      }
      break;
    default:
      for (long i = 0; i < n; ++i) {
        unsigned int bits = static_cast<unsigned int>(raw[4 * i]) |
                            (static_cast<unsigned int>(raw[4 * i + 1]) << 8) |
                            (static_cast<unsigned int>(raw[4 * i + 2]) << 16) |
                            (static_cast<unsigned int>(raw[4 * i + 3]) << 24);
        float v;
        std::memcpy(&v, &bits, 4);
        dst[i] = (slope == 1.0f && inter == 0.0f) ? v : v * slope + inter;
      }
      break;
  }
  vol.validate();
  return vol;
}

void write_nifti(const Volume3D& vol, const std::filesystem::path& path,
                 NiftiDatatype datatype) {
  std::vector<unsigned char> hdr(kHeaderSize, 0);
  put_i32(hdr, kOffSizeofHdr, kHeaderSize);
  put_i16(hdr, kOffDim, 3);
  put_i16(hdr, kOffDim + 2, static_cast<short>(vol.cols()));
  put_i16(hdr, kOffDim + 4, static_cast<short>(vol.rows()));
  put_i16(hdr, kOffDim + 6, static_cast<short>(vol.slices()));
  for (int d = 4; d <= 7; ++d) put_i16(hdr, kOffDim + 2 * d, 1);

  short bitpix = 32;
  if (datatype == NiftiDatatype::U8) bitpix = 8;
  if (datatype == NiftiDatatype::I16) bitpix = 16;
  put_i16(hdr, kOffDatatype, static_cast<short>(datatype));
  put_i16(hdr, kOffBitpix, bitpix);

  put_f32(hdr, kOffPixdim, 1.0f);
  put_f32(hdr, kOffPixdim + 4 * 1, vol.spacing()[2]);
  put_f32(hdr, kOffPixdim + 4 * 2, vol.spacing()[1]);
  put_f32(hdr, kOffPixdim + 4 * 3, vol.spacing()[0]);
  put_f32(hdr, kOffVoxOffset, static_cast<float>(kDataOffset));
  put_f32(hdr, kOffSclSlope, 1.0f);
  put_f32(hdr, kOffSclInter, 0.0f);

  std::string descrip = "modality=" + vol.modality() +
                        ";orientation=" + to_string(vol.orientation());
  if (descrip.size() > 79) descrip.resize(79);
  std::memcpy(hdr.data() + kOffDescrip, descrip.data(), descrip.size());

  std::memcpy(hdr.data() + kOffMagic, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(hdr.data()), kHeaderSize);
  const char pad[4] = {0, 0, 0, 0};
  out.write(pad, 4);  // extension flag; data starts at 352

  const long n = vol.numel();
  const float* src = vol.values().data();
  std::vector<unsigned char> raw;
  switch (datatype) {
    case NiftiDatatype::U8:
      raw.resize(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i)
        raw[i] = static_cast<unsigned char>(std::llround(src[i]));
      break;
    case NiftiDatatype::I16:
      raw.resize(static_cast<std::size_t>(n) * 2);
      for (long i = 0; i < n; ++i) {
        const short v = static_cast<short>(std::llround(src[i]));
        raw[2 * i] = static_cast<unsigned char>(v & 0xff);
        raw[2 * i + 1] = static_cast<unsigned char>((v >> 8) & 0xff);
      }
      break;
    case NiftiDatatype::F32:
      raw.resize(static_cast<std::size_t>(n) * 4);
      for (long i = 0; i < n; ++i) {
        unsigned int bits;
        std::memcpy(&bits, &src[i], 4);
        for (int b = 0; b < 4; ++b)
          raw[4 * i + b] =
              static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
      }
      break;
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace volnorm
